"""Input checks shared across modules."""

import numpy as np

from .exceptions import DimensionMismatch, ValidationError


def check_distance_matrix(D, tol=1e-10):
    """Validate a distance matrix and return a clean float copy.

    Small asymmetries (relative to ``tol``) are averaged away and the
    diagonal is set to exactly zero, so the result satisfies the
    symmetry invariants exactly.
    """
    D = np.array(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DimensionMismatch(f"distance matrix must be square, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise ValidationError("distance matrix contains non-finite entries")
    scale = max(float(np.abs(D).max(initial=0.0)), 1.0)
    if np.abs(D - D.T).max(initial=0.0) > tol * scale:
        raise ValidationError("distance matrix is not symmetric")
    if np.abs(np.diag(D)).max(initial=0.0) > tol * scale:
        raise ValidationError("distance matrix has a nonzero diagonal")
    if D.min(initial=0.0) < -tol * scale:
        raise ValidationError("distance matrix has negative entries")
    D = (D + D.T) / 2
    np.fill_diagonal(D, 0.0)
    np.maximum(D, 0.0, out=D)
    return D


def check_same_length(a, b, what="inputs"):
    if len(a) != len(b):
        raise DimensionMismatch(f"{what} have different lengths: {len(a)} != {len(b)}")


def as_2d(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionMismatch(f"{name} must be 1-D or 2-D, got {X.ndim}-D")
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"{name} contains non-finite entries")
    return X
