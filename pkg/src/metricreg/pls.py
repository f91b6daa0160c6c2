"""SIMPLS partial least squares and design-matrix assembly.

The internal model maps predictor scores to response scores. Component
count is chosen by leave-one-out PRESS with a parsimony rule.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import _pls_kernels as K
from ._validation import as_2d
from .exceptions import DimensionMismatch, RankDeficientWarning, ValidationError

__all__ = [
    "PlsModel",
    "simpls_fit",
    "press",
    "loo_select",
    "predict",
    "DesignBlock",
    "assemble_design",
    "SIMPLSRegression",
]


@dataclass(frozen=True)
class PlsModel:
    a: int
    x_mean: np.ndarray
    y_mean: np.ndarray
    weights: np.ndarray
    x_loadings: np.ndarray
    y_loadings: np.ndarray
    coef: np.ndarray

    @property
    def p(self):
        return self.x_mean.shape[0]

    @property
    def q(self):
        return self.y_mean.shape[0]

    def predict(self, x):
        return predict(self, x)

    def to_dict(self):
        return {
            "a": self.a,
            "x_mean": self.x_mean.tolist(),
            "y_mean": self.y_mean.tolist(),
            "weights": self.weights.tolist(),
            "x_loadings": self.x_loadings.tolist(),
            "y_loadings": self.y_loadings.tolist(),
            "coef": self.coef.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        p, q = len(d["x_mean"]), len(d["y_mean"])
        a = int(d["a"])
        return cls(
            a=a,
            x_mean=np.asarray(d["x_mean"], dtype=float),
            y_mean=np.asarray(d["y_mean"], dtype=float),
            weights=np.asarray(d["weights"], dtype=float).reshape(p, a),
            x_loadings=np.asarray(d["x_loadings"], dtype=float).reshape(p, a),
            y_loadings=np.asarray(d["y_loadings"], dtype=float).reshape(q, a),
            coef=np.asarray(d["coef"], dtype=float).reshape(p, q),
        )

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _center(X, Y):
    X = as_2d(X, "X")
    Y = as_2d(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    return X - xm, Y - ym, xm, ym


def simpls_fit(X, Y, a):
    """Fit SIMPLS with ``a`` components.

    If the data support fewer than ``a`` components (rank of centered
    ``X`` or exhausted cross covariance), the count is reduced with a
    :class:`RankDeficientWarning`.
    """
    X0, Y0, xm, ym = _center(X, Y)
    a = int(a)
    if a < 1:
        raise ValidationError("component count must be at least 1")
    n, p = X0.shape
    if a > min(n - 1, p):
        raise ValidationError(f"a={a} exceeds min(n-1, p)={min(n - 1, p)}")
    R, P, Q = K.simpls(np.ascontiguousarray(X0), np.ascontiguousarray(Y0), a)
    if R.shape[1] < a:
        warnings.warn(
            f"only {R.shape[1]} PLS components supported by the data; requested {a}",
            RankDeficientWarning,
            stacklevel=2,
        )
    return PlsModel(
        a=R.shape[1], x_mean=xm, y_mean=ym, weights=R, x_loadings=P, y_loadings=Q, coef=R @ Q.T
    )


def predict(model, x):
    """``y_mean + (x - x_mean) @ coef`` for a row or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.p:
        raise DimensionMismatch(f"input has {x.shape[-1]} columns, model expects {model.p}")
    return model.y_mean + (x - model.x_mean) @ model.coef


def press(X, Y, a_max):
    """Leave-one-out PRESS for ``a = 1..a_max`` (array of length ``a_max``).

    One fit per fold gives every prefix of components. A fold that
    supports fewer components reuses its largest model for larger ``a``.
    """
    X = np.ascontiguousarray(as_2d(X, "X"))
    Y = np.ascontiguousarray(as_2d(Y, "Y"))
    if X.shape[0] != Y.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
    return K.loo_press(X, Y, int(a_max))


def loo_select(X, Y, a_max, tolerance=0.02):
    """Smallest ``a`` whose LOO PRESS is within ``tolerance`` of the minimum."""
    X = as_2d(X, "X")
    n, p = X.shape
    a_max = int(a_max)
    if a_max < 1 or a_max > min(n - 2, p):
        raise ValidationError(f"a_max={a_max} must lie in [1, min(n-2, p)={min(n - 2, p)}]")
    pr = press(X, Y, a_max)
    return int(np.flatnonzero(pr <= pr.min() * (1 + tolerance))[0]) + 1


class DesignBlock:
    """One block of predictor columns.

    ``kind`` is ``"scores"`` (passed through unscaled), ``"covariate"``
    (standardized to zero mean and unit variance) or ``"categorical"``
    (0/1 dummies with the first sorted level dropped).
    """

    KINDS = ("scores", "covariate", "categorical")

    def __init__(self, name, kind, values):
        if kind not in self.KINDS:
            raise ValidationError(f"unknown block kind {kind!r}")
        self.name = str(name)
        self.kind = kind
        if kind == "categorical":
            values = np.asarray(values).astype(str).ravel()
            self.levels = sorted(set(values.tolist()))
            self.raw = values
        else:
            self.raw = as_2d(values, name)
            self.mean = self.raw.mean(axis=0)
            sd = self.raw.std(axis=0)
            self.sd = np.where(sd > 0, sd, 1.0)

    @property
    def n(self):
        return len(self.raw)

    def encode(self, values=None):
        """Encoded columns for ``values`` (training values by default)."""
        values = self.raw if values is None else values
        if self.kind == "categorical":
            values = np.asarray(values).astype(str).ravel()
            unknown = set(values.tolist()) - set(self.levels)
            if unknown:
                raise ValidationError(f"block {self.name!r}: unseen levels {sorted(unknown)}")
            cols = [(values == lv).astype(float) for lv in self.levels[1:]]
            return np.column_stack(cols) if cols else np.zeros((len(values), 0))
        values = as_2d(values, self.name)
        if values.shape[1] != self.raw.shape[1]:
            raise DimensionMismatch(f"block {self.name!r} expects {self.raw.shape[1]} columns")
        if self.kind == "covariate":
            return (values - self.mean) / self.sd
        return values

    @property
    def width(self):
        return len(self.levels) - 1 if self.kind == "categorical" else self.raw.shape[1]

    def permuted(self, order):
        """The same block with rows reordered (encoding fixed by the original)."""
        out = object.__new__(DesignBlock)
        out.__dict__.update(self.__dict__)
        out.raw = self.raw[np.asarray(order)]
        return out


def assemble_design(blocks):
    """Concatenate encoded blocks column-wise."""
    blocks = list(blocks)
    if not blocks:
        raise ValidationError("no design blocks")
    n = blocks[0].n
    for b in blocks:
        if b.n != n:
            raise DimensionMismatch(f"block {b.name!r} has {b.n} rows, expected {n}")
    return np.hstack([b.encode() for b in blocks])


class SIMPLSRegression(RegressorMixin, BaseEstimator):
    """SIMPLS regressor with optional LOO component selection.

    Parameters
    ----------
    n_components : int or None
        Fixed component count, or ``None`` to select by :func:`loo_select`.
    a_max : int
        Largest count tried during selection (clipped to the data).
    tolerance : float
        Parsimony margin on PRESS.
    """

    def __init__(self, n_components=None, a_max=10, tolerance=0.02):
        self.n_components = n_components
        self.a_max = a_max
        self.tolerance = tolerance

    def fit(self, X, y):
        X = as_2d(X, "X")
        Y = as_2d(y, "y")
        n, p = X.shape
        if self.n_components is None:
            a_max = max(1, min(int(self.a_max), n - 2, p))
            a = loo_select(X, Y, a_max, self.tolerance)
        else:
            a = int(self.n_components)
        self._y_1d = np.ndim(y) == 1
        self.model_ = simpls_fit(X, Y, a)
        self.n_components_ = self.model_.a
        self.coef_ = self.model_.coef
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        out = predict(self.model_, as_2d(X, "X"))
        return out[:, 0] if self._y_1d else out
