"""Landmark shape space under full Procrustes distance.

Configurations are ``(k, m)`` arrays. Alignment uses the rotation group
only (no reflections). Batched SVDs keep pairwise work vectorized.
"""

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DegenerateShape, DimensionMismatch, NoConvergence, NoFeasibleSolution, PoleMismatch
from .mds import BackscoreContext, MetricSpace, gower_score

__all__ = [
    "centroid_size",
    "opa_align",
    "rigid_align",
    "procrustes_distance",
    "gpa",
    "GPAResult",
    "procrustes_distance_matrix",
    "TangentVector",
    "tangent_coords",
    "tangent_vector",
    "from_tangent",
    "shape_backscore",
    "standardize_response",
    "ShapeSpace",
    "load_landmarks",
    "save_landmarks",
]


def _as_config(c):
    c = np.asarray(c, dtype=float)
    if c.ndim != 2:
        raise DimensionMismatch(f"landmark configuration must be 2-D, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise DegenerateShape("configuration has non-finite coordinates")
    return c


def centroid_size(c):
    """Root summed squared distance of the landmarks to their centroid."""
    c = _as_config(c)
    size = float(np.sqrt(((c - c.mean(axis=0)) ** 2).sum()))
    if size == 0:
        raise DegenerateShape("all landmarks coincide")
    return size


def _preshape(c, index=None):
    c = _as_config(c)
    cc = c - c.mean(axis=0)
    size = np.sqrt((cc**2).sum())
    if size == 0:
        raise DegenerateShape("all landmarks coincide", index=index)
    return cc / size


def _rotate_onto(A, B):
    """Optimal rotations taking each ``A[i]`` onto ``B[i]`` (batched).

    Returns ``(R, beta)`` where ``A[i] @ R[i]`` best matches ``B[i]`` over
    rotations and ``beta[i]`` is the trace of ``(A[i].T @ B[i]) @ R[i].T``,
    the optimal scale for unit-size inputs.
    """
    M = np.einsum("nki,nkj->nij", A, B)
    U, s, Vt = np.linalg.svd(M)
    det = np.sign(np.linalg.det(U @ Vt))
    det[det == 0] = 1.0
    D = np.ones_like(s)
    D[:, -1] = det
    R = np.einsum("nij,nj,njk->nik", U, D, Vt)
    beta = (s * D).sum(axis=1)
    return R, beta


def opa_align(a, b):
    """Full ordinary Procrustes fit of ``a`` onto ``b``.

    Returns the centered, scaled and rotated copy of ``a`` that best
    matches ``b`` after ``b`` is centered and scaled to unit size, and the
    full Procrustes distance (the root residual, in ``[0, 1]``).
    """
    A = _preshape(a)
    B = _preshape(b)
    if A.shape != B.shape:
        raise DimensionMismatch(f"configurations differ in shape: {A.shape} vs {B.shape}")
    R, beta = _rotate_onto(A[None], B[None])
    fitted = beta[0] * A @ R[0]
    return fitted, float(np.sqrt(((B - fitted) ** 2).sum()))


def procrustes_distance(a, b):
    return opa_align(a, b)[1]


def rigid_align(a, b):
    """Translate and rotate ``a`` onto ``b`` without changing its size."""
    a = _as_config(a)
    b = _as_config(b)
    ac = a - a.mean(axis=0)
    R, _ = _rotate_onto(ac[None], (b - b.mean(axis=0))[None])
    return ac @ R[0] + b.mean(axis=0)


def _full_distances(A, Bs):
    # Preshape A against a stack of preshapes; residual computed directly.
    Astack = np.broadcast_to(A, Bs.shape)
    R, beta = _rotate_onto(Astack, Bs)
    fitted = beta[:, None, None] * np.einsum("nki,nij->nkj", Astack, R)
    return np.sqrt(((Bs - fitted) ** 2).sum(axis=(1, 2)))


def _preshapes(configs):
    configs = [_as_config(c) for c in configs]
    shapes = {c.shape for c in configs}
    if len(shapes) > 1:
        raise DimensionMismatch(f"configurations have mixed shapes: {sorted(shapes)}")
    return np.stack([_preshape(c, index=i) for i, c in enumerate(configs)])


def procrustes_distance_matrix(configs):
    """Pairwise full Procrustes distances."""
    P = _preshapes(configs)
    n = len(P)
    D = np.zeros((n, n))
    for i in range(n - 1):
        d = _full_distances(P[i], P[i + 1 :])
        D[i, i + 1 :] = d
        D[i + 1 :, i] = d
    return D


class GPAResult(NamedTuple):
    mean: np.ndarray
    aligned: list
    objective: list


def gpa(configs, tol=1e-9, max_iter=100, scale=True):
    """Generalized Procrustes analysis.

    With ``scale`` each configuration is brought to unit size and fitted
    by rotation and scaling; the mean is renormalized to unit size every
    iteration. Without it only translation and rotation are removed.

    Returns a :class:`GPAResult` whose ``objective`` lists the summed
    squared residuals against the mean at each iteration.

    Raises
    ------
    NoConvergence
        When the mean still moves by ``>= tol`` after ``max_iter``
        iterations. ``err.last`` carries the final :class:`GPAResult`.
    """
    if len(configs) < 2:
        raise DimensionMismatch("GPA needs at least two configurations")
    if scale:
        X = _preshapes(configs)
    else:
        X = np.stack([_as_config(c) for c in configs])
        X = X - X.mean(axis=1, keepdims=True)
    mean = X[0].copy()
    history = []
    change = np.inf
    for _ in range(max_iter):
        target = np.broadcast_to(mean, X.shape)
        R, beta = _rotate_onto(X, target)
        fitted = np.einsum("nki,nij->nkj", X, R)
        if scale:
            fitted = beta[:, None, None] * fitted
        history.append(float(((fitted - mean) ** 2).sum()))
        new = fitted.mean(axis=0)
        new -= new.mean(axis=0)
        if scale:
            new /= np.sqrt((new**2).sum())
        change = float(np.sqrt(((new - mean) ** 2).sum()))
        mean = new
        if change < tol:
            break
    target = np.broadcast_to(mean, X.shape)
    R, beta = _rotate_onto(X, target)
    fitted = np.einsum("nki,nij->nkj", X, R)
    if scale:
        fitted = beta[:, None, None] * fitted
    history.append(float(((fitted - mean) ** 2).sum()))
    result = GPAResult(mean, list(fitted), history)
    if change >= tol:
        raise NoConvergence(f"GPA did not converge in {max_iter} iterations", last=result, residual=change)
    return result


@dataclass(frozen=True)
class TangentVector:
    pole: np.ndarray
    values: np.ndarray

    def to_config(self):
        return from_tangent(self.values, self.pole)


def tangent_coords(configs, pole):
    """Procrustes tangent coordinates at ``pole``, one row per configuration.

    Each configuration is brought to unit size, rotated onto the pole and
    projected orthogonally to the (vectorized) pole direction. The row
    norm equals the full Procrustes distance to the pole.
    """
    P = _preshapes(configs)
    mu = _preshape(pole)
    if P.shape[1:] != mu.shape:
        raise DimensionMismatch("pole and configurations differ in shape")
    R, _ = _rotate_onto(P, np.broadcast_to(mu, P.shape))
    rotated = np.einsum("nki,nij->nkj", P, R).reshape(len(P), -1)
    m = mu.ravel()
    return rotated - np.outer(rotated @ m, m)


def tangent_vector(config, pole):
    return TangentVector(pole=_preshape(pole), values=tangent_coords([config], pole)[0])


def from_tangent(values, pole):
    """Configuration ``pole + values`` reshaped to ``(k, m)``."""
    mu = _preshape(pole)
    return mu + np.asarray(values, dtype=float).reshape(mu.shape)


def shape_backscore(target, e, T, pole, configs=None, tol=None):
    """Linear backscore through the tangent space.

    The score is lifted by least squares, ``T^T S (S^T S)^{-1} target``,
    and added to the pole. When ``configs`` is given the result is
    re-scored against them and rejected if it misses by more than ``tol``.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (e.k,):
        raise DimensionMismatch(f"target has shape {target.shape}, embedding has {e.k} dims")
    lift = np.asarray(T).T @ e.scores / e.eigenvalues
    y = from_tangent(lift @ target, pole)
    if configs is not None:
        tol = e.default_tol() if tol is None else tol
        P = _preshapes(configs)
        d = _full_distances(_preshape(y), P)
        resid = float(np.linalg.norm(gower_score(e, d) - target))
        if resid > tol:
            raise NoFeasibleSolution(
                f"tangent backscore misses target by {resid:.4g}", target=target, residual=resid
            )
    return y


def standardize_response(s_max, s_initial, s_mean):
    """``s_max - s_initial + s_mean`` for tangent vectors at a common pole."""
    pole = s_max.pole
    for other in (s_initial, s_mean):
        if other.pole.shape != pole.shape or not np.allclose(other.pole, pole, atol=1e-12):
            raise PoleMismatch("tangent vectors live at different poles")
    return TangentVector(pole=pole, values=s_max.values - s_initial.values + s_mean.values)


class ShapeSpace(MetricSpace):
    """Shapes under full Procrustes distance, backscored via the tangent space.

    The centroid is the GPA mean, which also serves as the tangent pole.
    """

    name = "shape"
    default_dims = 10
    linear_backscore = True

    def __init__(self, gpa_tol=1e-9, gpa_max_iter=100):
        self.gpa_tol = gpa_tol
        self.gpa_max_iter = gpa_max_iter

    def distance(self, a, b):
        return procrustes_distance(a, b)

    def distances_to(self, objects, y):
        return _full_distances(_preshape(y), _preshapes(objects))

    def distance_matrix(self, objects):
        return procrustes_distance_matrix(objects)

    def gpa_mean(self, objects):
        try:
            return gpa(objects, tol=self.gpa_tol, max_iter=self.gpa_max_iter).mean
        except NoConvergence as err:
            return err.last.mean

    def median_candidates(self, objects):
        return [self.gpa_mean(objects)]

    def centroid(self, objects, embedding):
        return self.gpa_mean(objects)

    def prepare(self, objects, embedding, tol_score=None):
        objects = list(objects)
        pole = self.gpa_mean(objects)
        ctx = BackscoreContext(
            embedding=embedding,
            objects=objects,
            centroid=pole,
            tol_score=embedding.default_tol() if tol_score is None else float(tol_score),
        )
        ctx.state["tangent"] = tangent_coords(objects, pole)
        return ctx

    def backscore(self, target, context):
        return shape_backscore(target, context.embedding, context.state["tangent"], context.centroid)

    def backscore_many(self, targets, context):
        e = context.embedding
        lift = context.state["tangent"].T @ e.scores / e.eigenvalues
        V = np.atleast_2d(targets) @ lift.T
        mu = _preshape(context.centroid)
        return list(mu + V.reshape(len(V), *mu.shape))

    def paired_distances(self, a, b):
        A, B = _preshapes(a), _preshapes(b)
        R, beta = _rotate_onto(A, B)
        fitted = beta[:, None, None] * np.einsum("nki,nij->nkj", A, R)
        return np.sqrt(((B - fitted) ** 2).sum(axis=(1, 2)))


def load_landmarks(path):
    """Read ``{"k", "m", "subjects": [{"id", "coords"}]}``; return ``(ids, configs)``."""
    with open(path) as fh:
        doc = json.load(fh)
    k, m = int(doc["k"]), int(doc["m"])
    ids, configs = [], []
    for subj in doc["subjects"]:
        c = np.asarray(subj["coords"], dtype=float)
        if c.shape != (k, m):
            raise DimensionMismatch(f"subject {subj.get('id')!r} has shape {c.shape}, expected {(k, m)}")
        ids.append(str(subj["id"]))
        configs.append(c)
    return ids, configs


def save_landmarks(path, ids, configs):
    configs = [np.asarray(c, dtype=float) for c in configs]
    k, m = configs[0].shape
    doc = {
        "k": k,
        "m": m,
        "subjects": [{"id": str(i), "coords": c.tolist()} for i, c in zip(ids, configs)],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
