"""Classical multidimensional scaling and out-of-sample scoring.

Every metric space enters the regression through an ``n x n`` distance
matrix. :func:`cmds` turns that matrix into principal coordinates,
:func:`gower_score` places a new object in the same coordinates from its
distances to the training objects, and :func:`backscore` goes the other
way by delegating to a space-specific search.
"""

import json
import logging
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_distance_matrix
from .exceptions import (
    AllEigenvaluesNonpositive,
    DimensionMismatch,
    EmptyInput,
    NoFeasibleSolution,
    NonEuclideanWarning,
    ValidationError,
)

logger = logging.getLogger(__name__)

__all__ = [
    "MdsEmbedding",
    "double_center",
    "cmds",
    "select_dimension",
    "gower_score",
    "combine_distances",
    "MetricSpace",
    "BackscoreContext",
    "EuclideanSpace",
    "frechet_median",
    "backscore",
    "ClassicalMDS",
    "save_distance_matrix",
    "load_distance_matrix",
]


@dataclass(frozen=True)
class MdsEmbedding:
    """Principal coordinates of a distance matrix.

    Attributes
    ----------
    scores : ndarray of shape (n, k)
        Column ``j`` has squared norm ``eigenvalues[j]``.
    eigenvalues : ndarray of shape (k,)
        Retained positive eigenvalues, nonincreasing.
    b_diag : ndarray of shape (n,)
        Diagonal of the doubly-centered matrix; squared distances of the
        training objects to their centroid.
    total_variance : float
        Sum of all positive eigenvalues, retained or not.
    """

    scores: np.ndarray
    eigenvalues: np.ndarray
    b_diag: np.ndarray
    total_variance: float

    @property
    def k(self):
        return len(self.eigenvalues)

    @property
    def n(self):
        return self.scores.shape[0]

    @property
    def explained(self):
        return self.eigenvalues / self.total_variance

    @property
    def sd(self):
        """Per-component standard deviation ``sqrt(lambda_j / n)``."""
        return np.sqrt(self.eigenvalues / self.n)

    def default_tol(self):
        return 0.05 * float(np.sqrt(self.eigenvalues[0]))

    def truncate(self, k):
        k = int(k)
        if not 1 <= k <= self.k:
            raise ValidationError(f"cannot truncate a {self.k}-dim embedding to {k}")
        return MdsEmbedding(
            scores=self.scores[:, :k].copy(),
            eigenvalues=self.eigenvalues[:k].copy(),
            b_diag=self.b_diag,
            total_variance=self.total_variance,
        )

    def score(self, d_new):
        return gower_score(self, d_new)

    def to_dict(self):
        return {
            "k": self.k,
            "eigenvalues": self.eigenvalues.tolist(),
            "scores": self.scores.tolist(),
            "b_diag": self.b_diag.tolist(),
            "total_variance": self.total_variance,
        }

    @classmethod
    def from_dict(cls, d):
        eig = np.asarray(d["eigenvalues"], dtype=float)
        scores = np.asarray(d["scores"], dtype=float).reshape(-1, len(eig))
        return cls(
            scores=scores,
            eigenvalues=eig,
            b_diag=np.asarray(d["b_diag"], dtype=float),
            total_variance=float(d.get("total_variance", eig.sum())),
        )

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def double_center(D):
    """Return ``B = -J D**2 J / 2`` for the centering matrix ``J``."""
    D2 = np.asarray(D, dtype=float) ** 2
    row = D2.mean(axis=1)
    col = D2.mean(axis=0)
    B = -(D2 - row[:, None] - col[None, :] + D2.mean()) / 2
    return (B + B.T) / 2


def _orient(vectors):
    # First entry of non-negligible size made positive, column by column.
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        big = np.flatnonzero(np.abs(col) > 1e-8 * np.abs(col).max(initial=0.0))
        if big.size and col[big[0]] < 0:
            out[:, j] = -col
    return out


def cmds(D, k_max=10, eig_floor=1e-10):
    """Classical MDS of a distance matrix.

    Parameters
    ----------
    D : array_like of shape (n, n)
        Distance matrix.
    k_max : int
        Upper bound on the number of retained dimensions.
    eig_floor : float
        Eigenvalues at or below ``eig_floor * lambda_1`` are dropped.

    Returns
    -------
    MdsEmbedding

    Raises
    ------
    AllEigenvaluesNonpositive
        If the doubly-centered matrix has no positive eigenvalue.
    """
    if k_max < 1:
        raise ValidationError("k_max must be at least 1")
    if not 0 <= eig_floor < 1:
        raise ValidationError("eig_floor must lie in [0, 1)")
    D = check_distance_matrix(D)
    B = double_center(D)
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]

    scale = np.abs(B).max(initial=0.0)
    if evals[0] <= 1e-12 * max(scale, 1e-300) or evals[0] <= 0:
        raise AllEigenvaluesNonpositive("no positive eigenvalue; data are constant")

    lam1 = evals[0]
    neg = evals[evals < 0]
    if neg.size and -neg.min() > 0.01 * lam1:
        msg = (
            f"discarding negative eigenvalues down to {neg.min():.4g} "
            f"({-neg.min() / lam1:.1%} of the leading one); metric is not Euclidean"
        )
        logger.warning(msg)
        warnings.warn(msg, NonEuclideanWarning, stacklevel=2)

    keep = (evals > eig_floor * lam1) & (evals > 0)
    positive_total = float(evals[evals > 1e-12 * lam1].sum())
    idx = np.flatnonzero(keep)[:k_max]
    vecs = _orient(evecs[:, idx])
    lam = evals[idx]
    return MdsEmbedding(
        scores=vecs * np.sqrt(lam),
        eigenvalues=lam,
        b_diag=np.diag(B).copy(),
        total_variance=positive_total,
    )


def select_dimension(embedding, variance=0.9, k_max=10):
    """Smallest ``k`` whose components explain at least ``variance``."""
    cum = np.cumsum(embedding.explained)
    k = int(np.searchsorted(cum, variance - 1e-12) + 1)
    return max(1, min(k, k_max, embedding.k))


def gower_score(e, d_new):
    """Place objects in an embedding from their distances to the training set.

    ``d_new`` is a length-``n`` vector, or an ``(m, n)`` array holding one
    row per new object. Rows are mapped to
    ``diag(1/lambda) S^T (b_diag - d**2) / 2``.
    """
    d_new = np.asarray(d_new, dtype=float)
    single = d_new.ndim == 1
    d2 = np.atleast_2d(d_new)
    if d2.shape[1] != e.n:
        raise DimensionMismatch(f"expected {e.n} distances, got {d2.shape[1]}")
    if np.any(d2 < 0):
        raise ValidationError("distances must be nonnegative")
    proj = (e.b_diag[None, :] - d2**2) @ e.scores / 2
    out = proj / e.eigenvalues
    return out[0] if single else out


def combine_distances(Dx, Dz):
    """``sqrt(Dx**2 + Dz**2)`` entrywise."""
    Dx = np.asarray(Dx, dtype=float)
    Dz = np.asarray(Dz, dtype=float)
    if Dx.shape != Dz.shape:
        raise DimensionMismatch(f"shapes differ: {Dx.shape} vs {Dz.shape}")
    return np.sqrt(Dx**2 + Dz**2)


@dataclass
class BackscoreContext:
    """Training-side state a space needs to backscore.

    ``state`` holds space-specific precomputations (tangent matrices,
    warp-parameter caches and so on).
    """

    embedding: MdsEmbedding
    objects: list
    centroid: object
    tol_score: float
    state: dict = field(default_factory=dict)


class MetricSpace(ABC):
    """A set of objects with a distance, a centroid and a backscorer."""

    name = "abstract"
    # Retained dimension when the caller does not choose one (None: variance rule).
    default_dims = None
    # True when backscoring is a cheap closed form that never needs checking.
    linear_backscore = False

    @abstractmethod
    def distance(self, a, b):
        ...

    def distances_to(self, objects, y):
        return np.array([self.distance(o, y) for o in objects])

    def distance_matrix(self, objects):
        objects = list(objects)
        n = len(objects)
        D = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                D[i, j] = D[j, i] = self.distance(objects[i], objects[j])
        return D

    def median_candidates(self, objects):
        """Extra, space-generated candidates for the Fréchet median."""
        return []

    def centroid(self, objects, embedding):
        return frechet_median(self, objects)

    def prepare(self, objects, embedding, tol_score=None):
        """Build the context used by :meth:`backscore`."""
        objects = list(objects)
        if tol_score is None:
            tol_score = embedding.default_tol()
        return BackscoreContext(
            embedding=embedding,
            objects=objects,
            centroid=self.centroid(objects, embedding),
            tol_score=float(tol_score),
        )

    @abstractmethod
    def backscore(self, target, context):
        """Return an object whose score is ``target``, closest to the centroid."""

    def backscore_many(self, targets, context):
        """Unchecked backscores for each row of ``targets``."""
        return [self.backscore(t, context) for t in np.atleast_2d(targets)]

    def paired_distances(self, a, b):
        return np.array([self.distance(x, y) for x, y in zip(a, b)], dtype=float)

    def score(self, y, context):
        return gower_score(context.embedding, self.distances_to(context.objects, y))


def frechet_median(space, objects, candidates=None):
    """Candidate minimizing the summed distance to ``objects``.

    ``candidates`` defaults to the objects themselves plus whatever the
    space generates. Ties go to the lowest candidate index.
    """
    objects = list(objects)
    if not objects:
        raise EmptyInput("no objects given")
    if candidates is None:
        candidates = objects + list(space.median_candidates(objects))
    candidates = list(candidates)
    if not candidates:
        raise EmptyInput("no candidates given")
    totals = np.array([space.distances_to(objects, c).sum() for c in candidates])
    return candidates[int(np.argmin(totals))]


def backscore(space, target, context, check=True):
    """Map a score back to an object of ``space``.

    With ``check`` the result is re-scored and rejected when it misses
    ``target`` by more than ``context.tol_score``.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (context.embedding.k,):
        raise DimensionMismatch(
            f"target has shape {target.shape}, embedding has {context.embedding.k} dims"
        )
    y = space.backscore(target, context)
    if check:
        resid = float(np.linalg.norm(space.score(y, context) - target))
        if resid > context.tol_score:
            raise NoFeasibleSolution(
                f"backscored object misses the target by {resid:.4g} "
                f"(tolerance {context.tol_score:.4g})",
                target=target,
                residual=resid,
            )
    return y


class EuclideanSpace(MetricSpace):
    """Points in R^p with the usual distance.

    Objects are 1-D arrays. Scores are an orthonormal projection, so the
    backscore is explicit: the point of the feasible affine set nearest
    the geometric median.
    """

    name = "euclidean"
    linear_backscore = True

    def __init__(self, max_iter=500, tol=1e-12):
        self.max_iter = max_iter
        self.tol = tol

    def distance(self, a, b):
        return float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))

    def distances_to(self, objects, y):
        X = np.atleast_2d(np.asarray(objects, dtype=float))
        return np.linalg.norm(X - np.asarray(y, float), axis=1)

    def distance_matrix(self, objects):
        X = np.asarray(objects, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return cdist(X, X)

    def geometric_median(self, objects):
        X = np.asarray(objects, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = X.mean(axis=0)
        for _ in range(self.max_iter):
            d = np.linalg.norm(X - y, axis=1)
            if np.any(d < 1e-15):
                break
            w = 1 / d
            y_new = (w[:, None] * X).sum(axis=0) / w.sum()
            if np.linalg.norm(y_new - y) < self.tol * max(1.0, np.linalg.norm(y)):
                y = y_new
                break
            y = y_new
        return y

    def median_candidates(self, objects):
        return [self.geometric_median(objects)]

    def prepare(self, objects, embedding, tol_score=None):
        ctx = super().prepare(objects, embedding, tol_score)
        X = np.asarray(ctx.objects, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        mean = X.mean(axis=0)
        ctx.state["mean"] = mean
        # Orthonormal principal axes: scores = (X - mean) @ axes.
        ctx.state["axes"] = (X - mean).T @ embedding.scores / embedding.eigenvalues
        return ctx

    def backscore(self, target, context):
        axes = context.state["axes"]
        m = np.asarray(context.centroid, dtype=float)
        here = (m - context.state["mean"]) @ axes
        return m + axes @ (np.asarray(target, float) - here)

    def backscore_many(self, targets, context):
        axes = context.state["axes"]
        m = np.asarray(context.centroid, dtype=float)
        here = (m - context.state["mean"]) @ axes
        return list(m + (np.atleast_2d(targets) - here) @ axes.T)

    def paired_distances(self, a, b):
        A = np.asarray(a, dtype=float).reshape(len(a), -1)
        B = np.asarray(b, dtype=float).reshape(len(b), -1)
        return np.linalg.norm(A - B, axis=1)


class ClassicalMDS(TransformerMixin, BaseEstimator):
    """Classical MDS on a precomputed distance matrix.

    ``fit`` takes the ``(n, n)`` training distances; ``transform`` takes an
    ``(m, n)`` array of distances from new objects to the training objects
    and applies Gower's out-of-sample formula.

    Parameters
    ----------
    n_components : int or None
        Retained dimension. ``None`` picks the smallest dimension reaching
        ``variance`` explained, capped at ``k_max``.
    variance : float
        Target explained-variance fraction when ``n_components`` is None.
    k_max : int
        Cap on retained dimensions.
    eig_floor : float
        Relative eigenvalue floor passed to :func:`cmds`.
    """

    def __init__(self, n_components=None, variance=0.9, k_max=10, eig_floor=1e-10):
        self.n_components = n_components
        self.variance = variance
        self.k_max = k_max
        self.eig_floor = eig_floor

    def fit(self, X, y=None):
        cap = self.k_max if self.n_components is None else max(self.k_max, self.n_components)
        full = cmds(X, k_max=cap, eig_floor=self.eig_floor)
        if self.n_components is None:
            k = select_dimension(full, self.variance, self.k_max)
        else:
            k = min(int(self.n_components), full.k)
        self.embedding_ = full.truncate(k)
        self.n_components_ = k
        self.eigenvalues_ = self.embedding_.eigenvalues
        self.explained_variance_ratio_ = self.embedding_.explained
        return self

    def transform(self, X):
        check_is_fitted(self, "embedding_")
        return np.atleast_2d(gower_score(self.embedding_, X))

    def fit_transform(self, X, y=None):
        return self.fit(X).embedding_.scores.copy()


def save_distance_matrix(path, D):
    np.savetxt(path, np.asarray(D, dtype=float), delimiter=",", fmt="%.17g")


def load_distance_matrix(path):
    return check_distance_matrix(np.loadtxt(path, delimiter=",", ndmin=2))
