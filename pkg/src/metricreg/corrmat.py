"""Correlation matrices under Frobenius distance.

Weighted combinations are projected back onto the set of correlation
matrices with Higham's alternating projections (Dykstra-corrected), and
backscoring minimizes a penalized objective over combination weights.
"""

import csv
import json
import logging
import os

import numpy as np

from .exceptions import DimensionMismatch, NoConvergence, NoFeasibleSolution, ValidationError
from .mds import BackscoreContext, MetricSpace, gower_score

logger = logging.getLogger(__name__)

__all__ = [
    "frobenius_distance",
    "is_correlation",
    "check_correlation",
    "nearest_correlation",
    "corr_combination",
    "corr_frechet_median",
    "corr_backscore",
    "CorrelationSpace",
    "load_correlations",
    "save_correlations",
]

EIG_TOL = 1e-8


def frobenius_distance(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum()))


def is_correlation(c, eig_tol=EIG_TOL):
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        return False
    if not np.array_equal(c, c.T) or not np.all(np.diag(c) == 1.0):
        return False
    if np.abs(c).max() > 1.0:
        return False
    return bool(np.linalg.eigvalsh(c).min() >= -eig_tol)


def check_correlation(c):
    if not is_correlation(c):
        raise ValidationError("matrix is not a valid correlation matrix")
    return np.asarray(c, dtype=float)


def _psd_part(a):
    w, V = np.linalg.eigh(a)
    out = (V * np.maximum(w, 0.0)) @ V.T
    return (out + out.T) / 2


def _finish(y):
    # Exact symmetry, unit diagonal and entry bounds.
    y = (y + y.T) / 2
    np.fill_diagonal(y, 1.0)
    return np.clip(y, -1.0, 1.0)


def nearest_correlation(a, tol=1e-10, max_iter=500):
    """Frobenius-nearest correlation matrix to the symmetric matrix ``a``.

    Alternates projections onto the PSD cone (with Dykstra's correction)
    and onto the unit-diagonal set until successive iterates differ by
    less than ``tol``.

    Raises
    ------
    NoConvergence
        After ``max_iter`` iterations; ``err.last`` is the final iterate.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {a.shape}")
    if np.abs(a - a.T).max(initial=0.0) > 1e-10 * max(1.0, np.abs(a).max()):
        raise ValidationError("input must be symmetric")
    y = (a + a.T) / 2
    correction = np.zeros_like(y)
    change = np.inf
    for _ in range(max_iter):
        r = y - correction
        x = _psd_part(r)
        correction = x - r
        y_new = x.copy()
        np.fill_diagonal(y_new, 1.0)
        change = float(np.sqrt(((y_new - y) ** 2).sum()))
        y = y_new
        if change < tol:
            break
    out = _finish(y)
    if change >= tol:
        raise NoConvergence(
            f"nearest correlation did not converge in {max_iter} iterations", last=out, residual=change
        )
    return out


def corr_combination(matrices, weights, tol=1e-10, max_iter=500):
    """Correlation matrix nearest ``sum_i weights[i] * matrices[i]``.

    The weighted sum is returned unchanged when it is already a
    correlation matrix.
    """
    M = np.asarray(matrices, dtype=float)
    w = np.asarray(weights, dtype=float)
    if M.ndim != 3 or len(M) != len(w):
        raise DimensionMismatch("need one weight per matrix")
    if not np.all(np.isfinite(w)):
        raise ValidationError("weights must be finite")
    c = np.tensordot(w, M, axes=1)
    c = (c + c.T) / 2
    if abs(w.sum() - 1.0) <= 1e-12:
        np.fill_diagonal(c, 1.0)
    if is_correlation(c):
        return c
    try:
        return nearest_correlation(c, tol, max_iter)
    except NoConvergence as err:
        if is_correlation(err.last):
            logger.debug("projection stopped early at residual %.3g", err.residual)
            return err.last
        raise


def _dirichlet(rng, n, size):
    return rng.dirichlet(np.ones(n), size=size)


def corr_frechet_median(matrices, n_draws=2000, seed=0, weiszfeld_iter=200):
    """Approximate Fréchet median under Frobenius distance.

    Candidates are the observed matrices, their equal-weight average,
    ``n_draws`` random convex combinations, and the Weiszfeld geometric
    median (a convex combination, so itself a correlation matrix).
    """
    M = np.asarray(matrices, dtype=float)
    n = len(M)
    if n == 1:
        return M[0].copy()
    rng = np.random.default_rng(seed)
    W = np.vstack([np.eye(n), np.full((1, n), 1.0 / n), _dirichlet(rng, n, n_draws), _weiszfeld(M, weiszfeld_iter)])
    flat = M.reshape(n, -1)
    cands = W @ flat
    # Summed distances for every candidate at once.
    sq = (cands**2).sum(1)[:, None] - 2 * cands @ flat.T + (flat**2).sum(1)[None, :]
    totals = np.sqrt(np.maximum(sq, 0.0)).sum(axis=1)
    best = int(np.argmin(totals))
    return corr_combination(M, W[best])


def _weiszfeld(M, n_iter):
    n = len(M)
    flat = M.reshape(n, -1)
    w = np.full(n, 1.0 / n)
    for _ in range(n_iter):
        y = w @ flat
        d = np.linalg.norm(flat - y, axis=1)
        if np.any(d < 1e-14):
            break
        inv = 1.0 / d
        w_new = inv / inv.sum()
        if np.abs(w_new - w).max() < 1e-13:
            w = w_new
            break
        w = w_new
    return w[None, :]


class _PenalizedSearch:
    """Minimize ``d(median, C_g) + delta * ||score(C_g) - target||`` over weights.

    ``C_g = median + sum_i g_i (C_i - median)`` for the basis matrices
    ``C_i``, projected when it leaves the correlation set. The median's
    weight absorbs ``1 - sum(g)``, so every move keeps a unit diagonal.

    Under Frobenius distance the score is affine in the matrix, so inside
    the correlation set both terms have closed forms in ``g``; only
    projected trials are re-scored from distances.
    """

    def __init__(self, basis, median, e, train, target):
        self.m = median.shape[0]
        self.median = median.ravel()
        self.Dm = (basis - median).reshape(len(basis), -1).T
        self.H = self.Dm.T @ self.Dm
        self.e = e
        self.train = train.reshape(len(train), -1)
        self.target = target
        self.base = self._score(self.median)
        self.J = np.column_stack([self._score(b.ravel()) for b in basis]) - self.base[:, None]
        self.eye = EIG_TOL * np.eye(self.m)

    def _score(self, flat):
        return gower_score(self.e, np.linalg.norm(self.train - flat, axis=1))

    def matrix(self, g):
        """Return ``(matrix, projected)`` for weights ``g``."""
        c = (self.median + self.Dm @ g).reshape(self.m, self.m)
        c = (c + c.T) / 2
        np.fill_diagonal(c, 1.0)
        try:
            np.linalg.cholesky(c + self.eye)
            return np.clip(c, -1.0, 1.0), False
        except np.linalg.LinAlgError:
            pass
        try:
            return nearest_correlation(c), True
        except NoConvergence as err:
            return err.last, True

    def terms(self, g):
        c, projected = self.matrix(g)
        if not projected:
            dist = float(np.sqrt(max(g @ self.H @ g, 0.0)))
            res = float(np.linalg.norm(self.base + self.J @ g - self.target))
        else:
            dist = float(np.linalg.norm(c.ravel() - self.median))
            res = float(np.linalg.norm(self._score(c.ravel()) - self.target))
        return c, dist, res

    def descend(self, g, delta, directions, step=0.25, min_step=1e-4, max_eval=4000):
        c, dist, res = self.terms(g)
        best = dist + delta * res
        n_eval = 0
        while step >= min_step and n_eval < max_eval:
            improved = False
            for u in directions:
                for sgn in (1.0, -1.0):
                    trial = g + sgn * step * u
                    c_t, d_t, r_t = self.terms(trial)
                    n_eval += 1
                    f = d_t + delta * r_t
                    if f < best - 1e-15:
                        g, c, best, dist, res = trial, c_t, f, d_t, r_t
                        improved = True
                        break
            if not improved:
                step /= 2
        # Report the exact residual of the returned matrix.
        res = float(np.linalg.norm(self._score(c.ravel()) - self.target))
        return g, c, float(np.linalg.norm(c.ravel() - self.median)), res


def corr_backscore(target, e, matrices, median, delta=None, n_nearest=10, n_starts=20, seed=0, tol_score=None):
    """Correlation matrix with score ``target`` closest to the median.

    Searches combinations of the ``n_nearest`` matrices whose scores lie
    nearest the target, plus the median itself. ``delta`` starts at
    ``sqrt(lambda_1)`` and doubles until the score residual is within
    ``tol_score``.

    Raises
    ------
    NoFeasibleSolution
        If no ``delta`` up to ``2**10`` times the start reaches the bound.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (e.k,):
        raise DimensionMismatch(f"target has shape {target.shape}, embedding has {e.k} dims")
    M = np.asarray(matrices, dtype=float)
    tol = e.default_tol() if tol_score is None else float(tol_score)
    delta0 = float(np.sqrt(e.eigenvalues[0])) if delta is None else float(delta)
    gap = _box_gap(target, e, M)
    if gap > tol:
        raise NoFeasibleSolution(
            f"target lies {gap:.4g} outside the score range of any correlation matrix", target=target
        )
    near = np.argsort(np.linalg.norm(e.scores - target, axis=1), kind="stable")[:n_nearest]
    basis = M[near]
    search = _PenalizedSearch(basis, np.asarray(median, float), e, M, target)
    nb = len(basis)

    J, Dm = search.J, search.Dm
    directions = list(np.eye(nb))
    _, sv, Vt = np.linalg.svd(J)
    rank = int((sv > 1e-10 * sv.max(initial=1.0)).sum())
    directions += [v for v in Vt[rank:]]

    starts = [np.zeros(nb), _lift(J, Dm, target - search.base)]
    rng = np.random.default_rng(seed)
    for w in _dirichlet(rng, nb + 1, n_starts):
        starts.append(w[:nb])

    delta = delta0
    best = None
    for _ in range(11):
        for g0 in starts:
            g, c, dist, res = search.descend(g0, delta, directions)
            if res < tol and (best is None or dist < best[0]):
                best = (dist, c)
        if best is not None:
            return best[1]
        delta *= 2
    raise NoFeasibleSolution(
        f"no weighted combination reached the target score within {tol:.4g}", target=target
    )


def _box_gap(target, e, M):
    # Scores are affine in the matrix, s = c0 + A vec(C); bound each coordinate
    # using unit diagonal and off-diagonal entries in [-1, 1].
    n, m = len(M), M.shape[1]
    flat = M.reshape(n, -1)
    W = e.scores / e.eigenvalues
    A = W.T @ flat
    c0 = W.T @ (e.b_diag - (flat**2).sum(axis=1)) / 2
    diag = np.eye(m, dtype=bool).ravel()
    centre = c0 + A[:, diag].sum(axis=1)
    radius = np.abs(A[:, ~diag]).sum(axis=1)
    excess = np.maximum(np.abs(target - centre) - radius, 0.0)
    return float(np.linalg.norm(excess))


def _lift(J, Dm, rhs):
    # Weights with J g = rhs minimizing ||Dm g|| (KKT system, least squares).
    nb = J.shape[1]
    k = J.shape[0]
    H = Dm.T @ Dm
    kkt = np.block([[H, J.T], [J, np.zeros((k, k))]])
    sol = np.linalg.lstsq(kkt, np.concatenate([np.zeros(nb), rhs]), rcond=None)[0]
    return sol[:nb]


class CorrelationSpace(MetricSpace):
    """Correlation matrices under Frobenius distance."""

    name = "corr"
    default_dims = 2

    def __init__(self, n_nearest=10, n_starts=20, n_draws=2000, seed=0):
        self.n_nearest = n_nearest
        self.n_starts = n_starts
        self.n_draws = n_draws
        self.seed = seed

    def distance(self, a, b):
        return frobenius_distance(a, b)

    def distances_to(self, objects, y):
        M = np.asarray(objects, dtype=float)
        return np.linalg.norm(M.reshape(len(M), -1) - np.asarray(y, float).ravel(), axis=1)

    def distance_matrix(self, objects):
        flat = np.asarray(objects, dtype=float).reshape(len(objects), -1)
        sq = (flat**2).sum(1)
        D2 = sq[:, None] + sq[None, :] - 2 * flat @ flat.T
        D = np.sqrt(np.maximum(D2, 0.0))
        D = (D + D.T) / 2
        np.fill_diagonal(D, 0.0)
        return D

    def centroid(self, objects, embedding):
        return corr_frechet_median(objects, n_draws=self.n_draws, seed=self.seed)

    def backscore(self, target, context):
        # The centroid is the closest object to itself, so it wins whenever feasible.
        if np.linalg.norm(self.score(context.centroid, context) - target) <= context.tol_score:
            return context.centroid
        return corr_backscore(
            target,
            context.embedding,
            context.objects,
            context.centroid,
            n_nearest=self.n_nearest,
            n_starts=self.n_starts,
            seed=self.seed,
            tol_score=context.tol_score,
        )


def load_correlations(manifest):
    """Read a JSON manifest ``{"m", "subjects": [{"id", "file"}]}`` of CSV matrices."""
    with open(manifest) as fh:
        doc = json.load(fh)
    root = os.path.dirname(os.path.abspath(manifest))
    m = int(doc["m"])
    ids, mats = [], []
    for subj in doc["subjects"]:
        c = np.loadtxt(os.path.join(root, subj["file"]), delimiter=",", ndmin=2)
        if c.shape != (m, m):
            raise DimensionMismatch(f"subject {subj['id']!r}: expected {(m, m)}, got {c.shape}")
        ids.append(str(subj["id"]))
        mats.append(c)
    return ids, mats


def save_correlations(manifest, ids, matrices):
    root = os.path.dirname(os.path.abspath(manifest))
    subjects = []
    for sid, c in zip(ids, matrices):
        fname = f"corr_{sid}.csv"
        with open(os.path.join(root, fname), "w", newline="") as fh:
            csv.writer(fh).writerows([[repr(float(v)) for v in row] for row in np.asarray(c)])
        subjects.append({"id": str(sid), "file": fname})
    with open(manifest, "w") as fh:
        json.dump({"m": int(np.asarray(matrices[0]).shape[0]), "subjects": subjects}, fh, indent=1)
