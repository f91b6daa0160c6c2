"""Unregistered curves under discrete Fréchet distance.

A curve is a function sampled on a grid over [0, 1], compared as the 2-D
point sequence ``(t, f(t))``. New members of the curve manifold are
built from observed ones with a three-parameter time warp and a
warp-aware weighted combination, and backscoring searches over weighted
combinations of triples of observed curves.
"""

import csv
import itertools
import json
import logging
from dataclasses import dataclass

import numpy as np

from . import _curve_kernels as K
from .exceptions import AllZeroCurves, DimensionMismatch, InvalidParams, InvalidWeight, NoFeasibleSolution, ValidationError
from .mds import BackscoreContext, MetricSpace, gower_score

logger = logging.getLogger(__name__)

__all__ = [
    "SampledCurve",
    "WarpParams",
    "uniform_grid",
    "resample",
    "normalize_curves",
    "frechet_distance",
    "transform_curve",
    "warp_objective",
    "match_params",
    "combine_pair",
    "combine_triple",
    "curve_centroid",
    "curve_backscore",
    "CurveSpace",
    "load_curves",
    "save_curves",
]

WEIGHT_BOUNDS = (-0.1, 1.1)
P1_GRID = np.round(np.arange(0.05, 0.951, 0.05), 10)
P3_GRID = np.round(np.arange(0.5, 1.501, 0.1), 10)
_LO = np.array([0.01, 0.01, 0.05])
_HI = np.array([0.99, 0.99, 3.0])


@dataclass(frozen=True, eq=False)
class SampledCurve:
    """Values ``f`` on a strictly increasing grid ``t`` with ``t[0] = 0``, ``t[-1] = 1``."""

    t: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if t.ndim != 1 or t.shape != f.shape or len(t) < 2:
            raise DimensionMismatch("t and f must be matching 1-D arrays of length >= 2")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(f))):
            raise ValidationError("curve has non-finite entries")
        if t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
            raise ValidationError("time grid must increase strictly from 0 to 1")
        if f.min() < 0:
            raise ValidationError("curve values must be nonnegative")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "f", f)

    def __len__(self):
        return len(self.t)

    @property
    def peak_time(self):
        return float(self.t[np.argmax(self.f)])


@dataclass(frozen=True)
class WarpParams:
    """Move time ``p1`` of the input to ``p2`` of the output; scale by ``p3``."""

    p1: float
    p2: float
    p3: float

    def __post_init__(self):
        if not (0 < self.p1 < 1 and 0 < self.p2 < 1 and self.p3 > 0):
            raise InvalidParams(f"need p1, p2 in (0, 1) and p3 > 0, got {self}")

    def as_array(self):
        return np.array([self.p1, self.p2, self.p3])

    @classmethod
    def from_array(cls, p):
        return cls(float(p[0]), float(p[1]), float(p[2]))


def uniform_grid(size=240):
    t = np.linspace(0.0, 1.0, size)
    t[-1] = 1.0
    return t


def resample(curve, grid):
    grid = np.asarray(grid, dtype=float)
    if len(grid) == len(curve.t) and np.array_equal(grid, curve.t):
        return curve
    return SampledCurve(grid, np.interp(grid, curve.t, curve.f))


def normalize_curves(curves, scale=None):
    """Rescale time to [0, 1] and divide values by the global maximum.

    Returns ``(curves, scale)``. Pass ``scale`` to reuse a training scale
    on new curves.
    """
    out = []
    raw = []
    for c in curves:
        t = np.asarray(c[0] if isinstance(c, tuple) else c.t, dtype=float)
        f = np.asarray(c[1] if isinstance(c, tuple) else c.f, dtype=float)
        raw.append((t, f))
    if scale is None:
        scale = max((float(f.max()) for _, f in raw), default=0.0)
        if scale <= 0:
            raise AllZeroCurves("no curve has a positive maximum")
    for t, f in raw:
        tn = (t - t[0]) / (t[-1] - t[0])
        tn[0], tn[-1] = 0.0, 1.0
        out.append(SampledCurve(tn, f / scale))
    return out, float(scale)


def frechet_distance(f1, f2):
    """Discrete Fréchet distance between ``(t, f1(t))`` and ``(t, f2(t))``."""
    return float(K.dfd(f1.t, f1.f, f2.t, f2.f))


def transform_curve(f, p, grid=None):
    """Apply the piecewise-linear time warp and amplitude scale ``p``.

    The output is sampled on ``grid`` (default: the input grid) by linear
    interpolation of ``f``.
    """
    if not isinstance(p, WarpParams):
        p = WarpParams(*p)
    grid = f.t if grid is None else np.asarray(grid, dtype=float)
    return SampledCurve(grid, K.warp(f.t, f.f, grid, p.p1, p.p2, p.p3))


def warp_objective(f1, f2, p):
    """Fréchet distance from ``f1`` warped by ``p`` (on ``f2``'s grid) to ``f2``."""
    return frechet_distance(transform_curve(f1, p, f2.t), f2)


def _match(f1, f2, resolution=None, start=None, start_step=None):
    if resolution is not None:
        grid = uniform_grid(resolution)
        f1, f2 = resample(f1, grid), resample(f2, grid)
    if start is None:
        p, best = K.grid_search(f1.t, f1.f, f2.t, f2.f, P1_GRID, P1_GRID, P3_GRID)
        steps = np.array([0.025, 0.025, 0.05])
    else:
        p = np.clip(np.asarray(start, dtype=float), _LO, _HI)
        best = float(K.dfd(f2.t, K.warp(f1.t, f1.f, f2.t, p[0], p[1], p[2]), f2.t, f2.f))
        steps = np.array([0.02, 0.02, 0.04]) if start_step is None else np.asarray(start_step, float)
    p, best = K.refine(f1.t, f1.f, f2.t, f2.f, p, best, steps, 1e-3, _LO, _HI, 5000)
    return p, float(best)


def match_params(f1, f2, resolution=None):
    """Warp parameters bringing ``f1`` closest to ``f2``.

    A coarse grid (``p1, p2`` in 0.05..0.95, ``p3`` in 0.5..1.5) is
    followed by coordinate descent with step halving down to 1e-3.
    ``resolution`` resamples both curves to that many points first.
    """
    p, _ = _match(f1, f2, resolution)
    return WarpParams.from_array(p)


def _partial(p, gamma):
    # Warp parameters moved a fraction ``gamma`` of the way to ``p``.
    p1 = p[0]
    p2 = min(max(p1 + gamma * (p[1] - p1), _LO[1]), _HI[1])
    p3 = max(1.0 + gamma * (p[2] - 1.0), _LO[2])
    return p1, p2, p3


def _combine(f1, f2, gamma, p12, p21, grid):
    if gamma == 1.0:
        return resample(f1, grid)
    if gamma == 0.0:
        return resample(f2, grid)
    a = _partial(p12, 1.0 - gamma)
    b = _partial(p21, gamma)
    g1 = K.warp(f1.t, f1.f, grid, a[0], a[1], a[2])
    g2 = K.warp(f2.t, f2.f, grid, b[0], b[1], b[2])
    return SampledCurve(grid, np.maximum(gamma * g1 + (1.0 - gamma) * g2, 0.0))


def _common_grid(f1, f2, grid):
    if grid is not None:
        return np.asarray(grid, dtype=float)
    if len(f1.t) == len(f2.t) and np.array_equal(f1.t, f2.t):
        return f1.t
    return uniform_grid()


def _check_weight(w):
    lo, hi = WEIGHT_BOUNDS
    if not (lo - 1e-12 <= w <= hi + 1e-12):
        raise InvalidWeight(f"weight {w} outside [{lo}, {hi}]")


def _pair(f1, f2, gamma, grid=None, resolution=None, cache=None):
    grid = _common_grid(f1, f2, grid)
    if gamma in (0.0, 1.0):
        return _combine(f1, f2, gamma, None, None, grid)
    key = (id(f1), id(f2), resolution)
    if cache is not None and key in cache:
        p12, p21 = cache[key]
    else:
        p12 = _match(f1, f2, resolution)[0]
        p21 = _match(f2, f1, resolution)[0]
        if cache is not None:
            cache[key] = (p12, p21)
    return _combine(f1, f2, gamma, p12, p21, grid)


def combine_pair(f1, f2, gamma, grid=None, resolution=None, cache=None):
    """Warp-aware weighted combination ``gamma f1 + (1 - gamma) f2``.

    Each curve is warped part of the way toward the other (by the
    parameters from :func:`match_params`) before the pointwise weighted
    sum. ``gamma = 1`` gives ``f1`` and ``gamma = 0`` gives ``f2``.
    Negative values produced by extrapolating weights are clipped to 0.
    """
    _check_weight(gamma)
    return _pair(f1, f2, float(gamma), grid, resolution, cache)


def combine_triple(f1, f2, f3, w, grid=None, resolution=None, cache=None):
    """Weighted combination of three curves, pairing the first two first."""
    w = [float(x) for x in w]
    if len(w) != 3:
        raise InvalidWeight("need exactly three weights")
    for x in w:
        _check_weight(x)
    if abs(sum(w) - 1.0) > 1e-9:
        raise InvalidWeight(f"weights sum to {sum(w)}, not 1")
    s = w[0] + w[1]
    if abs(s) < 1e-12:
        return resample(f3, _common_grid(f1, f3, grid))
    first = _pair(f1, f2, w[0] / s, grid, resolution, cache)
    return _pair(first, f3, s, grid, resolution, cache)


class _TripleSearch:
    """Search over combinations of triples of training curves for a target score.

    The unknowns are the pair weight ``a`` and the triple weight ``b``,
    both confined to the weight bounds. Pair matches between training
    curves are cached; during the search the second-stage match is
    warm-started from an interpolation of cached matches, and the winning
    candidate is recomputed exactly with :func:`combine_triple` and
    re-scored before it is accepted.
    """

    def __init__(self, ctx, space):
        self.ctx = ctx
        self.space = space
        self.e = ctx.embedding
        self.curves = ctx.objects
        self.T = ctx.state["T"]
        self.F = ctx.state["F"]
        self.grid = ctx.state["grid"]
        self.cache = ctx.state["match_cache"]

    def match(self, i, j):
        key = (i, j)
        if key not in self.cache:
            self.cache[key] = _match(self.curves[i], self.curves[j], self.space.match_resolution)[0]
        return self.cache[key]

    def distances(self, c):
        return K.dfd_to_all(c.t, c.f, self.T, self.F)

    def exact(self, i, j, l, a, b):
        # Same combination as combine_triple with weights (ab, (1-a)b, 1-b).
        c = self.curves
        first = _pair(c[i], c[j], a, self.grid, self.space.match_resolution, self.ctx.state["pair_cache"])
        return _pair(first, c[l], b, self.grid, self.space.match_resolution, None)

    def approx(self, i, j, l, a, b, warm):
        c = self.curves
        res = self.space.match_resolution
        if a in (0.0, 1.0):
            first = resample(c[i] if a == 1.0 else c[j], self.grid)
        else:
            first = _combine(c[i], c[j], a, self.match(i, j), self.match(j, i), self.grid)
        if b in (0.0, 1.0):
            return first if b == 1.0 else c[l], warm
        if warm is None:
            s12 = a * self.match(i, l) + (1 - a) * self.match(j, l)
            s21 = a * self.match(l, i) + (1 - a) * self.match(l, j)
        else:
            s12, s21 = warm
        p12 = _match(first, c[l], res, start=s12)[0]
        p21 = _match(c[l], first, res, start=s21)[0]
        return _combine(first, c[l], b, p12, p21, self.grid), (p12, p21)

    def solve(self, i, j, l, target, tol):
        """Return ``(a, b, residual, (curve, distances))`` or None if pruned."""
        S = self.e.scores
        lo, hi = WEIGHT_BOUNDS
        A = np.vstack([S[[i, j, l]].T, np.ones(3)])
        w = np.linalg.lstsq(A, np.append(target, 1.0), rcond=None)[0]
        b = w[0] + w[1]
        a = w[0] / b if abs(b) > 1e-9 else 0.5
        m = self.space.prune_margin
        if not (lo - m <= a <= hi + m and lo - m <= b <= hi + m):
            return None
        x = np.clip([a, b], lo, hi)

        def resid(x, warm):
            cand, warm = self.approx(i, j, l, float(x[0]), float(x[1]), warm)
            d = self.distances(cand)
            return gower_score(self.e, d) - target, warm, (cand, d)

        r, warm, got = resid(x, None)
        # Jacobian of the linearized (score-affine) combination; Broyden updates after.
        si, sj, sl = S[i], S[j], S[l]
        J = np.column_stack([x[1] * (si - sj), x[0] * si + (1 - x[0]) * sj - sl])
        for _ in range(self.space.max_steps):
            if np.linalg.norm(r) < 0.1 * tol:
                break
            dx = -np.linalg.lstsq(J, r, rcond=None)[0]
            x_new = np.clip(x + dx, lo, hi)
            dx = x_new - x
            if np.linalg.norm(dx) < 1e-6:
                break
            r_new, warm_new, got_new = resid(x_new, warm)
            J = J + np.outer((r_new - r) - J @ dx, dx) / (dx @ dx)
            if np.linalg.norm(r_new) < np.linalg.norm(r):
                x, r, warm, got = x_new, r_new, warm_new, got_new
        return float(x[0]), float(x[1]), float(np.linalg.norm(r)), got

    def run(self, target, objective):
        """Feasible ``(objective, curve, weights)`` candidates, best first."""
        target = np.asarray(target, dtype=float)
        tol = self.ctx.tol_score
        d_target = np.linalg.norm(self.e.scores - target, axis=1)
        near = np.argsort(d_target, kind="stable")[: self.space.n_nearest]
        # Observed curves already within tolerance are feasible as they stand.
        found = [
            (objective(self.curves[i], self.distances(self.curves[i])), i, i, i, 1.0, 1.0)
            for i in near.tolist()
            if d_target[i] < tol
        ]
        for trio in itertools.combinations(near.tolist(), 3):
            for l in trio:
                i, j = [q for q in trio if q != l]
                sol = self.solve(i, j, l, target, tol)
                if sol is None or sol[2] >= tol:
                    continue
                cand, d = sol[3]
                found.append((objective(cand, d), i, j, l, sol[0], sol[1]))
        scored = sorted(found, key=lambda r: r[0])
        for _, i, j, l, a, b in scored:
            if i == j == l:
                return self.curves[i], (1.0, 0.0, 0.0), (i, i, i)
            cand = self.exact(i, j, l, a, b)
            d = self.distances(cand)
            res = float(np.linalg.norm(gower_score(self.e, d) - target))
            if res < tol:
                return cand, (a * b, (1 - a) * b, 1 - b), (i, j, l)
        raise NoFeasibleSolution(
            f"no combination of nearby curves reaches the target score within {tol:.4g}",
            target=target,
        )


def _curve_context(curves, e, space, tol_score=None):
    grid = curves[0].t
    for c in curves:
        if len(c.t) != len(grid) or not np.array_equal(c.t, grid):
            raise ValidationError("curves must share a common grid; resample them first")
    return BackscoreContext(
        embedding=e,
        objects=list(curves),
        centroid=None,
        tol_score=e.default_tol() if tol_score is None else float(tol_score),
        state={
            "T": np.stack([c.t for c in curves]),
            "F": np.stack([c.f for c in curves]),
            "grid": grid,
            "match_cache": {},
            "pair_cache": {},
        },
    )


def curve_centroid(curves, e, space=None, tol_score=None, context=None):
    """Centroid curve: the zero-score combination with the least summed distance.

    Combinations are drawn from triples of the curves whose scores are
    nearest the origin.
    """
    curves = list(curves)
    first = curves[0]
    if all(len(c.t) == len(first.t) and np.array_equal(c.f, first.f) for c in curves):
        return first
    space = CurveSpace() if space is None else space
    ctx = context if context is not None else _curve_context(curves, e, space, tol_score)
    search = _TripleSearch(ctx, space)
    cand, _, _ = search.run(np.zeros(e.k), lambda c, d: float(d.sum()))
    return cand


def curve_backscore(target, e, curves, centroid, space=None, tol_score=None, context=None):
    """Combination of nearby curves with score ``target``, closest to ``centroid``.

    Raises
    ------
    NoFeasibleSolution
        When no triple admits weights within bounds reaching the target.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (e.k,):
        raise DimensionMismatch(f"target has shape {target.shape}, embedding has {e.k} dims")
    space = CurveSpace() if space is None else space
    ctx = context if context is not None else _curve_context(list(curves), e, space, tol_score)
    search = _TripleSearch(ctx, space)
    cand, _, _ = search.run(target, lambda c, d: frechet_distance(c, centroid))
    return cand


class CurveSpace(MetricSpace):
    """Curves on a common grid under discrete Fréchet distance.

    Parameters
    ----------
    n_nearest : int
        How many curves nearest the target score feed the triple search.
    match_resolution : int or None
        Grid size used when matching warp parameters (None: native grid).
    prune_margin : float
        Triples whose linearized weights fall further than this outside the
        weight bounds are skipped.
    max_steps : int
        Quasi-Newton steps per triple.
    """

    name = "curve"
    default_dims = 2

    def __init__(self, n_nearest=10, match_resolution=60, prune_margin=0.1, max_steps=6):
        self.n_nearest = n_nearest
        self.match_resolution = match_resolution
        self.prune_margin = prune_margin
        self.max_steps = max_steps

    def distance(self, a, b):
        return frechet_distance(a, b)

    def distances_to(self, objects, y):
        T = np.stack([o.t for o in objects])
        F = np.stack([o.f for o in objects])
        if T.shape[1] == len(y.t):
            return K.dfd_to_all(y.t, y.f, T, F)
        return np.array([frechet_distance(o, y) for o in objects])

    def distance_matrix(self, objects):
        objects = list(objects)
        if len({len(o.t) for o in objects}) == 1:
            return K.dfd_matrix(np.stack([o.t for o in objects]), np.stack([o.f for o in objects]))
        return super().distance_matrix(objects)

    def prepare(self, objects, embedding, tol_score=None):
        ctx = _curve_context(list(objects), embedding, self, tol_score)
        ctx.centroid = curve_centroid(ctx.objects, embedding, self, context=ctx)
        return ctx

    def centroid(self, objects, embedding):
        return curve_centroid(list(objects), embedding, self)

    def backscore(self, target, context):
        # The centroid is the closest object to itself, so it wins whenever feasible.
        if np.linalg.norm(self.score(context.centroid, context) - target) <= context.tol_score:
            return context.centroid
        return curve_backscore(
            target, context.embedding, context.objects, context.centroid, self, context=context
        )


def load_curves(path):
    """Read curves from CSV (``subject,t,value``) or JSON; return ``(ids, curves)``.

    Values are returned raw; use :func:`normalize_curves` before computing
    distances.
    """
    if str(path).endswith(".json"):
        with open(path) as fh:
            doc = json.load(fh)
        items = doc["curves"] if isinstance(doc, dict) else doc
        ids, raw = [], []
        for k, item in enumerate(items):
            if isinstance(item, dict):
                ids.append(str(item.get("id", k)))
                raw.append((np.asarray(item["t"], float), np.asarray(item["value"], float)))
            else:
                vals = np.asarray(item, dtype=float)
                ids.append(str(k))
                raw.append((np.linspace(0, 1, len(vals)), vals))
    else:
        rows = {}
        order = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                sid = row["subject"]
                if sid not in rows:
                    rows[sid] = []
                    order.append(sid)
                rows[sid].append((float(row["t"]), float(row["value"])))
        ids, raw = order, []
        for sid in order:
            pts = sorted(rows[sid])
            raw.append((np.array([p[0] for p in pts]), np.array([p[1] for p in pts])))
    return ids, raw


def save_curves(path, ids, curves):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject", "t", "value"])
        for sid, c in zip(ids, curves):
            for t, v in zip(c.t, c.f):
                w.writerow([sid, repr(float(t)), repr(float(v))])
