import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import all_couplings_frechet, brute_force_frechet, bump_curve, bump_family, count_modes
from metricreg.curves import (
    P1_GRID,
    P3_GRID,
    CurveSpace,
    SampledCurve,
    WarpParams,
    combine_pair,
    combine_triple,
    curve_backscore,
    frechet_distance,
    load_curves,
    match_params,
    normalize_curves,
    resample,
    save_curves,
    transform_curve,
    uniform_grid,
    warp_objective,
)
from metricreg.exceptions import (
    AllZeroCurves,
    InvalidParams,
    InvalidWeight,
    NoFeasibleSolution,
    ValidationError,
)
from metricreg.mds import backscore, cmds, gower_score


def random_curve(rng, size):
    t = np.sort(rng.uniform(0, 1, size))
    t[0], t[-1] = 0.0, 1.0
    t = np.unique(t)
    return SampledCurve(t, rng.uniform(0, 1, len(t)))


@pytest.fixture(scope="module")
def fitted_family():
    rng = np.random.default_rng(21)
    curves, _ = normalize_curves(bump_family(rng, 16))
    space = CurveSpace()
    D = space.distance_matrix(curves)
    e = cmds(D).truncate(2)
    ctx = space.prepare(curves, e)
    return space, curves, D, e, ctx


def test_curve_validation():
    t = uniform_grid(5)
    with pytest.raises(ValidationError):
        SampledCurve(t * 0.5, np.ones(5))
    with pytest.raises(ValidationError):
        SampledCurve(t, -np.ones(5))
    with pytest.raises(ValidationError):
        SampledCurve(t, np.array([0, 1, np.nan, 1, 0]))


def test_normalize_cases():
    t = uniform_grid(10)
    c4 = SampledCurve(t, 4 * np.sin(np.pi * t) ** 2)
    (out,), scale = normalize_curves([c4])
    assert scale == pytest.approx(c4.f.max()) and out.f.max() == pytest.approx(1.0)
    ones = SampledCurve(t, np.linspace(0, 1, 10))
    (same,), s1 = normalize_curves([ones])
    assert s1 == 1.0 and np.array_equal(same.f, ones.f)
    a, b = SampledCurve(t, 2 * ones.f), SampledCurve(t, 5 * ones.f)
    (na, nb), s = normalize_curves([a, b])
    assert s == 5.0
    assert np.allclose(na.f, a.f / 5) and np.allclose(nb.f, b.f / 5)
    with pytest.raises(AllZeroCurves):
        normalize_curves([SampledCurve(t, np.zeros(10))])


def test_normalize_rescales_time():
    raw = (np.array([2.0, 3.0, 6.0]), np.array([1.0, 2.0, 0.0]))
    (c,), _ = normalize_curves([raw])
    assert np.allclose(c.t, [0.0, 0.25, 1.0])


def test_frechet_simple_cases():
    t = uniform_grid(30)
    f = SampledCurve(t, np.sin(np.pi * t) ** 2)
    assert frechet_distance(f, f) == 0.0
    g = SampledCurve(t, f.f + 0.3)
    assert frechet_distance(f, g) == pytest.approx(0.3, abs=1e-15)


def test_frechet_matches_two_independent_enumerations():
    rng = np.random.default_rng(0)
    P = np.column_stack([uniform_grid(4), rng.uniform(size=4)])
    Q = np.column_stack([uniform_grid(4), rng.uniform(size=4)])
    d = frechet_distance(SampledCurve(*P.T), SampledCurve(*Q.T))
    assert d == brute_force_frechet(P, Q) == all_couplings_frechet(P, Q)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 8), st.integers(2, 8))
def test_frechet_equals_brute_force(seed, n, m):
    rng = np.random.default_rng(seed)
    a, b = random_curve(rng, n), random_curve(rng, m)
    P = np.column_stack([a.t, a.f])
    Q = np.column_stack([b.t, b.f])
    assert frechet_distance(a, b) == brute_force_frechet(P, Q)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_frechet_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_curve(rng, rng.integers(2, 30)) for _ in range(3))
    assert frechet_distance(a, b) == frechet_distance(b, a)
    assert frechet_distance(a, c) <= frechet_distance(a, b) + frechet_distance(b, c) + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 2.0))
def test_bounded_frechet_agrees_with_full_sweep(seed, bound):
    from metricreg import _curve_kernels as K

    rng = np.random.default_rng(seed)
    a, b = random_curve(rng, rng.integers(2, 30)), random_curve(rng, rng.integers(2, 30))
    full = K.dfd(a.t, a.f, b.t, b.f)
    cut = K.dfd_below(a.t, a.f, b.t, b.f, bound)
    assert cut == (full if full < bound else np.inf)


def test_warp_identity_and_scaling():
    t = uniform_grid(240)
    f = bump_curve(0.4, 0.1, 0.7)
    for a in (0.2, 0.5, 0.8):
        assert np.allclose(transform_curve(f, (a, a, 1.0)).f, f.f, atol=1e-12)
    for p1, p2 in ((0.3, 0.3), (0.4, 0.55)):
        assert transform_curve(f, WarpParams(p1, p2, 2.0)).f.max() == pytest.approx(2 * f.f.max(), rel=1e-3)
    ramp = SampledCurve(t, t.copy())
    out = transform_curve(ramp, (0.4, 0.6, 0.8), grid=np.array([0.0, 0.6, 1.0]))
    assert out.f[1] == pytest.approx(0.32, abs=1e-12)


def test_warp_params_validation():
    with pytest.raises(InvalidParams):
        WarpParams(0.0, 0.5, 1.0)
    with pytest.raises(InvalidParams):
        WarpParams(0.5, 1.0, 1.0)
    with pytest.raises(InvalidParams):
        WarpParams(0.5, 0.5, 0.0)


def test_match_identity():
    f = bump_curve(0.45, 0.08, 0.9)
    p = match_params(f, f)
    assert warp_objective(f, f, p) < 1e-3
    assert p.p1 == pytest.approx(p.p2, abs=0.05)
    assert p.p3 == pytest.approx(1.0, abs=0.05)


@pytest.mark.parametrize("q", [(0.4, 0.6, 0.8), (0.5, 0.35, 1.2), (0.6, 0.5, 0.9)])
def test_match_recovers_most_of_a_warp(q):
    f1 = bump_curve(0.45, 0.08, 0.9)
    f2 = transform_curve(f1, q)
    p = match_params(f1, f2)
    assert warp_objective(f1, f2, p) <= frechet_distance(f1, f2) / 2


def test_match_never_worse_than_any_grid_node():
    rng = np.random.default_rng(1)
    f1, f2 = bump_family(rng, 2, size=60)
    best = warp_objective(f1, f2, match_params(f1, f2))
    assert best <= frechet_distance(f1, f2)
    for p1 in P1_GRID[::3]:
        for p2 in P1_GRID[::3]:
            for p3 in P3_GRID[::2]:
                assert best <= warp_objective(f1, f2, (p1, p2, p3)) + 1e-12


def test_match_params_within_bounds():
    rng = np.random.default_rng(2)
    for _ in range(5):
        f1, f2 = bump_family(rng, 2, size=60)
        p = match_params(f1, f2)
        assert 0 < p.p1 < 1 and 0 < p.p2 < 1 and p.p3 > 0


def test_combine_pair_endpoints():
    rng = np.random.default_rng(3)
    for _ in range(5):
        f1, f2 = bump_family(rng, 2)
        assert np.allclose(combine_pair(f1, f2, 1.0).f, f1.f, atol=1e-9)
        assert np.allclose(combine_pair(f1, f2, 0.0).f, f2.f, atol=1e-9)


def test_combine_pair_midpoint_is_a_bump_between_peaks():
    f1 = bump_curve(0.35, 0.06, 1.0)
    f2 = bump_curve(0.65, 0.06, 0.8)
    mid = combine_pair(f1, f2, 0.5)
    assert count_modes(mid.f) == 1
    assert 0.35 <= mid.peak_time <= 0.65
    # The naive average of the same pair is bimodal.
    assert count_modes(0.5 * (f1.f + f2.f)) == 2


def test_combine_pair_rejects_wild_weights():
    f = bump_curve(0.5, 0.1, 1.0)
    with pytest.raises(InvalidWeight):
        combine_pair(f, f, 1.5)


def test_combine_pair_on_mismatched_grids():
    f1 = resample(bump_curve(0.4, 0.1, 1.0), uniform_grid(100))
    f2 = bump_curve(0.6, 0.1, 1.0)
    out = combine_pair(f1, f2, 0.5)
    assert len(out.t) == 240


def test_combine_triple_cases():
    f1, f2, f3 = bump_curve(0.35, 0.06, 1.0), bump_curve(0.5, 0.06, 0.7), bump_curve(0.65, 0.06, 0.9)
    assert np.allclose(combine_triple(f1, f2, f3, (1, 0, 0)).f, f1.f, atol=1e-9)
    assert np.allclose(combine_triple(f1, f2, f3, (0, 0, 1)).f, f3.f, atol=1e-9)
    mean = combine_triple(f1, f2, f3, (1 / 3, 1 / 3, 1 / 3))
    assert count_modes(mean.f) == 1
    assert 0.35 <= mean.peak_time <= 0.65
    with pytest.raises(InvalidWeight):
        combine_triple(f1, f2, f3, (0.5, 0.5, 0.5))
    with pytest.raises(InvalidWeight):
        combine_triple(f1, f2, f3, (0.5, 0.5))


def test_in_sample_scores(fitted_family):
    space, curves, D, e, ctx = fitted_family
    S = np.array([gower_score(e, D[:, i]) for i in range(len(curves))])
    assert np.allclose(S, e.scores, rtol=1e-8, atol=1e-8 * np.abs(e.scores).max())
    assert np.allclose(np.array([space.score(c, ctx) for c in curves[:3]]), e.scores[:3], atol=1e-10)


def test_centroid_scores_near_origin(fitted_family):
    space, curves, _, e, ctx = fitted_family
    assert np.linalg.norm(space.score(ctx.centroid, ctx)) <= ctx.tol_score


def test_centroid_beats_medoid(fitted_family):
    space, curves, D, _, ctx = fitted_family
    total = space.distances_to(curves, ctx.centroid).sum()
    assert total <= D.sum(axis=1).min() + 1e-12


def test_centroid_beats_every_feasible_observed_curve(fitted_family):
    space, curves, D, e, ctx = fitted_family
    total = space.distances_to(curves, ctx.centroid).sum()
    feasible = np.linalg.norm(e.scores, axis=1) < ctx.tol_score
    assert feasible.any()
    assert total <= D.sum(axis=1)[feasible].min() + 1e-12


def test_centroid_of_identical_curves():
    f = bump_curve(0.5, 0.1, 1.0)
    curves = [f, SampledCurve(f.t, f.f.copy()), SampledCurve(f.t, f.f.copy())]
    from metricreg.curves import curve_centroid

    e = cmds(np.array([[0, 1.0, 1], [1, 0, 1], [1, 1, 0]]))
    assert np.array_equal(curve_centroid(curves, e).f, f.f)


def test_backscore_zero_is_centroid(fitted_family):
    space, _, _, e, ctx = fitted_family
    y = backscore(space, np.zeros(e.k), ctx)
    assert frechet_distance(y, ctx.centroid) <= ctx.tol_score


def test_backscore_roundtrip_hits_neighbourhood(fitted_family):
    space, curves, D, e, ctx = fitted_family
    nn = np.median(np.sort(D + np.diag(np.full(len(D), np.inf)), axis=1)[:, 0])
    for i in (0, 5, 11):
        y = backscore(space, e.scores[i], ctx)
        assert np.linalg.norm(space.score(y, ctx) - e.scores[i]) <= ctx.tol_score
        assert frechet_distance(y, curves[i]) <= nn


def test_backscore_far_target_infeasible(fitted_family):
    space, curves, _, e, ctx = fitted_family
    target = np.zeros(e.k)
    target[0] = 100 * np.sqrt(e.eigenvalues[0])
    with pytest.raises(NoFeasibleSolution) as err:
        backscore(space, target, ctx)
    assert np.array_equal(err.value.target, target)


def test_backscore_feasibility_shrinks_toward_centroid(fitted_family):
    space, curves, _, e, ctx = fitted_family
    s = e.scores[3]
    for c in (1.0, 0.5, 0.0):
        y = curve_backscore(c * s, e, curves, ctx.centroid, space, context=ctx)
        assert np.linalg.norm(space.score(y, ctx) - c * s) <= ctx.tol_score


def test_curves_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    curves = bump_family(rng, 3, size=20)
    path = tmp_path / "c.csv"
    save_curves(path, ["a", "b", "c"], curves)
    ids, raw = load_curves(path)
    assert ids == ["a", "b", "c"]
    back, _ = normalize_curves(raw, scale=1.0)
    for x, y in zip(back, curves):
        assert np.array_equal(x.t, y.t) and np.array_equal(x.f, y.f)


def test_curves_json_input(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"curves": [{"id": "x", "t": [0, 0.5, 1], "value": [0, 2, 0]}, [0, 1, 1, 0]]}')
    ids, raw = load_curves(path)
    assert ids == ["x", "1"]
    assert np.allclose(raw[1][0], [0, 1 / 3, 2 / 3, 1])
