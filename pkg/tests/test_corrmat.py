import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import long_run_nearest_correlation, random_correlation, two_block_family
from metricreg.corrmat import (
    CorrelationSpace,
    _box_gap,
    check_correlation,
    corr_backscore,
    corr_combination,
    corr_frechet_median,
    frobenius_distance,
    is_correlation,
    load_correlations,
    nearest_correlation,
    save_correlations,
)
from metricreg.exceptions import DimensionMismatch, NoFeasibleSolution, ValidationError
from metricreg.mds import backscore, cmds, gower_score


def perturbed(rng, m=4, scale=0.6):
    C = random_correlation(rng, m)
    E = rng.normal(scale=scale, size=(m, m))
    return C + (E + E.T) / 2


def probe_set(rng, m, size=1000):
    return np.array([random_correlation(rng, m) for _ in range(size)])


def assert_valid(C):
    assert np.array_equal(C, C.T)
    assert np.all(np.diag(C) == 1.0)
    assert np.abs(C).max() <= 1.0
    assert np.linalg.eigvalsh(C).min() >= -1e-8


@pytest.fixture(scope="module")
def family():
    rng = np.random.default_rng(31)
    mats = two_block_family(rng, 16, m=6)
    space = CorrelationSpace(n_starts=8)
    D = space.distance_matrix(mats)
    e = cmds(D).truncate(2)
    ctx = space.prepare(mats, e)
    return space, mats, D, e, ctx


def test_frobenius_cases():
    I = np.eye(2)
    R = np.array([[1.0, 0.3], [0.3, 1.0]])
    assert frobenius_distance(I, I) == 0.0
    assert frobenius_distance(I, R) == pytest.approx(np.sqrt(2) * 0.3, rel=1e-14)
    assert frobenius_distance(R, I) == frobenius_distance(I, R)
    with pytest.raises(DimensionMismatch):
        frobenius_distance(I, np.eye(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_frobenius_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_correlation(rng, 4) for _ in range(3))
    assert frobenius_distance(a, c) <= frobenius_distance(a, b) + frobenius_distance(b, c) + 1e-12
    assert frobenius_distance(a, b) == frobenius_distance(b, a)


def test_validity_checks():
    assert is_correlation(np.eye(3))
    assert not is_correlation(np.array([[1.0, 1.5], [1.5, 1.0]]))
    assert not is_correlation(np.array([[1.0, 0.2], [0.3, 1.0]]))
    with pytest.raises(ValidationError):
        check_correlation(2 * np.eye(2))


def test_nearest_fixed_point():
    rng = np.random.default_rng(0)
    C = random_correlation(rng, 5)
    assert np.allclose(nearest_correlation(C), C, atol=1e-10)


def test_nearest_two_by_two_clamps_and_matches_grid():
    A = np.array([[1.0, 1.5], [1.5, 1.0]])
    out = nearest_correlation(A)
    assert np.allclose(out, np.ones((2, 2)), atol=1e-8)
    # Every feasible 2x2 matrix is [[1, r], [r, 1]] with |r| <= 1.
    r = np.arange(-1.0, 1.0 + 1e-12, 1e-4)
    best = r[np.argmin(np.abs(1.5 - r))]
    assert out[0, 1] == pytest.approx(best, abs=1e-4)


@pytest.mark.parametrize("seed", range(6))
def test_nearest_random_perturbation(seed):
    rng = np.random.default_rng(seed)
    A = perturbed(rng)
    X = nearest_correlation(A)
    assert_valid(X)
    assert frobenius_distance(X, long_run_nearest_correlation(A)) < 1e-6
    probes = probe_set(rng, 4)
    d = np.linalg.norm((probes - A).reshape(len(probes), -1), axis=1)
    assert frobenius_distance(X, A) <= d.min()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_nearest_is_idempotent(seed):
    X = nearest_correlation(perturbed(np.random.default_rng(seed)))
    assert np.abs(nearest_correlation(X) - X).max() < 1e-9


def test_nearest_nonexpansive_against_probes():
    # Projection onto a convex set never moves a point further from any member.
    rng = np.random.default_rng(1)
    A = perturbed(rng, scale=1.0)
    X = nearest_correlation(A)
    for P in probe_set(rng, 4, 100):
        assert frobenius_distance(X, P) <= frobenius_distance(A, P) + 1e-9


def test_nearest_rejects_asymmetric():
    with pytest.raises(ValidationError):
        nearest_correlation(np.array([[1.0, 0.2], [0.5, 1.0]]))
    with pytest.raises(DimensionMismatch):
        nearest_correlation(np.ones((2, 3)))


def test_combination_cases():
    rng = np.random.default_rng(2)
    A, B, C = (random_correlation(rng, 4) for _ in range(3))
    w = np.array([0.2, 0.5, 0.3])
    assert np.allclose(corr_combination([A, B, C], w), w[0] * A + w[1] * B + w[2] * C, atol=1e-15)
    assert np.array_equal(corr_combination([A], [1.0]), A)
    with pytest.raises(DimensionMismatch):
        corr_combination([A, B], [1.0])


def test_combination_extrapolated_weights_are_projected():
    rng = np.random.default_rng(3)
    for _ in range(10):
        A, B = random_correlation(rng, 4), random_correlation(rng, 4)
        assert_valid(corr_combination([A, B], [2.0, -1.0]))


def test_median_identical():
    rng = np.random.default_rng(4)
    C = random_correlation(rng, 4)
    assert np.allclose(corr_frechet_median([C, C.copy(), C.copy()]), C, atol=1e-12)


def test_median_of_two_lies_on_segment():
    rng = np.random.default_rng(5)
    A, B = random_correlation(rng, 4), random_correlation(rng, 4)
    M = corr_frechet_median([A, B])
    obj = lambda X: frobenius_distance(X, A) + frobenius_distance(X, B)
    assert obj(M) <= min(obj(A), obj(B)) + 1e-12
    assert obj(M) == pytest.approx(frobenius_distance(A, B), rel=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_median_beats_medoid(seed):
    rng = np.random.default_rng(seed)
    mats = [random_correlation(rng, 4) for _ in range(3)]
    M = corr_frechet_median(mats)
    assert_valid(M)
    obj = lambda X: sum(frobenius_distance(X, C) for C in mats)
    assert obj(M) <= min(obj(C) for C in mats) + 1e-12


def test_in_sample_scores(family):
    space, mats, D, e, ctx = family
    S = np.array([gower_score(e, D[:, i]) for i in range(len(mats))])
    assert np.allclose(S, e.scores, rtol=1e-8, atol=1e-8 * np.abs(e.scores).max())


def test_backscore_zero_is_median(family):
    space, mats, D, e, ctx = family
    y = backscore(space, np.zeros(e.k), ctx)
    assert np.linalg.norm(space.score(y, ctx)) <= ctx.tol_score
    assert frobenius_distance(y, ctx.centroid) <= ctx.tol_score


def test_backscore_roundtrip(family):
    space, mats, D, e, ctx = family
    for i in (0, 4, 9):
        y = backscore(space, e.scores[i], ctx)
        assert_valid(y)
        assert frobenius_distance(y, mats[i]) <= 0.05 * D.max()


def test_backscore_far_target(family):
    space, mats, D, e, ctx = family
    target = np.array([50 * np.sqrt(e.eigenvalues[0]), 0.0])
    with pytest.raises(NoFeasibleSolution) as err:
        corr_backscore(target, e, mats, ctx.centroid, n_starts=2, tol_score=ctx.tol_score)
    assert np.array_equal(err.value.target, target)


def test_backscore_checks_target_shape(family):
    space, mats, D, e, ctx = family
    with pytest.raises(DimensionMismatch):
        corr_backscore(np.zeros(3), e, mats, ctx.centroid)


def test_correlations_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    mats = [random_correlation(rng, 3) for _ in range(2)]
    path = tmp_path / "m.json"
    save_correlations(path, ["a", "b"], mats)
    ids, back = load_correlations(path)
    assert ids == ["a", "b"]
    for x, y in zip(back, mats):
        assert np.array_equal(x, y)


def test_score_range_bound_contains_every_valid_matrix(family):
    space, mats, D, e, ctx = family
    rng = np.random.default_rng(7)
    for _ in range(200):
        C = random_correlation(rng, 6)
        assert _box_gap(space.score(C, ctx), e, np.asarray(mats)) == 0.0
