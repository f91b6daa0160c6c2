import json

import numpy as np
import pytest

from helpers import count_modes
from metricreg.corrmat import is_correlation, load_correlations
from metricreg.curves import SampledCurve, load_curves
from metricreg.exceptions import ValidationError
from metricreg.shapes import centroid_size, load_landmarks
from metricreg.synth import KINDS, load_points, save_points, synth_dataset


def same(a, b):
    if isinstance(a, tuple):
        a = SampledCurve(*a)
    if hasattr(a, "f"):
        return np.array_equal(a.t, b.t) and np.array_equal(a.f, b.f)
    return np.array_equal(a, b)


@pytest.mark.parametrize("kind", KINDS)
def test_same_seed_is_bit_identical(kind):
    a = synth_dataset(kind, n=10, seed=4)
    b = synth_dataset(kind, n=10, seed=4)
    assert a.ids == b.ids
    assert all(same(x, y) for x, y in zip(a.X, b.X))
    assert all(same(x, y) for x, y in zip(a.Y, b.Y))
    c = synth_dataset(kind, n=10, seed=5)
    assert not all(same(x, y) for x, y in zip(a.Y, c.Y))


@pytest.mark.parametrize("kind", KINDS)
def test_small_n_rejected(kind):
    with pytest.raises(ValidationError):
        synth_dataset(kind, n=7)


def test_unknown_kind_rejected():
    with pytest.raises(ValidationError):
        synth_dataset("curves-on-curves")


def test_shapes_are_concentrated_around_templates():
    ds = synth_dataset("shapes-on-shapes", n=12, seed=1)
    bx = ds.truth["x_base"]
    assert centroid_size(bx) == pytest.approx(1.0)
    assert all(np.linalg.norm(x - bx) < 0.2 for x in ds.X)
    # Perturbation directions are orthonormal and change shape only:
    # orthogonal to translations, scaling and infinitesimal rotations.
    V = ds.truth["x_dirs"].reshape(3, -1)
    assert np.allclose(V @ V.T, np.eye(3), atol=1e-12)
    assert np.allclose(V @ bx.ravel(), 0, atol=1e-12)
    for d in ds.truth["x_dirs"]:
        assert np.allclose(d.sum(axis=0), 0, atol=1e-12)
        M = bx.T @ d
        assert np.allclose(M - M.T, 0, atol=1e-12)


def test_zero_signal_response_ignores_latent():
    a = synth_dataset("shapes-on-shapes", n=10, seed=2, signal=0.0)
    by, Y = a.truth["y_base"], np.stack(a.Y)
    V = a.truth["y_dirs"].reshape(3, -1)
    proj = (Y - by).reshape(10, -1) @ V.T
    # Without signal the response projections are pure noise unrelated to the latent scores.
    corr = np.corrcoef(np.column_stack([a.latent, proj]).T)[:3, 3:]
    assert np.abs(np.diag(corr)).max() < 0.9


def test_curve_predictors_are_unimodal_bumps():
    ds = synth_dataset("curve-on-shape", n=10, seed=3)
    for c, (h, p) in zip(ds.X, ds.latent):
        assert count_modes(c.f) == 1
        assert c.f.max() == pytest.approx(h, rel=1e-3)
        assert c.t[np.argmax(c.f)] == pytest.approx(p, abs=1 / 239)


def test_corr_responses_are_valid_and_track_speed():
    ds = synth_dataset("speed-on-corrmat", n=20, seed=4)
    for C in ds.Y:
        assert is_correlation(C)
    off = np.array([C[:4, 4:].mean() for C in ds.Y])
    assert np.corrcoef(ds.latent[:, 0], off)[0, 1] > 0.9


def test_save_writes_manifest_and_files(tmp_path):
    for kind in KINDS:
        ds = synth_dataset(kind, n=8, seed=5)
        out = tmp_path / kind
        manifest = json.loads(open(ds.save(out)).read())
        assert manifest["kind"] == kind and manifest["n"] == 8
        loaders = {"shape": load_landmarks, "curve": load_curves, "corr": load_correlations, "euclidean": load_points}
        for role, objs in (("predictor", ds.X), ("response", ds.Y)):
            entry = manifest[role]
            ids, back = loaders[entry["space"]](out / entry["file"])
            assert ids == ds.ids
            assert all(same(a, b) for a, b in zip(back, objs))


def test_points_roundtrip(tmp_path):
    path = tmp_path / "p.csv"
    pts = [np.array([1.5, -2.0]), np.array([0.1, 3.0])]
    save_points(path, ["a", "b"], pts)
    ids, back = load_points(path)
    assert ids == ["a", "b"]
    assert all(np.array_equal(a, b) for a, b in zip(back, pts))
