"""Seeded synthetic datasets for the three regression scenarios.

``signal=0`` makes the response independent of the predictor, which is
the exact null used to check permutation p-values.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .corrmat import save_correlations
from .curves import SampledCurve, save_curves, uniform_grid
from .exceptions import ValidationError
from .shapes import save_landmarks

__all__ = ["KINDS", "Dataset", "synth_dataset", "base_face", "bump", "save_points", "load_points"]

KINDS = ("shapes-on-shapes", "curve-on-shape", "speed-on-corrmat")


@dataclass
class Dataset:
    kind: str
    ids: list
    X: list
    Y: list
    x_space: str
    y_space: str
    seed: int
    signal: float
    latent: np.ndarray = field(repr=False, default=None)
    # Generator internals (templates, directions) for checks against the truth.
    truth: dict = field(repr=False, default_factory=dict)

    @property
    def n(self):
        return len(self.ids)

    def save(self, out_dir):
        """Write predictor/response files and a ``dataset.json`` manifest."""
        os.makedirs(out_dir, exist_ok=True)
        files = {}
        for role, space, objs in (("predictor", self.x_space, self.X), ("response", self.y_space, self.Y)):
            files[role] = {"space": space, "file": _write_objects(out_dir, role, space, self.ids, objs)}
        manifest = {"kind": self.kind, "n": self.n, "seed": self.seed, "signal": self.signal, **files}
        path = os.path.join(out_dir, "dataset.json")
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
        return path


def _write_objects(out_dir, role, space, ids, objs):
    if space == "shape":
        name = f"{role}_landmarks.json"
        save_landmarks(os.path.join(out_dir, name), ids, objs)
    elif space == "curve":
        name = f"{role}_curves.csv"
        save_curves(os.path.join(out_dir, name), ids, objs)
    elif space == "corr":
        name = f"{role}_corr.json"
        save_correlations(os.path.join(out_dir, name), ids, objs)
    else:
        name = f"{role}_points.csv"
        save_points(os.path.join(out_dir, name), ids, objs)
    return name


def save_points(path, ids, points):
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] != len(ids):
        P = P.T
    with open(path, "w") as fh:
        fh.write(",".join(["subject"] + [f"x{j}" for j in range(P.shape[1])]) + "\n")
        for sid, row in zip(ids, P):
            fh.write(",".join([str(sid)] + [repr(float(v)) for v in row]) + "\n")


def load_points(path):
    with open(path) as fh:
        header = fh.readline()
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not header.startswith("subject"):
        raise ValidationError(f"{path}: expected a 'subject' column first")
    ids = [r[0] for r in rows]
    return ids, [np.array([float(v) for v in r[1:]]) for r in rows]


def base_face(rng, k=10, m=3):
    """A fixed-size random landmark template, centered with unit size."""
    c = rng.normal(size=(k, m))
    c -= c.mean(axis=0)
    return c / np.linalg.norm(c)


def _similarity_orbit(base):
    """Orthonormal basis of translations, scaling and rotations at ``base``."""
    k, m = base.shape
    gens = []
    for j in range(m):
        t = np.zeros((k, m))
        t[:, j] = 1.0
        gens.append(t)
    gens.append(base)
    for i in range(m):
        for j in range(i + 1, m):
            A = np.zeros((m, m))
            A[i, j], A[j, i] = 1.0, -1.0
            gens.append(base @ A)
    Q, _ = np.linalg.qr(np.stack([g.ravel() for g in gens], axis=1))
    return Q


def _directions(rng, base, count):
    # Orthonormal tangent directions: moving along them changes shape only.
    V = rng.normal(size=(base.size, count))
    Q = _similarity_orbit(base)
    V -= Q @ (Q.T @ V)
    Q, _ = np.linalg.qr(V)
    return Q.T.reshape(count, *base.shape)


def bump(t, peak, width, height):
    return height * np.exp(-0.5 * ((t - peak) / width) ** 2)


def _shape_response(rng, base, latent, signal, spread, noise):
    n, p = latent.shape
    dirs = _directions(rng, base, p)
    eps = rng.normal(size=(n, *base.shape)) * noise / np.sqrt(base.size)
    pert = signal * np.einsum("np,pkm->nkm", latent, dirs) + eps
    return [base + spread * d for d in pert], dirs


def synth_dataset(kind, n=36, seed=0, signal=1.0, k=10, m=3, spread=0.03, noise=0.5, grid_size=240, width=0.08, frames=240, m_corr=8):
    """Generate a dataset of ``kind`` (one of :data:`KINDS`).

    ``shapes-on-shapes``
        Predictor shapes vary along three tangent directions of a template;
        the response template moves along three other directions by the
        same latent amounts times ``signal``, plus isotropic noise.
    ``curve-on-shape``
        Predictor bump curves with random peak time and height (fixed
        ``width``); the response shape depends linearly on the
        standardized (height, peak time) pair.
    ``speed-on-corrmat``
        A scalar speed predictor; each response is the empirical
        correlation of ``frames`` Gaussian samples from a two-block
        matrix whose between-block level is a logistic function of speed.
    """
    if kind not in KINDS:
        raise ValidationError(f"unknown dataset kind {kind!r}; choose from {KINDS}")
    n = int(n)
    if n < 8:
        raise ValidationError("synthetic datasets need n >= 8")
    rng = np.random.default_rng(seed)
    ids = [f"s{i:03d}" for i in range(n)]
    if kind == "shapes-on-shapes":
        bx, by = base_face(rng, k, m), base_face(rng, k, m)
        latent = rng.normal(size=(n, 3))
        dirs = _directions(rng, bx, 3)
        X = [bx + spread * np.einsum("p,pkm->km", z, dirs) for z in latent]
        Y, ydirs = _shape_response(rng, by, latent, signal, spread, noise)
        truth = {"x_base": bx, "x_dirs": dirs, "y_base": by, "y_dirs": ydirs}
        return Dataset(kind, ids, X, Y, "shape", "shape", seed, float(signal), latent, truth)
    if kind == "curve-on-shape":
        t = uniform_grid(grid_size)
        peak = rng.uniform(0.3, 0.7, n)
        height = rng.uniform(0.6, 1.0, n)
        X = [SampledCurve(t, bump(t, c, width, h)) for c, h in zip(peak, height)]
        latent = np.column_stack([height, peak])
        z = (latent - latent.mean(axis=0)) / latent.std(axis=0)
        by = base_face(rng, k, m)
        Y, ydirs = _shape_response(rng, by, z, signal, spread, noise)
        truth = {"y_base": by, "y_dirs": ydirs, "width": width}
        return Dataset(kind, ids, X, Y, "curve", "shape", seed, float(signal), latent, truth)
    speed = rng.uniform(0.0, 1.0, n)
    level = 0.1 + 0.5 / (1.0 + np.exp(-8.0 * signal * (speed - 0.5)))
    half = m_corr // 2
    Y = []
    for rho in level:
        C = np.full((m_corr, m_corr), rho)
        C[:half, :half] = 0.7
        C[half:, half:] = 0.7
        np.fill_diagonal(C, 1.0)
        L = np.linalg.cholesky(C)
        S = rng.normal(size=(frames, m_corr)) @ L.T
        E = np.corrcoef(S.T)
        E = (E + E.T) / 2
        np.fill_diagonal(E, 1.0)
        Y.append(E)
    X = [np.array([s]) for s in speed]
    return Dataset(kind, ids, X, Y, "euclidean", "corr", seed, float(signal), speed[:, None], {"level": level})
