"""Independent oracles and data builders shared by the tests."""

import itertools
import math

import numpy as np

from metricreg.curves import SampledCurve, uniform_grid


def _point_distance(p, q):
    # Same rounding as a plain sqrt(dx*dx + dy*dy); BLAS-backed norms may differ by an ulp.
    dx, dy = float(p[0]) - float(q[0]), float(p[1]) - float(q[1])
    return math.sqrt(dx * dx + dy * dy)


def brute_force_frechet(P, Q):
    """Minimax over every monotone coupling, by explicit path enumeration."""
    n, m = len(P), len(Q)
    best = np.inf

    def walk(i, j, worst):
        nonlocal best
        worst = max(worst, _point_distance(P[i], Q[j]))
        if worst >= best:
            return
        if i == n - 1 and j == m - 1:
            best = worst
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < n and j + dj < m:
                walk(i + di, j + dj, worst)

    walk(0, 0, 0.0)
    return best


def all_couplings_frechet(P, Q):
    """Same quantity by enumerating coupling sequences as step strings."""
    n, m = len(P), len(Q)
    D = np.array([[_point_distance(p, q) for q in Q] for p in P])
    best = np.inf
    # Every coupling is a sequence of steps in {right, down, diagonal}.
    for length in range(max(n, m) - 1, n + m - 1):
        for steps in itertools.product(((1, 0), (0, 1), (1, 1)), repeat=length):
            i = j = 0
            worst = D[0, 0]
            ok = True
            for di, dj in steps:
                i, j = i + di, j + dj
                if i >= n or j >= m:
                    ok = False
                    break
                worst = max(worst, D[i, j])
            if ok and i == n - 1 and j == m - 1:
                best = min(best, worst)
    return float(best)


def grid_procrustes_2d(a, b, step=1e-4):
    """Full Procrustes distance by scanning rotation angles (analytic scale)."""
    A = a - a.mean(axis=0)
    B = b - b.mean(axis=0)
    A /= np.linalg.norm(A)
    B /= np.linalg.norm(B)
    theta = np.arange(0, 2 * np.pi, step)
    c, s = np.cos(theta), np.sin(theta)
    M = A.T @ B
    # <B, A R(theta)> for R = [[c, -s], [s, c]] acting on row vectors.
    inner = c * (M[0, 0] + M[1, 1]) + s * (M[1, 0] - M[0, 1])
    inner = np.maximum(inner, 0.0)
    return float(np.sqrt(max(1.0 - inner.max() ** 2, 0.0)))


def long_run_nearest_correlation(A, iters=10_000, tol=1e-14):
    """Plain Dykstra alternating projections run far past the library's limits."""
    Y = A.copy()
    dS = np.zeros_like(A)
    for _ in range(iters):
        R = Y - dS
        w, V = np.linalg.eigh((R + R.T) / 2)
        X = (V * np.maximum(w, 0)) @ V.T
        dS = X - R
        Y_new = X.copy()
        np.fill_diagonal(Y_new, 1.0)
        if np.linalg.norm(Y_new - Y) < tol:
            Y = Y_new
            break
        Y = Y_new
    return Y


def random_correlation(rng, m):
    G = rng.normal(size=(m, m + 2))
    C = G @ G.T
    d = np.sqrt(np.diag(C))
    C = C / np.outer(d, d)
    C = (C + C.T) / 2
    np.fill_diagonal(C, 1.0)
    return C


def concentrated_shapes(rng, n=20, k=10, m=3, spread=0.02, rank=None, noise=0.1):
    """Unit-size template plus perturbations of typical size ``spread``.

    With ``rank`` the perturbations mostly span ``rank`` unit directions,
    plus isotropic noise at ``noise`` times that size.
    """
    base = rng.normal(size=(k, m))
    base -= base.mean(axis=0)
    base /= np.linalg.norm(base)
    iso = rng.normal(size=(n, k, m)) / np.sqrt(k * m)
    if rank is None:
        return base, [base + spread * e for e in iso]
    dirs = rng.normal(size=(rank, k, m))
    dirs /= np.linalg.norm(dirs, axis=(1, 2), keepdims=True)
    z = rng.normal(size=(n, rank))
    return base, [base + spread * (np.einsum("r,rkm->km", zi, dirs) + noise * e) for zi, e in zip(z, iso)]


def random_rotation(rng, m):
    Q, R = np.linalg.qr(rng.normal(size=(m, m)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def bump_curve(peak, width, height, size=240):
    t = uniform_grid(size)
    return SampledCurve(t, height * np.exp(-0.5 * ((t - peak) / width) ** 2))


def bump_family(rng, n, width=0.08, size=240):
    """Bumps with random peak time and height on a shared grid, max exactly 1."""
    peaks = rng.uniform(0.3, 0.7, n)
    heights = rng.uniform(0.6, 1.0, n)
    heights = heights / heights.max()
    return [bump_curve(p, width, h, size) for p, h in zip(peaks, heights)]


def two_block_family(rng, n, m=8, frames=20_000):
    """Empirical correlations of a two-latent block family (concentrated)."""
    out = []
    half = m // 2
    for ro, ri in zip(rng.uniform(0.1, 0.5, n), rng.uniform(0.55, 0.8, n)):
        C = np.full((m, m), ro)
        C[:half, :half] = ri
        C[half:, half:] = ri
        np.fill_diagonal(C, 1.0)
        S = rng.normal(size=(frames, m)) @ np.linalg.cholesky(C).T
        E = np.corrcoef(S.T)
        E = (E + E.T) / 2
        np.fill_diagonal(E, 1.0)
        out.append(E)
    return out


def count_modes(f, rel=0.5):
    """Number of separate excursions above ``rel`` times the maximum."""
    above = f > rel * f.max()
    return int(np.sum(above[1:] & ~above[:-1]) + above[0])


def orthogonal_align_rms(S, X):
    """RMS residual after the best orthogonal map of ``S`` onto centered ``X``."""
    Xc = X - X.mean(axis=0)
    if S.shape[1] < Xc.shape[1]:
        S = np.hstack([S, np.zeros((len(S), Xc.shape[1] - S.shape[1]))])
    U, _, Vt = np.linalg.svd(S.T @ Xc)
    return float(np.sqrt(((S @ U @ Vt - Xc) ** 2).mean()))
