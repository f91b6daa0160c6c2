"""Compiled SIMPLS recursion (small dense problems, called many times)."""

import numpy as np
from numba import njit


@njit(cache=True)
def _orient(v):
    big = np.abs(v).max() * 1e-8
    for x in v:
        if abs(x) > big:
            return -v if x < 0 else v
    return v


@njit(cache=True)
def simpls(X0, Y0, a):
    """Weights, x-loadings and y-loadings for up to ``a`` components.

    Returns fewer columns when the cross covariance or the x-scores are
    exhausted before ``a`` components.
    """
    n, p = X0.shape
    q = Y0.shape[1]
    R = np.zeros((p, a))
    P = np.zeros((p, a))
    Q = np.zeros((q, a))
    V = np.zeros((a, p))
    S = X0.T @ Y0
    scale = max(np.sqrt((X0 * X0).sum()), 1e-300)
    s_scale = max(np.sqrt((S * S).sum()), 1e-300)
    done = 0
    for i in range(a):
        if q == 1:
            r = S[:, 0].copy()
        else:
            U, sv, _ = np.linalg.svd(S)
            r = np.ascontiguousarray(U[:, 0]) * sv[0]
        rn = np.sqrt((r * r).sum())
        if rn <= 1e-12 * s_scale:
            break
        r = _orient(r)
        t = X0 @ r
        tn = np.sqrt((t * t).sum())
        if tn <= 1e-10 * scale * rn:
            break
        t = t / tn
        r = r / tn
        pv = X0.T @ t
        v = pv.copy()
        for j in range(i):
            v -= V[j] * (V[j] @ pv)
        vn = np.sqrt((v * v).sum())
        if vn <= 1e-12 * max(np.sqrt((pv * pv).sum()), 1e-300):
            break
        v = v / vn
        S = S - np.outer(v, v @ S)
        R[:, i] = r
        P[:, i] = pv
        Q[:, i] = Y0.T @ t
        V[i] = v
        done = i + 1
    return R[:, :done].copy(), P[:, :done].copy(), Q[:, :done].copy()


@njit(cache=True)
def loo_press(X, Y, a_max):
    n = X.shape[0]
    q = Y.shape[1]
    out = np.zeros(a_max)
    idx = np.arange(n)
    for i in range(n):
        keep = idx[idx != i]
        Xi = X[keep]
        Yi = Y[keep]
        xm = np.zeros(X.shape[1])
        ym = np.zeros(q)
        for r in range(n - 1):
            xm += Xi[r]
            ym += Yi[r]
        xm /= n - 1
        ym /= n - 1
        R, _, Q = simpls(Xi - xm, Yi - ym, a_max)
        got = R.shape[1]
        t = (X[i] - xm) @ R
        QT = Q.T.copy()
        pred = ym.copy()
        for a in range(a_max):
            if a < got:
                pred = pred + t[a] * QT[a]
            out[a] += ((Y[i] - pred) ** 2).sum()
    return out
