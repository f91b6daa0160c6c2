"""Compiled inner loops for the curve space."""

import numpy as np
from numba import njit


@njit(cache=True)
def dfd(x1, y1, x2, y2):
    n = x1.shape[0]
    m = x2.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    for i in range(n):
        for j in range(m):
            dx = x1[i] - x2[j]
            dy = y1[i] - y2[j]
            d = np.sqrt(dx * dx + dy * dy)
            if i == 0:
                c = d if j == 0 else max(cur[j - 1], d)
            elif j == 0:
                c = max(prev[0], d)
            else:
                c = min(prev[j], cur[j - 1], prev[j - 1])
                if d > c:
                    c = d
            cur[j] = c
        prev, cur = cur, prev
    return prev[m - 1]


@njit(cache=True)
def dfd_below(x1, y1, x2, y2, bound):
    """``dfd`` when it is below ``bound``, otherwise ``inf``.

    Every coupling passes through every row, so once a whole row is at or
    above ``bound`` the final value is too and the sweep stops.
    """
    n = x1.shape[0]
    m = x2.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    for i in range(n):
        low = np.inf
        for j in range(m):
            dx = x1[i] - x2[j]
            dy = y1[i] - y2[j]
            d = np.sqrt(dx * dx + dy * dy)
            if i == 0:
                c = d if j == 0 else max(cur[j - 1], d)
            elif j == 0:
                c = max(prev[0], d)
            else:
                c = min(prev[j], cur[j - 1], prev[j - 1])
                if d > c:
                    c = d
            cur[j] = c
            if c < low:
                low = c
        if low >= bound:
            return np.inf
        prev, cur = cur, prev
    return prev[m - 1]


@njit(cache=True)
def dfd_to_all(t, f, T, F):
    out = np.empty(T.shape[0])
    for i in range(T.shape[0]):
        out[i] = dfd(t, f, T[i], F[i])
    return out


@njit(cache=True)
def dfd_matrix(T, F):
    n = T.shape[0]
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = dfd(T[i], F[i], T[j], F[j])
            D[i, j] = d
            D[j, i] = d
    return D


@njit(cache=True)
def warp(t_src, f_src, t_out, p1, p2, p3):
    out = np.empty(t_out.shape[0])
    a = p1 / p2
    b = (1.0 - p1) / (1.0 - p2)
    c = (p1 - p2) / (1.0 - p2)
    for i in range(t_out.shape[0]):
        t = t_out[i]
        s = t * a if t <= p2 else b * t + c
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0
        out[i] = s
    return p3 * np.interp(out, t_src, f_src)


@njit(cache=True)
def grid_search(t1, f1, t2, f2, p1s, p2s, p3s):
    best = np.inf
    bp = np.zeros(3)
    for p1 in p1s:
        for p2 in p2s:
            base = warp(t1, f1, t2, p1, p2, 1.0)
            for p3 in p3s:
                d = dfd_below(t2, p3 * base, t2, f2, best)
                if d < best:
                    best = d
                    bp[0] = p1
                    bp[1] = p2
                    bp[2] = p3
    return bp, best


@njit(cache=True)
def refine(t1, f1, t2, f2, p, best, steps, min_step, lo, hi, max_eval):
    p = p.copy()
    steps = steps.copy()
    n_eval = 0
    while steps.max() >= min_step and n_eval < max_eval:
        improved = False
        for k in range(3):
            for sgn in (-1.0, 1.0):
                q = p.copy()
                q[k] = min(max(q[k] + sgn * steps[k], lo[k]), hi[k])
                if q[k] == p[k]:
                    continue
                d = dfd_below(t2, warp(t1, f1, t2, q[0], q[1], q[2]), t2, f2, best)
                n_eval += 1
                if d < best:
                    best = d
                    p = q
                    improved = True
        if not improved:
            steps /= 2.0
    return p, best
