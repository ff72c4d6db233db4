"""Independent reference implementations used only by the tests.

Nothing here imports the package's numerical code: values are computed with
mpmath at high precision or with plain Python loops.
"""

from __future__ import annotations

import itertools
import math

import mpmath as mp

mp.mp.dps = 50


def mp_standardize(x):
    xs = [mp.mpf(v) for v in x]
    m = mp.fsum(xs) / len(xs)
    c = [v - m for v in xs]
    norm = mp.sqrt(mp.fsum(v * v for v in c))
    return [v / norm for v in c]


def mp_pearson(x, y):
    """Textbook sample correlation, evaluated with 50 digits."""
    n = len(x)
    xs = [mp.mpf(v) for v in x]
    ys = [mp.mpf(v) for v in y]
    mx = mp.fsum(xs) / n
    my = mp.fsum(ys) / n
    sxy = mp.fsum((a - mx) * (b - my) for a, b in zip(xs, ys))
    sxx = mp.fsum((a - mx) ** 2 for a in xs)
    syy = mp.fsum((b - my) ** 2 for b in ys)
    return sxy / mp.sqrt(sxx * syy)


def loop_pearson(x, y):
    """Plain-float two-pass correlation with exact summation."""
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return 0.0
    return max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))


def double_loop_objective(Y, x, mask=None):
    n = len(x)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j or (mask is not None and not mask[i][j]):
                continue
            total += x[i] * x[j] * Y[i][j]
    return total


def unreduced_enumeration(Y):
    """Best objective over all 2^N sign vectors, no symmetry reduction."""
    n = len(Y)
    best = -math.inf
    arg = []
    for signs in itertools.product((-1, 1), repeat=n):
        v = double_loop_objective(Y, signs)
        if v > best + 1e-12:
            best, arg = v, [signs]
        elif abs(v - best) <= 1e-12:
            arg.append(signs)
    return best, arg


def brute_edge_cut(n, S, edges=None):
    S = set(S)
    count = 0
    for i in range(n):
        for j in range(i + 1, n):
            if edges is not None and not edges[i][j]:
                continue
            if (i in S) != (j in S):
                count += 1
    return count


def mp_normal_sf(x):
    return 1 - mp.ncdf(x)


def quad_kl_gaussian(mu0, s0, mu1, s1):
    """KL(p1 || p0) by numerical integration of p1 log(p1/p0)."""
    p0 = lambda t: mp.npdf(t, mu0, s0)  # noqa: E731
    p1 = lambda t: mp.npdf(t, mu1, s1)  # noqa: E731
    f = lambda t: p1(t) * (mp.log(p1(t)) - mp.log(p0(t)))  # noqa: E731
    lo = min(mu0 - 20 * s0, mu1 - 20 * s1)
    hi = max(mu0 + 20 * s0, mu1 + 20 * s1)
    return mp.quad(f, [lo, mu1 - 3 * s1, mu1, mu1 + 3 * s1, hi])


def replay_detector(data, w, b):
    """Offline stopping rule over a ``T x N`` list of rows, Pearson, complete graph.

    Returns ``(T, argmax, rho_by_tick)`` with ticks numbered from 1.
    """
    n = len(data[0])
    rhos = {}
    for t in range(w, len(data) + 1):
        win = [[data[k][i] for k in range(t - w, t)] for i in range(n)]
        rho = []
        for i in range(n):
            sims = [loop_pearson(win[i], win[j]) for j in range(n) if j != i]
            rho.append(-math.fsum(sims) / len(sims))
        rhos[t] = rho
        top = max(range(n), key=lambda k: (rho[k], -k))
        if rho[top] > b:
            return t, top, rhos
    return None, None, rhos
