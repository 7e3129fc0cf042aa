"""Reference computations the package is checked against.

Each one takes a different numerical route from the code under test:
high-precision bisection, dense trapezoid quadrature, brute-force vertex
enumeration, and plain Monte Carlo statistics.
"""

import itertools

import mpmath
import numpy as np


def probit_mp(u, dps=40):
    """Normal quantile by bisection on mpmath's high-precision normal CDF."""
    with mpmath.workdps(dps):
        target = mpmath.mpf(u)
        lo, hi = mpmath.mpf(-40), mpmath.mpf(40)
        for _ in range(200):
            mid = (lo + hi) / 2
            if mpmath.ncdf(mid) < target:
                lo = mid
            else:
                hi = mid
        return float((lo + hi) / 2)


def crps_trapezoid(xs, ps, obs, n=100_000):
    """CRPS of the piecewise-linear CDF through ``(xs, ps)`` by trapezoid rule.

    The integral is split at ``obs`` so the step of the observation CDF never
    falls inside a trapezoid; the anchors are added to the grid so every
    panel sees a single linear CDF piece.
    """
    xs = np.asarray(xs, dtype=float)
    lo, hi = xs[0], xs[-1]

    def F(x):
        return np.interp(x, xs, ps, left=0.0, right=1.0)

    total = 0.0
    # mass below the support
    if obs < lo:
        total += lo - obs
    if obs > hi:
        total += obs - hi
    a, b = lo, min(max(obs, lo), hi)
    grid = np.unique(np.concatenate([np.linspace(a, b, n // 2), xs[(xs > a) & (xs < b)]]))
    if b > a:
        total += np.trapezoid(F(grid) ** 2, grid)
    a, b = max(min(obs, hi), lo), hi
    grid = np.unique(np.concatenate([np.linspace(a, b, n // 2), xs[(xs > a) & (xs < b)]]))
    if b > a:
        total += np.trapezoid((1.0 - F(grid)) ** 2, grid)
    return float(total)


def pinball_total(y, fitted, level):
    r = np.asarray(y) - np.asarray(fitted)
    return float(np.sum(np.where(r >= 0, level * r, (level - 1) * r)))


def pinball_vertex_optimum(X, y, level):
    """Minimum pinball loss by enumerating exact fits through p data points.

    A linear quantile regression with p coefficients always has an optimum
    interpolating p observations (a vertex of the LP), so scanning every
    p-subset gives the exact minimum for small n.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    best = np.inf
    for rows in itertools.combinations(range(n), p):
        A = X[list(rows)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        beta = np.linalg.solve(A, y[list(rows)])
        best = min(best, pinball_total(y, X @ beta, level))
    return best


def rank_correlation(samples):
    """Spearman rank correlation via ranks then Pearson."""
    ranks = np.argsort(np.argsort(samples, axis=0), axis=0).astype(float)
    return np.corrcoef(ranks, rowvar=False)


def ks_uniform(u):
    """Kolmogorov-Smirnov distance of a sample to U(0, 1)."""
    u = np.sort(np.asarray(u))
    n = len(u)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))


def ar_correlation(dim, rho):
    lag = np.abs(np.subtract.outer(np.arange(dim), np.arange(dim)))
    return rho ** lag


def space_time_correlation(n_zones, n_nodes, rho_space, rho_time):
    Rs = np.full((n_zones, n_zones), rho_space)
    np.fill_diagonal(Rs, 1.0)
    return np.kron(Rs, ar_correlation(n_nodes, rho_time))
