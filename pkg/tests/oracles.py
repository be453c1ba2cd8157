"""Independent reference computations used by several test modules."""

import math

import numpy as np


def bisect_root(x, s, p, iters=200):
    """Root of ``z + s z^(p-1) = x`` on ``[0, x]`` by plain bisection (scalar)."""
    if x <= 0:
        return 0.0
    lo, hi = 0.0, float(x)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid + s * mid ** (p - 1.0) > x:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-17 * max(1.0, x):
            break
    return 0.5 * (lo + hi)


def golden_section(fun, a, b, tol=1e-13):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def quadratic_infimum(a_u, f, beta, n_blocks=None):
    """min_w 1/2 ||f - A^T w / N||^2 + beta/(2N) ||w||^2 by least squares.

    ``a_u`` stacks ``N`` measurement blocks (one row each unless ``n_blocks``
    says otherwise) of an n-vector.
    """
    rows = a_u.shape[0]
    n_meas = rows if n_blocks is None else n_blocks
    stacked = np.vstack([a_u.T / n_meas, math.sqrt(beta / n_meas) * np.eye(rows)])
    rhs = np.concatenate([f, np.zeros(rows)])
    w, *_ = np.linalg.lstsq(stacked, rhs, rcond=None)
    r = f - a_u.T @ w / n_meas
    return 0.5 * float(r @ r) + 0.5 * beta / n_meas * float(w @ w)


def scalar_objective_ld(f):
    """``(f - 2)^2 / 2 + |f|^1.5 / 1.5`` in extended precision.

    Golden section only resolves a minimiser to about sqrt(eps); long double
    pushes that below 1e-9 on x86.
    """
    f = np.longdouble(f)
    return np.longdouble(0.5) * (f - 2) ** 2 + abs(f) ** np.longdouble(1.5) / np.longdouble(1.5)
