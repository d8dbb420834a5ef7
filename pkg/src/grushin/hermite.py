"""Numerically stable Hermite functions, scaled tensor products and level sums.

The orthonormal Hermite functions are generated by the three-term recurrence

    h_0(t) = pi**(-1/4) * exp(-t**2 / 2),
    h_{l+1}(t) = sqrt(2/(l+1)) * t * h_l(t) - sqrt(l/(l+1)) * h_{l-1}(t).

Run naively in double precision the seed h_0 underflows for |t| >~ 38 even
though high-degree values at the same point are perfectly representable, so
every evaluation here carries a per-point binary exponent next to a mantissa
row.  Tables are accurate for degrees up to several thousand and |t| up to a
few hundred; converting a row to plain floats only loses values that are
genuinely below the double-precision range.
"""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from . import defaults

__all__ = [
    "a_coeff",
    "hermite_table",
    "hermite_rows",
    "hermite_derivative",
    "derivative_table",
    "scaled_tensor_eval",
    "level_sum",
    "level_sum_table",
    "gauss_hermite_total",
    "check_level_sum_bounds",
]

_LOG2E = np.log2(np.e)
_PI_MQUARTER = np.pi ** -0.25


def a_coeff(ell) -> np.ndarray | float:
    """sqrt(l*(l-1)) for l > 0, and 0 for every other integer l."""
    arr = np.asarray(ell, dtype=float)
    out = np.where(arr > 0, np.sqrt(np.abs(arr * (arr - 1.0))), 0.0)
    if np.ndim(ell) == 0:
        return float(out)
    return out


def _seed(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mantissa/exponent split of h_0: mantissa * 2**exponent = h_0(t)."""
    log2h0 = -points ** 2 / 2.0 * _LOG2E + np.log2(_PI_MQUARTER)
    expo = np.floor(log2h0).astype(np.int64)
    mant = np.exp2(log2h0 - expo)
    return mant, expo


def hermite_rows(lmax: int, points) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (l, h_l(points)) for l = 0..lmax without storing the table.

    Values are plain float64; entries whose true magnitude is below the
    double-precision range come out as exact zeros.
    """
    if lmax < 0:
        raise ValueError("lmax must be nonnegative")
    t = np.asarray(points, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("points must be finite")
    prev, expo = _seed(t)          # mantissa of h_{l-1} (at l=0: h_0)
    cur = np.zeros_like(prev)      # placeholder for the l-1 row below
    yield 0, np.ldexp(prev, expo)
    if lmax == 0:
        return
    cur = np.sqrt(2.0) * t * prev
    yield 1, np.ldexp(cur, expo)
    limit = 2.0 ** defaults.HERMITE_RENORM_LIMIT
    for ell in range(1, lmax):
        nxt = np.sqrt(2.0 / (ell + 1)) * t * cur - np.sqrt(ell / (ell + 1)) * prev
        prev, cur = cur, nxt
        if ell % defaults.HERMITE_RENORM_EVERY == 0:
            big = np.maximum(np.abs(prev), np.abs(cur))
            mask = (big > limit) | ((big < 1.0 / limit) & (big > 0.0))
            if np.any(mask):
                shift = np.where(mask, np.round(np.log2(np.where(big > 0, big, 1.0))), 0.0)
                shift = shift.astype(np.int64)
                scale = np.exp2(-shift.astype(float))
                prev = prev * scale
                cur = cur * scale
                expo = expo + shift
        yield ell + 1, np.ldexp(cur, expo)


def hermite_table(lmax: int, points) -> np.ndarray:
    """Table of h_l(t), shape (lmax+1, len(points)).

    Safe for lmax <= a few thousand and |t| <= a few hundred; see module
    docstring for the underflow convention.
    """
    t = np.atleast_1d(np.asarray(points, dtype=float))
    out = np.empty((lmax + 1, t.size))
    for ell, row in hermite_rows(lmax, t):
        out[ell] = row
    return out


def hermite_derivative(ell: int, points) -> np.ndarray | float:
    """h_l'(t) from the lowering identity h_l' = sqrt(2 l) h_{l-1} - t h_l.

    The identity is algebraically equivalent to
    2 t h_l'(t) = a_l h_{l-2}(t) - a_{l+2} h_{l+2}(t) - h_l(t)
    but avoids the division by t; both forms are exercised by the tests.
    """
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    t = np.asarray(points, dtype=float)
    table = hermite_table(ell, np.atleast_1d(t))
    low = table[ell - 1] if ell >= 1 else np.zeros_like(np.atleast_1d(t))
    val = np.sqrt(2.0 * ell) * low - np.atleast_1d(t) * table[ell]
    if np.ndim(points) == 0:
        return float(val[0])
    return val


def derivative_table(lmax: int, points) -> np.ndarray:
    """Table of h_l'(t) for l = 0..lmax, one recurrence pass."""
    t = np.atleast_1d(np.asarray(points, dtype=float))
    table = hermite_table(lmax, t)
    out = np.empty_like(table)
    out[0] = -t * table[0]
    for ell in range(1, lmax + 1):
        out[ell] = np.sqrt(2.0 * ell) * table[ell - 1] - t * table[ell]
    return out


def scaled_tensor_eval(n, u, xi) -> float:
    """Product |xi|**(d1/4) * prod_j h_{n_j}(|xi|**(1/2) u_j).

    Returns 0.0 whenever some index n_j is negative (the standard extension
    of the family to integer indices).  Requires |xi| > 0.
    """
    n = np.asarray(n, dtype=int)
    u = np.asarray(u, dtype=float)
    xi = np.asarray(xi, dtype=float)
    norm = float(np.linalg.norm(xi))
    if norm <= 0.0:
        raise ValueError("xi must be nonzero")
    if np.any(n < 0):
        return 0.0
    root = np.sqrt(norm)
    out = norm ** (n.size / 4.0)
    for nj, uj in zip(n, u):
        out *= hermite_table(int(nj), np.array([root * uj]))[int(nj), 0]
    return float(out)


def level_sum_table(d: int, lmax: int, u) -> np.ndarray:
    """All level sums H_{d,l}(u) for l = 0..lmax at a single point u.

    H_{d,l}(u) = sum over n in N^d with |n|_1 = l of prod_i h_{n_i}(u_i)**2.
    The sum is evaluated exactly by convolving the per-axis tables; no
    asymptotic shortcut is involved.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.size != d:
        raise ValueError(f"u must have length d={d}")
    sq = hermite_table(lmax, u) ** 2       # (lmax+1, d)
    acc = sq[:, 0]
    for axis in range(1, d):
        acc = np.convolve(acc, sq[:, axis])[: lmax + 1]
    return acc


def level_sum(d: int, ell: int, u) -> float:
    """H_{d,ell}(u), the level-ell sum of squared Hermite products."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    return float(level_sum_table(d, ell, u)[ell])


def gauss_hermite_total(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes x_k and total weights W_k with  int f(t) dt ~= sum W_k f(x_k).

    Exact whenever f(t) = p(t) exp(-t**2) with deg p <= 2n - 1.  The classical
    weights w_k underflow in double precision for n >~ 180, so instead of
    w_k * exp(x_k**2) we evaluate the reciprocal Christoffel sum

        W_k = 1 / sum_{j < n} h_j(x_k)**2,

    which only involves the well-scaled Hermite functions.
    """
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        # only the nodes are used; hermgauss' own weights underflow for n >~ 180
        nodes, _ = np.polynomial.hermite.hermgauss(n)
    table = hermite_table(n - 1, nodes)
    weights = 1.0 / np.sum(table ** 2, axis=0)
    return nodes, weights


def _fit_gaussian_tail(u2: np.ndarray, h: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of -log H against u**2 on the tail region."""
    mask = h > 0.0
    if np.count_nonzero(mask) < 2:
        return 1.0, 0.25
    x = u2[mask]
    y = -np.log(h[mask])
    slope = float(np.polyfit(x, y, 1)[0])
    c_d = max(slope, 1e-3)
    return c_d, c_d / 2.0


def check_level_sum_bounds(
    d: int,
    lmax: int,
    u_grid,
    ratio_cap: float = 1e4,
) -> dict:
    """Empirical constants for the level-sum bound envelopes.

    For d = 1 the envelope ([l]**(1/3) + |u**2 - [l]|)**(-1/2) is scanned for
    all u, with [l] = 2l + d; for d >= 2 the flat envelope [l]**(d/2-1) is
    used.  In the region |u|_inf**2 >= 2[l] a Gaussian envelope
    C*exp(-c*|u|_inf**2) is fitted with c set to half the pre-scanned decay
    rate, then re-checked.  A cumulative variant sums H_{d,l}(b_l**(-1/2) u)
    over [l] <= x against x**(d/2).

    Returns a report dict with the empirical constants; ``passed`` is False
    only if some ratio exceeds ``ratio_cap``, which would indicate an
    implementation bug rather than a failure of the underlying inequalities.
    """
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    pts = np.atleast_2d(np.asarray(u_grid, dtype=float))
    if pts.shape[1] != d:
        pts = pts.reshape(-1, d)
    brackets = 2 * np.arange(lmax + 1) + d

    tables = np.stack([level_sum_table(d, lmax, p) for p in pts], axis=1)  # (L+1, npts)
    uinf = np.max(np.abs(pts), axis=1)

    if d == 1:
        env = (brackets[:, None] ** (1.0 / 3.0)
               + np.abs(pts[:, 0][None, :] ** 2 - brackets[:, None])) ** -0.5
    else:
        env = np.broadcast_to(
            (brackets ** (d / 2.0 - 1.0))[:, None], tables.shape
        )
    sup_flat = float(np.max(tables / env))

    tail_mask = uinf[None, :] ** 2 >= 2.0 * brackets[:, None]
    u2 = np.broadcast_to(uinf[None, :] ** 2, tables.shape)[tail_mask]
    c_d, c_half = _fit_gaussian_tail(u2, tables[tail_mask])
    with np.errstate(over="ignore"):
        tail_ratio = tables[tail_mask] * np.exp(np.minimum(c_half * u2, 700.0))
    sup_tail = float(np.max(tail_ratio)) if tail_ratio.size else 0.0

    # cumulative bound with a generic admissible sequence b_l ~ [l]
    b = brackets + 0.8 * brackets ** (2.0 / 3.0) * np.cos(3.0 * np.arange(lmax + 1))
    x_values = np.linspace(d, 2 * lmax + d, 24)
    sup_cum = 0.0
    for p in pts[:: max(1, len(pts) // 16)]:
        scaled = np.array(
            [level_sum(d, ell, p / np.sqrt(b[ell])) for ell in range(lmax + 1)]
        )
        cum = np.cumsum(scaled)
        for x in x_values:
            idx = int(np.floor((x - d) / 2))
            if idx < 0:
                continue
            idx = min(idx, lmax)
            sup_cum = max(sup_cum, cum[idx] / x ** (d / 2.0))

    report = {
        "d": d,
        "lmax": lmax,
        "flat_constant": sup_flat,
        "tail_constant": sup_tail,
        "tail_rate": c_half,
        "prescan_rate": c_d,
        "cumulative_constant": sup_cum,
        "passed": max(sup_flat, sup_tail, sup_cum) <= ratio_cap,
    }
    return report
