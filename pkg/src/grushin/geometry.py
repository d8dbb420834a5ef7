"""Anisotropic dilations, control-distance surrogates, ball volumes, weights.

Points split as x = (x', x'') in R^{d1} x R^{d2}.  The dilations
delta_r(x', x'') = (r x', r**2 x'') scale the operator quadratically; the
associated homogeneous dimension is Q = d1 + 2*d2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Point",
    "dilate",
    "dist_surrogate",
    "ball_volume_estimate",
    "ball_volume_monte_carlo",
    "weight",
    "weight_integral_check",
]


@dataclass(frozen=True)
class Point:
    xprime: tuple[float, ...]
    xsecond: tuple[float, ...]

    def __post_init__(self):
        if not all(np.isfinite(self.xprime)) or not all(np.isfinite(self.xsecond)):
            raise ValueError("coordinates must be finite")

    @property
    def d1(self) -> int:
        return len(self.xprime)

    @property
    def d2(self) -> int:
        return len(self.xsecond)

    @staticmethod
    def of(xprime, xsecond) -> "Point":
        xp = np.atleast_1d(np.asarray(xprime, dtype=float))
        xs = np.atleast_1d(np.asarray(xsecond, dtype=float))
        return Point(tuple(xp.tolist()), tuple(xs.tolist()))


def dilate(x: Point, r: float) -> Point:
    """delta_r(x', x'') = (r x', r**2 x'')."""
    if r <= 0:
        raise ValueError("dilation parameter must be positive")
    return Point(
        tuple(r * c for c in x.xprime),
        tuple(r * r * c for c in x.xsecond),
    )


def dist_surrogate(x: Point, y: Point) -> float:
    """min(d1, d2) surrogate of the control distance.

    d1 = |x'-y'| + |x''-y''|**(1/2)
    d2 = |x'-y'| + |x''-y''| / (|x'| + |y'|),  +inf when |x'|+|y'| = 0.

    Both parts are 1-homogeneous under the dilations, and their minimum is
    comparable to the true control distance.
    """
    dp = float(np.linalg.norm(np.subtract(x.xprime, y.xprime)))
    ds = float(np.linalg.norm(np.subtract(x.xsecond, y.xsecond)))
    d_one = dp + np.sqrt(ds)
    denom = float(np.linalg.norm(x.xprime) + np.linalg.norm(y.xprime))
    if denom == 0.0:
        d_two = np.inf if ds > 0.0 else dp
    else:
        d_two = dp + ds / denom
    return min(d_one, d_two)


def _dist_arrays(xp, xs, y: Point) -> np.ndarray:
    """Vectorised dist_surrogate against a fixed base point.

    xp: (..., d1) primed coordinates, xs: (..., d2) second coordinates.
    """
    yp = np.asarray(y.xprime)
    ys = np.asarray(y.xsecond)
    dp = np.linalg.norm(xp - yp, axis=-1)
    ds = np.linalg.norm(xs - ys, axis=-1)
    d_one = dp + np.sqrt(ds)
    denom = np.linalg.norm(xp, axis=-1) + np.linalg.norm(yp)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_two = dp + np.where(denom > 0, ds / np.where(denom > 0, denom, 1.0), np.inf)
        d_two = np.where((denom == 0) & (ds == 0), dp, d_two)
    return np.minimum(d_one, d_two)


def ball_volume_estimate(y: Point, r: float) -> float:
    """Model volume r**(d1+d2) * max(r, |y'|)**d2 of the ball B(y, r).

    Satisfies the exact scaling estimate(delta_s y, s r) = s**Q estimate(y, r)
    with Q = d1 + 2*d2.  A Monte-Carlo measurement of the true surrogate-ball
    volume is available separately as a diagnostic.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    yp = float(np.linalg.norm(y.xprime))
    return r ** (y.d1 + y.d2) * max(r, yp) ** y.d2


def ball_volume_monte_carlo(y: Point, r: float, rng: np.random.Generator,
                            samples: int = 200_000) -> float:
    """Volume of {x : dist_surrogate(x, y) < r} by rejection sampling."""
    if r <= 0:
        raise ValueError("radius must be positive")
    d1, d2 = y.d1, y.d2
    yp = float(np.linalg.norm(y.xprime))
    half_p = r
    half_s = r * r + r * (2.0 * yp + r)
    xp = np.asarray(y.xprime) + rng.uniform(-half_p, half_p, size=(samples, d1))
    xs = np.asarray(y.xsecond) + rng.uniform(-half_s, half_s, size=(samples, d2))
    hits = _dist_arrays(xp, xs, y) < r
    box = (2.0 * half_p) ** d1 * (2.0 * half_s) ** d2
    return box * float(np.mean(hits))


def weight(x: Point, y: Point, R: float = 1.0) -> float:
    """w_R(x, y) = 1 + R**2 |x''-y''| / (1 + R |y'|).

    At R = 1 this is the weight 1 + |x''-y''|/(1+|y'|); the R-scaling follows
    the dilation structure so that w_R(x,y) = w(delta_R x, delta_R y).
    """
    if R <= 0:
        raise ValueError("R must be positive")
    ds = float(np.linalg.norm(np.subtract(x.xsecond, y.xsecond)))
    yp = float(np.linalg.norm(y.xprime))
    return 1.0 + R * R * ds / (1.0 + R * yp)


def _weight_arrays(xs, y: Point, R: float = 1.0) -> np.ndarray:
    ds = np.linalg.norm(xs - np.asarray(y.xsecond), axis=-1)
    yp = float(np.linalg.norm(y.xprime))
    return 1.0 + R * R * ds / (1.0 + R * yp)


def weight_integral_check(
    y: Point,
    alpha: float,
    r: float,
    box_halfwidth: float = 512.0,
    nodes_per_axis: int = 384,
) -> dict:
    """Integral of w**(-2r) (1+dist)**(-2 alpha) over a box, per unit ball volume.

    Requires r < d2/2 and alpha + 2r > (d1 + 2*d2)/2, the hypotheses under
    which the integral is finite with a y-uniform constant; outside that range
    the call is refused since the integral may diverge.

    Returns the ratio integral / ball_volume_estimate(y, 1) together with a
    box-doubling stability diagnostic.
    """
    d1, d2 = y.d1, y.d2
    if not (r < d2 / 2.0):
        raise ValueError(f"hypothesis r < d2/2 violated (r={r}, d2={d2})")
    if not (alpha + 2.0 * r > (d1 + 2.0 * d2) / 2.0):
        raise ValueError(
            f"hypothesis alpha + 2r > (d1+2*d2)/2 violated (alpha={alpha}, r={r})"
        )

    # The integrand depends on x'' only through |x''-y''|, so the x''-integral
    # reduces to a radial one: d x'' = sigma_{d2} rho**(d2-1) d rho.  Tails
    # decay slowly when the hypotheses are marginal, so both axes use a cubic
    # grading that concentrates nodes at the peak while reaching a large box.
    sigma = {1: 2.0, 2: 2.0 * np.pi, 3: 4.0 * np.pi}[d2]
    yp_norm = float(np.linalg.norm(y.xprime))

    def integral(half: float, n: int) -> float:
        s = (np.arange(n) + 0.5) / n                       # midpoint rule on (0,1)
        signed = np.concatenate([-s[::-1], s])
        coords = half * signed ** 3                        # graded, odd mapping
        jac_p = 3.0 * half * signed ** 2 / n
        rho = half * s ** 3
        jac_r = 3.0 * half * s ** 2 / n

        mesh = np.meshgrid(*([coords] * d1), indexing="ij")
        xp = np.stack(mesh, axis=-1).reshape(-1, d1) + np.asarray(y.xprime)
        wp = np.ones(xp.shape[0])
        jm = np.meshgrid(*([jac_p] * d1), indexing="ij")
        for j in jm:
            wp = wp * j.reshape(-1)
        dp = np.linalg.norm(xp - np.asarray(y.xprime), axis=-1)[:, None]
        xnorm = np.linalg.norm(xp, axis=-1)[:, None]
        ds = rho[None, :]
        d_one = dp + np.sqrt(ds)
        denom = xnorm + yp_norm
        with np.errstate(divide="ignore"):
            d_two = dp + np.where(denom > 0, ds / np.where(denom > 0, denom, 1.0), np.inf)
            d_two = np.where((denom == 0) & (ds == 0), dp, d_two)
        dist = np.minimum(d_one, d_two)
        w = 1.0 + ds / (1.0 + yp_norm)
        vals = w ** (-2.0 * r) * (1.0 + dist) ** (-2.0 * alpha) * ds ** (d2 - 1)
        return float(np.sum(wp[:, None] * vals * (jac_r * sigma)[None, :]))

    base = integral(box_halfwidth, nodes_per_axis)
    doubled = integral(2.0 * box_halfwidth, nodes_per_axis)
    vol = ball_volume_estimate(y, 1.0)
    return {
        "ratio": base / vol,
        "ratio_doubled_box": doubled / vol,
        "relative_change": abs(doubled - base) / max(base, 1e-300),
        "alpha": alpha,
        "r": r,
    }
