"""Spectral multipliers, Sobolev norms and dyadic truncations.

A multiplier is a function F : R -> C applied to the operator through the
functional calculus.  This module provides:

* sampled/analytic 1-d multipliers with compact-support metadata,
* fractional Sobolev norms ||F||_{W_2^s} via FFT,
* the scale-invariant local norm sup_t ||eta F(t .)||_{W_2^s} with a fixed
  auxiliary bump eta,
* the reparametrisation m(n, xi) of a joint symbol on Z^{d1} x R^{d2}, and
  its dyadic truncation m(n,xi) = F(|xi| <n>) chi(<n> / 2^k) with
  <n> = 2|n|_1 + d1,
* the standard families (heat, Bochner-Riesz, Mihlin-type oscillation,
  smooth bumps).

The fixed cutoffs are documented in the README: eta is the bump
exp(1 - 1/(4u(1-u))) with u = (lambda - 1/2)/(3/2) on [1/2, 2], and chi is
the telescoped smoothstep phi(t) - phi(t/2) built from
sigma(v) = b(v)/(b(v) + b(1-v)), b(v) = exp(-1/v).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import defaults

__all__ = [
    "Multiplier1D",
    "SobolevNormSpec",
    "TruncationSpec",
    "JointSymbol",
    "TailEnergyError",
    "default_eta",
    "default_chi",
    "sobolev_norm",
    "local_sobolev_norm",
    "reparametrize",
    "dyadic_piece",
    "dyadic_pieces",
    "zero",
    "heat",
    "bochner_riesz",
    "mihlin_oscillation",
    "smooth_bump",
    "random_bumps",
]

HEAT_TRUNCATION = 1e-14


class TailEnergyError(RuntimeError):
    """Raised when a sampling grid cannot resolve a Sobolev norm."""


# ---------------------------------------------------------------------------
# bump building blocks
# ---------------------------------------------------------------------------

def _expm1over(u):
    """exp(-1/u) for u > 0, zero otherwise (vectorised)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _smoothstep(v):
    """Smooth 0 -> 1 transition on [0, 1]."""
    a = _expm1over(v)
    b = _expm1over(1.0 - v)
    with np.errstate(invalid="ignore"):
        out = np.where(a + b > 0, a / np.where(a + b > 0, a + b, 1.0), 0.0)
    return out


def _bump01(u):
    """C_c^infty bump on (0,1), max value 1 at u = 1/2."""
    u = np.asarray(u, dtype=float)
    inside = (u > 0) & (u < 1)
    out = np.zeros_like(u)
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (4.0 * ui * (1.0 - ui)))
    return out


# ---------------------------------------------------------------------------
# multipliers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Multiplier1D:
    """A spectral multiplier with support metadata.

    ``eval`` is vectorised over lambda and must vanish outside ``support``
    when that is a finite interval.  ``smoothness`` is a descriptive tag.
    """

    eval: Callable
    support: tuple[float, float] | None = None
    smoothness: str = "smooth"
    name: str = "custom"

    def __call__(self, lam):
        return self.eval(np.asarray(lam, dtype=float))

    def dilate(self, r: float) -> "Multiplier1D":
        """F_(r): lambda -> F(r lambda); support scales by 1/r."""
        if r <= 0:
            raise ValueError("dilation must be positive")
        base = self.eval
        sup = None if self.support is None else (self.support[0] / r, self.support[1] / r)
        return Multiplier1D(lambda lam: base(r * np.asarray(lam, dtype=float)),
                            sup, self.smoothness, f"{self.name}_dil{r:g}")

    def __mul__(self, other: "Multiplier1D") -> "Multiplier1D":
        f, g = self.eval, other.eval
        if self.support is None:
            sup = other.support
        elif other.support is None:
            sup = self.support
        else:
            sup = (max(self.support[0], other.support[0]),
                   min(self.support[1], other.support[1]))
        return Multiplier1D(lambda lam: f(np.asarray(lam, dtype=float)) * g(np.asarray(lam, dtype=float)),
                            sup, "product", f"{self.name}*{other.name}")


def zero() -> Multiplier1D:
    return Multiplier1D(lambda lam: np.zeros_like(np.asarray(lam, dtype=float)),
                        (1.0, 1.0), "zero", "zero")


def heat(t: float) -> Multiplier1D:
    """exp(-t lambda) on lambda >= 0, truncated where it drops below 1e-14."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return Multiplier1D(lambda lam: np.ones_like(np.asarray(lam, dtype=float)),
                            None, "analytic", "heat0")
    cutoff = -np.log(HEAT_TRUNCATION) / t

    def ev(lam):
        lam = np.asarray(lam, dtype=float)
        return np.where((lam >= 0) & (lam <= cutoff), np.exp(-t * lam), 0.0)

    return Multiplier1D(ev, (0.0, cutoff), "analytic-truncated", f"heat{t:g}")


def bochner_riesz(kappa: float, t: float) -> Multiplier1D:
    """(1 - t lambda)_+^kappa; identically 1 for t = 0."""
    if kappa < 0 or t < 0:
        raise ValueError("kappa and t must be nonnegative")
    if t == 0:
        return Multiplier1D(lambda lam: np.ones_like(np.asarray(lam, dtype=float)),
                            None, "constant", f"br{kappa:g}_t0")

    def ev(lam):
        lam = np.asarray(lam, dtype=float)
        return np.maximum(1.0 - t * lam, 0.0) ** kappa

    return Multiplier1D(ev, (-np.inf, 1.0 / t), f"C^{kappa:g} at the edge",
                        f"br{kappa:g}_t{t:g}")


def mihlin_oscillation(tau0: float) -> Multiplier1D:
    """lambda^{i tau0} on (0, infinity); |F| = 1 there."""

    def ev(lam):
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(lam.shape, dtype=complex)
        pos = lam > 0
        out[pos] = np.exp(1j * tau0 * np.log(lam[pos]))
        return out

    return Multiplier1D(ev, None, "oscillating", f"mihlin{tau0:g}")


def smooth_bump(interval: tuple[float, float]) -> Multiplier1D:
    """C_c^infty bump supported exactly on [a, b], peak value 1."""
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise ValueError("interval must be nondegenerate")

    def ev(lam):
        lam = np.asarray(lam, dtype=float)
        return _bump01((lam - a) / (b - a))

    return Multiplier1D(ev, (a, b), "bump", f"bump[{a:g},{b:g}]")


def random_bumps(count: int, rng: np.random.Generator,
                 band: tuple[float, float] = (1.0, 16.0),
                 ratio: tuple[float, float] = (2.0, 4.0)) -> list[Multiplier1D]:
    """Random bump multipliers with supports inside ``band``."""
    out = []
    for _ in range(count):
        q = rng.uniform(*ratio)
        a = np.exp(rng.uniform(np.log(band[0]), np.log(band[1] / q)))
        out.append(smooth_bump((a, q * a)))
    return out


# ---------------------------------------------------------------------------
# Sobolev norms
# ---------------------------------------------------------------------------

def _eta_eval(lam):
    lam = np.asarray(lam, dtype=float)
    return _bump01((lam - 0.5) / 1.5)


def default_eta() -> Multiplier1D:
    """The fixed auxiliary bump on [1/2, 2] used by all local norms."""
    return Multiplier1D(_eta_eval, (0.5, 2.0), "bump", "eta")


@dataclass(frozen=True)
class SobolevNormSpec:
    """Pins the auxiliary cutoff eta; all local norms in one run share it."""

    eta: Multiplier1D

    @staticmethod
    def default() -> "SobolevNormSpec":
        return SobolevNormSpec(default_eta())


_DEFAULT_SPEC = SobolevNormSpec.default()


def sobolev_norm(F: Multiplier1D, s: float,
                 window: tuple[float, float] | None = None,
                 grid_size: int = defaults.SOBOLEV_GRID_SIZE,
                 tail_tol: float = defaults.SOBOLEV_TAIL_TOL) -> float:
    """||F||_{W_2^s} = (int (1+tau^2)^s |Fhat(tau)|^2 dtau)^(1/2), unitary FFT.

    For s = 0 this is the plain L^2 norm.  The multiplier is sampled on a
    uniform grid covering its support (or ``window``); a failure is raised if
    either the lambda-space tails or the weighted spectral tail are not
    resolved, since the value would then be untrustworthy.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    if window is None:
        if F.support is None or not np.isfinite(F.support[0]) or not np.isfinite(F.support[1]):
            raise ValueError("unbounded multiplier requires an explicit window")
        lo, hi = F.support
        pad = max(1.0, defaults.SOBOLEV_PAD_FRACTION * (hi - lo))
        window = (lo - pad, hi + pad)
    lam = np.linspace(window[0], window[1], grid_size, endpoint=False)
    vals = np.asarray(F(lam), dtype=complex)
    peak = float(np.max(np.abs(vals)))
    if peak == 0.0:
        return 0.0
    edge = max(abs(vals[0]), abs(vals[-1]))
    if edge > 1e-9 * peak:
        raise TailEnergyError(
            f"multiplier does not vanish at the window edges ({edge:.2e} vs peak {peak:.2e})"
        )
    dlam = lam[1] - lam[0]
    spec = np.fft.fft(vals)
    tau = 2.0 * np.pi * np.fft.fftfreq(grid_size, d=dlam)
    weights = (1.0 + tau ** 2) ** s
    energy = weights * np.abs(spec) ** 2
    total = float(np.sum(energy)) * dlam / grid_size
    tail = float(np.sum(energy[np.abs(tau) > 0.75 * np.max(np.abs(tau))])) * dlam / grid_size
    if total > 0 and tail / total > tail_tol:
        raise TailEnergyError(
            f"unresolved spectral tail: fraction {tail / total:.2e} above {tail_tol:.0e}; "
            "increase grid_size or reduce s"
        )
    return float(np.sqrt(total))


def local_sobolev_norm(F: Multiplier1D, s: float,
                       spec: SobolevNormSpec = _DEFAULT_SPEC,
                       t_grid=None,
                       pts_per_decade: int = defaults.LOCAL_SOBOLEV_PTS_PER_DECADE,
                       grid_size: int = 4096) -> float:
    """sup_t ||eta F(t .)||_{W_2^s} approximated on a logarithmic t-grid.

    The documented grid covers [inf supp F / 2, 2 sup supp F] at
    ``pts_per_decade`` points per decade; it is an approximation of the
    supremum that stabilises under grid refinement for the multipliers used
    here.
    """
    if t_grid is None:
        if F.support is None:
            raise ValueError("unbounded multiplier requires an explicit t_grid")
        lo, hi = F.support
        lo = max(lo, hi * 1e-4)
        t_lo, t_hi = lo / 2.0, 2.0 * hi
        decades = np.log10(t_hi / t_lo)
        t_grid = np.geomspace(t_lo, t_hi, max(2, int(np.ceil(decades * pts_per_decade))))
    eta = spec.eta
    best = 0.0
    for t in np.asarray(t_grid, dtype=float):
        Ft = F.dilate(t)
        prod = Multiplier1D(lambda lam, _e=eta.eval, _f=Ft.eval:
                            _e(np.asarray(lam)) * _f(np.asarray(lam)),
                            (0.25, 2.25), "product", "eta*F_t")
        best = max(best, sobolev_norm(prod, s, window=(0.0, 2.5),
                                      grid_size=grid_size, tail_tol=1.0))
    return best


# ---------------------------------------------------------------------------
# truncation and reparametrisation
# ---------------------------------------------------------------------------

def _chi_eval(t):
    t = np.asarray(t, dtype=float)
    return _smoothstep(2.0 * t - 1.0) - _smoothstep(t - 1.0)


@dataclass(frozen=True)
class TruncationSpec:
    """Dyadic cutoff chi with supp chi in [1/2, 2] and sum_k chi(2^-k t) = 1.

    The partition identity is verified on a logarithmic grid at construction.
    """

    chi: Callable
    M: float = 1.0

    def __post_init__(self):
        if self.M < 1.0:
            raise ValueError("M must be >= 1")
        t = np.geomspace(0.51, 1000.0, 797)
        acc = np.zeros_like(t)
        for k in range(-4, 16):
            acc += np.asarray(self.chi(t / 2.0 ** k), dtype=float)
        if np.max(np.abs(acc - 1.0)) > 1e-10:
            raise ValueError("chi does not satisfy the dyadic partition of unity")

    @staticmethod
    def default(M: float = 1.0) -> "TruncationSpec":
        return TruncationSpec(_chi_eval, M)

    def at_scale(self, M: float) -> "TruncationSpec":
        return replace(self, M=float(M))


def default_chi() -> Callable:
    return _chi_eval


@dataclass
class JointSymbol:
    """Reparametrised symbol m(n, xi) on Z^{d1} x R^{d2}.

    ``evalm`` implements m(n, xi) with the convention m = 0 off N^{d1}.
    When the symbol depends on n only through <n> = 2|n|_1 + d1 and on xi
    only through |xi|, ``level_profile(brackets, rho)`` evaluates that radial
    profile and enables the fast kernel paths.  ``bracket_range`` and
    ``rho_range`` bound the support (inclusive; rho_range[0] may be 0.0 when
    the support reaches xi = 0).
    """

    d1: int
    d2: int
    evalm: Callable
    level_profile: Callable | None = None
    bracket_range: tuple[float, float] | None = None
    rho_range: tuple[float, float] | None = None
    name: str = "symbol"

    def bracket(self, n) -> int:
        return 2 * int(sum(n)) + self.d1

    def __call__(self, n, xi) -> complex:
        if any(v < 0 for v in n):
            return 0.0
        return self.evalm(tuple(n), xi)


def reparametrize(G: Callable, d1: int, d2: int,
                  bracket_range=None, rho_range=None, name="joint") -> JointSymbol:
    """m(n, xi) = G(|xi| (2n + 1), xi) on N^{d1}, zero elsewhere."""

    def evalm(n, xi):
        if any(v < 0 for v in n):
            return 0.0
        xi = np.asarray(xi, dtype=float)
        lam = np.linalg.norm(xi) * (2.0 * np.asarray(n, dtype=float) + 1.0)
        return G(lam, xi)

    return JointSymbol(d1, d2, evalm, None, bracket_range, rho_range, name)


def dyadic_piece(F: Multiplier1D, trunc: TruncationSpec, k: int, d1: int,
                 d2: int) -> JointSymbol | None:
    """The piece m(n,xi) = F(|xi| <n>) chi(<n> / 2^k); None when empty.

    The chi-cutoff pins <n> in [2^(k-1), 2^(k+1)]; combined with the support
    of F this bounds |xi| in an interval, which may touch 0 when supp F does.
    """
    M = 2.0 ** k
    chi = trunc.chi
    b_lo = max(float(d1), M / 2.0)
    b_hi = 2.0 * M
    if b_hi < d1:
        return None
    if F.support is not None:
        lo, hi = max(F.support[0], 0.0), F.support[1]
        if not np.isfinite(hi):
            raise ValueError("dyadic pieces need a multiplier with bounded support")
        rho_lo = lo / b_hi
        rho_hi = hi / b_lo
    else:
        raise ValueError("dyadic pieces need support metadata")
    if rho_hi <= 0:
        return None

    def evalm(n, xi):
        if any(v < 0 for v in n):
            return 0.0
        xi = np.asarray(xi, dtype=float)
        br = 2.0 * float(sum(n)) + d1
        c = float(chi(np.array([br / M]))[0])
        if c == 0.0:
            return 0.0
        return complex(np.asarray(F(np.linalg.norm(xi) * br)).reshape(())) * c

    def level_profile(brackets, rho):
        brackets = np.asarray(brackets, dtype=float)
        return np.asarray(F(rho * brackets), dtype=complex) * np.asarray(
            chi(brackets / M), dtype=float)

    return JointSymbol(d1, d2, evalm, level_profile,
                       (b_lo, b_hi), (rho_lo, rho_hi), f"{F.name}@2^{k}")


def dyadic_pieces(F: Multiplier1D, trunc: TruncationSpec, d1: int, d2: int,
                  rho_min: float, k_cap: int = defaults.DYADIC_KMAX
                  ) -> list[tuple[int, JointSymbol]]:
    """All nonempty pieces whose |xi|-support meets [rho_min, infinity).

    For multipliers supported away from 0 the list is finite on its own;
    when supp F touches 0 the floor rho_min (plus the hard cap) terminates
    the scale sum, and the neglected scales are reported by the kernel
    assembly diagnostics.
    """
    out = []
    for k in range(0, k_cap + 1):
        piece = dyadic_piece(F, trunc, k, d1, d2)
        if piece is None:
            continue
        lo, hi = piece.rho_range
        if hi < rho_min:
            continue
        out.append((k, piece))
    return out
