"""Difference-operator calculus on Hermite-index symbols.

Symbols are functions f : Z^{d1} x R^{d2} -> C with finite support in the
discrete variable.  Three families of operators act on them:

    tau_j f(n, xi)   = f(n + 2 e_j, xi)                       (shift)
    delta_j f(n, xi) = f(n, xi) - f(n - 2 e_j, xi)            (difference)
    N_{j,rho,s}      = a_{n_j+2rho} f        for s = 0,
                       N_{j,rho,s-1} f - N_{j,rho-1,s-1} f    for s > 0,

with a_l = sqrt(l (l-1)) for l > 0 and 0 otherwise.  Every N_{j,rho,s} is a
multiplication operator (multiplier tau_j^rho delta_j^s w_j, w_j(n) = a_{n_j}),
so composition products of N-factors commute; shifts and differences satisfy
exact commutation relations with them, which drive the symbolic expansion of
xi-derivatives of Hermite sums implemented in :func:`expand_derivative`.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from . import defaults
from .hermite import a_coeff, hermite_table

__all__ = [
    "SymbolGridFn",
    "NFactor",
    "RationalSymbol",
    "ExpansionTerm",
    "ExpansionCapError",
    "shift",
    "difference",
    "n_apply",
    "n_multiplier_value",
    "expand_derivative",
    "audit_term",
    "verify_expansion",
    "discrete_to_continuous_check",
    "coefficient_bound_check",
    "random_box_symbol",
    "terms_to_json",
]


class ExpansionCapError(ValueError):
    """Raised when a derivative expansion exceeds the combinatorial cap."""


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------

Box = tuple[tuple[int, int], ...]


@dataclass
class SymbolGridFn:
    """A symbol f : Z^{d1} x R^{d2} -> C supported in a finite n-box.

    ``fn(n, xi)`` evaluates the symbol; ``box`` is the inclusive support range
    per discrete axis (evaluation outside returns 0 by contract of the
    constructor helpers).  ``partial(n, xi, order)`` evaluates an analytic
    xi-derivative of multi-order ``order``; when absent a centred
    finite-difference fallback with relative step ``defaults.XI_FD_RELATIVE_STEP``
    is synthesised.
    """

    d1: int
    d2: int
    fn: Callable
    box: Box
    partial: Callable | None = None

    def __post_init__(self):
        if len(self.box) != self.d1:
            raise ValueError("box must have one (lo, hi) pair per discrete axis")
        if self.partial is None:
            self.partial = _fd_partial(self.fn, self.d2)

    def __call__(self, n, xi) -> complex:
        return self.fn(tuple(n), xi)

    def support_iter(self, lower=None) -> Iterable[tuple[int, ...]]:
        """Iterate the support box, clipped below by ``lower`` per axis."""
        ranges = []
        for j, (lo, hi) in enumerate(self.box):
            lo_eff = lo if lower is None else max(lo, lower[j])
            ranges.append(range(lo_eff, hi + 1))
        return itertools.product(*ranges)


def _fd_partial(fn: Callable, d2: int) -> Callable:
    stencil_1 = ((-2, Fraction(1, 12)), (-1, Fraction(-8, 12)),
                 (1, Fraction(8, 12)), (2, Fraction(-1, 12)))

    def partial(n, xi, order):
        order = tuple(order)
        for k, ok in enumerate(order):
            if ok > 0:
                xi = np.asarray(xi, dtype=float)
                h = defaults.XI_FD_RELATIVE_STEP * max(np.linalg.norm(xi), 1e-6)
                rest = order[:k] + (ok - 1,) + order[k + 1:]
                acc = 0.0
                for off, c in stencil_1:
                    shifted = xi.copy()
                    shifted[k] += off * h
                    acc += float(c) * partial(n, shifted, rest)
                return acc / h
        return fn(tuple(n), xi)

    return partial


def shift(f: SymbolGridFn, alpha) -> SymbolGridFn:
    """tau^alpha f(n, xi) = f(n + 2 alpha, xi); alpha may be negative."""
    alpha = tuple(int(a) for a in alpha)
    base_fn, base_partial = f.fn, f.partial

    def fn(n, xi):
        return base_fn(tuple(ni + 2 * ai for ni, ai in zip(n, alpha)), xi)

    def partial(n, xi, order):
        return base_partial(tuple(ni + 2 * ai for ni, ai in zip(n, alpha)), xi, order)

    box = tuple((lo - 2 * a, hi - 2 * a) for (lo, hi), a in zip(f.box, alpha))
    return SymbolGridFn(f.d1, f.d2, fn, box, partial)


def difference(f: SymbolGridFn, alpha) -> SymbolGridFn:
    """delta^alpha f, the iterated backward difference with step 2 per axis."""
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 for a in alpha):
        raise ValueError("difference orders must be nonnegative")
    out = f
    for j, a in enumerate(alpha):
        for _ in range(a):
            out = _difference_once(out, j)
    return out


def _difference_once(f: SymbolGridFn, j: int) -> SymbolGridFn:
    base_fn, base_partial = f.fn, f.partial

    def fn(n, xi):
        m = list(n)
        m[j] -= 2
        return base_fn(tuple(n), xi) - base_fn(tuple(m), xi)

    def partial(n, xi, order):
        m = list(n)
        m[j] -= 2
        return base_partial(tuple(n), xi, order) - base_partial(tuple(m), xi, order)

    box = tuple(
        (lo, hi + (2 if k == j else 0)) for k, (lo, hi) in enumerate(f.box)
    )
    return SymbolGridFn(f.d1, f.d2, fn, box, partial)


# ---------------------------------------------------------------------------
# N-factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class NFactor:
    """One factor N_{axis, rho, s}; ``axis`` is 0-based."""

    axis: int
    rho: int
    s: int

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("s must be nonnegative")


def _n_value(factor: NFactor, n_j: int) -> float:
    """Multiplier of N_{j,rho,s} at index n_j, by the defining recursion."""
    if factor.s == 0:
        return float(a_coeff(n_j + 2 * factor.rho))
    return (_n_value(NFactor(factor.axis, factor.rho, factor.s - 1), n_j)
            - _n_value(NFactor(factor.axis, factor.rho - 1, factor.s - 1), n_j))


def n_multiplier_value(factor: NFactor, n_j: int) -> float:
    """Closed form of the same multiplier: tau^rho delta^s applied to a_(.)."""
    acc = 0.0
    for i in range(factor.s + 1):
        acc += (-1) ** i * math.comb(factor.s, i) * float(
            a_coeff(n_j + 2 * factor.rho - 2 * i)
        )
    return acc


def n_apply(f: SymbolGridFn, factor: NFactor) -> SymbolGridFn:
    """Apply N_{j,rho,s} to a symbol (recursion in s, exact arithmetic)."""
    base_fn, base_partial = f.fn, f.partial
    j = factor.axis

    def fn(n, xi):
        return _n_value(factor, n[j]) * base_fn(tuple(n), xi)

    def partial(n, xi, order):
        return _n_value(factor, n[j]) * base_partial(tuple(n), xi, order)

    return SymbolGridFn(f.d1, f.d2, fn, f.box, partial)


# ---------------------------------------------------------------------------
# homogeneous rational coefficients Theta
# ---------------------------------------------------------------------------

Monomial = tuple[tuple[int, ...], int]        # (xi powers, power of |xi|^2)


@dataclass
class RationalSymbol:
    """Finite sum of monomials c * xi^p / |xi|^(2q) with rational c.

    For d2 = 1 the relation xi^2 = |xi|^2 is used to keep numerator powers in
    {0, 1}; in higher dimension monomials are kept verbatim (the homogeneity
    degree |p|_1 - 2q is well defined either way).
    """

    d2: int
    monomials: dict[Monomial, Fraction] = field(default_factory=dict)

    @staticmethod
    def one(d2: int) -> "RationalSymbol":
        return RationalSymbol(d2, {((0,) * d2, 0): Fraction(1)})

    @staticmethod
    def zero(d2: int) -> "RationalSymbol":
        return RationalSymbol(d2, {})

    def _put(self, powers: tuple[int, ...], q: int, coeff: Fraction) -> None:
        if self.d2 == 1:
            p = powers[0]
            while p >= 2 and q >= 1:
                p -= 2
                q -= 1
            powers = (p,)
        key = (powers, q)
        new = self.monomials.get(key, Fraction(0)) + coeff
        if new == 0:
            self.monomials.pop(key, None)
        else:
            self.monomials[key] = new

    def plus(self, other: "RationalSymbol") -> "RationalSymbol":
        out = RationalSymbol(self.d2, dict(self.monomials))
        for (p, q), c in other.monomials.items():
            out._put(p, q, c)
        return out

    def scaled(self, c) -> "RationalSymbol":
        c = Fraction(c)
        if c == 0:
            return RationalSymbol.zero(self.d2)
        return RationalSymbol(self.d2, {k: v * c for k, v in self.monomials.items()})

    def times_monomial(self, coeff, powers, q: int) -> "RationalSymbol":
        out = RationalSymbol(self.d2)
        for (p0, q0), c0 in self.monomials.items():
            out._put(tuple(a + b for a, b in zip(p0, powers)), q0 + q, c0 * Fraction(coeff))
        return out

    def diff(self, k: int) -> "RationalSymbol":
        out = RationalSymbol(self.d2)
        for (p, q), c in self.monomials.items():
            if p[k] > 0:
                out._put(tuple(pi - (1 if i == k else 0) for i, pi in enumerate(p)),
                         q, c * p[k])
            if q != 0:
                out._put(tuple(pi + (1 if i == k else 0) for i, pi in enumerate(p)),
                         q + 1, c * (-2 * q))
        return out

    def eval(self, xi) -> float:
        xi = np.asarray(xi, dtype=float)
        norm2 = float(np.dot(xi, xi))
        acc = 0.0
        for (p, q), c in self.monomials.items():
            term = float(c)
            for pi, xik in zip(p, xi):
                if pi:
                    term *= xik ** pi
            acc += term / norm2 ** q
        return acc

    @property
    def is_zero(self) -> bool:
        return not self.monomials

    def degrees(self) -> set[int]:
        return {sum(p) - 2 * q for (p, q) in self.monomials}

    def to_json(self) -> list[dict]:
        items = sorted(self.monomials.items())
        return [
            {"coeff": [c.numerator, c.denominator], "xi_powers": list(p),
             "inv_norm2_power": q}
            for (p, q), c in items
        ]


# ---------------------------------------------------------------------------
# expansion terms
# ---------------------------------------------------------------------------

@dataclass
class ExpansionTerm:
    """One term Theta(xi) * d^{beta_i} N tau^{alpha_tilde} delta^{alpha} m,
    paired with the Hermite product at shift r in the second slot."""

    beta_i: tuple[int, ...]
    alpha_i: tuple[int, ...]
    alpha_tilde_i: tuple[int, ...]
    r_i: tuple[int, ...]
    n_factors: tuple[NFactor, ...]
    theta: RationalSymbol

    def key(self):
        return (self.beta_i, self.alpha_i, self.alpha_tilde_i, self.r_i,
                self.n_factors)

    def to_json(self) -> dict:
        return {
            "beta": list(self.beta_i),
            "alpha": list(self.alpha_i),
            "alpha_tilde": list(self.alpha_tilde_i),
            "r": list(self.r_i),
            "n_factors": [
                {"axis": f.axis, "rho": f.rho, "s": f.s} for f in self.n_factors
            ],
            "theta": self.theta.to_json(),
        }


def terms_to_json(terms: Sequence[ExpansionTerm]) -> str:
    return json.dumps([t.to_json() for t in terms], indent=2, sort_keys=True)


def _canon(factors: Iterable[NFactor]) -> tuple[NFactor, ...]:
    return tuple(sorted(factors))


def _push_tau(factors: Sequence[NFactor], j: int) -> tuple[NFactor, ...]:
    """Move one tau_j from the left of the factors to the right (exact)."""
    return tuple(
        NFactor(f.axis, f.rho + (1 if f.axis == j else 0), f.s) for f in factors
    )


def _push_delta(factors: Sequence[NFactor], j: int) -> list[tuple[tuple[NFactor, ...], bool]]:
    """Move one delta_j rightwards; same-axis factors split it in two.

    Returns (resulting factors, absorbed) pairs; when not absorbed the delta
    exits on the right and must join the delta-block of the word.
    """
    results: list[tuple[tuple[NFactor, ...], bool]] = []

    def rec(i: int, acc: list[NFactor]):
        if i == len(factors):
            results.append((tuple(acc), False))
            return
        f = factors[i]
        if f.axis != j:
            rec(i + 1, acc + [f])
        else:
            absorbed = acc + [NFactor(j, f.rho, f.s + 1)] + list(factors[i + 1:])
            results.append((tuple(absorbed), True))
            rec(i + 1, acc + [NFactor(j, f.rho - 1, f.s)])

    rec(0, [])
    return results


def _bump(t: tuple[int, ...], j: int, by: int = 1) -> tuple[int, ...]:
    return tuple(v + (by if i == j else 0) for i, v in enumerate(t))


def expand_derivative(beta, d1: int, cap: int = defaults.EXPANSION_ORDER_CAP
                      ) -> list[ExpansionTerm]:
    """Canonical term list for the xi-derivative of order ``beta`` of a
    Hermite-symbol sum over Z^{d1}.

    The result satisfies: for every smooth symbol m compactly supported in
    Z^{d1} x (R^{d2} minus 0),

        d^beta_xi  sum_n m(n,xi) ht_n(y',xi) ht_n(x',xi)
          = sum_terms sum_n Theta(xi) [d^{beta_i} N tau^a~ delta^a m](n,xi)
                             ht_{n+2r}(y',xi) ht_n(x',xi),

    where ht denotes the scaled Hermite tensor product.  Terms with identical
    operator parts are merged; the list order is deterministic.
    """
    beta = tuple(int(b) for b in beta)
    d2 = len(beta)
    if any(b < 0 for b in beta):
        raise ValueError("beta must be nonnegative")
    if sum(beta) > cap:
        raise ExpansionCapError(
            f"|beta|_1 = {sum(beta)} exceeds the expansion cap {cap}"
        )

    zero1 = (0,) * d1
    terms: dict = {}
    ident = ExpansionTerm((0,) * d2, zero1, zero1, zero1, (), RationalSymbol.one(d2))
    terms[ident.key()] = ident

    def add(store: dict, term: ExpansionTerm) -> None:
        if term.theta.is_zero:
            return
        k = term.key()
        if k in store:
            merged = store[k].theta.plus(term.theta)
            if merged.is_zero:
                del store[k]
            else:
                store[k] = ExpansionTerm(*k, merged)
        else:
            store[k] = term

    for k_axis in range(d2):
        for _ in range(beta[k_axis]):
            new_terms: dict = {}
            ek = tuple(1 if i == k_axis else 0 for i in range(d2))
            for term in terms.values():
                # product rule on Theta
                dtheta = term.theta.diff(k_axis)
                add(new_terms, ExpansionTerm(term.beta_i, term.alpha_i,
                                             term.alpha_tilde_i, term.r_i,
                                             term.n_factors, dtheta))
                # derivative hits the symbol
                add(new_terms, ExpansionTerm(
                    tuple(b + e for b, e in zip(term.beta_i, ek)),
                    term.alpha_i, term.alpha_tilde_i, term.r_i,
                    term.n_factors, term.theta))
                # derivative hits the Hermite product: factor xi_k / (4 |xi|^2)
                base = term.theta.times_monomial(Fraction(1, 4), ek, 1)
                for j in range(d1):
                    rj = term.r_i[j]
                    eps = 1 if rj >= 0 else -1
                    # N_{j,1,0} tau_j delta_j  at shift r + e_j
                    for fs, absorbed in _push_delta(term.n_factors, j):
                        factors = _canon(_push_tau(fs, j) + (NFactor(j, 1, 0),))
                        alpha = term.alpha_i if absorbed else _bump(term.alpha_i, j)
                        add(new_terms, ExpansionTerm(
                            term.beta_i, alpha, _bump(term.alpha_tilde_i, j),
                            _bump(term.r_i, j), factors, base))
                    # telescoping sums at shifts r +/- e_j
                    for rho in range(1 - max(-rj, 0), max(rj, 0) + 1):
                        add(new_terms, ExpansionTerm(
                            term.beta_i, term.alpha_i, term.alpha_tilde_i,
                            _bump(term.r_i, j),
                            _canon(term.n_factors + (NFactor(j, rho + 1, 1),)),
                            base.scaled(-eps)))
                        add(new_terms, ExpansionTerm(
                            term.beta_i, term.alpha_i, term.alpha_tilde_i,
                            _bump(term.r_i, j, -1),
                            _canon(term.n_factors + (NFactor(j, rho, 1),)),
                            base.scaled(eps)))
                    # N_{j,0,0} delta_j  at shift r - e_j
                    for fs, absorbed in _push_delta(term.n_factors, j):
                        factors = _canon(fs + (NFactor(j, 0, 0),))
                        alpha = term.alpha_i if absorbed else _bump(term.alpha_i, j)
                        add(new_terms, ExpansionTerm(
                            term.beta_i, alpha, term.alpha_tilde_i,
                            _bump(term.r_i, j, -1), factors, base))
            terms = new_terms

    return [terms[k] for k in sorted(terms.keys(), key=_term_sort_key)]


def _term_sort_key(key):
    beta_i, alpha, alpha_tilde, r, factors = key
    return (beta_i, alpha, alpha_tilde, r,
            tuple((f.axis, f.rho, f.s) for f in factors))


def audit_term(term: ExpansionTerm, beta) -> list[str]:
    """Check the structural properties of an expansion term; returns the
    list of violated conditions (empty when the term is admissible)."""
    beta = tuple(beta)
    issues = []
    b1 = sum(beta)
    if not all(0 <= bi <= b for bi, b in zip(term.beta_i, beta)):
        issues.append("beta_i exceeds beta")
    if sum(term.alpha_i) + sum(term.beta_i) > b1:
        issues.append("|alpha_i| + |beta_i| exceeds |beta|")
    if b1 > 0 and sum(term.alpha_i) + sum(term.beta_i) == 0:
        issues.append("order must be positive for |beta| > 0")
    if sum(abs(v) for v in term.r_i) > b1:
        issues.append("|r|_1 exceeds |beta|_1")
    degrees = term.theta.degrees()
    want = sum(term.beta_i) - b1
    if degrees and degrees != {want}:
        issues.append(f"theta not homogeneous of degree {want}: {degrees}")
    # composition-product constraints, per axis
    d1 = len(term.alpha_i)
    per_axis: dict[int, list[NFactor]] = {j: [] for j in range(d1)}
    for f in term.n_factors:
        per_axis[f.axis].append(f)
    total_u = len(term.n_factors)
    if total_u > b1 - sum(term.beta_i):
        issues.append("too many N-factors")
    for j in range(d1):
        fs = per_axis[j]
        u_j = len(fs)
        s_sum = sum(f.s for f in fs)
        if s_sum != u_j - term.alpha_i[j]:
            issues.append(f"axis {j}: s-sum {s_sum} != u - alpha = {u_j - term.alpha_i[j]}")
        for f in fs:
            if not (f.s - b1 <= f.rho <= b1):
                issues.append(f"axis {j}: rho {f.rho} outside [s - |beta|, |beta|]")
        cap = max([0] + [1 - f.rho for f in fs])
        if cap < term.alpha_i[j] - term.alpha_tilde_i[j]:
            issues.append(f"axis {j}: vanishing margin {cap} below alpha - alpha_tilde")
    return issues


# ---------------------------------------------------------------------------
# numerical verification of the expansion identity
# ---------------------------------------------------------------------------

_STENCILS = {
    1: ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12)),
    2: ((-2, -1, 0, 1, 2), (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12)),
    3: ((-3, -2, -1, 1, 2, 3), (1 / 8, -1, 13 / 8, -13 / 8, 1, -1 / 8)),
    4: ((-3, -2, -1, 0, 1, 2, 3),
        (-1 / 6, 2, -13 / 2, 28 / 3, -13 / 2, 2, -1 / 6)),
}


class _HermitePack:
    """Hermite tensor products at fixed (x', y', xi), with table reuse."""

    def __init__(self, xprime, yprime, xi, nmax: int):
        self.xp = np.atleast_1d(np.asarray(xprime, dtype=float))
        self.yp = np.atleast_1d(np.asarray(yprime, dtype=float))
        self.norm = float(np.linalg.norm(xi))
        root = np.sqrt(self.norm)
        coords = np.concatenate([self.xp, self.yp])
        self.table = hermite_table(nmax, root * coords)
        self.d1 = self.xp.size
        self.nmax = nmax
        self.scale = self.norm ** (self.d1 / 4.0)

    def ht_x(self, n) -> float:
        if any(v < 0 or v > self.nmax for v in n):
            return 0.0
        out = self.scale
        for j, nj in enumerate(n):
            out *= self.table[nj, j]
        return out

    def ht_y(self, n) -> float:
        if any(v < 0 or v > self.nmax for v in n):
            return 0.0
        out = self.scale
        for j, nj in enumerate(n):
            out *= self.table[nj, self.d1 + j]
        return out


def _hermite_sum(f: SymbolGridFn, xprime, yprime, xi) -> complex:
    """S(xi) = sum_n f(n, xi) ht_n(y', xi) ht_n(x', xi) over the support."""
    hi = max(h for _, h in f.box)
    pack = _HermitePack(xprime, yprime, xi, max(hi, 0))
    acc = 0.0 + 0.0j
    for n in f.support_iter(lower=(0,) * f.d1):
        hx = pack.ht_x(n)
        if hx == 0.0:
            continue
        hy = pack.ht_y(n)
        if hy == 0.0:
            continue
        acc += f(n, xi) * hx * hy
    return acc


def _apply_ops(f: SymbolGridFn, term: ExpansionTerm) -> SymbolGridFn:
    g = difference(f, term.alpha_i)
    g = shift(g, term.alpha_tilde_i)
    for factor in term.n_factors:
        g = n_apply(g, factor)
    return g


def _expansion_value(terms: Sequence[ExpansionTerm], f: SymbolGridFn,
                     xprime, yprime, xi) -> complex:
    applied = [(t, _apply_ops(f, t)) for t in terms]
    pad = max((sum(abs(v) for v in t.r_i) for t in terms), default=0)
    hi = max(h for _, h in f.box) + 2 * pad + 2
    pack = _HermitePack(xprime, yprime, xi, max(hi, 0))
    acc = 0.0 + 0.0j
    for term, g in applied:
        theta = term.theta.eval(xi)
        if theta == 0.0:
            continue
        lower = tuple(max(0, -2 * rj) for rj in term.r_i)
        for n in g.support_iter(lower=lower):
            if any(v < 0 for v in n):
                continue
            hx = pack.ht_x(n)
            if hx == 0.0:
                continue
            hy = pack.ht_y(tuple(v + 2 * rj for v, rj in zip(n, term.r_i)))
            if hy == 0.0:
                continue
            acc += theta * g.partial(n, xi, term.beta_i) * hx * hy
    return acc


# roundoff forces larger steps for high-order stencils (eps / h**order)
_FD_STEP_BY_ORDER = {1: defaults.XI_FD_RELATIVE_STEP,
                     2: defaults.XI_FD_RELATIVE_STEP,
                     3: 2e-3, 4: 1e-2}


def verify_expansion(beta, f: SymbolGridFn, samples,
                     rel_step: float | None = None,
                     cap: int = defaults.EXPANSION_ORDER_CAP) -> float:
    """Max relative discrepancy between the finite-difference xi-derivative of
    the Hermite sum and its expansion into difference-operator terms.

    ``samples`` is a sequence of (x', y', xi) triples.  The relative scale is
    the largest magnitude seen on either side across all samples.  When
    ``rel_step`` is None each stencil picks a step suited to its order.
    """
    beta = tuple(int(b) for b in beta)
    terms = expand_derivative(beta, f.d1, cap=cap)

    def fd(xprime, yprime, xi):
        xi = np.asarray(xi, dtype=float)

        def rec(order, point):
            for k, ok in enumerate(order):
                if ok > 0:
                    use = min(ok, 4) if ok <= 4 else None
                    if use is None:
                        raise ExpansionCapError("finite differences support order <= 4")
                    offsets, coeffs = _STENCILS[use]
                    step = _FD_STEP_BY_ORDER[use] if rel_step is None else rel_step
                    h = step * float(np.linalg.norm(point))
                    rest = tuple(o - (use if i == k else 0) for i, o in enumerate(order))
                    acc = 0.0 + 0.0j
                    for off, c in zip(offsets, coeffs):
                        shifted = point.copy()
                        shifted[k] += off * h
                        acc += c * rec(rest, shifted)
                    return acc / h ** use
            return _hermite_sum(f, xprime, yprime, point)

        return rec(beta, xi.copy())

    worst = 0.0
    scale = 0.0
    pairs = []
    for xprime, yprime, xi in samples:
        lhs = fd(xprime, yprime, xi)
        rhs = _expansion_value(terms, f, xprime, yprime, xi)
        pairs.append((lhs, rhs))
        scale = max(scale, abs(lhs), abs(rhs))
    if scale == 0.0:
        return 0.0
    for lhs, rhs in pairs:
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


# ---------------------------------------------------------------------------
# discrete-to-continuous bridge
# ---------------------------------------------------------------------------

def discrete_to_continuous_check(
    f_smooth: Callable,
    partial_alpha: Callable,
    alpha,
    alpha_tilde,
    n_values,
    order: int = defaults.GAUSS_LEGENDRE_ORDER,
    rng: np.random.Generator | None = None,
    mc_samples: int = defaults.MONTE_CARLO_SAMPLES,
) -> float:
    """Max discrepancy of tau^a~ delta^a f(n) against the pushforward integral
    2^{|a|} int d^a f(n - s) d nu(s).

    ``f_smooth`` and ``partial_alpha`` take arrays of shape (..., d1) and
    evaluate the smooth extension and its alpha-derivative.  The measure nu is
    realised as the push-forward of the uniform distribution on the unit cube
    through s_j = 2 |s_j|_1 - 2 alpha_tilde_j, integrated with tensor
    Gauss-Legendre nodes (Monte Carlo beyond total order 4).
    """
    alpha = tuple(int(a) for a in alpha)
    alpha_tilde = tuple(int(a) for a in alpha_tilde)
    d1 = len(alpha)
    total = sum(alpha)

    def lhs(n) -> float:
        acc = 0.0
        for idx in itertools.product(*(range(a + 1) for a in alpha)):
            c = 1.0
            for a, i in zip(alpha, idx):
                c *= (-1) ** i * math.comb(a, i)
            point = np.array(
                [n[j] + 2 * alpha_tilde[j] - 2 * idx[j] for j in range(d1)],
                dtype=float,
            )
            acc += c * float(f_smooth(point))
        return acc

    if total <= 4:
        nodes, weights = np.polynomial.legendre.leggauss(order)
        nodes = 0.5 * (nodes + 1.0)
        weights = 0.5 * weights
        grids = np.meshgrid(*([nodes] * total), indexing="ij") if total else []
        wgrids = np.meshgrid(*([weights] * total), indexing="ij") if total else []
        if total:
            pts = np.stack([g.reshape(-1) for g in grids], axis=1)
            wts = np.ones(pts.shape[0])
            for wg in wgrids:
                wts = wts * wg.reshape(-1)
        else:
            pts = np.zeros((1, 0))
            wts = np.ones(1)
    else:
        if rng is None:
            raise ValueError("rng required for Monte-Carlo fallback")
        pts = rng.uniform(size=(mc_samples, total))
        wts = np.full(mc_samples, 1.0 / mc_samples)

    # split the flat unit-cube coordinates into per-axis blocks
    splits = np.cumsum(alpha)[:-1]

    def rhs(n) -> float:
        if total == 0:
            return float(f_smooth(np.asarray(n, dtype=float)))
        blocks = np.split(pts, splits, axis=1)
        args = np.empty((pts.shape[0], d1))
        for j in range(d1):
            s_j = 2.0 * blocks[j].sum(axis=1) - 2.0 * alpha_tilde[j]
            args[:, j] = n[j] - s_j
        vals = np.asarray(partial_alpha(args), dtype=float)
        return 2.0 ** total * float(np.sum(wts * vals))

    worst = 0.0
    for n in n_values:
        n = tuple(int(v) for v in np.atleast_1d(n))
        worst = max(worst, abs(lhs(n) - rhs(n)))
    return worst


# ---------------------------------------------------------------------------
# coefficient bounds for composition products
# ---------------------------------------------------------------------------

def coefficient_bound_check(factors: Sequence[NFactor], n_grid,
                            f: Callable | None = None) -> dict:
    """Vanishing region and growth envelope of a composition product.

    Part 1: the product annihilates every n with n_j < 2 max(1 - rho) over the
    axis-j factors (violations reported exactly; the list must be empty).
    Part 2: |N f(n)| <= C |f(n)| prod_j (2|n_j|+1)^(u_j - sum s_j); the
    empirical constant C is the sup of the ratio over the grid.
    """
    factors = tuple(factors)
    if f is None:
        f = lambda n: 1.0
    axes = sorted({fct.axis for fct in factors})
    thresholds = {}
    for j in axes:
        fs = [fct for fct in factors if fct.axis == j]
        thresholds[j] = 2 * max(1 - fct.rho for fct in fs)
    exponents = {}
    for j in axes:
        fs = [fct for fct in factors if fct.axis == j]
        exponents[j] = len(fs) - sum(fct.s for fct in fs)

    violations = []
    sup_ratio = 0.0
    for n in n_grid:
        n = tuple(int(v) for v in np.atleast_1d(n))
        val = float(f(n))
        for fct in factors:
            val *= n_multiplier_value(fct, n[fct.axis])
        vanishes = any(n[j] < thresholds[j] for j in axes)
        if vanishes:
            if val != 0.0:
                violations.append({"n": n, "value": val})
            continue
        envelope = abs(float(f(n)))
        for j in axes:
            envelope *= (2.0 * abs(n[j]) + 1.0) ** exponents[j]
        if envelope > 0:
            sup_ratio = max(sup_ratio, abs(val) / envelope)
    return {
        "violations": violations,
        "empirical_constant": sup_ratio,
        "thresholds": thresholds,
        "exponents": exponents,
    }


# ---------------------------------------------------------------------------
# test-symbol factory
# ---------------------------------------------------------------------------

def _gaussian_derivative(a: float, b: float, order: int):
    """d^order/dt^order exp(-a (t-b)^2), via physicists' Hermite polynomials."""
    hermite_coeffs = [0.0] * order + [1.0]

    def g(t):
        u = np.sqrt(a) * (t - b)
        return ((-np.sqrt(a)) ** order
                * np.polynomial.hermite.hermval(u, hermite_coeffs)
                * np.exp(-a * (t - b) ** 2))

    return g


def random_box_symbol(d1: int, d2: int, rng: np.random.Generator,
                      box: Box | None = None) -> SymbolGridFn:
    """Random compactly supported symbol with analytic xi-derivatives.

    Discrete part: complex coefficients on a small box; xi-part: product of
    per-axis Gaussians exp(-a_k (xi_k - b_k)^2), whose derivatives of any
    order are available in closed form.
    """
    if box is None:
        box = tuple((0, 4) for _ in range(d1))
    shape = tuple(hi - lo + 1 for lo, hi in box)
    coeffs = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    a = rng.uniform(0.4, 1.2, size=d2)
    b = rng.uniform(-0.8, 0.8, size=d2)

    def coeff(n) -> complex:
        idx = tuple(ni - lo for ni, (lo, _) in zip(n, box))
        if any(i < 0 or i >= s for i, s in zip(idx, shape)):
            return 0.0
        return complex(coeffs[idx])

    def fn(n, xi):
        c = coeff(n)
        if c == 0.0:
            return 0.0
        xi = np.asarray(xi, dtype=float)
        prof = np.exp(-np.sum(a * (xi - b) ** 2))
        return c * prof

    def partial(n, xi, order):
        c = coeff(n)
        if c == 0.0:
            return 0.0
        xi = np.asarray(xi, dtype=float)
        out = c
        for k in range(d2):
            out *= _gaussian_derivative(a[k], b[k], int(order[k]))(xi[k])
        return out

    return SymbolGridFn(d1, d2, fn, box, partial)
