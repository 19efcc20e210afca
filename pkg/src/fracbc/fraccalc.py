"""Scalar building blocks: Grünwald weights, power functions, fractional
integrals and the Mittag-Leffler type series H.

All functions here live on the interval [-1, 1].  ``side`` selects the
left-sided (``"+"``) or right-sided (``"-"``) variant; the right-sided
objects are mirror images of the left-sided ones under x -> -x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import gmpy2
import numpy as np
from scipy.special import gammaln

PLUS = "+"
MINUS = "-"


def _check_side(side: str) -> str:
    if side in ("+", "plus", "left"):
        return PLUS
    if side in ("-", "minus", "right"):
        return MINUS
    raise ValueError(f"unknown side {side!r}; expected '+' or '-'")


@dataclass(frozen=True)
class FractionalOrder:
    """Order of the space-fractional operator, restricted to (1, 2]."""

    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not (1.0 < a <= 2.0):
            raise ValueError(f"alpha must lie in (1, 2], got {self.alpha}")
        object.__setattr__(self, "alpha", a)

    def __float__(self):
        return self.alpha


def as_order(alpha) -> float:
    """Validate ``alpha`` and return it as a float."""
    if isinstance(alpha, FractionalOrder):
        return alpha.alpha
    return FractionalOrder(alpha).alpha


# ---------------------------------------------------------------------------
# Grünwald weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GrunwaldTable:
    """Weights G^q_k = (-1)^k binom(q, k) for k = 0..k_max.

    ``coeffs`` is a read-only float64 array.  Entries are produced by the
    forward recursion G_{k+1} = (k - q)/(k + 1) G_k, never from Gamma
    ratios (those have cancelling poles at integer q).
    """

    order: float
    coeffs: np.ndarray = field(repr=False)

    @property
    def k_max(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, k):
        return self.coeffs[k]

    def __len__(self):
        return len(self.coeffs)

    def at(self, k: int) -> float:
        """Weight with the convention G_k = 0 for k < 0."""
        if k < 0:
            return 0.0
        return float(self.coeffs[k])


@lru_cache(maxsize=256)
def _table_cached(q: float, k_max: int) -> np.ndarray:
    g = np.empty(k_max + 1)
    g[0] = 1.0
    c = 1.0
    for k in range(k_max):
        c = c * (k - q) / (k + 1)
        g[k + 1] = c
    g.setflags(write=False)
    return g


def grunwald_table(q: float, k_max: int) -> GrunwaldTable:
    if k_max < 0:
        raise ValueError("k_max must be non-negative")
    q = float(q)
    return GrunwaldTable(q, _table_cached(q, int(k_max)))


def grunwald_weights(q: float, k_max: int) -> np.ndarray:
    """Shorthand for ``grunwald_table(q, k_max).coeffs``."""
    return grunwald_table(q, k_max).coeffs


def grunwald_table_mp(q, k_max: int, bits: int = 160) -> list:
    """Same recursion carried out in gmpy2 at ``bits`` of precision.

    Used where an identity must be checked below double-precision
    resolution (partial sums that cancel down to k^(-q)).
    """
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        qq = gmpy2.mpfr(q)
        out = [gmpy2.mpfr(1)]
        for k in range(k_max):
            out.append(out[-1] * (k - qq) / (k + 1))
    return out


def grunwald_convolve_mp(q: float, Q: float, k: int, bits: int = 160) -> tuple[float, float]:
    """Both sides of the convolution identity evaluated in high precision."""
    if k < 0:
        raise ValueError("k must be non-negative")
    a = grunwald_table_mp(q, k, bits)
    b = grunwald_table_mp(Q, k, bits)
    c = grunwald_table_mp(gmpy2.mpfr(q) + gmpy2.mpfr(Q), k, bits)
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        lhs = gmpy2.fsum(x * y for x, y in zip(a, reversed(b)))
    return float(lhs), float(c[k])


def grunwald_convolve_check(q: float, Q: float, k: int) -> tuple[float, float]:
    """Both sides of sum_{n<=k} G^q_n G^Q_{k-n} = G^{q+Q}_k.

    The left side is summed with ``math.fsum``.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    a = grunwald_weights(q, k)
    b = grunwald_weights(Q, k)
    lhs = math.fsum((a * b[::-1]).tolist())
    rhs = float(grunwald_weights(q + Q, k)[k])
    return lhs, rhs


def grunwald_partial_sum(q: float, k: int) -> float:
    """Compensated sum of G^q_0 .. G^q_k."""
    return math.fsum(grunwald_weights(q, k).tolist())


# ---------------------------------------------------------------------------
# Power functions and fractional integrals
# ---------------------------------------------------------------------------


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < -1.0) or np.any(x > 1.0) or np.any(np.isnan(x)):
        raise ValueError("x must lie in [-1, 1]")
    return x


def power_eval(beta: float, side: str, x):
    """p^±_β(x) = (1 ± x)^β / Γ(β + 1).

    For β < 0 the value at the singular endpoint is returned as ``inf``.
    """
    if beta <= -1:
        raise ValueError("beta must exceed -1")
    side = _check_side(side)
    x = _check_domain(x)
    base = 1.0 + x if side == PLUS else 1.0 - x
    with np.errstate(divide="ignore"):
        if beta == 0:
            val = np.ones_like(base)
        else:
            val = np.power(base, beta) / math.gamma(beta + 1.0)
    if np.ndim(val) == 0:
        return float(val)
    return val


def power_function(beta: float, side: str = PLUS):
    """Return p^±_β as a vectorised callable."""
    return lambda x: power_eval(beta, side, x)


def _product_weights(nodes_left, nodes_right, x, nu):
    """Weights of f_a, f_b on each segment for int_{s_a}^{s_b} (x-s)^(nu-1) f(s) ds.

    ``x`` has shape (P,), segments shape (S,).  Segments entirely to the
    right of x contribute nothing; a segment containing x is clipped.
    """
    sa = nodes_left[None, :]
    sb = nodes_right[None, :]
    xx = x[:, None]
    width = sb - sa
    top = np.minimum(sb, xx)
    active = top > sa
    # u = x - s runs over [a, b]
    a = np.where(active, xx - top, 0.0)
    b = np.where(active, xx - sa, 0.0)
    a_nu = np.power(a, nu)
    b_nu = np.power(b, nu)
    a_nu1 = a_nu * a
    b_nu1 = b_nu * b
    i0 = (b_nu - a_nu) / nu
    i1 = (b_nu1 - a_nu1) / (nu + 1.0)
    # f(s) = f_a (s_b - s)/w + f_b (s - s_a)/w,  s_b - s = u - (x - s_b),  s - s_a = b - u
    c = xx - sb
    wa = (i1 - c * i0) / width
    wb = (b * i0 - i1) / width
    wa = np.where(active, wa, 0.0)
    wb = np.where(active, wb, 0.0)
    return wa, wb


def frac_integral(nu: float, f, side: str = PLUS):
    """Fractional integral I^ν_± of a :class:`~fracbc.grid.GridFunction`.

    Product integration: the power kernel is integrated exactly against
    the piecewise-linear interpolant of ``f`` on every grid.  Returns a
    GridFunction sampled at the same points.
    """
    from .grid import GridFunction

    if not nu > 0:
        raise ValueError("fractional integral needs nu > 0")
    side = _check_side(side)
    if side == MINUS:
        return frac_integral(nu, f.reflect(), PLUS).reflect()

    grid = f.grid
    lam = f.lambdas
    h = grid.h
    xs = ((np.arange(grid.n + 1)[:, None] + lam[None, :]) * h - 1.0)
    left = xs[:, :-1].ravel()
    right = xs[:, 1:].ravel()
    fa = f.values[:, :-1].ravel()
    fb = f.values[:, 1:].ravel()
    x = xs.ravel()
    out = np.empty_like(x)
    for start in range(0, x.size, 512):
        chunk = slice(start, start + 512)
        wa, wb = _product_weights(left, right, x[chunk], nu)
        out[chunk] = wa @ fa + wb @ fb
    out /= math.gamma(nu)
    space = "C0" if f.space == "C0" else "L1"
    return GridFunction(grid, out.reshape(f.values.shape), space=space, check=False)


# ---------------------------------------------------------------------------
# Mittag-Leffler type series
# ---------------------------------------------------------------------------


class SeriesDivergenceError(ArithmeticError):
    """Raised when the H-series tail cannot be bounded."""


@dataclass(frozen=True)
class MittagLefflerH:
    """H_{α,β}(x) = sum_{n>=0} p_{nα+β}(x) on [-1, 1]."""

    alpha: float
    beta: float
    side: str = PLUS

    def __call__(self, x, tol: float = 1e-15):
        return mittag_h(self.alpha, self.beta, self.side, x, tol)


def _mittag_scalar(alpha, beta, base, tol, max_terms):
    if base == 0.0:
        if beta == 0:
            return 1.0
        if beta > 0:
            return 0.0
        return math.inf
    logb = math.log(base)
    total = 0.0
    comp = 0.0
    prev = None
    for n in range(max_terms):
        e = n * alpha + beta
        term = math.exp(e * logb - gammaln(e + 1.0))
        # Kahan summation
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if prev is not None and prev > 0:
            ratio = term / prev
            # once the ratio is below 1/2 the tail is at most one more term
            if ratio <= 0.5 and term <= tol * max(abs(total), 1.0):
                return total
        prev = term
    raise SeriesDivergenceError(
        f"H series did not settle within {max_terms} terms (alpha={alpha}, beta={beta})")


def mittag_h(alpha: float, beta: float, side: str, x, tol: float = 1e-15,
             max_terms: int = 10_000):
    """Evaluate H_{α,β} with ratio-test truncation.

    Summation stops once successive terms shrink by at least a factor 2
    and the current term is below ``tol`` relative to the partial sum,
    which bounds the neglected tail by the same amount.
    """
    if beta <= -1:
        raise ValueError("beta must exceed -1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    side = _check_side(side)
    x = _check_domain(x)
    base = 1.0 + x if side == PLUS else 1.0 - x
    flat = np.atleast_1d(base).ravel()
    out = np.array([_mittag_scalar(alpha, beta, float(b), tol, max_terms) for b in flat])
    if np.ndim(x) == 0:
        return float(out[0])
    return out.reshape(np.shape(x))
