"""Numerical checks: identities, convergence studies and probes.

Every check returns a :class:`CheckResult` (or a report object that can
produce one) carrying the measured quantity, the threshold it was held
to and a pass flag, so the CLI can emit them as JSON.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import gmpy2
import numpy as np
from scipy.integrate import quad

from .fraccalc import (as_order, grunwald_convolve_mp, grunwald_table_mp,
                       grunwald_weights, mittag_h, power_eval)
from .generators import (SUPPORTED_PAIRS, BoundaryPair, interpolation_matrices,
                         rate_matrix, transition_operator)
from .grid import C0, L1, Grid, GridFunction, project, sample, sample_lambdas
from .semigroup import (BACKWARD, FORWARD, EvolutionProblem, evolve, make_initial,
                        sample_weights, semigroup_apply, stopped_resolvent_check)


@dataclass
class CheckResult:
    check: str
    params: dict
    measured: float
    threshold: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"check": self.check, "params": self.params, "measured": _jsonable(self.measured),
             "threshold": self.threshold, "pass": bool(self.passed)}
        if self.details:
            d["details"] = _jsonable(self.details)
        return d


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# Grünwald identities
# ---------------------------------------------------------------------------


def _rel(a, b) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def grunwald_identity_suite(alphas=(1.1, 1.5, 1.9, 2.0), k_max: int = 10_000,
                            tol: float = 1e-10, seed: int = 0) -> list[CheckResult]:
    """Recursion, first two weights, partial sums and convolutions.

    Partial sums cancel down to ~k^{-α}, far below what double precision
    can resolve after 10^4 additions, so the sum and convolution
    identities are checked on 160-bit tables; the double tables are in
    turn checked entrywise against the same high-precision values.
    """
    out = []
    for a in alphas:
        g = grunwald_weights(a, k_max)
        k = np.arange(k_max)
        lhs = g[1:] * (k + 1)
        rhs = (k - a) * g[:-1]
        scale = np.maximum(np.abs(lhs), np.abs(rhs))
        rec = float(np.max(np.where(scale > 0, np.abs(lhs - rhs) / np.where(scale > 0, scale, 1), 0)))
        out.append(CheckResult("grunwald_recursion", {"alpha": a, "k_max": k_max}, rec, tol, rec <= tol))
        first = max(abs(g[0] - 1.0), _rel(g[1], -a))
        out.append(CheckResult("grunwald_first_weights", {"alpha": a}, first, tol, first <= tol))

        mp_a = grunwald_table_mp(a, k_max)
        mp_b = grunwald_table_mp(a - 1.0, k_max)
        with gmpy2.context(gmpy2.get_context(), precision=160):
            worst = gmpy2.mpfr(0)
            total = gmpy2.mpfr(0)
            for kk in range(k_max + 1):
                total += mp_a[kk]
                if mp_b[kk] != 0:
                    worst = max(worst, abs(total - mp_b[kk]) / abs(mp_b[kk]))
                else:
                    worst = max(worst, abs(total))
        tel = float(worst)
        fl = max(_rel(float(g[kk]), float(mp_a[kk])) for kk in range(k_max + 1))
        out.append(CheckResult("grunwald_partial_sum", {"alpha": a, "k_max": k_max}, tel, tol,
                               tel <= tol))
        out.append(CheckResult("grunwald_table_accuracy", {"alpha": a, "k_max": k_max}, fl, tol,
                               fl <= tol))

    rng = np.random.default_rng(seed)
    worst, worst_params = 0.0, {}
    for _ in range(8):
        q, qq = rng.uniform(-1.5, 2.0, size=2)
        k = int(rng.integers(0, k_max + 1))
        lhs, rhs = grunwald_convolve_mp(float(q), float(qq), k)
        err = _rel(lhs, rhs)
        if err >= worst:
            worst, worst_params = err, {"q": float(q), "Q": float(qq), "k": k}
    out.append(CheckResult("grunwald_convolution", {"triples": 8, "worst": worst_params},
                           worst, tol, worst <= tol))
    return out


def _power_extended(beta, y):
    """p_β(y) on [-1, ∞), zero to the left of -1."""
    base = np.maximum(1.0 + np.asarray(y, dtype=float), 0.0)
    with np.errstate(divide="ignore"):
        return np.where(base > 0, np.power(base, beta), 0.0) / math.gamma(beta + 1.0)


@dataclass
class OrderReport:
    n_sequence: list
    errors: list
    orders: list

    @property
    def estimated_order(self) -> float:
        return float(np.mean(self.orders)) if self.orders else float("nan")


def _orders(hs, errors):
    return [math.log(errors[i] / errors[i + 1]) / math.log(hs[i] / hs[i + 1])
            if errors[i] > 0 and errors[i + 1] > 0 else float("nan")
            for i in range(len(errors) - 1)]


def grunwald_convergence_check(alpha, beta: float, q: int, n_sequence, mode: str = "sup",
                               points: int = 2000) -> OrderReport:
    """Error of the shifted Grünwald formula on p_β against p_{β-α}.

    A^α_{h,q} p_β(x) = h^{-α} Σ_k 𝒢^α_k p_β(x - (k - q) h), with p_β
    extended by zero below -1.  ``mode`` is "sup" (β > α) or "L1"
    (β > α - 1); L1 errors use midpoints of a fixed uniform partition.
    """
    a = as_order(alpha)
    if mode == "sup" and not beta > a:
        raise ValueError("sup mode needs beta > alpha")
    if mode == "L1" and not beta > a - 1:
        raise ValueError("L1 mode needs beta > alpha - 1")
    if mode == "sup":
        x = np.linspace(-1.0, 1.0, points + 1)
    else:
        x = -1.0 + (np.arange(points) + 0.5) * (2.0 / points)
    exact = _power_extended(beta - a, x)
    errors, hs = [], []
    for n in n_sequence:
        h = 2.0 / (n + 1)
        kmax = int(math.ceil(2.0 / h)) + q + 2
        g = grunwald_weights(a, kmax)
        approx = np.zeros_like(x)
        for k in range(kmax + 1):
            approx += g[k] * _power_extended(beta, x - (k - q) * h)
        approx /= h ** a
        diff = np.abs(approx - exact)
        err = float(diff.max()) if mode == "sup" else float(diff.mean() * 2.0)
        errors.append(err)
        hs.append(h)
    return OrderReport(list(n_sequence), errors, _orders(hs, errors))


# ---------------------------------------------------------------------------
# Approximate power functions
# ---------------------------------------------------------------------------

BETA_TAGS = ("alpha", "alpha-1", "0", "alpha-2")

# (space, β) -> {pair: value of G ϑ on grids ι < n}
THETA_PROBES = {
    (L1, "alpha-1"): {"DD": 0.0, "DN": 0.0},
    (L1, "0"): {"ND": 0.0, "NN": 0.0},
    (L1, "alpha-2"): {"N*D": 0.0, "N*N": 0.0},
    (L1, "alpha"): {"NN": 1.0},
    (C0, "alpha-1"): {"DD": 0.0, "ND": 0.0, "N*D": 0.0},
    (C0, "0"): {"DN": 0.0, "NN": 0.0, "N*N": 0.0},
    (C0, "alpha"): {"DN": 1.0, "NN": 1.0, "N*N": 1.0},
}


def beta_value(alpha: float, tag: str) -> float:
    return {"alpha": alpha, "alpha-1": alpha - 1.0, "0": 0.0, "alpha-2": alpha - 2.0}[tag]


def _beta_tag(alpha: float, beta) -> str:
    if isinstance(beta, str):
        if beta not in BETA_TAGS:
            raise ValueError(f"beta tag must be one of {BETA_TAGS}")
        return beta
    for tag in BETA_TAGS:
        if abs(beta_value(alpha, tag) - float(beta)) < 1e-12:
            return tag
    raise ValueError(f"beta={beta} is not one of alpha, alpha-1, 0, alpha-2")


def theta_values(alpha, beta, space: str, n: int, lambdas) -> np.ndarray:
    """ϑ_h^β on every grid at the given λ's (before any reflection); shape (n+1, M).

    Grids ι ≥ 2 use h^β((1-θ)𝒢^{-β-1}_{ι-2-τ} + θ𝒢^{-β-1}_{ι-1-τ}); the
    first grid and the choice of θ, τ depend on (β, space).
    """
    a = as_order(alpha)
    tag = _beta_tag(a, beta)
    if space not in (L1, C0):
        raise ValueError("space must be 'L1' or 'C0'")
    if tag == "alpha-2" and space == C0:
        raise ValueError("ϑ^{α-2} is only defined on L1")
    b = beta_value(a, tag)
    h = 2.0 / (n + 1)
    lam = np.asarray(lambdas, dtype=float)
    lp = 1.0 - lam
    g = grunwald_weights(-b - 1.0, n + 2)

    if tag == "alpha":
        theta, tau = (np.ones_like(lam) if space == L1 else lam), 1
        first = -h ** a * lp * g[0]
    elif tag == "alpha-1":
        theta, tau = lam, 0
        if space == L1:
            first = h ** (a - 1.0) / a * (lp * g[0] + lam * g[1])
        else:
            first = h ** (a - 1.0) * lam * g[0]
    elif tag == "0":
        theta, tau = np.ones_like(lam), 0
        first = lam * g[0] if space == L1 else np.full_like(lam, g[0])
    else:
        theta, tau = lam / ((a - 1.0) * lp + lam), 0
        first = h ** (a - 2.0) * theta * g[0]

    j = np.arange(1, n + 2)[:, None]

    def gk(k):
        return np.where(k >= 0, g[np.clip(k, 0, None)], 0.0)

    vals = h ** b * ((1.0 - theta) * gk(j - 2 - tau) + theta * gk(j - 1 - tau))
    vals[0] = first
    return vals


@dataclass(frozen=True)
class ApproxPowerFunction:
    """ϑ^β_{±h}: '+' (unreflected) on L1, '-' (reflected) on C0."""

    alpha: float
    beta: str
    space: str
    n: int

    def grid_function(self, samples: int = 16) -> GridFunction:
        vals = theta_values(self.alpha, self.beta, self.space, self.n, sample_lambdas(samples))
        f = GridFunction(Grid(self.n), vals, space=L1, check=False)
        if self.space == C0:
            return GridFunction(f.grid, f.reflect().values, space=C0, check=False)
        return f

    def norm_error(self, gauss_points: int = 24) -> float:
        """‖ϑ^β_{±h} - p^±_β‖ in the space norm.

        Reflection is an isometry, so both cases compare the unreflected
        ϑ_h^β with p^+_β.  L1 errors integrate each grid with
        Gauss-Legendre (adaptive quadrature on the first grid, where
        p_{α-2} is singular); sup errors use 513 samples per grid.
        """
        a = self.alpha
        b = beta_value(a, self.beta)
        n = self.n
        h = 2.0 / (n + 1)
        gamma = math.gamma(b + 1.0)
        if self.space == C0:
            lam = np.linspace(0.0, 1.0, 513)
            th = theta_values(a, self.beta, C0, n, lam)
            x = (np.arange(n + 1)[:, None] + lam[None, :]) * h
            p = np.power(x, b) / gamma if b != 0 else np.ones_like(x)
            return float(np.max(np.abs(th - p)))
        nodes, weights = np.polynomial.legendre.leggauss(gauss_points)
        lam = 0.5 * (nodes + 1.0)
        w = 0.5 * weights
        th = theta_values(a, self.beta, L1, n, lam)
        x = (np.arange(n + 1)[:, None] + lam[None, :]) * h
        p = np.power(x, b) / gamma
        total = h * float(np.sum(np.abs(th[1:] - p[1:]) @ w))

        def first(lmb):
            t = theta_values(a, self.beta, L1, n, np.array([lmb]))[0, 0]
            return abs(t - (lmb * h) ** b / gamma)

        val, _ = quad(first, 0.0, 1.0, limit=200)
        return total + h * val


@dataclass
class ThetaProbeReport:
    alpha: float
    bc: str
    beta: str
    space: str
    n: int
    expected: float
    interior_residual: float
    lemma_residual: float
    boundary_values: list
    threshold: float

    @property
    def passed(self) -> bool:
        return self.interior_residual <= self.threshold

    def result(self) -> CheckResult:
        return CheckResult("theta_probe", {"alpha": self.alpha, "bc": self.bc, "beta": self.beta,
                                           "space": self.space, "n": self.n},
                           self.interior_residual, self.threshold, self.passed,
                           {"expected": self.expected, "lemma_region": self.lemma_residual,
                            "boundary_grids": self.boundary_values})


def theta_probe(alpha, bc, beta, n: int, space: str | None = None, samples: int = 16,
                threshold: float = 1e-10) -> ThetaProbeReport:
    """Apply G_{±h} to ϑ^β_{±h} and measure the deviation from 0 or 1.

    Forward (L1) uses G_{+h}, backward (C0) uses G_{-h}.  Rows are indexed
    by ι(x) on L1 and by ι(-x) on C0.  The threshold applies to grids
    3..n-1; grids 1..n-1 are reported as the lemma region and the two
    last grids as boundary values.
    """
    a = as_order(alpha)
    pair = BoundaryPair.parse(bc).name
    tag = _beta_tag(a, beta)
    spaces = [space] if space else [L1, C0]
    for sp in spaces:
        table = THETA_PROBES.get((sp, tag), {})
        if pair in table:
            space = sp
            expected = table[pair]
            break
    else:
        raise ValueError(f"unsupported theta probe: beta={tag}, bc={pair}, space={space}")
    f = ApproxPowerFunction(a, tag, space, n).grid_function(samples)
    op = transition_operator(a, pair, n)
    out = op.forward(f) if space == L1 else op.backward(f)
    vals = out.values if space == L1 else out.values[::-1, ::-1]
    dev = np.abs(vals - expected)
    return ThetaProbeReport(
        alpha=a, bc=pair, beta=tag, space=space, n=n, expected=expected,
        interior_residual=float(dev[2 : n - 1].max()),
        lemma_residual=float(dev[: n - 1].max()),
        boundary_values=[float(np.abs(vals[n - 1]).max()), float(np.abs(vals[n]).max())],
        threshold=threshold,
    )


def theta_convergence(alpha, beta, space: str, n_sequence=(32, 64, 128, 256)) -> list[float]:
    return [ApproxPowerFunction(as_order(alpha), _beta_tag(as_order(alpha), beta), space, n)
            .norm_error() for n in n_sequence]


def non_increasing(values, rtol: float = 1e-12) -> bool:
    return all(b <= a * (1 + rtol) + 1e-300 for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# Range identity
# ---------------------------------------------------------------------------


def _range_constants(alpha: float, pair: str, coeffs, space: str):
    """(r, s, η) from the table of Mittag-Leffler constants."""
    a = alpha
    side = "+" if space == L1 else "-"
    end = 1.0 if space == L1 else -1.0

    def hsum(shift):
        return sum(k * mittag_h(a, shift(m), side, end) for m, k in enumerate(coeffs))

    def hv(b):
        return mittag_h(a, b, side, end)

    if space == L1:
        eta = a - 2.0 if pair.startswith("N*") else 0.0
        key = {"DD": "DD", "DN": "DN", "ND": "ND", "NN": "NN", "N*D": "ND", "N*N": "NN"}[pair]
    else:
        eta = 0.0
        key = pair
    if key == "DD":
        return hsum(lambda m: a + m) / hv(a - 1.0), 0.0, eta
    if (space == L1 and key == "DN") or (space == C0 and key == "ND"):
        return hsum(lambda m: m + 1.0) / hv(0.0), 0.0, eta
    if space == C0 and key == "N*D":
        return hsum(lambda m: a + m - 1.0) / hv(a - 2.0), 0.0, eta
    if (space == L1 and key == "ND") or (space == C0 and key == "DN"):
        return 0.0, hsum(lambda m: a + m) / hv(eta), eta
    if key == "NN":
        return 0.0, hsum(lambda m: m + 1.0) / hv(eta + 1.0), eta
    if space == C0 and key == "N*N":
        return 0.0, hsum(lambda m: a + m - 1.0) / hv(a - 1.0), eta
    raise ValueError(f"no range constants for {pair} on {space}")


def range_phi(alpha, bc, coeffs, x, space: str = L1):
    """φ = -Σ k_m H_{α,α+m} + r H_{α,α-1} + s H_{α,η} at points x."""
    a = as_order(alpha)
    pair = BoundaryPair.parse(bc).name
    r, s, eta = _range_constants(a, pair, coeffs, space)
    side = "+" if space == L1 else "-"
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for m, k in enumerate(coeffs):
        if k:
            out -= k * mittag_h(a, a + m, side, x)
    if r:
        out += r * mittag_h(a, a - 1.0, side, x)
    if s:
        out += s * mittag_h(a, eta, side, x)
    return out


@dataclass
class RangeReport:
    alpha: float
    bc: str
    space: str
    n: int
    r: float
    s: float
    residual: float
    residual_full: float


def range_identity_check(alpha, bc, coeffs=(1.0,), n: int = 64, space: str = L1,
                         samples: int = 16) -> RangeReport:
    """Residual of (I - G_{±h}) φ_h against P = Σ k_m p_m.

    φ_h is φ with its singular power terms replaced by approximate power
    functions: r p_{α-1} -> r ϑ^{α-1} and s p_η -> s ϑ^η (on C0 also
    s p_α -> s ϑ^α); the smooth remainders are sampled directly.  The
    residual is taken in the space norm over grids with ι(±x) < n; the
    full-domain value is reported alongside.
    """
    a = as_order(alpha)
    pair = BoundaryPair.parse(bc).name
    coeffs = [float(c) for c in coeffs]
    r, s, eta = _range_constants(a, pair, coeffs, space)
    side = "+" if space == L1 else "-"
    grid = Grid(n)
    lam = sample_lambdas(samples)
    # work in reflected coordinates for C0 so that ϑ_h needs no reflection
    y = grid.points(lam)
    vals = np.zeros_like(y)
    for m, k in enumerate(coeffs):
        if k:
            vals -= k * mittag_h(a, a + m, "+", y)
    if r:
        vals += r * (mittag_h(a, 2 * a - 1.0, "+", y) + theta_values(a, "alpha-1", space, n, lam))
    if s:
        tag = "0" if eta == 0 else "alpha-2"
        if space == C0:
            # every C0 pair with an s term has the reflected Neumann row,
            # where p_α must also be replaced for an O(1) boundary residual to vanish
            vals += s * (mittag_h(a, 2 * a, "+", y) + theta_values(a, tag, space, n, lam)
                         + theta_values(a, "alpha", space, n, lam))
        else:
            vals += s * (mittag_h(a, a + eta, "+", y) + theta_values(a, tag, space, n, lam))
    poly = np.zeros_like(y)
    for m, k in enumerate(coeffs):
        poly += k * power_eval(float(m), "+", y)
    op = transition_operator(a, pair, n)
    if space == L1:
        f = GridFunction(grid, vals, space=L1, check=False)
        resid = (f.values - op.forward(f).values - poly)
        norm_rows = np.abs(resid) @ (sample_weights(samples) * grid.h)
        inner = float(norm_rows[: n - 1].sum())
        full = float(norm_rows.sum())
    else:
        f = GridFunction(grid, vals[::-1, ::-1], space=C0, check=False)
        resid = (f.values - op.backward(f).values - poly[::-1, ::-1])[::-1, ::-1]
        inner = float(np.abs(resid[: n - 1]).max())
        full = float(np.abs(resid).max())
    return RangeReport(a, pair, space, n, float(r), float(s), inner, full)


def range_identity_alpha2(points: int = 401) -> float:
    """Max difference between φ (DD, P = p_0, α = 2) and 1 - cosh(x)/cosh(1)."""
    x = np.linspace(-1.0, 1.0, points)
    phi = range_phi(2.0, "DD", [1.0], x, L1)
    return float(np.max(np.abs(phi - (1.0 - np.cosh(x) / np.cosh(1.0)))))


# ---------------------------------------------------------------------------
# Adjointness
# ---------------------------------------------------------------------------


def _random_mixture(rng, dirichlet_left: bool, dirichlet_right: bool):
    c = rng.normal(size=4)
    k = rng.integers(1, 5, size=2)

    def f(x):
        v = c[0] + c[1] * x + c[2] * np.sin(k[0] * np.pi * x) + c[3] * np.cos(k[1] * x)
        if dirichlet_left:
            v = v * (1.0 + x)
        if dirichlet_right:
            v = v * (1.0 - x)
        return v

    return f


def adjointness_check(alpha, bc, n: int = 32, trials: int = 4, seed: int = 0,
                      samples: int = 16) -> float:
    """max |<G_{-h} f, g> - <f, G_{+h} g>| over random f, g, relative to norms."""
    a = as_order(alpha)
    pair = BoundaryPair.parse(bc)
    op = transition_operator(a, pair.name, n)
    rng = np.random.default_rng(seed)
    grid = Grid(n)
    worst = 0.0
    for _ in range(trials):
        f = sample(grid, _random_mixture(rng, pair.left == "D", pair.right == "D"), samples, C0)
        g = sample(grid, _random_mixture(rng, False, False), samples, L1, check=False)
        gf = op.backward(f)
        gg = op.forward(g)
        lhs = gf.inner(g)
        rhs = f.inner(gg)
        scale = gf.sup_norm() * g.l1_norm() + f.sup_norm() * gg.l1_norm()
        if scale > 0:
            worst = max(worst, abs(lhs - rhs) / scale)
    return worst


# ---------------------------------------------------------------------------
# Convergence studies
# ---------------------------------------------------------------------------


SMOOTH_INITIAL = "bump"


def smooth_initial(x):
    """15/16 (1 - x²)²: a probability density vanishing with its slope at ±1."""
    x = np.asarray(x, dtype=float)
    return 15.0 / 16.0 * (1.0 - x * x) ** 2


@dataclass
class ConvergenceStudy:
    """Mesh refinement of one pair at one probe time.

    Errors are differences between consecutive levels, evaluated at
    common points of [-1, 1] (sup norm backward, L1 norm forward), or
    distances to ``oracle`` when one is given.
    """

    pair: str
    alpha: float
    direction: str
    n_sequence: tuple = (32, 64, 128, 256)
    t_probe: float = 0.5
    initial: str = SMOOTH_INITIAL
    errors: list = field(default_factory=list)
    orders: list = field(default_factory=list)
    estimated_order: float = float("nan")
    monotone: bool = True
    oracle: object = None

    def __post_init__(self):
        self.pair = BoundaryPair.parse(self.pair).name
        self.alpha = as_order(self.alpha)
        seq = list(self.n_sequence)
        if any(b <= a for a, b in zip(seq, seq[1:])):
            raise ValueError("n_sequence must be strictly increasing")


def _initial_function(tag):
    if tag == SMOOTH_INITIAL:
        return smooth_initial
    if callable(tag):
        return tag
    raise ValueError(f"unknown initial tag {tag!r}")


def self_convergence(study: ConvergenceStudy, points: int = 2001, workers: int = 4) -> float:
    """Fill in errors and orders; return the mean observed order.

    Levels are solved in a thread pool and merged by level index, so the
    result does not depend on completion order.  At t_probe = 0 the
    semigroup is the identity and every error is zero by definition.
    """
    if len(study.n_sequence) < 3 and study.oracle is None:
        raise ValueError("self-convergence needs at least three levels")
    levels = list(study.n_sequence)
    hs = [2.0 / (n + 1) for n in levels]
    if study.t_probe == 0:
        study.errors = [0.0] * (len(levels) - (study.oracle is None))
        study.orders = [float("nan")] * (len(study.errors) - 1)
        study.monotone = True
        study.estimated_order = float("nan")
        return study.estimated_order
    x = np.linspace(-1.0, 1.0, points)
    f0 = _initial_function(study.initial)
    space = L1 if study.direction == FORWARD else C0

    def level(n):
        f = sample(Grid(n), f0, space=space, check=False)
        return semigroup_apply(study.alpha, study.pair, n, f, study.t_probe, study.direction)(x)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        sols = list(pool.map(level, levels))

    def norm(d):
        d = np.abs(d)
        if study.direction == FORWARD:
            return float(np.trapezoid(d, x)) if hasattr(np, "trapezoid") else float(np.trapz(d, x))
        return float(d.max())

    if study.oracle is not None:
        ref = study.oracle(x, study.t_probe)
        errors = [norm(s - ref) for s in sols]
        ratios_h = hs
    else:
        errors = [norm(sols[i] - sols[i + 1]) for i in range(len(sols) - 1)]
        ratios_h = hs[:-1]
    study.errors = errors
    study.orders = _orders(ratios_h, errors)
    study.monotone = non_increasing(errors)
    finite = [o for o in study.orders if math.isfinite(o)]
    study.estimated_order = float(np.mean(finite)) if finite else float("nan")
    return study.estimated_order


def sine_series_heat(f, terms: int = 400, quad_points: int = 800):
    """Oracle for u_t = u_xx on [-1, 1] with u(±1) = 0 and u(0) = f.

    Returns a callable u(x, t) built from the sine expansion in
    sin(kπ(x+1)/2); coefficients by Gauss-Legendre quadrature.
    """
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    k = np.arange(1, terms + 1)
    basis = np.sin(np.outer(k, nodes + 1.0) * np.pi / 2.0)
    coef = basis @ (weights * f(nodes))

    def u(x, t):
        x = np.asarray(x, dtype=float)
        decay = np.exp(-(k * np.pi / 2.0) ** 2 * t) * coef
        return decay @ np.sin(np.outer(k, x + 1.0) * np.pi / 2.0)

    return u


def heat_oracle_check(n: int = 128, t: float = 0.5, f=smooth_initial, points: int = 2001):
    """Sup error of the α = 2 DD forward solution against the sine series."""
    grid = Grid(n)
    u0 = sample(grid, f, space=L1, check=False)
    u = semigroup_apply(2.0, "DD", n, u0, t, FORWARD)
    x = np.linspace(-1.0, 1.0, points)
    ref = sine_series_heat(f)(x, t)
    return float(np.max(np.abs(u(x) - ref))), 5.0 * grid.h


# ---------------------------------------------------------------------------
# Monte Carlo against the forward equation
# ---------------------------------------------------------------------------


@dataclass
class CompareReport:
    alpha: float
    bc: str
    n: int
    t: float
    n_paths: int
    x: np.ndarray
    pde_mass: np.ndarray
    mc_mass: np.ndarray
    z: np.ndarray
    pde_killed: float
    mc_killed: float
    killed_z: float

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))

    def passed(self, z_bin: float = 4.0, z_killed: float = 3.0) -> bool:
        return self.max_abs_z <= z_bin and abs(self.killed_z) <= z_killed

    def to_csv(self, path) -> None:
        import csv

        h = 2.0 / (self.n + 1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "pde_density", "mc_density", "stderr", "z"])
            se = np.sqrt(self.pde_mass * (1 - self.pde_mass) / self.n_paths)
            for x, p, m, s, z in zip(self.x, self.pde_mass, self.mc_mass, se, self.z):
                w.writerow([repr(float(x)), repr(float(p / h)), repr(float(m / h)),
                            repr(float(s / h)), repr(float(z))])


def _z(observed, expected, n):
    se = np.sqrt(np.clip(expected * (1.0 - expected), 0.0, None) / n)
    diff = observed - expected
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff == 0, 0.0, np.inf))
    return z


def compare_mc_pde(alpha, bc, n: int, t: float, n_paths: int, seed: int,
                   x0: float = 0.0, samples: int = 16) -> CompareReport:
    """Grid masses of the forward solution against simulated paths.

    Both sides start from unit mass on grid ι(x0).  Standard errors come
    from the PDE probabilities, sqrt(p(1-p)/N).
    """
    from .stochastic import empirical_density, simulate_feller

    a = as_order(alpha)
    pair = BoundaryPair.parse(bc).name
    f = make_initial(f"delta@{x0}", n, FORWARD, samples)
    u = semigroup_apply(a, pair, n, f, t, FORWARD)
    pde = (u.values @ sample_weights(samples)) * u.grid.h
    pde = np.clip(pde, 0.0, 1.0)
    pde_killed = max(0.0, 1.0 - float(pde.sum()))
    ens = simulate_feller((a, pair, n), x0, [t], n_paths, seed, samples=samples)
    hist = empirical_density(ens, t)
    z = _z(hist.mass, pde, n_paths)
    kz = float(_z(np.array([hist.killed]), np.array([pde_killed]), n_paths)[0])
    return CompareReport(a, pair, n, t, n_paths, u.grid.midpoints(), pde, hist.mass, z,
                         pde_killed, hist.killed, kz)


def empirical_generator_check(alpha, bc, n: int = 5, horizon: float = 2.0,
                              n_paths: int = 250_000, seed: int = 0,
                              min_jumps: int = 1_000_000):
    """Largest |z| between counted-jump rate estimates and the rate matrix.

    Paths start spread evenly over the states; batches with independent
    seeds are added until at least ``min_jumps`` transitions have been
    counted.  The standard error of a rate estimate N_ij / T_i is
    sqrt(g_ij / T_i).  Entries with zero rate must show zero jumps.
    Returns (max |z|, jumps on zero-rate entries, total jumps).
    """
    from .stochastic import JumpKernel, run_chain

    rm = rate_matrix(alpha, bc, n)
    kernel = JumpKernel(rm.dense)
    init = np.arange(n_paths) % n
    counts = np.zeros((n, n + 1))
    occ = np.zeros(n)
    seeds = np.random.SeedSequence(seed)
    while counts.sum() < min_jumps:
        child = int(seeds.spawn(1)[0].generate_state(1)[0])
        ens = run_chain(kernel, init, [horizon], child, count=True)
        counts += ens.jump_counts
        occ += ens.occupation
    est = counts / occ[:, None]
    g = rm.dense
    truth = np.zeros((n, n + 1))
    truth[:, :n] = np.where(np.eye(n, dtype=bool), 0.0, g)
    truth[:, n] = np.maximum(-g.sum(axis=1), 0.0)
    truth[np.abs(truth) < 1e-12 * rm.scale] = 0.0
    se = np.sqrt(truth / occ[:, None])
    z = np.where(truth > 0, (est - truth) / np.where(se > 0, se, 1.0), 0.0)
    stray = float(counts[truth == 0].sum())
    return float(np.max(np.abs(z))), stray, float(counts.sum())


# ---------------------------------------------------------------------------
# Suites used by the CLI
# ---------------------------------------------------------------------------


def rate_matrix_structure(alpha, pairs=SUPPORTED_PAIRS, ns=(4, 8, 16, 32), n_lambda: int = 101):
    out = []
    lam = np.linspace(0.0, 1.0, n_lambda)
    for pair in pairs:
        worst_off, worst_sum, worst_cons = 0.0, -np.inf, 0.0
        for n in ns:
            h = 2.0 / (n + 1)
            scale = h ** as_order(alpha)
            m = interpolation_matrices(alpha, pair, n, lam)
            idx = np.arange(n + 1)
            sums = m.sum(axis=2) * scale
            m[:, idx, idx] = 0.0
            worst_off = min(worst_off, float(m.min() * scale))
            worst_sum = max(worst_sum, float(sums.max()))
            worst_cons = max(worst_cons, float(np.abs(sums).max()))
        ok = worst_off >= -1e-12 and worst_sum <= 1e-12
        measured = max(-worst_off, worst_sum)
        if BoundaryPair.parse(pair).conservative:
            ok = ok and worst_cons <= 1e-12
            measured = max(measured, worst_cons)
        out.append(CheckResult("rate_matrix_structure", {"alpha": alpha, "bc": pair, "n": list(ns)},
                               measured, 1e-12, ok))
    return out


def semigroup_suite(alpha, n: int = 32, pairs=SUPPORTED_PAIRS, t: float = 0.5, s: float = 0.3):
    out = []
    grid = Grid(n)
    for pair in pairs:
        bp = BoundaryPair.parse(pair)
        fb = sample(grid, _random_mixture(np.random.default_rng(1), bp.left == "D",
                                          bp.right == "D"), space=C0)
        fb = fb.with_values(np.abs(fb.values))
        ff = sample(grid, smooth_initial, space=L1, check=False)
        sol_b = evolve(EvolutionProblem(BACKWARD, alpha, pair, n, fb, (0.0, s, t, t + s)))
        sol_f = evolve(EvolutionProblem(FORWARD, alpha, pair, n, ff, (0.0, s, t, t + s)))
        pos = min(min(st.values.min() for st in sol_b.states),
                  min(st.values.min() for st in sol_f.states))
        out.append(CheckResult("positivity", {"alpha": alpha, "bc": pair, "n": n}, pos, -1e-10,
                               pos >= -1e-10))
        growth = max(max(np.diff(sol_b.sup_norms)), max(np.diff(sol_f.l1_norms)))
        out.append(CheckResult("contraction", {"alpha": alpha, "bc": pair, "n": n}, growth, 1e-10,
                               growth <= 1e-10))
        st = semigroup_apply(alpha, pair, n, sol_b.at(t), s, BACKWARD)
        comp = float(np.abs(st.values - sol_b.at(t + s).values).max())
        out.append(CheckResult("semigroup_composition", {"alpha": alpha, "bc": pair, "n": n},
                               comp, 1e-8, comp <= 1e-8))
        lhs = sol_b.at(t).inner(ff)
        rhs = fb.inner(sol_f.at(t))
        dual = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
        out.append(CheckResult("duality", {"alpha": alpha, "bc": pair, "n": n, "t": t},
                               dual, 1e-8, dual <= 1e-8))
        if bp.conservative:
            sol = evolve(EvolutionProblem(FORWARD, alpha, pair, n, ff, (0.0, 1.0, 2.5, 5.0)))
            drift = float(np.max(np.abs(np.array(sol.mass) - sol.mass[0])))
            out.append(CheckResult("mass_conservation", {"alpha": alpha, "bc": pair, "n": n},
                                   drift, 1e-10, drift <= 1e-10))
    return out


def run_suite(name: str, alpha: float) -> list[CheckResult]:
    """Named groups of checks sized for interactive use."""
    a = as_order(alpha)
    suites = {
        "grunwald": lambda: grunwald_identity_suite((a,), k_max=2000),
        "matrix": lambda: rate_matrix_structure(a),
        "resolvent": lambda: [
            CheckResult("stopped_resolvent", {"alpha": a, "lambda": lam}, rep.max_error, 1e-8,
                        rep.max_error <= 1e-8)
            for lam in (0.1, 1.0)
            for rep in [stopped_resolvent_check(a, lam, 1000)]],
        "semigroup": lambda: semigroup_suite(a, n=16),
        "adjoint": lambda: [
            CheckResult("adjointness", {"alpha": a, "bc": p, "n": 32}, d, 1e-10, d <= 1e-10)
            for p in SUPPORTED_PAIRS for d in [adjointness_check(a, p, 32)]],
        "theta": lambda: [
            theta_probe(a, pair, beta, 32, space).result()
            for (space, beta), table in THETA_PROBES.items() for pair in table],
        "range": lambda: _range_suite(a),
    }
    if name == "all":
        out = []
        for key in suites:
            out.extend(suites[key]())
        return out
    if name not in suites:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(suites)} or all")
    return suites[name]()


RANGE_COEFFS = {L1: (1.0,), C0: (0.0, 1.0, -1.0)}


def range_refinement(alpha, bc, space: str = L1, n_sequence=(16, 32, 64, 128),
                     coeffs=None) -> CheckResult:
    """Residuals over a doubling sequence; pass when at least two of three
    consecutive steps decrease and the last level beats the first.

    The default P on C0 is p_1 - p_2, which vanishes at both ends so that
    it lies in every backward domain.
    """
    coeffs = RANGE_COEFFS[space] if coeffs is None else coeffs
    res = [range_identity_check(alpha, bc, coeffs, n, space).residual for n in n_sequence]
    drops = sum(b < a for a, b in zip(res, res[1:]))
    need = max(1, len(res) - 2)
    ok = drops >= need and res[-1] < res[0]
    return CheckResult("range_identity", {"alpha": float(alpha), "bc": BoundaryPair.parse(bc).name,
                                          "space": space, "n": list(n_sequence)},
                       res[-1], res[0], ok, {"residuals": res, "decreasing_steps": drops})


def _range_suite(alpha: float) -> list[CheckResult]:
    out = [range_refinement(alpha, pair, space, (16, 32, 64))
           for space in (L1, C0) for pair in SUPPORTED_PAIRS]
    err = range_identity_alpha2()
    out.append(CheckResult("range_identity_alpha2", {"bc": "DD"}, err, 1e-6, err <= 1e-6))
    return out
