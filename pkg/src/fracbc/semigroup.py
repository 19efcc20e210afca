"""Time evolution, resolvents and steady states.

The operator acts independently at every λ sample, so e^{tG} is a
family of (n+1) x (n+1) matrix exponentials, one per sample.  Backward
problems use G_{n+1}(λ), forward problems its transpose.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, lu_factor, lu_solve
from scipy.optimize import brentq
from scipy.sparse.linalg import expm_multiply

from .fraccalc import as_order, grunwald_weights
from .generators import BoundaryPair, TransitionOperator, transition_operator
from .grid import C0, DEFAULT_SAMPLES, L1, Grid, GridFunction, project, sample_lambdas

FORWARD = "forward"
BACKWARD = "backward"
DENSE_EXPM_LIMIT = 256


class StepFailureError(RuntimeError):
    """The matrix-exponential defect check failed."""


class SingularSystemError(RuntimeError):
    """A resolvent system could not be solved to tolerance."""


def _direction(direction: str) -> str:
    if direction not in (FORWARD, BACKWARD):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    return direction


def _operator(alpha, bc, n) -> TransitionOperator:
    return transition_operator(as_order(alpha), BoundaryPair.parse(bc).name, int(n))


def generator_stack(op: TransitionOperator, direction: str, samples: int) -> np.ndarray:
    """Per-λ generator matrices, transposed for the forward direction."""
    mats = op.stack(samples)
    if direction == FORWARD:
        return np.transpose(mats, (0, 2, 1))
    return mats


def _apply_stack(mats, vals):
    """mats (M, k, k) times columns vals[:, m]; returns (k, M)."""
    return np.einsum("mij,jm->im", mats, vals)


def propagate(mats: np.ndarray, vals: np.ndarray, t: float, check: bool = True,
              rtol: float = 1e-8):
    """e^{t A_m} v_m for every sample m.

    Returns (values, defect) where defect is the largest relative
    mismatch between d/dt u = e^{tA} A v and A u = A e^{tA} v.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    if t == 0:
        return np.array(vals, dtype=float), 0.0
    k = mats.shape[1]
    av = _apply_stack(mats, vals)
    if k <= DENSE_EXPM_LIMIT:
        e = expm(t * mats)
        u = _apply_stack(e, vals)
        du = _apply_stack(e, av)
    else:
        u = np.empty_like(vals, dtype=float)
        du = np.empty_like(vals, dtype=float)
        for m in range(mats.shape[0]):
            both = np.column_stack([vals[:, m], av[:, m]])
            out = expm_multiply(t * mats[m], both)
            u[:, m] = out[:, 0]
            du[:, m] = out[:, 1]
    defect = 0.0
    if check:
        gu = _apply_stack(mats, u)
        gnorm = np.abs(mats).sum(axis=2).max()
        diff = np.abs(du - gu).max()
        scale = np.abs(gu).max()
        bound = rtol * scale + 1e-12 * gnorm * np.abs(u).max()
        defect = float(diff / scale) if scale > 0 else float(diff)
        if diff > bound:
            raise StepFailureError(
                f"exponential defect {diff:.3e} exceeds {bound:.3e} at t={t}")
    return u, defect


@dataclass
class EvolutionProblem:
    """u' = G u (backward, on C0) or u' = G* u (forward, on L1)."""

    direction: str
    alpha: float
    bc: str
    n: int
    initial: GridFunction
    output_times: tuple = (0.0,)
    density: bool = False

    def __post_init__(self):
        self.direction = _direction(self.direction)
        self.alpha = as_order(self.alpha)
        self.bc = BoundaryPair.parse(self.bc).name
        self.n = int(self.n)
        times = [float(t) for t in self.output_times]
        if any(t < 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("output_times must be non-negative and strictly increasing")
        self.output_times = tuple(times)
        if self.initial.grid != Grid(self.n):
            raise ValueError("initial data lives on a different grid")
        if self.density:
            if self.direction != FORWARD:
                raise ValueError("density mode only applies to forward problems")
            if self.initial.values.min() < 0:
                raise ValueError("density must be non-negative")
            if abs(self.initial.integral() - 1.0) > 1e-10:
                raise ValueError(
                    f"density must integrate to 1, got {self.initial.integral():.12g}")

    @property
    def t_final(self) -> float:
        return self.output_times[-1]


@dataclass
class Solution:
    times: list
    states: list
    direction: str
    defects: list = field(default_factory=list)

    @property
    def norms(self) -> list:
        return [s.sup_norm() if self.direction == BACKWARD else s.l1_norm()
                for s in self.states]

    @property
    def sup_norms(self) -> list:
        return [s.sup_norm() for s in self.states]

    @property
    def l1_norms(self) -> list:
        return [s.l1_norm() for s in self.states]

    @property
    def mass(self) -> list:
        return [s.integral() for s in self.states]

    def at(self, t: float) -> GridFunction:
        for ti, s in zip(self.times, self.states):
            if ti == t:
                return s
        raise KeyError(f"no output stored at t={t}")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "x", "u"])
            for t, s in zip(self.times, self.states):
                for x, v in s.to_rows():
                    writer.writerow([repr(t), repr(x), repr(v)])

    def summary(self) -> dict:
        return {
            "direction": self.direction,
            "times": list(self.times),
            "norms": self.norms,
            "mass": self.mass,
            "defects": list(self.defects),
        }

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def evolve(problem: EvolutionProblem) -> Solution:
    """Evaluate S(t) or T(t) on the initial data at every output time."""
    op = _operator(problem.alpha, problem.bc, problem.n)
    f = problem.initial
    mats = generator_stack(op, problem.direction, f.samples)
    space = C0 if problem.direction == BACKWARD else L1
    states, defects = [], []
    for t in problem.output_times:
        vals, defect = propagate(mats, f.values, t)
        if t == 0:
            states.append(f)
        else:
            states.append(GridFunction(f.grid, vals, space=space, check=False))
        defects.append(defect)
    return Solution(list(problem.output_times), states, problem.direction, defects)


def semigroup_apply(alpha, bc, n, f: GridFunction, t: float,
                    direction: str = BACKWARD) -> GridFunction:
    """Shorthand: S(t) f for backward, T(t) f for forward."""
    sol = evolve(EvolutionProblem(direction, alpha, bc, n, f, (float(t),)))
    return sol.states[-1]


def resolvent(context, lam: float, f: GridFunction, direction: str = BACKWARD,
              rtol: float = 1e-10) -> GridFunction:
    """(λ - G)^{-1} f solved at every λ sample; ``context`` is (alpha, bc, n)."""
    if not lam > 0:
        raise SingularSystemError("resolvent parameter must be positive")
    direction = _direction(direction)
    alpha, bc, n = context
    op = _operator(alpha, bc, n)
    if f.grid != op.grid:
        raise ValueError("grid mismatch")
    mats = generator_stack(op, direction, f.samples)
    k = mats.shape[1]
    systems = lam * np.eye(k)[None, :, :] - mats
    sol = np.linalg.solve(systems, f.values.T[:, :, None])[:, :, 0].T
    resid = f.values - _apply_stack(systems, sol)
    fnorm = np.abs(f.values).max()
    if not np.all(np.isfinite(sol)) or np.abs(resid).max() > rtol * max(fnorm, 1e-300):
        raise SingularSystemError(
            f"resolvent residual {np.abs(resid).max():.3e} exceeds {rtol:g} * ||f||")
    space = C0 if direction == BACKWARD else L1
    return GridFunction(f.grid, sol, space=space, check=False)


@dataclass
class SteadyState:
    density: GridFunction
    residual: float
    stationary: bool


def steady_state(alpha, bc, n, samples: int = DEFAULT_SAMPLES, tol: float = 1e-9) -> SteadyState:
    """Forward stationary density, one null vector of G(λ)^T per λ sample.

    Each column is normalised to total mass one.  ``stationary`` reports
    whether ‖G* u‖ ≤ tol ‖G‖ ‖u‖; for killing pairs there is no
    stationary density and the check fails.
    """
    op = _operator(alpha, bc, n)
    mats = generator_stack(op, FORWARD, samples)
    h = op.grid.h
    cols = []
    for m in range(samples):
        _, _, vt = np.linalg.svd(mats[m])
        v = vt[-1]
        v = v / v.sum() / h
        cols.append(v)
    vals = np.column_stack(cols)
    u = GridFunction(op.grid, vals, space=L1, check=False)
    res = np.abs(_apply_stack(mats, vals)).max()
    gnorm = np.abs(mats).sum(axis=2).max()
    ok = bool(res <= tol * gnorm * np.abs(vals).max() and vals.min() >= -tol * np.abs(vals).max())
    return SteadyState(u, float(res), ok)


# ---------------------------------------------------------------------------
# Stopped process on the half-line
# ---------------------------------------------------------------------------


def psi(s, alpha):
    """ψ(s) = e^s (1 - e^{-s})^α."""
    s = np.asarray(s, dtype=float)
    return np.exp(s) * (-np.expm1(-s)) ** alpha


def psi_prime(s, alpha):
    """ψ'(s) = (1 - e^{-s})^{α-1} (e^s - 1 + α)."""
    s = np.asarray(s, dtype=float)
    return (-np.expm1(-s)) ** (alpha - 1.0) * (np.expm1(s) + alpha)


def psi_inverse(lam: float, alpha) -> float:
    """Root of ψ(s) = λ on (0, 50); ψ is increasing there."""
    a = as_order(alpha)
    if not lam > 0:
        raise ValueError("λ must be positive")
    hi = 50.0
    if psi(hi, a) < lam:
        raise ValueError("λ too large for the bracket (0, 50)")
    return float(brentq(lambda s: float(psi(s, a)) - lam, 0.0, hi, xtol=1e-300,
                        rtol=4 * np.finfo(float).eps, maxiter=500))


def stopped_resolvent_closed_form(alpha, lam: float, sites_nonpos: np.ndarray,
                                  n_positive: int, tail: int = 20000):
    """Closed-form ((λ - G*_stop)^{-1} e_0)_n at the given n ≤ 0 and n = 1..n_positive."""
    a = as_order(alpha)
    s = psi_inverse(lam, a)
    left = np.exp((np.asarray(sites_nonpos, dtype=float) - 1.0) * s)
    g = grunwald_weights(a, n_positive + tail + 1)
    right = np.empty(n_positive)
    for n in range(1, n_positive + 1):
        k = np.arange(n, n + tail)
        terms = g[k + 1] * np.exp(-(k - n + 1) * s)
        right[n - 1] = math.fsum(terms.tolist()) / lam
    return left, right


@dataclass
class StoppedResolventReport:
    alpha: float
    lam: float
    n_trunc: int
    psi_inverse: float
    max_error_nonpositive: float
    max_error_positive: float

    @property
    def max_error(self) -> float:
        return max(self.max_error_nonpositive, self.max_error_positive)


def stopped_resolvent_check(alpha, lam: float, n_trunc: int = 2000,
                            n_positive: int = 20) -> StoppedResolventReport:
    """Compare a truncated linear solve with the closed form.

    Sites -L..0 (L = n_trunc - 1) carry the unknowns; the transposed
    stopped generator has entries 𝒢^α_{n-i+1} for i ≤ min(0, n+1).
    Positive components follow from y_n = (1/λ) Σ_{i≤0} 𝒢^α_{n-i+1} y_i.
    """
    a = as_order(alpha)
    if n_trunc < 2:
        raise ValueError("n_trunc must be at least 2")
    sites = np.arange(-(n_trunc - 1), 1)
    g = grunwald_weights(a, n_trunc + n_positive + 1)
    # row n, column i: 𝒢_{n-i+1} when n - i + 1 >= 0
    d = sites[:, None] - sites[None, :] + 1
    b = np.where(d >= 0, g[np.clip(d, 0, None)], 0.0)
    system = lam * np.eye(n_trunc) - b
    rhs = np.zeros(n_trunc)
    rhs[-1] = 1.0
    y = lu_solve(lu_factor(system), rhs)
    pos = np.empty(n_positive)
    for n in range(1, n_positive + 1):
        idx = n - sites + 1
        pos[n - 1] = math.fsum((g[idx] * y).tolist()) / lam
    left, right = stopped_resolvent_closed_form(a, lam, sites, n_positive)
    return StoppedResolventReport(
        alpha=a, lam=float(lam), n_trunc=int(n_trunc), psi_inverse=psi_inverse(lam, a),
        max_error_nonpositive=float(np.abs(y - left).max()),
        max_error_positive=float(np.abs(pos - right).max()),
    )


def restart_distribution(alpha, n: int) -> np.ndarray:
    """z_i = -𝒢^{α-1}_i for i = 1..n (probability of re-entering at i)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    a = as_order(alpha)
    return -np.array(grunwald_weights(a - 1.0, n)[1:])


def restart_mass_deficit(alpha, n: int) -> float:
    """1 - Σ_{i≤n} z_i, which telescopes to 𝒢^{α-2}_n."""
    a = as_order(alpha)
    return float(grunwald_weights(a - 2.0, n)[n])


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------


def make_initial(tag: str, n: int, direction: str = FORWARD,
                 samples: int = DEFAULT_SAMPLES) -> GridFunction:
    """Build initial data from a short tag.

    ``delta@x``      unit mass on grid ι(x): the indicator scaled by 1/h
    ``uniform``      density 1/2 (forward) or the constant 1 (backward)
    ``poly:c0,c1..`` Σ c_k x^k
    ``file:path``    CSV with columns (x, value), linearly interpolated
    """
    direction = _direction(direction)
    grid = Grid(n)
    space = L1 if direction == FORWARD else C0
    tag = tag.strip()
    if tag.startswith("delta@"):
        x = float(tag[len("delta@"):])
        j = grid.number(x) - 1
        vals = np.zeros((n + 1, samples))
        vals[j, :] = 1.0 / grid.h
        return GridFunction(grid, vals, space=L1, check=False)
    if tag == "uniform":
        c = 0.5 if direction == FORWARD else 1.0
        return GridFunction(grid, np.full((n + 1, samples), c), space=space)
    if tag.startswith("poly:"):
        coeffs = [float(c) for c in tag[len("poly:"):].split(",") if c.strip()]
        if not coeffs:
            raise ValueError("poly: needs at least one coefficient")
        vals = project(grid, lambda x: np.polynomial.polynomial.polyval(x, coeffs), samples)
        return GridFunction(grid, vals, space=space)
    if tag.startswith("file:"):
        data = np.loadtxt(tag[len("file:"):], delimiter=",", skiprows=1, ndmin=2)
        order = np.argsort(data[:, 0], kind="stable")
        xs, ys = data[order, 0], data[order, 1]
        vals = project(grid, lambda x: np.interp(x, xs, ys), samples)
        return GridFunction(grid, vals, space=space, check=False)
    raise ValueError(f"unknown initial condition {tag!r}")


def sample_weights(samples: int) -> np.ndarray:
    """Trapezoid weights of the λ samples, summing to 1."""
    lam = sample_lambdas(samples)
    w = np.full(lam.size, 1.0 / (lam.size - 1))
    w[0] = w[-1] = 0.5 / (lam.size - 1)
    return w
