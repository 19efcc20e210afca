"""Exact simulation of the finite-state jump processes.

Paths are simulated directly from a rate matrix: exponential holding
times with rate -g_ii, then a categorical jump drawn from an alias
table over the targets j != i plus one extra "kill" outcome carrying the
row-sum defect.  All paths advance together, one jump per sweep.

Random streams are Philox generators spawned from a single
``SeedSequence``: chunk c of ``CHUNK`` paths always uses child c, so a
path's randomness does not depend on how many other paths are run.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .fraccalc import as_order, grunwald_weights
from .generators import BoundaryPair, rate_matrix, transition_operator
from .grid import Grid
from .semigroup import sample_weights

KILLED = -1
CHUNK = 1 << 14


class EmptyEnsembleError(ValueError):
    """An ensemble without paths cannot produce a histogram."""


# ---------------------------------------------------------------------------
# Alias tables
# ---------------------------------------------------------------------------


def alias_table(weights) -> tuple[np.ndarray, np.ndarray]:
    """Vose's alias method for one categorical distribution.

    Returns (prob, alias): draw column k uniformly, keep it with
    probability prob[k], otherwise take alias[k].
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not np.isfinite(w).all():
        raise ValueError("weights must be a non-empty vector of finite non-negative numbers")
    top = w.max()
    if top <= 0:
        raise ValueError("weights must not all vanish")
    # normalise by the largest weight first so tiny or huge inputs stay finite
    w = w / top
    k = w.size
    scaled = w * (k / w.sum())
    prob = np.ones(k)
    alias = np.arange(k)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = scaled[g] + scaled[s] - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    # leftovers are 1 up to rounding
    for i in small + large:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


def alias_draw(prob, alias, rows, rng) -> np.ndarray:
    """One draw per entry of ``rows`` from the row-wise alias tables."""
    k = prob.shape[1]
    col = rng.integers(0, k, size=rows.size)
    keep = rng.random(rows.size) < prob[rows, col]
    return np.where(keep, col, alias[rows, col])


class JumpKernel:
    """Holding rates and alias tables for a stack of rate matrices.

    ``rates`` has shape (B, k, k): B independent chains on k states.  A
    global state s = b*k + i refers to state i of chain b; outcome k of
    a row means the particle is killed.
    """

    def __init__(self, rates):
        r = np.asarray(rates, dtype=float)
        if r.ndim == 2:
            r = r[None]
        self.blocks, self.k, _ = r.shape
        self.size = self.blocks * self.k
        self.rates = r
        diag = np.einsum("bii->bi", r)
        self.hold = (-diag).reshape(-1)
        off = r.copy()
        idx = np.arange(self.k)
        off[:, idx, idx] = 0.0
        off = np.maximum(off, 0.0)
        kill = np.maximum(-r.sum(axis=2), 0.0)
        out = np.concatenate([off, kill[:, :, None]], axis=2).reshape(self.size, self.k + 1)
        self.prob = np.ones((self.size, self.k + 1))
        self.alias = np.tile(np.arange(self.k + 1), (self.size, 1))
        for s in range(self.size):
            if out[s].sum() > 0:
                self.prob[s], self.alias[s] = alias_table(out[s])

    def block_of(self, state):
        return np.asarray(state) // self.k

    def local(self, state):
        return np.asarray(state) % self.k


# ---------------------------------------------------------------------------
# Path ensembles
# ---------------------------------------------------------------------------


@dataclass
class PathEnsemble:
    """Outcome of a batch of simulated paths.

    ``snapshots[s, p]`` is the local state (0-based) of path p at
    ``times[s]``, or KILLED.  ``kill_time`` is +inf for paths that
    survived to ``horizon``.
    """

    times: np.ndarray
    snapshots: np.ndarray
    kill_time: np.ndarray
    horizon: float
    n_states: int
    positions: np.ndarray
    seed: int
    records: list = field(default_factory=list)
    jump_counts: np.ndarray | None = None
    occupation: np.ndarray | None = None

    @property
    def count(self) -> int:
        return int(self.kill_time.size)

    @property
    def killed(self) -> np.ndarray:
        return np.isfinite(self.kill_time)

    def killed_fraction(self, t: float) -> float:
        return float(np.mean(self.kill_time <= t)) if self.count else 0.0

    def survival(self, t: float) -> float:
        return 1.0 - self.killed_fraction(t)

    def state_at(self, t: float) -> np.ndarray:
        hits = np.nonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))[0]
        if hits.size == 0:
            raise ValueError(f"t={t} is not a recorded snapshot time")
        return self.snapshots[hits[0]]

    def write_paths(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path_id", "t", "state", "event"])
            for row in self.records:
                writer.writerow([row[0], repr(row[1]), row[2], row[3]])


def _chunk_generators(seed: int, n_paths: int):
    ss = np.random.SeedSequence(seed)
    n_chunks = max(1, math.ceil(n_paths / CHUNK))
    children = ss.spawn(n_chunks)
    for c, child in enumerate(children):
        lo = c * CHUNK
        yield lo, min(n_paths, lo + CHUNK), np.random.Generator(np.random.Philox(child))


def run_chain(kernel: JumpKernel, initial, times, seed: int, record: int = 0,
              count: bool = False, positions=None):
    """Simulate paths of ``kernel`` from global ``initial`` states.

    Returns a PathEnsemble whose snapshots hold local states.  The first
    ``record`` paths have their full event list kept for export; with
    ``count=True`` jump counts and occupation times are accumulated.
    """
    initial = np.asarray(initial, dtype=np.int64)
    times = np.asarray(sorted(float(t) for t in times))
    if times.size == 0 or times[0] < 0:
        raise ValueError("need non-negative snapshot times")
    horizon = float(times[-1])
    n_paths = initial.size
    snaps = np.full((times.size, n_paths), KILLED, dtype=np.int64)
    kill_time = np.full(n_paths, np.inf)
    records = []
    k = kernel.k
    counts = np.zeros((kernel.size, k + 1)) if count else None
    occ = np.zeros(kernel.size) if count else None

    for lo, hi, rng in _chunk_generators(seed, n_paths):
        state = initial[lo:hi].copy()
        now = np.zeros(hi - lo)
        ids = np.arange(lo, hi)
        for p in ids[ids < record]:
            records.append((int(p), 0.0, int(kernel.local(state[p - lo])) + 1, "start"))
        alive = np.arange(hi - lo)
        while alive.size:
            s = state[alive]
            rate = kernel.hold[s]
            with np.errstate(divide="ignore"):
                tau = -np.log1p(-rng.random(alive.size)) / rate
            nxt = now[alive] + tau
            for si, t in enumerate(times):
                hit = (now[alive] <= t) & (t < nxt)
                snaps[si, lo + alive[hit]] = kernel.local(s[hit])
            if count:
                np.add.at(occ, s, np.minimum(nxt, horizon) - now[alive])
            go = nxt <= horizon
            alive, s, nxt = alive[go], s[go], nxt[go]
            if not alive.size:
                break
            outcome = alias_draw(kernel.prob, kernel.alias, s, rng)
            if count:
                np.add.at(counts, (s, outcome), 1.0)
            dead = outcome == k
            block = s // k
            new_state = block * k + np.minimum(outcome, k - 1)
            now[alive] = nxt
            state[alive] = np.where(dead, s, new_state)
            kill_time[lo + alive[dead]] = nxt[dead]
            if record:
                for a in np.nonzero(lo + alive < record)[0]:
                    p = lo + alive[a]
                    if dead[a]:
                        records.append((int(p), float(nxt[a]), 0, "kill"))
                    else:
                        records.append((int(p), float(nxt[a]),
                                        int(kernel.local(new_state[a])) + 1, "jump"))
            alive = alive[~dead]

    records.sort(key=lambda r: (r[0], r[1]))
    if positions is None:
        positions = np.arange(k, dtype=float)
    return PathEnsemble(times, snaps, kill_time, horizon, k, np.asarray(positions),
                        int(seed), records, counts, occ)


def simulate(context, initial_state: int, horizon: float, n_paths: int, seed: int,
             times=None, record: int = 0, count: bool = False) -> PathEnsemble:
    """Paths of the n-state chain G^{LR}_{n x n} started in ``initial_state`` (1-based).

    Snapshots are stored at ``times`` (default: just ``horizon``).  States
    map to the grid points x_i = i h - 1.
    """
    alpha, bc, n = context
    rm = rate_matrix(alpha, bc, n)
    if not 1 <= initial_state <= n:
        raise ValueError(f"initial_state must lie in 1..{n}")
    if n_paths < 0:
        raise ValueError("n_paths must be non-negative")
    kernel = JumpKernel(rm.dense)
    times = [horizon] if times is None else sorted(set(list(times) + [horizon]))
    h = rm.h
    positions = np.arange(1, n + 1) * h - 1.0
    init = np.full(n_paths, initial_state - 1, dtype=np.int64)
    return run_chain(kernel, init, times, seed, record=record, count=count,
                     positions=positions)


def simulate_feller(context, x0: float, times, n_paths: int, seed: int,
                    samples: int = 16, record: int = 0) -> PathEnsemble:
    """Paths of the interpolated process started at unit mass on grid ι(x0).

    Each path first draws a λ sample with the trapezoid weights and then
    runs the (n+1)-state chain G_{n+1}(λ).  Its grid index at time t is
    then distributed exactly as the forward solution's mass per grid.
    """
    alpha, bc, n = context
    op = transition_operator(as_order(alpha), BoundaryPair.parse(bc).name, int(n))
    grid = Grid(n)
    j = grid.number(x0) - 1
    kernel = JumpKernel(op.stack(samples))
    w = sample_weights(samples)
    ss = np.random.SeedSequence([seed, 1])
    rng = np.random.Generator(np.random.Philox(ss))
    blocks = rng.choice(samples, size=n_paths, p=w)
    init = blocks * (n + 1) + j
    return run_chain(kernel, init, times, seed, record=record,
                     positions=grid.midpoints())


@dataclass
class Histogram:
    edges: np.ndarray
    centers: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    mass: np.ndarray
    killed: float
    killed_stderr: float
    n_paths: int

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "density", "stderr"])
            for x, d, e in zip(self.centers, self.density, self.stderr):
                writer.writerow([repr(float(x)), repr(float(d)), repr(float(e))])


def empirical_density(ensemble: PathEnsemble, t: float, bins: int | None = None) -> Histogram:
    """Sub-probability histogram of the surviving paths at time t.

    With ``bins=None`` there is one bin per state, centred on the state's
    position; otherwise ``bins`` equal bins over [-1, 1].
    """
    if ensemble.count == 0:
        raise EmptyEnsembleError("ensemble has no paths")
    if t > ensemble.horizon + 1e-12:
        raise ValueError("t exceeds the simulated horizon")
    states = ensemble.state_at(t)
    alive = states != KILLED
    n = ensemble.count
    pos = ensemble.positions
    if bins is None:
        counts = np.bincount(states[alive], minlength=ensemble.n_states).astype(float)
        centers = pos
        if pos.size > 1:
            mids = 0.5 * (pos[1:] + pos[:-1])
            edges = np.concatenate([[pos[0] - (mids[0] - pos[0])], mids,
                                    [pos[-1] + (pos[-1] - mids[-1])]])
        else:
            edges = np.array([-1.0, 1.0])
    else:
        edges = np.linspace(-1.0, 1.0, bins + 1)
        counts, _ = np.histogram(pos[states[alive]], bins=edges)
        counts = counts.astype(float)
        centers = 0.5 * (edges[1:] + edges[:-1])
    width = np.diff(edges)
    p = counts / n
    se = np.sqrt(p * (1.0 - p) / n)
    killed = float(np.mean(~alive))
    return Histogram(edges, centers, p / width, se / width, p, killed,
                     math.sqrt(killed * (1.0 - killed) / n), n)


def empirical_generator(ensemble: PathEnsemble) -> np.ndarray:
    """Maximum-likelihood rates N_ij / T_i from counted jumps.

    Returns a (states, states + 1) array; the last column is the kill rate.
    Requires an ensemble simulated with ``count=True``.
    """
    if ensemble.jump_counts is None:
        raise ValueError("ensemble was simulated without counting")
    occ = ensemble.occupation
    with np.errstate(invalid="ignore", divide="ignore"):
        rates = ensemble.jump_counts / occ[:, None]
    return np.nan_to_num(rates)


# ---------------------------------------------------------------------------
# First re-entry of the free walk
# ---------------------------------------------------------------------------


@dataclass
class ReentrySample:
    """Counts of first re-entry states 1..n_states, plus a remainder bin.

    The remainder collects re-entries above ``n_states`` and walks that
    reached depth ``window`` (censored).  ``censored_expected`` is the
    exact first-entry law of the censored walk, so ``censored_expected -
    theory`` is the bias caused by the window.
    """

    alpha: float
    counts: np.ndarray
    overshoot: int
    censored: int
    n_samples: int
    window: int
    theory: np.ndarray
    censored_expected: np.ndarray

    @property
    def remainder(self) -> int:
        return self.overshoot + self.censored

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.n_samples

    @property
    def stderr(self) -> np.ndarray:
        p = self.frequencies
        return np.sqrt(p * (1 - p) / self.n_samples)

    @property
    def bias(self) -> np.ndarray:
        return self.censored_expected - self.theory

    def chi_square(self):
        """Pearson test of counts (states + remainder) against the theoretical law."""
        from scipy.stats import chisquare

        obs = np.append(self.counts, self.remainder).astype(float)
        exp = np.append(self.theory, 1.0 - self.theory.sum()) * self.n_samples
        mask = exp > 1e-9 * self.n_samples
        if obs[~mask].sum() > 0:
            return math.inf, 0.0
        if mask.sum() < 2:
            return 0.0, 1.0
        exp = exp[mask] * obs[mask].sum() / exp[mask].sum()
        stat, pval = chisquare(obs[mask], exp)
        return float(stat), float(pval)


def _reentry_tail(alpha: float, size: int) -> np.ndarray:
    """P(up-jump size >= m) for m = 1..size: -𝒢^{α-1}_m / (α - 1)."""
    g = grunwald_weights(alpha - 1.0, size)
    return -np.array(g[1:]) / (alpha - 1.0)


def censored_reentry_law(alpha, window: int, n_states: int) -> np.ndarray:
    """Exact first-entry probabilities of states 1..n_states for the walk censored at -window."""
    a = as_order(alpha)
    w = int(window)
    g = grunwald_weights(a, w + n_states + 2)
    # alive states x = 0, -1, ..., -(w-1); index r = -x
    p = np.zeros((w, w))
    e = np.zeros((w, n_states))
    down = g[0] / a
    for r in range(w):
        if r + 1 < w:
            p[r, r + 1] = down
        # up by m lands at -r + m
        m = np.arange(1, r + 1)
        if m.size:
            p[r, r - m] = g[m + 1] / a
        targets = np.arange(1, n_states + 1)
        e[r, :] = g[targets + r + 1] / a
    rhs = np.linalg.solve(np.eye(w) - p, e)
    return rhs[0]


def first_reentry_sample(alpha, n_samples: int, seed: int, n_states: int = 20,
                         window: int = 4000) -> ReentrySample:
    """Start the free Grünwald walk at 0 and record the first positive state.

    From any state the walk steps down by one at rate 𝒢^α_0 = 1 and up
    by m at rate 𝒢^α_{m+1}; the total rate is α.  Only the embedded jump
    chain matters, so each round is a geometric run of down-steps
    followed by one up-jump.  Walks that reach depth ``window`` before
    re-entering are censored into the remainder bin (the expected cost of
    exact simulation is infinite).
    """
    a = as_order(alpha)
    if n_samples < 0:
        raise ValueError("n_samples must be non-negative")
    w = int(window)
    tmax = w + n_states + 2
    tail = _reentry_tail(a, tmax)
    neg_tail = -tail
    big = tmax + w + n_states + 1
    p_up = 1.0 - 1.0 / a
    counts = np.zeros(n_states, dtype=np.int64)
    overshoot = 0
    censored = 0

    for lo, hi, rng in _chunk_generators(seed, n_samples):
        x = np.zeros(hi - lo, dtype=np.int64)
        block = 8
        while x.size:
            shape = (x.size, block)
            downs = rng.geometric(p_up, size=shape) - 1
            u = 1.0 - rng.random(shape)
            ups = np.searchsorted(neg_tail, -u, side="right")
            ups = np.where(ups >= tmax, big, ups)
            pos = x[:, None] + np.cumsum(ups - downs, axis=1)
            low = pos - ups
            event = (low <= -w) | (pos > 0)
            has = event.any(axis=1)
            first = np.argmax(event, axis=1)
            rows = np.nonzero(has)[0]
            hit_low = low[rows, first[rows]] <= -w
            censored += int(hit_low.sum())
            landed = pos[rows[~hit_low], first[rows[~hit_low]]]
            inside = landed <= n_states
            counts += np.bincount(landed[inside] - 1, minlength=n_states)
            overshoot += int((~inside).sum())
            x = pos[~has, -1]
            block = min(block * 2, 4096)

    theory = -np.array(grunwald_weights(a - 1.0, n_states)[1:])
    expected = censored_reentry_law(a, w, n_states)
    return ReentrySample(a, counts, overshoot, censored, int(n_samples), w, theory, expected)
