"""Boundary-modified Grünwald rate matrices and their interpolation.

A :class:`RateMatrix` is the n x n generator of a finite-state jump
process on states 1..n.  Its interior rows are the shifted Grünwald
stencil; the first row and the last column carry the boundary weights
b^l and b^r.  :func:`interpolation_matrix` blends two adjacent copies of
it into an (n+1) x (n+1) rate matrix depending on λ in [0, 1], which is
what acts on grid functions (backward: the matrix, forward: its
transpose).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.linalg import toeplitz

from .fraccalc import as_order, grunwald_weights
from .grid import C0, L1, Grid, GridFunction

DENSE_LIMIT = 1024

_LEFT_ALIASES = {"D": "D", "N": "N", "N*": "N*", "NS": "N*", "NSTAR": "N*"}
_RIGHT_ALIASES = {"D": "D", "N": "N"}


class UnsupportedPairError(ValueError):
    """Boundary combination outside the six supported pairs."""


class InvariantError(RuntimeError):
    """A constructed matrix is not a rate matrix."""


@dataclass(frozen=True)
class BoundaryPair:
    """Left condition in {D, N, N*}, right condition in {D, N}.

    D kills at the boundary, N restarts at the first re-entry point
    (fast-forward) and N* restarts in the first interior state.
    """

    left: str
    right: str

    def __post_init__(self):
        left = _LEFT_ALIASES.get(str(self.left).upper())
        right = _RIGHT_ALIASES.get(str(self.right).upper())
        if left is None or right is None:
            raise UnsupportedPairError(
                f"unsupported boundary pair {self.left}{self.right}; "
                f"choose from {', '.join(SUPPORTED_PAIRS)}")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @classmethod
    def parse(cls, tag) -> "BoundaryPair":
        if isinstance(tag, BoundaryPair):
            return tag
        s = str(tag).strip().upper().replace("STAR", "*").replace("_", "")
        if len(s) < 2:
            raise UnsupportedPairError(f"cannot parse boundary pair {tag!r}")
        return cls(s[:-1], s[-1])

    @property
    def name(self) -> str:
        return f"{self.left}{self.right}"

    def __str__(self):
        return self.name

    @property
    def conservative(self) -> bool:
        """No killing anywhere: row sums vanish identically."""
        return self.left != "D" and self.right == "N"


SUPPORTED_PAIRS = ("DD", "DN", "ND", "NN", "N*D", "N*N")


def boundary_weights(alpha, bc, n: int):
    """Unscaled (left_row, right_col, corner).

    left_row holds b^l_1..b^l_n, right_col holds b^r_1..b^r_{n-1} and
    corner is the top-right entry b_n.  b^l_0 is implied by the left
    condition (1 for D, 0 otherwise).
    """
    a = as_order(alpha)
    bc = BoundaryPair.parse(bc)
    if n < 3:
        raise ValueError("n must be at least 3")
    g = grunwald_weights(a, n)
    g1 = grunwald_weights(a - 1.0, n)

    if bc.left == "D":
        bl = np.array(g[: n + 1])
    elif bc.left == "N":
        bl = np.empty(n + 1)
        bl[0] = 0.0
        bl[1:] = -g1[:n]
    else:
        bl = np.array(g[: n + 1])
        bl[0] = 0.0
        bl[1] = g1[1]

    if bc.right == "D":
        br = np.array(g[1:n])
        corner = float(bl[n])
    else:
        br = -np.array(g1[: n - 1])
        corner = -math.fsum(bl[:n].tolist())
    return bl[1:], br, corner


@dataclass(frozen=True)
class RateMatrix:
    """n x n generator G^{LR} with structured storage.

    ``interior`` is the Grünwald band 𝒢^α_0..𝒢^α_n; ``left_row``,
    ``right_col`` and ``corner`` are the boundary weights.  Every stored
    vector is unscaled; ``scale`` = 1/h^α multiplies all of them.
    """

    n: int
    alpha: float
    bc: BoundaryPair
    interior: np.ndarray = field(repr=False)
    left_row: np.ndarray = field(repr=False)
    right_col: np.ndarray = field(repr=False)
    corner: float = field(repr=False)

    @property
    def h(self) -> float:
        return 2.0 / (self.n + 1)

    @property
    def scale(self) -> float:
        return self.h ** (-self.alpha)

    @cached_property
    def dense(self) -> np.ndarray:
        n = self.n
        if n > DENSE_LIMIT:
            raise MemoryError(f"dense materialisation is limited to n <= {DENSE_LIMIT}")
        g = self.interior
        col = np.zeros(n)
        col[0] = g[1]
        col[1] = g[0]
        m = toeplitz(col, g[1 : n + 1])
        m[0, : n - 1] = self.left_row[: n - 1]
        m[0, n - 1] = self.corner
        m[1:, n - 1] = self.right_col[::-1]
        m *= self.scale
        m.setflags(write=False)
        return m

    def row_sums(self) -> np.ndarray:
        return self.dense.sum(axis=1)

    def min_offdiagonal(self) -> float:
        d = self.dense
        off = d[~np.eye(self.n, dtype=bool)]
        return float(off.min())

    def check(self, tol: float = 1e-12) -> None:
        bound = tol * self.scale
        if self.min_offdiagonal() < -bound:
            raise InvariantError(f"negative off-diagonal rate in {self.bc} matrix")
        sums = self.row_sums()
        if sums.max() > bound:
            raise InvariantError(f"positive row sum {sums.max():.3e} in {self.bc} matrix")
        if self.bc.conservative and np.abs(sums).max() > bound:
            raise InvariantError(f"{self.bc} matrix is not conservative")

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "bc": self.bc.name,
            "n": self.n,
            "scale": self.scale,
            "interior_band": self.interior.tolist(),
            "left_row": self.left_row.tolist(),
            "right_col": self.right_col.tolist(),
            "corner": self.corner,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in self.dense:
                writer.writerow([repr(float(v)) for v in row])


@lru_cache(maxsize=64)
def _rate_matrix_cached(alpha: float, name: str, n: int) -> RateMatrix:
    bc = BoundaryPair.parse(name)
    left, right, corner = boundary_weights(alpha, bc, n)
    interior = np.array(grunwald_weights(alpha, n))
    for arr in (interior, left, right):
        arr.setflags(write=False)
    rm = RateMatrix(n, alpha, bc, interior, left, right, corner)
    rm.check()
    return rm


def rate_matrix(alpha, bc, n: int) -> RateMatrix:
    """Assemble and validate G^{LR}_{n x n}."""
    bc = BoundaryPair.parse(bc)
    if n < 3:
        raise ValueError("n must be at least 3")
    return _rate_matrix_cached(as_order(alpha), bc.name, int(n))


def interpolating_functions(bc, alpha=2.0):
    """(D^l, N^l, D^r, N^r) as vectorised functions of λ; unused ones are 1."""
    bc = BoundaryPair.parse(bc)
    a = as_order(alpha)

    def one(lam):
        return np.ones_like(np.asarray(lam, dtype=float))

    def d_left(lam):
        lam = np.asarray(lam, dtype=float)
        return lam * a / (1.0 - lam + lam * a)

    def d_right(lam):
        lam = np.asarray(lam, dtype=float)
        return (1.0 - lam) * a / (lam + (1.0 - lam) * a)

    def n_left(lam):
        return np.asarray(lam, dtype=float) * 1.0

    def n_right(lam):
        return 1.0 - np.asarray(lam, dtype=float)

    dl, nl = (d_left, one) if bc.left == "D" else (one, n_left)
    dr, nr = (d_right, one) if bc.right == "D" else (one, n_right)
    return dl, nl, dr, nr


def _check_lambda(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(np.isnan(lam)) or np.any(lam < 0.0) or np.any(lam > 1.0):
        raise ValueError("λ must lie in [0, 1]")
    return lam


def interpolation_matrices(alpha, bc, n: int, lambdas) -> np.ndarray:
    """Stack of G_{n+1}(λ) for every λ in ``lambdas``; shape (M, n+1, n+1)."""
    lam = np.atleast_1d(_check_lambda(lambdas))
    rm = rate_matrix(alpha, bc, n)
    g = rm.dense
    dl, nl, dr, nr = interpolating_functions(rm.bc, rm.alpha)
    m = lam.size
    out = np.zeros((m, n + 1, n + 1))
    c = lam[:, None, None]
    out[:, 0, 0] = g[0, 0]
    out[:, 0, 1:n] = dl(lam)[:, None] * g[0, 1:n]
    out[:, 1:n, 0] = nl(lam)[:, None] * g[1:n, 0]
    out[:, 1:n, 1:n] = (1.0 - c) * g[None, : n - 1, : n - 1] + c * g[None, 1:n, 1:n]
    out[:, 1:n, n] = nr(lam)[:, None] * g[: n - 1, n - 1]
    out[:, n, 1:n] = dr(lam)[:, None] * g[n - 1, : n - 1]
    out[:, n, n] = g[n - 1, n - 1]
    return out


def interpolation_matrix(alpha, bc, n: int, lam: float) -> np.ndarray:
    """The (n+1) x (n+1) rate matrix G^{LR}_{n+1}(λ)."""
    if np.ndim(lam) != 0:
        raise ValueError("lam must be a scalar; use interpolation_matrices for arrays")
    return interpolation_matrices(alpha, bc, n, [lam])[0]


class TransitionOperator:
    """G^{LR}_{∓h} acting on grid functions sampled at fixed λ values.

    The interpolation matrices for the sample λ's of a grid function are
    built once and cached on the instance.
    """

    def __init__(self, alpha, bc, n: int):
        self.alpha = as_order(alpha)
        self.bc = BoundaryPair.parse(bc)
        self.n = int(n)
        self.grid = Grid(self.n)
        self.rate = rate_matrix(self.alpha, self.bc, self.n)
        self._stacks: dict[int, np.ndarray] = {}

    def __repr__(self):
        return f"TransitionOperator(alpha={self.alpha}, bc={self.bc}, n={self.n})"

    def stack(self, samples: int) -> np.ndarray:
        """G_{n+1}(λ_m) for the uniform λ samples of a grid function; (M, n+1, n+1)."""
        if samples not in self._stacks:
            lam = np.linspace(0.0, 1.0, samples)
            self._stacks[samples] = interpolation_matrices(self.alpha, self.bc, self.n, lam)
        return self._stacks[samples]

    def _check(self, f: GridFunction):
        if f.grid != self.grid:
            raise ValueError(f"grid mismatch: operator n={self.n}, function n={f.grid.n}")

    def backward(self, f: GridFunction) -> GridFunction:
        """(G_{-h} f) per λ sample: G_{n+1}(λ) v(λ)."""
        self._check(f)
        mats = self.stack(f.samples)
        out = np.einsum("mij,jm->im", mats, f.values)
        return GridFunction(self.grid, out, space=C0, check=False)

    def forward(self, f: GridFunction) -> GridFunction:
        """(G_{+h} f) per λ sample: G_{n+1}(λ)^T v(λ)."""
        self._check(f)
        mats = self.stack(f.samples)
        out = np.einsum("mji,jm->im", mats, f.values)
        return GridFunction(self.grid, out, space=L1, check=False)


@lru_cache(maxsize=32)
def transition_operator(alpha, bc, n: int) -> TransitionOperator:
    return TransitionOperator(alpha, BoundaryPair.parse(bc).name, n)


def _operator(context) -> TransitionOperator:
    if isinstance(context, TransitionOperator):
        return context
    alpha, bc, n = context
    return transition_operator(as_order(alpha), BoundaryPair.parse(bc).name, int(n))


def apply_backward(context, f: GridFunction) -> GridFunction:
    """G_{-h}^{LR} f; ``context`` is (alpha, bc, n) or a TransitionOperator."""
    return _operator(context).backward(f)


def apply_forward(context, f: GridFunction) -> GridFunction:
    """G_{+h}^{LR} f; ``context`` is (alpha, bc, n) or a TransitionOperator."""
    return _operator(context).forward(f)
