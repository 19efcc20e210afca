"""Grid geometry on [-1, 1] and the projection/embedding pair.

The interval is cut into n+1 grids of width h = 2/(n+1).  A point x
belongs to grid ``number(x)`` (1-based) at fractional position
``location(x)`` in [0, 1].  A vector function v_j(λ), j = 1..n+1, is
turned into a function on [-1, 1] by ``embed`` and back by ``project``.

Functions are stored densely: M uniform λ samples per grid, both grid
ends included, so seam values appear twice (once as λ=1 of grid j and
once as λ=0 of grid j+1).  Between samples the function is linear in λ.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

C0 = "C0"
L1 = "L1"
DEFAULT_SAMPLES = 16


def _check_space(space: str) -> str:
    if space not in (C0, L1):
        raise ValueError(f"space must be 'C0' or 'L1', got {space!r}")
    return space


def _as_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < -1.0) or np.any(x > 1.0):
        raise ValueError("x must lie in [-1, 1]")
    return x


def sample_lambdas(m: int = DEFAULT_SAMPLES) -> np.ndarray:
    if m < 2:
        raise ValueError("need at least two samples per grid")
    return np.linspace(0.0, 1.0, m)


@dataclass(frozen=True)
class Grid:
    """n+1 equal grids covering [-1, 1]."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return 2.0 / (self.n + 1)

    @property
    def size(self) -> int:
        """Number of grids, n+1."""
        return self.n + 1

    def number(self, x):
        """Grid number ι(x) in 1..n+1; ties go to the right-hand grid."""
        x = _as_domain(x)
        idx = np.floor((x + 1.0) / self.h).astype(int) + 1
        idx = np.clip(idx, 1, self.n + 1)
        if idx.ndim == 0:
            return int(idx)
        return idx

    def location(self, x):
        """Position λ(x) in [0, 1] inside grid ι(x), with λ(1) = 1."""
        x = _as_domain(x)
        lam = (x + 1.0) / self.h - (np.asarray(self.number(x)) - 1)
        lam = np.clip(lam, 0.0, 1.0)
        if lam.ndim == 0:
            return float(lam)
        return lam

    def points(self, lambdas) -> np.ndarray:
        """x = (λ + j - 1) h - 1 for every grid j and sample λ; shape (n+1, M)."""
        lam = np.asarray(lambdas, dtype=float)
        j = np.arange(self.n + 1)[:, None]
        x = (lam[None, :] + j) * self.h - 1.0
        return np.clip(x, -1.0, 1.0)

    def midpoints(self) -> np.ndarray:
        return self.points([0.5])[:, 0]


class GridFunction:
    """A function on [-1, 1] given by samples v_j(λ_m), shape (n+1, M).

    ``space`` is "C0" for functions that must be continuous across seams
    (backward problems) or "L1" for densities (forward problems).  With
    ``check=True`` a C0 function with a seam jump is rejected.
    """

    def __init__(self, grid: Grid, values, space: str = C0, check: bool = True,
                 seam_tol: float = 1e-12):
        self.grid = grid
        vals = np.array(values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != grid.n + 1 or vals.shape[1] < 2:
            raise ValueError(
                f"values must have shape ({grid.n + 1}, M>=2), got {vals.shape}")
        vals.setflags(write=False)
        self.values = vals
        self.space = _check_space(space)
        if check and self.space == C0 and not self.is_continuous(seam_tol):
            raise ValueError(
                f"C0 function has a seam jump of {self.seam_jump():.3e}")

    @property
    def lambdas(self) -> np.ndarray:
        return sample_lambdas(self.values.shape[1])

    @property
    def samples(self) -> int:
        return self.values.shape[1]

    def points(self) -> np.ndarray:
        return self.grid.points(self.lambdas)

    def seam_jump(self) -> float:
        if self.grid.n + 1 < 2:
            return 0.0
        return float(np.max(np.abs(self.values[1:, 0] - self.values[:-1, -1])))

    def is_continuous(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.values))))
        return self.seam_jump() <= tol * scale

    def __call__(self, x):
        """Evaluate the embedded function: v_{ι(x)}(λ(x)), linear in λ."""
        x = _as_domain(x)
        j = np.atleast_1d(self.grid.number(x)) - 1
        lam = np.atleast_1d(self.grid.location(x))
        m = self.samples - 1
        pos = lam * m
        k = np.minimum(np.floor(pos).astype(int), m - 1)
        w = pos - k
        out = (1.0 - w) * self.values[j, k] + w * self.values[j, k + 1]
        if x.ndim == 0:
            return float(out[0])
        return out.reshape(x.shape)

    def _same_layout(self, other: "GridFunction"):
        if other.grid != self.grid or other.values.shape != self.values.shape:
            raise ValueError("grid functions live on different grids")

    def _weights(self) -> np.ndarray:
        """Trapezoid weights in λ, times h, so that sum(w * values) is the integral."""
        m = self.samples
        w = np.full(m, 1.0 / (m - 1))
        w[0] = w[-1] = 0.5 / (m - 1)
        return w * self.grid.h

    def integral(self) -> float:
        return float(np.sum(self.values @ self._weights()))

    def inner(self, other: "GridFunction") -> float:
        """∫ f g dx with the trapezoid rule in λ on every grid."""
        self._same_layout(other)
        return float(np.sum((self.values * other.values) @ self._weights()))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.values) @ self._weights()))

    def norm(self) -> float:
        """Norm of the function's own space."""
        return self.sup_norm() if self.space == C0 else self.l1_norm()

    def reflect(self) -> "GridFunction":
        """x -> -x; grid j maps to grid n+2-j and λ to 1-λ."""
        return GridFunction(self.grid, self.values[::-1, ::-1], space=self.space,
                            check=False)

    def with_values(self, values, space: str | None = None) -> "GridFunction":
        return GridFunction(self.grid, values, space=space or self.space, check=False)

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._same_layout(other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._same_layout(other)
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - other)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def to_rows(self):
        """(x, value) pairs in increasing x; seam points appear twice."""
        return list(zip(self.points().ravel().tolist(), self.values.ravel().tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "value"])
            for x, v in self.to_rows():
                writer.writerow([repr(x), repr(v)])

    def __repr__(self):
        return (f"GridFunction(n={self.grid.n}, samples={self.samples}, "
                f"space={self.space!r})")


def project(grid: Grid, f, samples: int = DEFAULT_SAMPLES, space: str = C0) -> np.ndarray:
    """(Π f)_j(λ) = f((λ + j - 1) h - 1), returned as an (n+1, M) array.

    ``f`` is either a vectorised callable on [-1, 1] or a GridFunction on
    ``grid``; for the latter its stored samples are returned unchanged.
    """
    if isinstance(f, GridFunction):
        if f.grid != grid:
            raise ValueError("grid function lives on a different grid")
        return np.array(f.values)
    x = grid.points(sample_lambdas(samples))
    vals = np.asarray(f(x), dtype=float)
    if vals.shape != x.shape:
        vals = np.broadcast_to(vals, x.shape).copy()
    return vals


def embed(grid: Grid, v, space: str = C0, check: bool = True) -> GridFunction:
    """Π⁻¹ v: the function x -> v_{ι(x)}(λ(x))."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 or v.shape[0] != grid.n + 1:
        raise ValueError(f"expected shape ({grid.n + 1}, M), got {v.shape}")
    return GridFunction(grid, v, space=space, check=check)


def sample(grid: Grid, f, samples: int = DEFAULT_SAMPLES, space: str = C0,
           check: bool = True) -> GridFunction:
    """Shorthand for ``embed(grid, project(grid, f))``."""
    return embed(grid, project(grid, f, samples), space=space, check=check)
