"""Orthogonal, possibly nonuniform, meshes and nodal fields."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# 5th-order quadrature needs a 6-node stencil plus one cell of slack
QUADRATURE_MIN_CELLS = 6
MIN_CELLS = 4


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Strictly increasing node set ``x_0 < ... < x_N``."""

    nodes: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise GridError("a grid needs at least two nodes")
        if not np.all(np.isfinite(x)):
            raise GridError("grid nodes must be finite")
        if np.any(np.diff(x) <= 0.0):
            raise GridError("grid nodes must be strictly increasing")
        x.flags.writeable = False
        object.__setattr__(self, "nodes", x)

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def widths(self) -> np.ndarray:
        """Cell widths; ``widths[i-1]`` is ``x_i - x_{i-1}``."""
        return np.diff(self.nodes)

    @property
    def min_width(self) -> float:
        return float(self.widths.min())

    def is_uniform(self, rtol: float = 1e-12) -> bool:
        w = self.widths
        return bool(np.all(np.abs(w - w.mean()) <= rtol * w.mean()))

    def mirrored(self) -> "Grid1D":
        """The grid reflected through the origin, nodes reordered increasing."""
        return Grid1D(-self.nodes[::-1])

    def __eq__(self, other):
        return isinstance(other, Grid1D) and np.array_equal(self.nodes, other.nodes)

    def __hash__(self):
        return hash(self.nodes.tobytes())

    def __repr__(self):
        return f"Grid1D(a={self.a:g}, b={self.b:g}, N={self.n_cells})"

    def to_text(self) -> str:
        return "".join(f"{x:.17g}\n" for x in self.nodes)

    @classmethod
    def from_text(cls, text: str) -> "Grid1D":
        vals = [float(line) for line in text.splitlines() if line.strip()]
        return cls(np.array(vals))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Grid1D":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class Grid2D:
    x: Grid1D
    y: Grid1D

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x.nodes.size, self.y.nodes.size)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x.nodes, self.y.nodes, indexing="ij")


@dataclass
class Field:
    """Nodal values on a grid at time ``t``; 2D arrays are indexed ``[i, j]``."""

    grid: Grid1D | Grid2D
    values: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (
            (self.grid.nodes.size,) if isinstance(self.grid, Grid1D) else self.grid.shape
        )
        if self.values.shape != expected:
            raise GridError(f"field shape {self.values.shape} does not match grid {expected}")
        if not np.all(np.isfinite(self.values)):
            raise GridError("field values must be finite")


def make_uniform_grid(a: float, b: float, N: int, min_cells: int = MIN_CELLS) -> Grid1D:
    if not a < b:
        raise GridError(f"need a < b, got a={a}, b={b}")
    if int(N) != N or N < min_cells:
        raise GridError(f"N={N} is too small for the quadrature stencil (need N >= {min_cells})")
    x = np.linspace(a, b, int(N) + 1)
    x[0], x[-1] = a, b
    return Grid1D(x)


def make_perturbed_grid(
    a: float, b: float, N: int, rho: float, seed: int, min_cells: int = MIN_CELLS
) -> Grid1D:
    """Uniform grid with every interior node moved by ``rho*dx*u``, ``u ~ U[-1, 1]``.

    Endpoints stay fixed. The generator is ``numpy.random.default_rng(seed)``
    so the same seed always yields the same nodes.
    """
    if not 0.0 <= rho < 0.5:
        raise GridError(f"perturbation fraction must satisfy 0 <= rho < 0.5, got {rho}")
    grid = make_uniform_grid(a, b, N, min_cells)
    if rho == 0.0:
        return grid
    dx = (b - a) / N
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, size=int(N) - 1)
    x = grid.nodes.copy()
    x[1:-1] += rho * dx * u
    return Grid1D(x)
