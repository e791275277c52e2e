"""
Non-uniform tensor-product staggered grids.

Index conventions follow the usual MAC layout: primal nodes x_0..x_N,
cell midpoints x_{i+1/2}, half spacings h_{i+1/2} = x_{i+1} - x_i and node
spacings h_i = (h_{i-1/2} + h_{i+1/2}) / 2 with h_0 = h_{1/2}/2,
h_N = h_{N-1/2}/2.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np

from solver.errors import GridError

logger = logging.getLogger(__name__)

LENGTH_RTOL = 1e-14


@dataclass(frozen=True, eq=False)
class Axis1D:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise GridError("Axis needs at least two nodes")
        if not np.all(np.isfinite(nodes)):
            raise GridError("Axis nodes must be finite")
        if np.any(np.diff(nodes) <= 0.0):
            raise GridError("Axis nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def from_spacings(cls, spacings, start: float = 0.0) -> "Axis1D":
        spacings = np.asarray(spacings, dtype=float)
        if np.any(spacings <= 0.0):
            raise GridError("Spacings must be positive")
        return cls(np.concatenate(([start], start + np.cumsum(spacings))))

    @property
    def n(self) -> int:
        """Number of cells"""
        return self.nodes.size - 1

    @property
    def length(self) -> float:
        return float(self.nodes[-1] - self.nodes[0])

    @cached_property
    def half_spacings(self) -> np.ndarray:
        return np.diff(self.nodes)

    @cached_property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    @cached_property
    def node_spacings(self) -> np.ndarray:
        h = self.half_spacings
        spacings = np.empty(self.n + 1)
        spacings[0] = h[0] / 2.0
        spacings[-1] = h[-1] / 2.0
        spacings[1:-1] = 0.5 * (h[:-1] + h[1:])
        return spacings

    def spacing_ratio(self) -> float:
        """max/min of the half spacings"""
        h = self.half_spacings
        return float(h.max() / h.min())

    def refined(self) -> "Axis1D":
        """Axis with every cell halved"""
        nodes = np.empty(2 * self.n + 1)
        nodes[0::2] = self.nodes
        nodes[1::2] = self.midpoints
        return Axis1D(nodes)

    def same_as(self, other: "Axis1D") -> bool:
        return np.array_equal(self.nodes, other.nodes)


@dataclass(frozen=True, eq=False)
class StaggeredGrid2D:
    x_axis: Axis1D
    y_axis: Axis1D

    @property
    def nx(self) -> int:
        return self.x_axis.n

    @property
    def ny(self) -> int:
        return self.y_axis.n

    @property
    def domain(self) -> Tuple[float, float]:
        return (self.x_axis.length, self.y_axis.length)

    @property
    def area(self) -> float:
        return self.x_axis.length * self.y_axis.length

    @property
    def h_min(self) -> float:
        return float(min(self.x_axis.half_spacings.min(), self.y_axis.half_spacings.min()))

    @cached_property
    def cell_measures(self) -> np.ndarray:
        """h_{i+1/2} k_{j+1/2}, shape (nx, ny)"""
        return np.outer(self.x_axis.half_spacings, self.y_axis.half_spacings)

    def refined(self) -> "StaggeredGrid2D":
        return StaggeredGrid2D(self.x_axis.refined(), self.y_axis.refined())

    def same_as(self, other: "StaggeredGrid2D") -> bool:
        return self.x_axis.same_as(other.x_axis) and self.y_axis.same_as(other.y_axis)

    def __repr__(self) -> str:
        return f"StaggeredGrid2D({self.nx}x{self.ny}, domain={self.domain})"


def _check_counts(n_x: int, n_y: int, lengths: Tuple[float, float]):
    if int(n_x) != n_x or int(n_y) != n_y or n_x < 2 or n_y < 2:
        raise GridError(f"Cell counts must be integers >= 2, got ({n_x}, {n_y})")
    if len(lengths) != 2 or min(lengths) <= 0.0:
        raise GridError(f"Domain lengths must be positive, got {lengths}")


def build_uniform(n_x: int, n_y: int, lengths: Tuple[float, float] = (1.0, 1.0)) -> StaggeredGrid2D:
    _check_counts(n_x, n_y, lengths)
    return StaggeredGrid2D(
        Axis1D(np.linspace(0.0, lengths[0], int(n_x) + 1)),
        Axis1D(np.linspace(0.0, lengths[1], int(n_y) + 1)),
    )


def _random_axis(n: int, length: float, target_ratio: float, rng: np.random.Generator) -> Axis1D:
    xi = rng.uniform(0.0, 1.0, size=n)
    spread = xi.max() - xi.min()
    if target_ratio == 1.0 or spread == 0.0:
        return Axis1D(np.linspace(0.0, length, n + 1))
    # rescaled to [0, 1] the raw spacings 1 + r*xi have max/min = 1 + r exactly
    xi = (xi - xi.min()) / spread
    # small margin so rounding in the cumulative sum cannot pull the ratio under target
    r = (target_ratio - 1.0) * (1.0 + 1e-9)
    for _ in range(8):
        spacings = 1.0 + r * xi
        spacings = spacings * (length / spacings.sum())
        nodes = np.concatenate(([0.0], np.cumsum(spacings)))
        nodes[-1] = length
        axis = Axis1D(nodes)
        if axis.spacing_ratio() >= target_ratio:
            return axis
        r *= 1.0 + 1e-6
    raise GridError(f"Could not realize spacing ratio {target_ratio} with {n} cells")


def build_random_nonuniform(
    n_x: int,
    n_y: int,
    lengths: Tuple[float, float] = (1.0, 1.0),
    target_ratio: float = 1.5,
    seed: int = 7,
) -> StaggeredGrid2D:
    """
    Seeded random partition with per-axis max/min spacing ratio >= target_ratio.

    Spacings are drawn as 1 + r*xi (xi uniform, rescaled onto [0, 1]) and
    normalised to the axis length; r is chosen so the realized ratio meets
    the target. Same arguments give bit-identical grids.
    """
    _check_counts(n_x, n_y, lengths)
    if not np.isfinite(target_ratio) or target_ratio < 1.0:
        raise GridError(f"target_ratio must be >= 1, got {target_ratio}")
    rng = np.random.default_rng(seed)
    grid = StaggeredGrid2D(
        _random_axis(int(n_x), float(lengths[0]), float(target_ratio), rng),
        _random_axis(int(n_y), float(lengths[1]), float(target_ratio), rng),
    )
    logger.debug(
        f"Non-uniform grid {grid.nx}x{grid.ny} seed={seed}: "
        f"ratios x={grid.x_axis.spacing_ratio():.4f} y={grid.y_axis.spacing_ratio():.4f}"
    )
    return grid


def regularity_ratio(grid: StaggeredGrid2D) -> float:
    """Largest admissible C_0: min spacing over both axes / max spacing over both axes"""
    spacings = np.concatenate((grid.x_axis.half_spacings, grid.y_axis.half_spacings))
    return float(spacings.min() / spacings.max())
