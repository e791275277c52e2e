"""
Staggered fields and the discrete operators acting on them.

Every field lives on one of four lattices built from the two location kinds
per axis: NODE (integer index, N+1 values) and HALF (half index, N values).

    CELL   = (HALF, HALF)   pressure Z, divergence
    XFACE  = (NODE, HALF)   u^x, stored with the normal-wall rows i = 0, N_x
    YFACE  = (HALF, NODE)   u^y, stored with the normal-wall columns j = 0, N_y
    CORNER = (NODE, NODE)   intermediate products

Tangential wall values (u^x at y_0, y_{N_y}; u^y at x_0, x_{N_x}) are not
stored; operators that reach them take a ``wall`` value, zero by default.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Tuple, Union

import numpy as np

from solver.errors import LatticeError
from solver.grid import Axis1D, StaggeredGrid2D


class Loc(str, Enum):
    NODE = "node"
    HALF = "half"


class Weighting(str, Enum):
    LINEAR = "linear"
    CONSERVATIVE = "conservative"


@dataclass(frozen=True)
class Lattice:
    x: Loc
    y: Loc

    @property
    def name(self) -> str:
        return _LATTICE_NAMES.get(self, f"{self.x.value}-{self.y.value}")

    def shape(self, grid: StaggeredGrid2D) -> Tuple[int, int]:
        return (_count(self.x, grid.x_axis), _count(self.y, grid.y_axis))

    def coords(self, grid: StaggeredGrid2D) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(
            _points(self.x, grid.x_axis), _points(self.y, grid.y_axis), indexing="ij"
        )

    def weights(self, grid: StaggeredGrid2D) -> np.ndarray:
        """Control-volume weights h * k of every lattice point"""
        return np.outer(_spacings(self.x, grid.x_axis), _spacings(self.y, grid.y_axis))


CELL = Lattice(Loc.HALF, Loc.HALF)
XFACE = Lattice(Loc.NODE, Loc.HALF)
YFACE = Lattice(Loc.HALF, Loc.NODE)
CORNER = Lattice(Loc.NODE, Loc.NODE)

_LATTICE_NAMES = {CELL: "cell", XFACE: "xface", YFACE: "yface", CORNER: "corner"}


def _count(loc: Loc, axis: Axis1D) -> int:
    return axis.n + 1 if loc is Loc.NODE else axis.n


def _points(loc: Loc, axis: Axis1D) -> np.ndarray:
    return axis.nodes if loc is Loc.NODE else axis.midpoints


def _spacings(loc: Loc, axis: Axis1D) -> np.ndarray:
    return axis.node_spacings if loc is Loc.NODE else axis.half_spacings


def _flip(loc: Loc) -> Loc:
    return Loc.HALF if loc is Loc.NODE else Loc.NODE


Scalar = Union[int, float]


@dataclass(frozen=True, eq=False)
class GridField:
    """Values of one scalar quantity on one lattice; treated as a value type"""

    grid: StaggeredGrid2D
    lattice: Lattice
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        expected = self.lattice.shape(self.grid)
        if values.shape != expected:
            raise LatticeError(
                f"{self.lattice.name} field on {self.grid!r} needs shape {expected}, got {values.shape}"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: StaggeredGrid2D, lattice: Lattice) -> "GridField":
        return cls(grid, lattice, np.zeros(lattice.shape(grid)))

    @classmethod
    def sample(
        cls, grid: StaggeredGrid2D, lattice: Lattice, func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    ) -> "GridField":
        X, Y = lattice.coords(grid)
        return cls(grid, lattice, np.broadcast_to(func(X, Y), X.shape).astype(float))

    def _check_compatible(self, other: "GridField"):
        if other.lattice != self.lattice:
            raise LatticeError(f"Lattice mismatch: {self.lattice.name} vs {other.lattice.name}")
        if other.grid is not self.grid and not other.grid.same_as(self.grid):
            raise LatticeError("Fields live on different grids")

    def _combine(self, other, op) -> "GridField":
        if isinstance(other, GridField):
            self._check_compatible(other)
            return GridField(self.grid, self.lattice, op(self.values, other.values))
        return GridField(self.grid, self.lattice, op(self.values, float(other)))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __radd__ = __add__
    __rmul__ = __mul__

    def __rsub__(self, other):
        return GridField(self.grid, self.lattice, float(other) - self.values)

    def __neg__(self):
        return GridField(self.grid, self.lattice, -self.values)

    def copy(self) -> "GridField":
        return GridField(self.grid, self.lattice, self.values.copy())


@dataclass(frozen=True, eq=False)
class VelocityField:
    """The pair (W^x, W^y) on the XFACE and YFACE lattices"""

    x: GridField
    y: GridField

    def __post_init__(self):
        if self.x.lattice != XFACE or self.y.lattice != YFACE:
            raise LatticeError(
                f"Velocity needs (xface, yface) components, got ({self.x.lattice.name}, {self.y.lattice.name})"
            )

    @property
    def grid(self) -> StaggeredGrid2D:
        return self.x.grid

    @classmethod
    def zeros(cls, grid: StaggeredGrid2D) -> "VelocityField":
        return cls(GridField.zeros(grid, XFACE), GridField.zeros(grid, YFACE))

    @classmethod
    def sample(cls, grid: StaggeredGrid2D, ux: Callable, uy: Callable) -> "VelocityField":
        """Point samples at the staggered nodes with Dirichlet rows pinned to zero"""
        field = cls(GridField.sample(grid, XFACE, ux), GridField.sample(grid, YFACE, uy))
        return field.with_dirichlet()

    def with_dirichlet(self) -> "VelocityField":
        wx = self.x.values.copy()
        wy = self.y.values.copy()
        wx[0, :] = wx[-1, :] = 0.0
        wy[:, 0] = wy[:, -1] = 0.0
        return VelocityField(GridField(self.grid, XFACE, wx), GridField(self.grid, YFACE, wy))

    def __add__(self, other: "VelocityField") -> "VelocityField":
        return VelocityField(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "VelocityField") -> "VelocityField":
        return VelocityField(self.x - other.x, self.y - other.y)

    def __mul__(self, factor: Scalar) -> "VelocityField":
        return VelocityField(self.x * factor, self.y * factor)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(max(np.abs(self.x.values).max(), np.abs(self.y.values).max()))


# Difference operators


def _require(field: GridField, axis: int, loc: Loc, op: str):
    actual = field.lattice.x if axis == 0 else field.lattice.y
    if actual is not loc:
        raise LatticeError(f"{op} needs a {loc.value} index along axis {axis}, got {field.lattice.name}")


def _shifted(lattice: Lattice, axis: int) -> Lattice:
    if axis == 0:
        return Lattice(_flip(lattice.x), lattice.y)
    return Lattice(lattice.x, _flip(lattice.y))


def _axis(grid: StaggeredGrid2D, axis: int) -> Axis1D:
    return grid.x_axis if axis == 0 else grid.y_axis


def _along(vector: np.ndarray, axis: int) -> np.ndarray:
    return vector[:, None] if axis == 0 else vector[None, :]


def _pad_wall(values: np.ndarray, axis: int, wall: float) -> np.ndarray:
    pad = ((1, 1), (0, 0)) if axis == 0 else ((0, 0), (1, 1))
    return np.pad(values, pad, mode="constant", constant_values=wall)


def _small_d(f: GridField, axis: int, op: str) -> GridField:
    _require(f, axis, Loc.NODE, op)
    h = _axis(f.grid, axis).half_spacings
    values = np.diff(f.values, axis=axis) / _along(h, axis)
    return GridField(f.grid, _shifted(f.lattice, axis), values)


def _big_d(f: GridField, axis: int, wall: float, op: str) -> GridField:
    _require(f, axis, Loc.HALF, op)
    h = _axis(f.grid, axis).node_spacings
    values = np.diff(_pad_wall(f.values, axis, wall), axis=axis) / _along(h, axis)
    return GridField(f.grid, _shifted(f.lattice, axis), values)


def d_x(f: GridField) -> GridField:
    """(f_{i+1,m} - f_{i,m}) / h_{i+1/2}: integer x-index to half x-index"""
    return _small_d(f, 0, "d_x")


def d_y(f: GridField) -> GridField:
    return _small_d(f, 1, "d_y")


def D_x(f: GridField, wall: float = 0.0) -> GridField:
    """
    (f_{i+1/2,m} - f_{i-1/2,m}) / h_i: half x-index to integer x-index.

    The end entries i = 0, N_x difference against the wall value sitting at
    x_0 (resp. x_N), which is h_0 (resp. h_N) away from the first half node.
    """
    return _big_d(f, 0, wall, "D_x")


def D_y(f: GridField, wall: float = 0.0) -> GridField:
    return _big_d(f, 1, wall, "D_y")


def d_t(f_new: GridField, f_old: GridField, dt: float) -> GridField:
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    return (f_new - f_old) * (1.0 / dt)


def divergence(u: VelocityField) -> GridField:
    return d_x(u.x) + d_y(u.y)


# Interpolation


def _interp(f: GridField, axis: int, weighting: Weighting, wall: float) -> GridField:
    loc = f.lattice.x if axis == 0 else f.lattice.y
    ax = _axis(f.grid, axis)
    if loc is Loc.NODE:
        a = np.take(f.values, range(ax.n), axis=axis)
        b = np.take(f.values, range(1, ax.n + 1), axis=axis)
        return GridField(f.grid, _shifted(f.lattice, axis), 0.5 * (a + b))

    h = ax.half_spacings
    left = np.take(f.values, range(ax.n - 1), axis=axis)
    right = np.take(f.values, range(1, ax.n), axis=axis)
    h_left = _along(h[:-1], axis)
    h_right = _along(h[1:], axis)
    if Weighting(weighting) is Weighting.LINEAR:
        inner = h_left * right + h_right * left
    else:
        inner = h_right * right + h_left * left
    inner = inner / (2.0 * _along(ax.node_spacings[1:-1], axis))
    return GridField(f.grid, _shifted(f.lattice, axis), _pad_wall(inner, axis, wall))


def interp_x(f: GridField, weighting: Weighting = Weighting.LINEAR, wall: float = 0.0) -> GridField:
    """
    Linear interpolation in x (the operator P^x_h).

    Integer to half: midpoint average. Half to integer: ``linear`` is the
    linear interpolant through the two neighbouring half nodes;
    ``conservative`` weights each neighbour by its own cell width, which is
    the adjoint of the midpoint average in the weighted inner products. Both
    agree on uniform axes. Wall nodes take the wall value.
    """
    return _interp(f, 0, weighting, wall)


def interp_y(f: GridField, weighting: Weighting = Weighting.LINEAR, wall: float = 0.0) -> GridField:
    return _interp(f, 1, weighting, wall)


# Inner products and norms

_ALL = slice(None)
_INNER = slice(1, -1)


def _weighted_sum(f: GridField, g: GridField, lattice: Lattice, region: Tuple[slice, slice], name: str) -> float:
    for field in (f, g):
        if field.lattice != lattice:
            raise LatticeError(f"{name} needs {lattice.name} fields, got {field.lattice.name}")
    f._check_compatible(g)
    weights = lattice.weights(f.grid)[region]
    return float(np.sum(weights * f.values[region] * g.values[region]))


def ip_l2M(f: GridField, g: GridField) -> float:
    """Cell-centred product, weights h_{i+1/2} k_{j+1/2}"""
    return _weighted_sum(f, g, CELL, (_ALL, _ALL), "(.,.)_{l2,M}")


def ip_l2TM(f: GridField, g: GridField) -> float:
    """u^x product: i = 1..N_x-1, j = 0..N_y-1, weights h_i k_{j+1/2}"""
    return _weighted_sum(f, g, XFACE, (_INNER, _ALL), "(.,.)_{l2,T,M}")


def ip_l2MT(f: GridField, g: GridField) -> float:
    """u^y product: i = 0..N_x-1, j = 1..N_y-1, weights h_{i+1/2} k_j"""
    return _weighted_sum(f, g, YFACE, (_ALL, _INNER), "(.,.)_{l2,M,T}")


def ip_l2Tx(f: GridField, g: GridField) -> float:
    """Corner product: i = 0..N_x, j = 1..N_y-1, weights h_i k_j"""
    return _weighted_sum(f, g, CORNER, (_ALL, _INNER), "(.,.)_{l2,Tx}")


def ip_l2Ty(f: GridField, g: GridField) -> float:
    """Corner product: i = 1..N_x-1, j = 0..N_y, weights h_i k_j"""
    return _weighted_sum(f, g, CORNER, (_INNER, _ALL), "(.,.)_{l2,Ty}")


def norm_l2M(f: GridField) -> float:
    return float(np.sqrt(ip_l2M(f, f)))


def norm_vel_l2(u: VelocityField) -> float:
    return float(np.sqrt(ip_l2TM(u.x, u.x) + ip_l2MT(u.y, u.y)))


def norm_grad(u: VelocityField) -> float:
    """Discrete H^1 seminorm ||D u||"""
    dxx = d_x(u.x)
    dyy = d_y(u.y)
    dyx = D_y(u.x)
    dxy = D_x(u.y)
    total = ip_l2M(dxx, dxx) + ip_l2Ty(dyx, dyx) + ip_l2Tx(dxy, dxy) + ip_l2M(dyy, dyy)
    return float(np.sqrt(total))


_LINF_REGION = {
    CELL: (_ALL, _ALL),
    XFACE: (_INNER, _ALL),
    YFACE: (_ALL, _INNER),
    CORNER: (_ALL, _ALL),
}


def norm_linf(f: Union[GridField, VelocityField]) -> float:
    """Max |value| over the index range of the lattice's l2 product"""
    if isinstance(f, VelocityField):
        return max(norm_linf(f.x), norm_linf(f.y))
    region = _LINF_REGION[f.lattice]
    values = f.values[region]
    return float(np.abs(values).max()) if values.size else 0.0


def mean_l2M(f: GridField) -> float:
    return ip_l2M(f, GridField(f.grid, CELL, np.ones(CELL.shape(f.grid)))) / f.grid.area


def project_zero_mean(f: GridField) -> GridField:
    """The projection P_h: subtract the discrete cell mean"""
    return f - mean_l2M(f)


def sample_cells(grid: StaggeredGrid2D, func: Callable, t: Optional[float] = None) -> GridField:
    """Point values at the cell centres, of func(x, y) or func(x, y, t)"""
    if t is None:
        return GridField.sample(grid, CELL, func)
    return GridField.sample(grid, CELL, lambda X, Y: func(X, Y, t))
