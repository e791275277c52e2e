"""
Discrete momentum right-hand sides.

RMAC uses finite-volume line averages of the forcing over the momentum
control volume, MAC uses point samples at the velocity nodes.
"""
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np

from solver.errors import ForcingError
from solver.fields import XFACE, YFACE, D_x, D_y, GridField, VelocityField, sample_cells
from solver.grid import Axis1D, StaggeredGrid2D

ScalarFunction = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


class ForcingMode(str, Enum):
    AVERAGED = "averaged"
    POINTWISE = "pointwise"


def _zero(x, y, t):
    return np.zeros(np.broadcast(x, y).shape)


@dataclass(frozen=True)
class ForcingSpec:
    g_x: ScalarFunction
    g_y: ScalarFunction
    mode: ForcingMode = ForcingMode.AVERAGED
    quadrature_order: int = 6
    vanishes: bool = False

    def __post_init__(self):
        if int(self.quadrature_order) < 1:
            raise ForcingError(f"quadrature_order must be >= 1, got {self.quadrature_order}")
        object.__setattr__(self, "mode", ForcingMode(self.mode))

    @classmethod
    def zero(cls, mode: ForcingMode = ForcingMode.AVERAGED) -> "ForcingSpec":
        return cls(_zero, _zero, mode=mode, vanishes=True)

    def with_mode(self, mode: ForcingMode) -> "ForcingSpec":
        return replace(self, mode=ForcingMode(mode))

    def plus(self, g_x: ScalarFunction, g_y: ScalarFunction) -> "ForcingSpec":
        """This forcing plus the analytic field (g_x, g_y), e.g. a gradient"""
        fx, fy = self.g_x, self.g_y
        return replace(
            self,
            g_x=lambda x, y, t: fx(x, y, t) + g_x(x, y, t),
            g_y=lambda x, y, t: fy(x, y, t) + g_y(x, y, t),
            vanishes=False,
        )


@lru_cache(maxsize=32)
def _gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def _evaluate(func: ScalarFunction, x: np.ndarray, y: np.ndarray, t: float, name: str) -> np.ndarray:
    try:
        values = np.broadcast_to(np.asarray(func(x, y, t), dtype=float), np.broadcast(x, y).shape)
    except (TypeError, ValueError) as exc:
        raise ForcingError(f"{name} could not be evaluated: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise ForcingError(f"{name} returned non-finite values at t={t}")
    return values


def _control_volume_rule(axis: Axis1D, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Quadrature points/weights on [x_{i-1/2}, x_{i+1/2}] for interior nodes.

    Each control volume is split at x_i and gets ``order`` Gauss points per
    half. Shapes (N-1, 2*order).
    """
    q, w = _gauss_legendre(order)
    lo = np.stack((axis.midpoints[:-1], axis.nodes[1:-1]), axis=1)
    hi = np.stack((axis.nodes[1:-1], axis.midpoints[1:]), axis=1)
    half = (hi - lo)[:, :, None] / 2.0
    points = lo[:, :, None] + half * (q[None, None, :] + 1.0)
    weights = half * w[None, None, :]
    return points.reshape(axis.n - 1, -1), weights.reshape(axis.n - 1, -1)


def _average_x(func: ScalarFunction, grid: StaggeredGrid2D, t: float, order: int) -> np.ndarray:
    points, weights = _control_volume_rule(grid.x_axis, order)
    y = grid.y_axis.midpoints
    samples = _evaluate(func, points[:, :, None], y[None, None, :], t, "g_x")
    integral = np.einsum("iq,iqj->ij", weights, samples)
    return integral / grid.x_axis.node_spacings[1:-1, None]


def _average_y(func: ScalarFunction, grid: StaggeredGrid2D, t: float, order: int) -> np.ndarray:
    points, weights = _control_volume_rule(grid.y_axis, order)
    x = grid.x_axis.midpoints
    samples = _evaluate(func, x[:, None, None], points[None, :, :], t, "g_y")
    integral = np.einsum("jq,ijq->ij", weights, samples)
    return integral / grid.y_axis.node_spacings[None, 1:-1]


def assemble_rhs(spec: ForcingSpec, grid: StaggeredGrid2D, t: float) -> VelocityField:
    """
    Discrete forcing (f^x, f^y) on the velocity lattices at time t.

    Only momentum rows carry values; the Dirichlet rows stay zero.
    """
    fx = np.zeros(XFACE.shape(grid))
    fy = np.zeros(YFACE.shape(grid))
    if not spec.vanishes:
        if spec.mode is ForcingMode.AVERAGED:
            fx[1:-1, :] = _average_x(spec.g_x, grid, t, spec.quadrature_order)
            fy[:, 1:-1] = _average_y(spec.g_y, grid, t, spec.quadrature_order)
        else:
            X, Y = XFACE.coords(grid)
            fx[1:-1, :] = _evaluate(spec.g_x, X[1:-1, :], Y[1:-1, :], t, "g_x")
            X, Y = YFACE.coords(grid)
            fy[:, 1:-1] = _evaluate(spec.g_y, X[:, 1:-1], Y[:, 1:-1], t, "g_y")
    return VelocityField(GridField(grid, XFACE, fx), GridField(grid, YFACE, fy))


def gradient_perturbation(phi: ScalarFunction, grid: StaggeredGrid2D, t: float) -> VelocityField:
    """
    Averaged right-hand side of grad(phi).

    The control-volume average of d(phi)/dx over [x_{i-1/2}, x_{i+1/2}] is
    exactly the difference of phi at the two cell centres over h_i, i.e.
    D_x applied to the cell samples of phi (and likewise in y).
    """
    cells = sample_cells(grid, phi, t)
    gx = D_x(cells).values.copy()
    gy = D_y(cells).values.copy()
    gx[0, :] = gx[-1, :] = 0.0
    gy[:, 0] = gy[:, -1] = 0.0
    return VelocityField(GridField(grid, XFACE, gx), GridField(grid, YFACE, gy))

