"""
Manufactured solutions on the unit square and the compact-support case.

Every exact solution carries its analytic derivatives so the forcing
g = du/dt - mu*Laplacian(u) + grad(p) (+ (u.grad)u) is evaluated in closed form.
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Dict, Optional

import numpy as np

from solver.errors import ConfigurationError
from solver.fields import CORNER, GridField, VelocityField, d_x, d_y
from solver.forcing import ForcingMode, ForcingSpec
from solver.grid import StaggeredGrid2D

logger = logging.getLogger(__name__)

ScalarFunction = Callable[[np.ndarray, np.ndarray, float], np.ndarray]

PI = np.pi


class Model(str, Enum):
    STOKES = "stokes"
    NS = "ns"


@dataclass(frozen=True)
class ExactSolution:
    """Velocity, unit-amplitude pressure and the derivatives the forcing needs"""

    ux: ScalarFunction
    uy: ScalarFunction
    p: ScalarFunction
    ux_t: ScalarFunction
    uy_t: ScalarFunction
    ux_x: ScalarFunction
    ux_y: ScalarFunction
    uy_x: ScalarFunction
    uy_y: ScalarFunction
    lap_ux: ScalarFunction
    lap_uy: ScalarFunction
    p_x: ScalarFunction
    p_y: ScalarFunction


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    solution: ExactSolution
    lam: float = 1.0
    mu: float = 1.0
    model: Model = Model.STOKES
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if not self.mu > 0.0:
            raise ConfigurationError(f"mu must be positive, got {self.mu}")
        if not np.isfinite(self.lam):
            raise ConfigurationError(f"lambda must be finite, got {self.lam}")
        self._check_solenoidal()
        self._check_boundary()

    def _check_solenoidal(self, samples: int = 100):
        rng = np.random.default_rng(0)
        x, y, t = rng.uniform(0.0, 1.0, (3, samples))
        s = self.solution
        div = s.ux_x(x, y, t) + s.uy_y(x, y, t)
        scale = max(1.0, float(np.abs(s.ux_x(x, y, t)).max()))
        if np.abs(div).max() > 1e-12 * scale:
            raise ConfigurationError(f"{self.name}: exact velocity is not divergence free")

    def _check_boundary(self, samples: int = 25):
        s = self.solution
        r = np.linspace(0.0, 1.0, samples)
        zero, one = np.zeros_like(r), np.ones_like(r)
        for x, y in ((zero, r), (one, r), (r, zero), (r, one)):
            for func in (s.ux, s.uy):
                if np.abs(func(x, y, 1.0)).max() > 1e-12:
                    raise ConfigurationError(f"{self.name}: exact velocity violates the no-slip condition")

    def with_params(
        self, lam: Optional[float] = None, mu: Optional[float] = None, model: Optional[Model] = None
    ) -> "ManufacturedCase":
        return replace(
            self,
            lam=self.lam if lam is None else lam,
            mu=self.mu if mu is None else mu,
            model=self.model if model is None else model,
        )

    def velocity_x(self, x, y, t):
        return self.solution.ux(x, y, t)

    def velocity_y(self, x, y, t):
        return self.solution.uy(x, y, t)

    def pressure(self, x, y, t):
        return self.lam * self.solution.p(x, y, t)

    def g_x(self, x, y, t):
        s = self.solution
        g = s.ux_t(x, y, t) - self.mu * s.lap_ux(x, y, t) + self.lam * s.p_x(x, y, t)
        if self.model is Model.NS:
            g = g + s.ux(x, y, t) * s.ux_x(x, y, t) + s.uy(x, y, t) * s.ux_y(x, y, t)
        return g

    def g_y(self, x, y, t):
        s = self.solution
        g = s.uy_t(x, y, t) - self.mu * s.lap_uy(x, y, t) + self.lam * s.p_y(x, y, t)
        if self.model is Model.NS:
            g = g + s.ux(x, y, t) * s.uy_x(x, y, t) + s.uy(x, y, t) * s.uy_y(x, y, t)
        return g

    def forcing_spec(self, mode: ForcingMode = ForcingMode.AVERAGED, quadrature_order: int = 6) -> ForcingSpec:
        return ForcingSpec(self.g_x, self.g_y, mode=mode, quadrature_order=quadrature_order)

    def exact_velocity(self, grid: StaggeredGrid2D, t: float) -> VelocityField:
        return VelocityField.sample(
            grid,
            lambda X, Y: self.velocity_x(X, Y, t),
            lambda X, Y: self.velocity_y(X, Y, t),
        )

    def initial_velocity(self, grid: StaggeredGrid2D) -> VelocityField:
        return self.exact_velocity(grid, 0.0)


def _example1_solution() -> ExactSolution:
    a = np.exp
    s, c = np.sin, np.cos

    def ux(x, y, t):
        return PI * a(t) * s(PI * x) ** 2 * s(2 * PI * y)

    def uy(x, y, t):
        return -PI * a(t) * s(2 * PI * x) * s(PI * y) ** 2

    def p(x, y, t):
        return a(t) * s(4 * PI * x) ** 3 * s(4 * PI * y) ** 3

    return ExactSolution(
        ux=ux,
        uy=uy,
        p=p,
        ux_t=ux,
        uy_t=uy,
        ux_x=lambda x, y, t: PI**2 * a(t) * s(2 * PI * x) * s(2 * PI * y),
        ux_y=lambda x, y, t: 2 * PI**2 * a(t) * s(PI * x) ** 2 * c(2 * PI * y),
        uy_x=lambda x, y, t: -2 * PI**2 * a(t) * c(2 * PI * x) * s(PI * y) ** 2,
        uy_y=lambda x, y, t: -(PI**2) * a(t) * s(2 * PI * x) * s(2 * PI * y),
        lap_ux=lambda x, y, t: 2 * PI**3 * a(t) * s(2 * PI * y) * (c(2 * PI * x) - 2 * s(PI * x) ** 2),
        lap_uy=lambda x, y, t: -2 * PI**3 * a(t) * s(2 * PI * x) * (c(2 * PI * y) - 2 * s(PI * y) ** 2),
        p_x=lambda x, y, t: 12 * PI * a(t) * s(4 * PI * x) ** 2 * c(4 * PI * x) * s(4 * PI * y) ** 3,
        p_y=lambda x, y, t: 12 * PI * a(t) * s(4 * PI * x) ** 3 * s(4 * PI * y) ** 2 * c(4 * PI * y),
    )


# polynomial profiles of the second example
def _X(s):
    return s**2 * (s - 1) ** 2


def _Y(s):
    return 2 * s**3 - 3 * s**2 + s


def _dY(s):
    return 6 * s**2 - 6 * s + 1


def _d2X(s):
    return 2 * _dY(s)


def _d2Y(s):
    return 12 * s - 6


def _example2_solution() -> ExactSolution:
    e = np.exp

    def ux(x, y, t):
        return -256 * t * _X(x) * _Y(y)

    def uy(x, y, t):
        return 256 * t * _X(y) * _Y(x)

    def p(x, y, t):
        return 10 * e(t) * ((x - 0.5) ** 3 * y**2 + (1 - x) ** 3 * (y - 0.5) ** 3)

    return ExactSolution(
        ux=ux,
        uy=uy,
        p=p,
        ux_t=lambda x, y, t: -256 * _X(x) * _Y(y),
        uy_t=lambda x, y, t: 256 * _X(y) * _Y(x),
        ux_x=lambda x, y, t: -512 * t * _Y(x) * _Y(y),
        ux_y=lambda x, y, t: -256 * t * _X(x) * _dY(y),
        uy_x=lambda x, y, t: 256 * t * _X(y) * _dY(x),
        uy_y=lambda x, y, t: 512 * t * _Y(y) * _Y(x),
        lap_ux=lambda x, y, t: -256 * t * (_d2X(x) * _Y(y) + _X(x) * _d2Y(y)),
        lap_uy=lambda x, y, t: 256 * t * (_d2X(y) * _Y(x) + _X(y) * _d2Y(x)),
        p_x=lambda x, y, t: 10 * e(t) * (3 * (x - 0.5) ** 2 * y**2 - 3 * (1 - x) ** 2 * (y - 0.5) ** 3),
        p_y=lambda x, y, t: 10 * e(t) * (2 * (x - 0.5) ** 3 * y + 3 * (1 - x) ** 3 * (y - 0.5) ** 2),
    )


def example1(lam: float = 1.0, mu: float = 1.0, model: Model = Model.STOKES) -> ManufacturedCase:
    return ManufacturedCase(
        name="example1",
        solution=_example1_solution(),
        lam=lam,
        mu=mu,
        model=model,
        description=(
            "u^x = pi e^t sin^2(pi x) sin(2 pi y), u^y = -pi e^t sin(2 pi x) sin^2(pi y), "
            "p = lambda e^t sin^3(4 pi x) sin^3(4 pi y)"
        ),
    )


def example2(lam: float = 1.0, mu: float = 1.0, model: Model = Model.NS) -> ManufacturedCase:
    return ManufacturedCase(
        name="example2",
        solution=_example2_solution(),
        lam=lam,
        mu=mu,
        model=model,
        description=(
            "u^x = -256 t x^2(x-1)^2 y(y-1)(2y-1), u^y(x, y, t) = -u^x(y, x, t), "
            "p = 10 lambda e^t ((x-0.5)^3 y^2 + (1-x)^3 (y-0.5)^3)"
        ),
    )


CASES: Dict[str, Callable[..., ManufacturedCase]] = {
    "example1": example1,
    "example2": example2,
}

COMPACT = "compact"

COMPACT_DESCRIPTION = (
    "zero forcing; discretely solenoidal initial velocity from a seeded random stream "
    "function vanishing on the two outermost index layers"
)


def get_case(
    name: str, lam: float = 1.0, mu: float = 1.0, model: Optional[Model] = None
) -> ManufacturedCase:
    try:
        factory = CASES[name]
    except KeyError:
        raise ConfigurationError(f"Unknown case '{name}', expected one of {sorted(CASES)}") from None
    case = factory(lam=lam, mu=mu)
    return case if model is None else case.with_params(model=model)


def case_names():
    return sorted(CASES) + [COMPACT]


def compact_support_velocity(grid: StaggeredGrid2D, seed: int = 11, amplitude: float = 1.0) -> VelocityField:
    """
    W = (d_y psi, -d_x psi) for a random corner stream function psi supported
    on corners 2..N-2 of both axes.

    W is discretely divergence free and vanishes on the two outermost layers
    of both velocity lattices.
    """
    if grid.nx < 5 or grid.ny < 5:
        raise ConfigurationError(f"compact support needs at least 5x5 cells, got {grid.nx}x{grid.ny}")
    if not amplitude > 0.0:
        raise ConfigurationError(f"amplitude must be positive, got {amplitude}")
    rng = np.random.default_rng(seed)
    psi = np.zeros(CORNER.shape(grid))
    psi[2:-2, 2:-2] = rng.standard_normal((grid.nx - 3, grid.ny - 3))
    stream = GridField(grid, CORNER, psi)
    w = VelocityField(d_y(stream), -d_x(stream))
    w = w * (amplitude / w.max_abs())
    logger.debug(f"Compact-support velocity seed={seed} on {grid!r}")
    return w
