import logging
from functools import lru_cache
from pathlib import Path
from typing import Dict, Mapping, Union

from pydantic_settings import BaseSettings, SettingsConfigDict

from solver.errors import ConfigurationError
from solver.experiments import SolverOptions
from solver.stokes import LinearSolverKind


class Settings(BaseSettings):
    """Process-wide defaults, read from RMAC_* environment variables or .env"""

    model_config = SettingsConfigDict(env_prefix="RMAC_", env_file=".env", extra="ignore")

    output_dir: Path = Path("results")
    log_level: str = "INFO"
    solver_tol: float = 1e-10
    picard_tol: float = 1e-10
    picard_max_iters: int = 50
    quadrature_order: int = 6
    max_workers: int = 1
    linear_solver: LinearSolverKind = LinearSolverKind.DIRECT

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            solver_tol=self.solver_tol,
            linear_solver=self.linear_solver,
            picard_tol=self.picard_tol,
            picard_max_iters=self.picard_max_iters,
            quadrature_order=self.quadrature_order,
        )


@lru_cache()
def get_settings() -> Settings:
    return Settings()


def configure_logging(level: str = "INFO"):
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def parse_config_text(text: str) -> Dict[str, str]:
    """Flat ``key = value`` lines; blank lines and ``#`` comments are skipped"""
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigurationError(f"line {number}: expected 'key = value', got '{raw.strip()}'")
        if key in values:
            raise ConfigurationError(f"line {number}: duplicate key '{key}'")
        values[key] = value
    return values


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"Cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)


def format_config(values: Mapping[str, object]) -> str:
    return "".join(f"{key} = {value}\n" for key, value in values.items())
