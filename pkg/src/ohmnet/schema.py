from __future__ import annotations

import math
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, field_validator, model_validator


class PreconditionError(ValueError):
    """Exception raised when an input violates an operation's precondition.

    Typical causes are a disconnected network, an unbalanced source
    distribution handed to an operation that needs a balanced one, or a
    vertex that lies outside the finite subset being materialized. When the
    failure is a disconnection, ``component`` holds the vertices of a
    component that was stranded from the rest.
    """

    def __init__(self, message: str, component: tuple[Any, ...] | None = None):
        self.message = message
        self.component = component
        super().__init__(self.message)


class ConvergenceError(RuntimeError):
    """Exception raised when an iterative solve exhausts its iteration budget."""

    def __init__(self, message: str, residual: float, iterations: int):
        self.message = message
        self.residual = residual
        self.iterations = iterations
        super().__init__(self.message)


class CapacityError(ValueError):
    """Exception raised when an exhaustive computation is asked for a graph
    larger than it is allowed to enumerate."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class UnsupportedLatticeError(ValueError):
    """Exception raised when a lattice kind has no closed form for the
    requested quantity."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class _Model(BaseModel):
    model_config = ConfigDict(frozen=True)

    def model_dump(self, **kwargs):
        return super().model_dump(exclude_none=True, **kwargs)

    def model_dump_json(self, **kwargs):
        return super().model_dump_json(exclude_none=True, **kwargs)


class SolveConfig(_Model):
    residual_tolerance: float = 1e-10
    """Relative residual ``||b - Ax|| / ||b||`` at which the iteration stops."""
    max_iterations: int | None = None
    """Iteration budget; ``None`` means 20 times the vertex count."""
    preconditioner: Literal["none", "diagonal"] = "diagonal"

    @field_validator("residual_tolerance")
    @classmethod
    def check_tolerance(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError("`residual_tolerance` must lie in (0, 1)")
        return v

    @field_validator("max_iterations")
    @classmethod
    def check_iterations(cls, v: int | None) -> int | None:
        if v is not None and v < 1:
            raise ValueError("`max_iterations` must be at least 1")
        return v

    def iteration_budget(self, vertex_count: int) -> int:
        return self.max_iterations or max(1, 20 * vertex_count)


class Bracket(_Model):
    """Short-side and cut-side resistances of one finite subset."""

    radius: int
    vertices: int
    """Size of the finite subset S."""
    edges: int
    """Number of lattice edges internal to S."""
    short_resistance: float
    cut_resistance: float
    """``math.inf`` when cutting separates p from q."""
    disconnected: bool = False

    @property
    def gap(self) -> float:
        return self.cut_resistance - self.short_resistance

    def contains(self, value: float, slack: float = 1e-8) -> bool:
        return self.short_resistance - slack <= value <= self.cut_resistance + slack

    def is_ordered(self, slack: float = 1e-8) -> bool:
        return self.short_resistance <= self.cut_resistance + slack


class ResistanceSeries(_Model):
    """Radius-indexed resistance values along a swelling sequence."""

    kind: Literal["even", "odd", "infinity"]
    rows: tuple[tuple[int, float], ...]

    @property
    def radii(self) -> list[int]:
        return [radius for radius, _ in self.rows]

    @property
    def values(self) -> list[float]:
        return [value for _, value in self.rows]

    @property
    def final(self) -> float:
        if not self.rows:
            raise ValueError("empty resistance series")
        return self.rows[-1][1]


class TrendFit(_Model):
    label: Literal["diverging-linear", "diverging-log", "plateau", "indeterminate"]
    slope: float | None = None
    """Slope against r (linear) or log r (log); ``None`` for plateau."""
    intercept: float | None = None
    r_squared: float | None = None
    last_increment: float | None = None
    """Last change of the series per unit radius."""


class EscapeEstimate(_Model):
    status: Literal["plateau", "diverging", "indeterminate"]
    probability: float | None = None
    """Probability of never returning; 0 for a diverging series."""
    resistance: float | None = None
    """Resistance to infinity used for the estimate (last term)."""
    vertex_conductance: float
    trend: TrendFit


class FosterReport(_Model):
    """Foster averages over the cut and short networks of one ball."""

    radius: int
    vertices: int
    cut_edges: int
    short_edges: int
    cut_average: float
    """``(|S| - 1) / E_cut``, Foster's value for the cut network."""
    short_average: float
    """``|S| / E_short``, Foster's value for the short network."""
    limit: float
    """``2 / average_valence`` of the lattice."""
    cut_solved: float | None = None
    short_solved: float | None = None


class WalkConfig(_Model):
    max_steps: int
    trials: int
    seed: int = 0
    start: tuple[int, ...] | int | None = None
    """Starting vertex; ``None`` means the lattice origin."""
    block_size: int = 1000
    """Trials per independently seeded stream."""

    @field_validator("max_steps", "trials", "block_size")
    @classmethod
    def check_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("`max_steps`, `trials` and `block_size` must be at least 1")
        return v

    @field_validator("seed")
    @classmethod
    def check_seed(cls, v: int) -> int:
        if not 0 <= v < 2**64:
            raise ValueError("`seed` must be a non-negative 64-bit integer")
        return v


class WalkStats(_Model):
    seed: int
    trials: int
    max_steps: int
    returns: int
    return_frequency: float
    standard_error: float
    mean_first_return_step: float | None = None

    @model_validator(mode="after")
    def check_frequency(self) -> WalkStats:
        if not 0.0 <= self.return_frequency <= 1.0:
            raise ValueError("`return_frequency` must lie in [0, 1]")
        expected = math.sqrt(
            self.return_frequency * (1.0 - self.return_frequency) / self.trials
        )
        if not math.isclose(self.standard_error, expected, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError("`standard_error` must be the binomial standard error")
        return self


class RunManifest(_Model):
    command: str
    parameters: dict[str, Any] = {}
    version: str
    timestamp: str
    seed: int | None = None
