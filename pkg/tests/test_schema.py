import math

import pytest
from pydantic import ValidationError

from ohmnet.schema import (
    Bracket,
    ConvergenceError,
    PreconditionError,
    ResistanceSeries,
    SolveConfig,
    WalkConfig,
    WalkStats,
)


def test_solve_config_defaults() -> None:
    cfg = SolveConfig()

    assert cfg.residual_tolerance == 1e-10
    assert cfg.preconditioner == "diagonal"
    assert cfg.iteration_budget(50) == 1000
    assert SolveConfig(max_iterations=7).iteration_budget(50) == 7


def test_solve_config_validation() -> None:
    with pytest.raises(ValidationError, match="residual_tolerance"):
        SolveConfig(residual_tolerance=0.0)
    with pytest.raises(ValidationError, match="max_iterations"):
        SolveConfig(max_iterations=0)
    with pytest.raises(ValidationError):
        SolveConfig(preconditioner="jacobi")


def test_model_dump_drops_none() -> None:
    dumped = SolveConfig().model_dump()

    assert "max_iterations" not in dumped
    assert '"max_iterations"' not in SolveConfig().model_dump_json()


def test_walk_config_validation() -> None:
    cfg = WalkConfig(max_steps=10, trials=5, seed=7)
    assert cfg.start is None
    assert cfg.block_size == 1000

    with pytest.raises(ValidationError):
        WalkConfig(max_steps=0, trials=5)
    with pytest.raises(ValidationError):
        WalkConfig(max_steps=10, trials=0)
    with pytest.raises(ValidationError, match="seed"):
        WalkConfig(max_steps=10, trials=5, seed=2**64)


def test_walk_stats_standard_error() -> None:
    f = 0.3
    stats = WalkStats(
        seed=1,
        trials=100,
        max_steps=10,
        returns=30,
        return_frequency=f,
        standard_error=math.sqrt(f * (1 - f) / 100),
    )
    assert stats.mean_first_return_step is None

    with pytest.raises(ValidationError, match="standard_error"):
        WalkStats(
            seed=1,
            trials=100,
            max_steps=10,
            returns=30,
            return_frequency=f,
            standard_error=0.1,
        )


def test_bracket() -> None:
    bracket = Bracket(
        radius=2, vertices=25, edges=40, short_resistance=0.45, cut_resistance=0.6
    )
    assert bracket.gap == pytest.approx(0.15)
    assert bracket.contains(0.5)
    assert not bracket.contains(0.7)
    assert bracket.is_ordered()
    assert not bracket.disconnected


def test_resistance_series() -> None:
    series = ResistanceSeries(kind="even", rows=((1, 2.0), (2, 1.5)))
    assert series.radii == [1, 2]
    assert series.values == [2.0, 1.5]
    assert series.final == 1.5
    with pytest.raises(ValueError, match="empty"):
        ResistanceSeries(kind="odd", rows=()).final


def test_errors_carry_details() -> None:
    error = ConvergenceError("stuck", residual=1e-3, iterations=40)
    assert error.message == "stuck"
    assert error.iterations == 40
    assert isinstance(error, RuntimeError)

    error = PreconditionError("split", component=(3, 4))
    assert error.component == (3, 4)
    assert isinstance(error, ValueError)


if __name__ == "__main__":
    pytest.main()
