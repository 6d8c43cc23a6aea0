"""Conductance-weighted random walks on lattices.

Trials are grouped into blocks of ``WalkConfig.block_size``; each block draws
from its own child of ``SeedSequence(seed)``, so blocks can run on any number
of threads and the totals do not depend on completion order. Within a block,
steps are drawn in chunks of :data:`CHUNK_STEPS` and a chunk is always drawn
whole, which makes the walk of every trial a prefix of the same walk with a
larger ``max_steps``.
"""

from __future__ import annotations

import bisect
import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ohmnet.approximation import SwellingSequence, fit_trend, resistance_to_infinity
from ohmnet.lattices import LatticeId, LatticeSpec
from ohmnet.schema import (
    EscapeEstimate,
    ResistanceSeries,
    SolveConfig,
    WalkConfig,
    WalkStats,
)

logger = logging.getLogger(__name__)

CHUNK_STEPS = 1000


def transition_table(lattice: LatticeSpec, v: LatticeId) -> tuple[tuple[LatticeId, Fraction], ...]:
    """Exact step probabilities ``c(e) / sum(c)`` for every edge at ``v``.

    Parallel edges to the same neighbor appear as separate entries.
    """
    lattice.check_vertex(v)
    entries = [(w, Fraction(c)) for w, c in lattice.neighbors(v)]
    total = sum((c for _, c in entries), Fraction(0))
    return tuple((w, c / total) for w, c in entries)


def cumulative_table(lattice: LatticeSpec, v: LatticeId) -> tuple[Fraction, ...]:
    """Running sums of :func:`transition_table`; the last entry is exactly 1."""
    running = Fraction(0)
    table = []
    for _, probability in transition_table(lattice, v):
        running += probability
        table.append(running)
    return tuple(table)


@functools.lru_cache(maxsize=1024)
def step_bounds(conductances: tuple[float, ...]) -> tuple[float, ...]:
    """Float cumulative step probabilities for a vertex with these edge conductances.

    Computed exactly and rounded once, so the last bound is exactly 1.0.
    Vertices with the same conductance pattern share one cached table.
    """
    running = Fraction(0)
    total = sum((Fraction(c) for c in conductances), Fraction(0))
    bounds = []
    for c in conductances:
        running += Fraction(c) / total
        bounds.append(float(running))
    return tuple(bounds)


def _pick(lattice: LatticeSpec, v: LatticeId, u: float) -> LatticeId:
    neighbors = lattice.neighbors(v)
    bounds = step_bounds(tuple(c for _, c in neighbors))
    return neighbors[min(bisect.bisect_right(bounds, u), len(neighbors) - 1)][0]


def walk_step(lattice: LatticeSpec, v: LatticeId, rng: np.random.Generator) -> LatticeId:
    """One step from ``v`` along an edge chosen with probability proportional
    to its conductance."""
    return _pick(lattice, v, float(rng.random()))


@dataclass(frozen=True)
class _BlockTally:
    trials: int
    returns: int
    return_steps: int


def _vectorized_block(
    steps: np.ndarray, trials: int, max_steps: int, seed: np.random.SeedSequence
) -> _BlockTally:
    # displacement from the start; a return is a zero displacement
    rng = np.random.default_rng(seed)
    position = np.zeros((trials, steps.shape[1]), dtype=np.int32)
    active = np.arange(trials)
    returns = return_steps = 0
    for offset in range(0, max_steps, CHUNK_STEPS):
        if active.size == 0:
            break
        length = min(CHUNK_STEPS, max_steps - offset)
        choices = rng.integers(0, len(steps), size=(active.size, CHUNK_STEPS))
        path = position[active, None, :] + np.cumsum(
            steps[choices[:, :length]], axis=1, dtype=np.int32
        )
        home = ~path.any(axis=2)
        returned = home.any(axis=1)
        first = np.argmax(home[returned], axis=1)
        returns += int(returned.sum())
        return_steps += int(np.sum(first + offset + 1))
        position[active] = path[:, -1, :]
        active = active[~returned]
    return _BlockTally(trials, returns, return_steps)


def _generic_block(
    lattice: LatticeSpec,
    start: LatticeId,
    trials: int,
    max_steps: int,
    seed: np.random.SeedSequence,
) -> _BlockTally:
    returns = return_steps = 0
    for trial_seed in seed.spawn(trials):
        rng = np.random.default_rng(trial_seed)
        v = start
        step = 0
        while step < max_steps:
            uniforms = rng.random(CHUNK_STEPS)
            for u in uniforms[: max_steps - step]:
                step += 1
                v = _pick(lattice, v, float(u))
                if v == start:
                    break
            if v == start:
                returns += 1
                return_steps += step
                break
    return _BlockTally(trials, returns, return_steps)


def return_frequency(
    lattice: LatticeSpec, cfg: WalkConfig, workers: int | None = None
) -> WalkStats:
    """Fraction of walks from ``cfg.start`` that revisit it within ``cfg.max_steps``.

    Translation-invariant unit-conductance lattices walk all trials of a
    block at once; other lattices walk trial by trial.

    Args:
        lattice: The lattice to walk on.
        cfg: Step limit, trial count, seed and starting vertex.
        workers: Thread count for running blocks concurrently.

    Returns:
        WalkStats: Deterministic for a given ``cfg``.
    """
    start = lattice.origin() if cfg.start is None else lattice.check_vertex(cfg.start)
    sizes = [
        min(cfg.block_size, cfg.trials - offset)
        for offset in range(0, cfg.trials, cfg.block_size)
    ]
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    steps = lattice.step_vectors

    def run(index: int) -> _BlockTally:
        if steps is not None:
            tally = _vectorized_block(steps, sizes[index], cfg.max_steps, seeds[index])
        else:
            tally = _generic_block(lattice, start, sizes[index], cfg.max_steps, seeds[index])
        logger.debug("Walk block %d: %d of %d returned", index, tally.returns, tally.trials)
        return tally

    if workers is None or workers <= 1 or len(sizes) <= 1:
        tallies = [run(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tallies = list(pool.map(run, range(len(sizes))))

    returns = sum(t.returns for t in tallies)
    return_steps = sum(t.return_steps for t in tallies)
    frequency = returns / cfg.trials
    return WalkStats(
        seed=cfg.seed,
        trials=cfg.trials,
        max_steps=cfg.max_steps,
        returns=returns,
        return_frequency=frequency,
        standard_error=math.sqrt(frequency * (1.0 - frequency) / cfg.trials),
        mean_first_return_step=return_steps / returns if returns else None,
    )


def escape_probability_via_resistance(
    lattice: LatticeSpec,
    p: LatticeId,
    seq: SwellingSequence,
    cfg: SolveConfig | None = None,
    plateau_tolerance: float = 1e-3,
    workers: int | None = None,
) -> EscapeEstimate:
    """Probability of never returning to ``p``, from the resistance to infinity.

    On a plateau the estimate is ``1 / (vertex conductance * last resistance)``;
    a diverging series gives 0; anything else is reported as indeterminate
    with no probability.
    """
    series = resistance_to_infinity(lattice, p, seq, cfg, workers)
    return escape_from_series(lattice, p, series, plateau_tolerance)


def escape_from_series(
    lattice: LatticeSpec,
    p: LatticeId,
    series: ResistanceSeries,
    plateau_tolerance: float = 1e-3,
) -> EscapeEstimate:
    trend = fit_trend(series, plateau_tolerance=plateau_tolerance)
    conductance = math.fsum(c for _, c in lattice.neighbors(p))
    resistance = series.final
    if trend.label == "plateau":
        status, probability = "plateau", 1.0 / (conductance * resistance)
    elif trend.label in ("diverging-linear", "diverging-log"):
        status, probability = "diverging", 0.0
    else:
        status, probability = "indeterminate", None
    return EscapeEstimate(
        status=status,
        probability=probability,
        resistance=resistance,
        vertex_conductance=conductance,
        trend=trend,
    )
