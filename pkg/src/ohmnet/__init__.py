# SPDX-FileCopyrightText: 2024-present Mo Zhou <weekenthralling@gmain.com>
#
# SPDX-License-Identifier: Apache-2.0

from ohmnet.approximation import (
    INFINITY,
    SwellingSequence,
    bracket_series,
    cut_network,
    even_resistance_estimate,
    odd_resistance_estimate,
    resistance_bracket,
    resistance_to_infinity,
    short_network,
)
from ohmnet.flows import even_flow, ghost_flow_estimate, odd_flow
from ohmnet.lattices import LatticeSpec, lattice_from_name
from ohmnet.network import Flow, Network, Potential, SourceDistribution
from ohmnet.randomwalk import escape_probability_via_resistance, return_frequency
from ohmnet.schema import (
    CapacityError,
    ConvergenceError,
    PreconditionError,
    SolveConfig,
    UnsupportedLatticeError,
    WalkConfig,
)
from ohmnet.solver import effective_resistance, foster_average, solve_potential

__all__ = [
    "INFINITY",
    "CapacityError",
    "ConvergenceError",
    "Flow",
    "LatticeSpec",
    "Network",
    "Potential",
    "PreconditionError",
    "SolveConfig",
    "SourceDistribution",
    "SwellingSequence",
    "UnsupportedLatticeError",
    "WalkConfig",
    "bracket_series",
    "cut_network",
    "effective_resistance",
    "escape_probability_via_resistance",
    "even_flow",
    "even_resistance_estimate",
    "foster_average",
    "ghost_flow_estimate",
    "lattice_from_name",
    "odd_flow",
    "odd_resistance_estimate",
    "resistance_bracket",
    "resistance_to_infinity",
    "return_frequency",
    "short_network",
    "solve_potential",
]
