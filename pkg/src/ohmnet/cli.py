"""Command-line entry point: ``ohmnet <command> ...``.

Tables go to standard output as CSV (or JSON with ``--json``); the run
manifest and log records go to standard error unless ``--manifest`` names a
file. Exit status is 0 on success, 2 for usage and precondition errors and 3
for numerical failures and violated invariants.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys
from collections.abc import Sequence
from datetime import datetime, timezone
from typing import IO, Any

from ohmnet.__about__ import __version__
from ohmnet.approximation import (
    SwellingSequence,
    bracket_series,
    fit_trend,
    lattice_foster_report,
    resistance_to_infinity,
    write_bracket_csv,
)
from ohmnet.lattices import LATTICES, lattice_from_name
from ohmnet.network import Network, read_edge_list
from ohmnet.randomwalk import escape_from_series, return_frequency
from ohmnet.schema import (
    ConvergenceError,
    PreconditionError,
    RunManifest,
    SolveConfig,
    WalkConfig,
)
from ohmnet.solver import (
    edge_resistances,
    foster_average,
    require_connected,
    spanning_tree_edge_probabilities,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

THREADS_ENV = "OHMNET_THREADS"
COORDINATE_OPTIONS = ("--p", "--q", "--center", "--start")
_NEGATIVE_COORDINATES = re.compile(r"^-\d+(,-?\d+)*(:\d+)?$")
MONOTONE_SLACK = 1e-8

WALK_CSV_COLUMNS = (
    "seed",
    "trials",
    "max_steps",
    "returns",
    "return_frequency",
    "standard_error",
    "mean_first_return_step",
)
TREEPROB_CSV_COLUMNS = ("edge", "tail", "head", "probability", "resistance", "difference")


class InvariantViolation(RuntimeError):
    """Raised when a computed table breaks an ordering or monotonicity law."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


def parse_radii(text: str) -> tuple[int, ...]:
    """``"2..32"``, ``"1,2,5"`` or a mix such as ``"1..3,8"``."""
    radii: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        low, sep, high = part.partition("..")
        try:
            if sep:
                radii.extend(range(int(low), int(high) + 1))
            else:
                radii.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid radius list {text!r}")
    if not radii:
        raise argparse.ArgumentTypeError("radius list is empty")
    return tuple(radii)


def join_coordinate_values(argv: Sequence[str]) -> list[str]:
    """Attach values such as ``-1,0`` to their coordinate option.

    argparse reads a token that starts with ``-`` as an option, so
    ``--p -1,0`` is rewritten to ``--p=-1,0``.
    """
    joined: list[str] = []
    tokens = iter(argv)
    for token in tokens:
        if token in COORDINATE_OPTIONS:
            value = next(tokens, None)
            if value is not None and _NEGATIVE_COORDINATES.match(value):
                joined.append(f"{token}={value}")
                continue
            joined.append(token)
            if value is not None:
                joined.append(value)
            continue
        joined.append(token)
    return joined


def worker_count() -> int:
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return min(4, os.cpu_count() or 1)
    try:
        workers = int(value)
    except ValueError:
        raise ValueError(f"`{THREADS_ENV}` must be an integer, got {value!r}")
    if workers < 1:
        raise ValueError(f"`{THREADS_ENV}` must be at least 1")
    return workers


def _solve_config(args: argparse.Namespace) -> SolveConfig:
    return SolveConfig(
        residual_tolerance=args.residual_tolerance,
        max_iterations=args.max_iterations,
    )


def _manifest(args: argparse.Namespace, seed: int | None = None) -> RunManifest:
    parameters = {
        key: value
        for key, value in vars(args).items()
        if key not in ("func", "verbose", "manifest") and value is not None
    }
    return RunManifest(
        command=args.command,
        parameters=parameters,
        version=__version__,
        timestamp=datetime.now(timezone.utc).isoformat(),
        seed=seed,
    )


def _emit_manifest(args: argparse.Namespace, manifest: RunManifest) -> None:
    if args.manifest:
        with open(args.manifest, "w") as f:
            f.write(manifest.model_dump_json(indent=2) + "\n")
    else:
        sys.stderr.write(manifest.model_dump_json() + "\n")


def _dump_json(payload: Any, stream: IO[str]) -> None:
    stream.write(json.dumps(payload, indent=2, default=str) + "\n")


def _csv(stream: IO[str]) -> Any:
    return csv.writer(stream, lineterminator="\n")


def _check_brackets(brackets: Sequence[Any]) -> None:
    for b in brackets:
        if not b.is_ordered(MONOTONE_SLACK):
            raise InvariantViolation(
                f"radius {b.radius}: short_R {b.short_resistance!r} exceeds cut_R "
                f"{b.cut_resistance!r}"
            )
    for before, after in zip(brackets, brackets[1:]):
        if after.cut_resistance > before.cut_resistance + MONOTONE_SLACK:
            raise InvariantViolation(
                f"cut_R increased from radius {before.radius} to {after.radius}"
            )
        if after.short_resistance < before.short_resistance - MONOTONE_SLACK:
            raise InvariantViolation(
                f"short_R decreased from radius {before.radius} to {after.radius}"
            )


def cmd_bracket(args: argparse.Namespace, out: IO[str]) -> int:
    lattice = lattice_from_name(args.lattice)
    p, q = lattice.parse_vertex(args.p), lattice.parse_vertex(args.q)
    center = lattice.parse_vertex(args.center) if args.center else None
    seq = SwellingSequence.around(lattice, p, q, radii=args.radii, center=center)
    _emit_manifest(args, _manifest(args))
    brackets = bracket_series(lattice, p, q, seq, _solve_config(args), worker_count())
    if args.json:
        _dump_json([b.model_dump() | {"gap": b.gap} for b in brackets], out)
    else:
        write_bracket_csv(brackets, out)
    _check_brackets(brackets)
    return EXIT_OK


def _foster_network(args: argparse.Namespace, network: Network, out: IO[str]) -> int:
    try:
        require_connected(network)
    except PreconditionError as e:
        logger.error("%s", e.message)
        return EXIT_NUMERICAL
    average = foster_average(network, _solve_config(args))
    formula = (network.vertex_count - 1) / network.edge_count
    row = {
        "vertices": network.vertex_count,
        "edges": network.edge_count,
        "average": average,
        "formula": formula,
        "difference": average - formula,
    }
    if args.json:
        _dump_json(row, out)
    else:
        writer = _csv(out)
        writer.writerow(row.keys())
        writer.writerow(row.values())
    return EXIT_OK


def cmd_foster(args: argparse.Namespace, out: IO[str]) -> int:
    _emit_manifest(args, _manifest(args))
    if args.source not in LATTICES:
        with open(args.source) as f:
            network = read_edge_list(f)
        return _foster_network(args, network, out)

    if args.radius is None:
        raise ValueError("`--radius` is required when the source is a lattice")
    lattice = lattice_from_name(args.source)
    report = lattice_foster_report(
        lattice, args.radius, cfg=_solve_config(args), solve=args.solve
    )
    if args.json:
        _dump_json(report.model_dump(), out)
    else:
        row = report.model_dump()
        writer = _csv(out)
        writer.writerow(row.keys())
        writer.writerow(row.values())
    if not report.short_average <= report.limit <= report.cut_average:
        raise InvariantViolation(
            f"Foster averages {report.short_average!r}, {report.cut_average!r} "
            f"do not straddle {report.limit!r}"
        )
    return EXIT_OK


def cmd_walk(args: argparse.Namespace, out: IO[str]) -> int:
    lattice = lattice_from_name(args.lattice)
    start = lattice.parse_vertex(args.start) if args.start else None
    cfg = WalkConfig(
        max_steps=args.steps,
        trials=args.trials,
        seed=args.seed,
        start=start,
        block_size=args.block_size,
    )
    _emit_manifest(args, _manifest(args, seed=args.seed))
    stats = return_frequency(lattice, cfg, worker_count())
    if args.json:
        _dump_json(stats.model_dump(), out)
    else:
        writer = _csv(out)
        writer.writerow(WALK_CSV_COLUMNS)
        writer.writerow(
            "" if getattr(stats, c) is None else getattr(stats, c) for c in WALK_CSV_COLUMNS
        )
    return EXIT_OK


def cmd_rinf(args: argparse.Namespace, out: IO[str]) -> int:
    lattice = lattice_from_name(args.lattice)
    p = lattice.parse_vertex(args.p)
    seq = SwellingSequence.around(lattice, p, radii=args.radii)
    _emit_manifest(args, _manifest(args))
    cfg = _solve_config(args)
    series = resistance_to_infinity(lattice, p, seq, cfg, worker_count())
    escape = escape_from_series(lattice, p, series) if args.escape else None
    trend = escape.trend if escape is not None else fit_trend(series)
    if args.json:
        payload = {"rows": series.rows, "trend": trend.model_dump()}
        if escape is not None:
            payload["escape"] = escape.model_dump()
        _dump_json(payload, out)
    else:
        writer = _csv(out)
        writer.writerow(("radius", "resistance"))
        writer.writerows(series.rows)
        out.write(f"# trend={trend.label}\n")
        if escape is not None:
            out.write(f"# escape={escape.status},{escape.probability}\n")
    _check_rinf(series.rows)
    return EXIT_OK


def _check_rinf(rows: Sequence[tuple[int, float]]) -> None:
    for (r0, v0), (r1, v1) in zip(rows, rows[1:]):
        if v1 < v0 - MONOTONE_SLACK:
            raise InvariantViolation(f"resistance to infinity decreased from radius {r0} to {r1}")


def cmd_treeprob(args: argparse.Namespace, out: IO[str]) -> int:
    with open(args.edge_list) as f:
        network = read_edge_list(f)
    _emit_manifest(args, _manifest(args))
    probabilities = spanning_tree_edge_probabilities(network, weighted=args.weighted)
    resistances = edge_resistances(network, _solve_config(args))
    if args.weighted:
        resistances = resistances * network.conductances
    differences = probabilities - resistances
    worst = float(max(abs(differences), default=0.0))
    rows = [
        (record.id, record.tail, record.head, float(probabilities[record.id]),
         float(resistances[record.id]), float(differences[record.id]))
        for record in network.edges()
    ]
    if args.json:
        _dump_json(
            {
                "edges": [dict(zip(TREEPROB_CSV_COLUMNS, row)) for row in rows],
                "max_difference": worst,
            },
            out,
        )
    else:
        writer = _csv(out)
        writer.writerow(TREEPROB_CSV_COLUMNS)
        writer.writerows(rows)
        out.write(f"# max_difference={worst!r}\n")
    return EXIT_OK


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--residual-tolerance", type=float, default=1e-10)
    parser.add_argument("--max-iterations", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ohmnet",
        description="Resistances, flows and random walks on resistor networks and lattices",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--json", action="store_true", help="write JSON instead of CSV")
    parser.add_argument("--manifest", help="write the run manifest to this file")
    commands = parser.add_subparsers(dest="command", required=True)
    kinds = sorted(LATTICES)

    bracket = commands.add_parser("bracket", help="short/cut resistance brackets per radius")
    bracket.add_argument("lattice", choices=kinds)
    bracket.add_argument("--p", required=True)
    bracket.add_argument("--q", required=True)
    bracket.add_argument("--radii", type=parse_radii, required=True)
    bracket.add_argument("--center", help="ball centre; defaults to the midpoint of p and q")
    _add_solver_flags(bracket)
    bracket.set_defaults(func=cmd_bracket)

    foster = commands.add_parser("foster", help="average edge resistance against (n-1)/e")
    foster.add_argument("source", help="edge-list file or lattice kind")
    foster.add_argument("--radius", type=int)
    foster.add_argument("--solve", action="store_true", help="also solve every edge")
    _add_solver_flags(foster)
    foster.set_defaults(func=cmd_foster)

    walk = commands.add_parser("walk", help="Monte-Carlo return frequency")
    walk.add_argument("lattice", choices=kinds)
    walk.add_argument("--steps", type=int, required=True)
    walk.add_argument("--trials", type=int, required=True)
    walk.add_argument("--seed", type=int, required=True)
    walk.add_argument("--start")
    walk.add_argument("--block-size", type=int, default=1000)
    walk.set_defaults(func=cmd_walk)

    rinf = commands.add_parser("rinf", help="resistance to infinity per radius")
    rinf.add_argument("lattice", choices=kinds)
    rinf.add_argument("--p", default="origin")
    rinf.add_argument("--radii", type=parse_radii, required=True)
    rinf.add_argument("--escape", action="store_true", help="also estimate the escape probability")
    _add_solver_flags(rinf)
    rinf.set_defaults(func=cmd_rinf)

    treeprob = commands.add_parser(
        "treeprob", help="spanning-tree edge probabilities against edge resistances"
    )
    treeprob.add_argument("edge_list")
    treeprob.add_argument("--weighted", action="store_true")
    _add_solver_flags(treeprob)
    treeprob.set_defaults(func=cmd_treeprob)
    return parser


def main(argv: Sequence[str] | None = None, out: IO[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(join_coordinate_values(sys.argv[1:] if argv is None else argv))
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    out = out or sys.stdout
    try:
        return args.func(args, out)
    except ConvergenceError as e:
        logger.error("%s (residual %.3e after %d iterations)", e.message, e.residual, e.iterations)
        return EXIT_NUMERICAL
    except InvariantViolation as e:
        logger.error("invariant violated: %s", e.message)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as e:
        logger.error("%s", getattr(e, "message", e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
