"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 no improving
topology after escalation, 4 formation synthesis failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import harness
from .confgen import Infeasible, generate_with_escalation, optimize_edge_weights
from .config import ExperimentConfig, load_config
from .core import Configuration, ResourceMatrix, distance_from_laplacian
from .formation import Formation, SynthesisFailed, grid_formation, synthesize
from .textio import (
    format_distances,
    format_edges,
    format_formation,
    parse_distances,
    parse_edges,
    parse_formation,
    parse_resources,
    read_text,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CANDIDATE = 3
EXIT_SYNTHESIS = 4

_OVERRIDES = {
    # config field -> argument type
    "seed": int, "out": str, "trials": int, "bins": int, "workers": int,
    "steps": int, "t_start": float, "t_end": float, "h_start": float, "h_end": float,
    "delta_max": float, "max_restarts": int, "acceptance": str, "ne": int,
    "d_s": float, "d_mc": float, "threshold": int, "max_escalations": int,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("-v", "--verbose", action="store_true")
    for name, kind in _OVERRIDES.items():
        flag = "--" + name.replace("_", "-")
        if name == "acceptance":
            common.add_argument(flag, choices=["metropolis", "printed"])
        else:
            common.add_argument(flag, type=kind, metavar=name.upper())

    p = argparse.ArgumentParser(prog="teamreconfig", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reconfigure", parents=[common],
                       help="choose a new topology and distances after a resource change")
    r.add_argument("--edges", required=True, help="current topology (edge list)")
    r.add_argument("--resources", required=True, help="resource matrix after the failure")
    r.add_argument("--distances", help="current distance matrix (default: optimal for --edges)")
    r.add_argument("-n", "--robots", type=int, help="robot count if not in the edge file")

    s = sub.add_parser("synthesize", parents=[common], help="place robots for a configuration")
    s.add_argument("--edges", required=True)
    s.add_argument("--distances", help="distance matrix (default: optimal for --edges)")
    s.add_argument("--initial", help="starting formation (default: grid)")
    s.add_argument("-n", "--robots", type=int)

    sub.add_parser("scenario", parents=[common], help="line-graph failure scenario")
    sub.add_parser("compare-random", parents=[common], help="ours vs. random edge addition")
    sub.add_parser("compare-hindsight", parents=[common], help="ours vs. hindsight optimum")
    return p


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    changes = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k) is not None}
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
        cfg.validate()
    return cfg


def _configuration(args, cfg: ExperimentConfig, resources) -> Configuration:
    params = cfg.geometry()
    n = args.robots if args.robots is not None else (resources.n if resources is not None else None)
    topo = parse_edges(read_text(args.edges), n)
    if args.distances:
        dist = parse_distances(read_text(args.distances))
    else:
        lap, _ = optimize_edge_weights(topo, params)
        dist = distance_from_laplacian(lap, params)
    if resources is None:
        resources = ResourceMatrix.ones(topo.n, 1, cfg.threshold)
    return Configuration(topo, dist, resources)


def cmd_reconfigure(args, cfg: ExperimentConfig) -> int:
    resources = parse_resources(read_text(args.resources), cfg.threshold)
    prev = _configuration(args, cfg, resources)
    result, record = generate_with_escalation(prev, resources, cfg.geometry(), cfg.max_escalations)
    if result is None:
        print(f"no improving topology (budgets tried: {record.attempts})", file=sys.stderr)
        return EXIT_NO_CANDIDATE
    out = Path(cfg.out)
    harness.emit_outputs({
        "edges.txt": format_edges(result.configuration.topology),
        "distances.txt": format_distances(result.configuration.distances),
        "result.json": harness.json_text({
            "toggled_edges": [[i + 1, j + 1] for i, j in result.toggled_edges],
            "budget": result.budget, "budgets_tried": record.attempts,
            "trace_of_L": result.trace, "inefficacy_before": result.inefficacy_before,
            "inefficacy_after": result.inefficacy_after,
            "candidates": result.candidate_count,
            "configuration": harness.configuration_to_dict(result.configuration),
        }),
    }, out)
    print(f"toggled {len(result.toggled_edges)} edge(s); inefficacy "
          f"{result.inefficacy_before:.6g} -> {result.inefficacy_after:.6g}; wrote {out}")
    return EXIT_OK


def cmd_synthesize(args, cfg: ExperimentConfig) -> int:
    config = _configuration(args, cfg, None)
    params = cfg.geometry()
    if args.initial:
        start = Formation(parse_formation(read_text(args.initial)))
    else:
        start = grid_formation(config.n, params)
    try:
        res = synthesize(start, config, params, cfg.anneal())
    except SynthesisFailed as exc:
        print(str(exc), file=sys.stderr)
        if exc.best is not None:
            harness.emit_outputs({"formation_best.txt": format_formation(exc.best.points)}, cfg.out)
        return EXIT_SYNTHESIS
    harness.emit_outputs({
        "formation.txt": format_formation(res.formation.points),
        "synthesis.json": harness.json_text({
            "attempts": res.attempts, "stress": res.stress, "worst_margin": res.report.worst,
            "feasible": res.report.feasible,
        }),
    }, cfg.out)
    print(f"feasible formation after {res.attempts} attempt(s); stress {res.stress:.6g}")
    return EXIT_OK


def cmd_scenario(args, cfg: ExperimentConfig) -> int:
    result = harness.run_scenario(cfg)
    harness.emit_outputs(harness.scenario_files(result, cfg), cfg.out)
    print(f"{len(result.trace)} failure(s), {result.failed_syntheses} failed synthesis step(s); "
          f"wrote {cfg.out}")
    return EXIT_SYNTHESIS if result.failed_syntheses else EXIT_OK


def cmd_compare_random(args, cfg: ExperimentConfig) -> int:
    records, series = harness.run_random_edge_comparison(cfg)
    harness.emit_outputs(harness.random_comparison_files(records, series, cfg), cfg.out)
    for p_r, s in series.items():
        print(f"p_r={p_r:g}: {len(s.means())} occupied bins, "
              f"{s.fraction_positive():.0%} with positive mean")
    return EXIT_OK


def cmd_compare_hindsight(args, cfg: ExperimentConfig) -> int:
    rows = harness.run_hindsight_comparison(cfg)
    harness.emit_outputs(harness.hindsight_files(rows, cfg), cfg.out)
    bad = sum(1 for r in rows if not r["dominance_ok"])
    print(f"{len(rows)} step evaluation(s), {bad} dominance violation(s); wrote {cfg.out}")
    return EXIT_OK


COMMANDS = {
    "reconfigure": cmd_reconfigure,
    "synthesize": cmd_synthesize,
    "scenario": cmd_scenario,
    "compare-random": cmd_compare_random,
    "compare-hindsight": cmd_compare_hindsight,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ValueError, Infeasible, OSError) as exc:  # ConfigError, FormatError included
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
