"""Experiment runners: scenario replay and the two strategy comparisons.

Every run is fully determined by the configuration and its master seed.
Per-trial sub-seeds are recorded so any single trial can be rerun alone.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import ExperimentConfig
from .confgen import NoImprovingCandidate, generate_configuration, optimize_edge_weights
from .core import (
    Configuration,
    NeighborDistanceMatrix,
    ResourceMatrix,
    Topology,
    distance_from_laplacian,
    edge_density,
    task_inefficacy,
)
from .failsim import (
    FailureEvent,
    FailureKind,
    FailureTrace,
    Oracle,
    Strategy,
    TraceStep,
    apply_failure,
    delta_v,
    draw_failure_sequence,
    hindsight_inefficacy,
    hindsight_strategy,
    random_connected_graph,
    random_edge_strategy,
    random_feasible_resources,
    replay_failure_sequence,
    resource_count,
    rng_stream,
    sub_seed,
)
from .formation import (
    Formation,
    SynthesisFailed,
    check_feasibility,
    grid_formation,
    stress_objective,
    straight_line_transition_check,
    synthesize,
)

log = logging.getLogger(__name__)

RANDOM_RECORD_COLUMNS = [
    "p_r", "trial", "sub_seed", "n", "r", "edges", "edge_density", "bin",
    "failed_robot", "failed_resource", "redraws", "ours_status",
    "inefficacy_parent", "inefficacy_ours", "inefficacy_random", "delta_v",
]
BIN_COLUMNS = ["p_r", "bin", "lower", "upper", "midpoint", "count", "mean_delta_v"]
HINDSIGHT_RECORD_COLUMNS = [
    "n", "trial", "sub_seed", "step", "ours_status", "ours_budget", "ours_hindsight",
    "hindsight_hindsight", "same_parent_hindsight", "dominance_ok",
]
HINDSIGHT_SERIES_COLUMNS = ["n", "step", "trials", "ours_max", "hindsight_min"]
SCENARIO_STEP_COLUMNS = [
    "step", "robot", "resource", "kind", "status", "toggled_edges", "edges",
    "inefficacy_before", "inefficacy_after", "trace_of_L", "synthesis", "attempts",
    "stress", "worst_margin", "transition_min_separation", "transition_violations",
]


# ---------------------------------------------------------------------------
# serialization


def _edges_out(edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    return [[i + 1, j + 1] for i, j in sorted(edges)]


def _matrix_out(m) -> list[list]:
    return [["inf" if np.isinf(v) else float(v) for v in row] for row in np.asarray(m, float)]


def _matrix_in(rows) -> np.ndarray:
    return np.array([[np.inf if v == "inf" else float(v) for v in row] for row in rows],
                    dtype=float).reshape(len(rows), -1)


def configuration_to_dict(config: Configuration) -> dict:
    return {
        "n": config.n,
        "edges": _edges_out(config.topology.edges),
        "distances": _matrix_out(config.distances.as_array()),
        "resources": config.resources.gamma.tolist(),
        "threshold": config.resources.threshold,
    }


def configuration_from_dict(d: dict) -> Configuration:
    n = d["n"]
    topo = Topology.from_edges(n, [(i - 1, j - 1) for i, j in d["edges"]])
    dist = NeighborDistanceMatrix.from_array(_matrix_in(d["distances"])) if n else NeighborDistanceMatrix(0)
    res = ResourceMatrix(np.array(d["resources"], dtype=np.int64).reshape(n, -1), d["threshold"])
    return Configuration(topo, dist, res)


def trace_to_dict(trace: FailureTrace) -> dict:
    steps = []
    for s in trace.steps:
        config = configuration_to_dict(s.configuration)
        steps.append({
            "step": s.step,
            "event": {"robot": s.event.robot + 1, "resource": s.event.resource + 1},
            "kind": s.event.kind.value,
            "status": s.status,
            "toggled_edges": _edges_out(s.toggled_edges),
            "inefficacy_before": s.inefficacy_before,
            "inefficacy_after": s.inefficacy_after,
            "trace_of_L": s.trace_of_l,
            "budget": s.budget,
            "escalations": list(s.escalations),
            "hindsight": s.hindsight,
            "distances": config["distances"],
            "configuration": config,
        })
    return {"strategy": trace.strategy.value, "initial": configuration_to_dict(trace.initial),
            "steps": steps}


def trace_from_dict(d: dict) -> FailureTrace:
    trace = FailureTrace(configuration_from_dict(d["initial"]), Strategy(d["strategy"]))
    for s in d["steps"]:
        config = configuration_from_dict(s["configuration"])
        event = FailureEvent(s["event"]["robot"] - 1, s["event"]["resource"] - 1,
                             FailureKind(s["kind"]))
        trace.steps.append(TraceStep(
            step=s["step"], event=event, resources=config.resources, status=s["status"],
            configuration=config,
            toggled_edges=tuple((i - 1, j - 1) for i, j in s["toggled_edges"]),
            inefficacy_before=s["inefficacy_before"], inefficacy_after=s["inefficacy_after"],
            trace_of_l=s["trace_of_L"], budget=s["budget"], escalations=list(s["escalations"]),
            hindsight=s["hindsight"],
        ))
    return trace


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def csv_text(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if set(row) != set(columns):
            raise ValueError(f"row keys {sorted(row)} do not match the schema")
        w.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def emit_outputs(files: dict[str, str], out_dir: str | Path) -> list[Path]:
    """Write rendered documents; returns the paths in sorted order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(files):
        path = out / name
        path.write_text(files[name])
        written.append(path)
    return written


def _map(fn: Callable, args: list, workers: int) -> list:
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*args)))


# ---------------------------------------------------------------------------
# scenario


def initial_configuration(n: int, resources: ResourceMatrix, cfg: ExperimentConfig) -> Configuration:
    params = cfg.geometry()
    topo = Topology.line(n)
    lap, _ = optimize_edge_weights(topo, params)
    return Configuration(topo, distance_from_laplacian(lap, params), resources)


@dataclass
class ScenarioResult:
    trace: FailureTrace
    formations: list[Formation]
    synthesis: list[dict] = field(default_factory=list)
    transitions: list[dict] = field(default_factory=list)

    @property
    def failed_syntheses(self) -> int:
        return sum(1 for s in self.synthesis if s["status"] == "failed")


def run_scenario(cfg: ExperimentConfig, sequence=None) -> ScenarioResult:
    """Line-graph team, our strategy after every tolerable failure, one formation per step.

    ``sequence`` optionally fixes the failure order (see
    :func:`teamreconfig.failsim.events_from_order`).
    """
    params = cfg.geometry()
    resources = ResourceMatrix.ones(cfg.n, cfg.r, cfg.threshold)
    initial = initial_configuration(cfg.n, resources, cfg)
    if sequence is None:
        sequence = draw_failure_sequence(resources, rng_stream(cfg.seed, "scenario", "failures"))
    trace = replay_failure_sequence(initial, sequence, Strategy.OURS, params,
                                    rng_stream(cfg.seed, "scenario", "strategy"),
                                    cfg.max_escalations)

    start = synthesize(grid_formation(cfg.n, params), initial, params,
                       cfg.anneal(sub_seed(cfg.seed, "scenario", "anneal", 0)))
    formations = [start.formation]
    synthesis = [_synthesis_row(0, start.formation, start.attempts, initial, cfg, "ok")]
    transitions = []
    for s in trace.steps:
        prev = formations[-1]
        if s.status != "reconfigured":
            formations.append(prev)
            synthesis.append(_synthesis_row(s.step, prev, 0, s.configuration, cfg, "kept"))
        else:
            aparams = cfg.anneal(sub_seed(cfg.seed, "scenario", "anneal", s.step))
            try:
                res = synthesize(prev, s.configuration, params, aparams)
                formations.append(res.formation)
                synthesis.append(_synthesis_row(s.step, res.formation, res.attempts,
                                                s.configuration, cfg, "ok"))
            except SynthesisFailed as exc:
                log.warning("step %d: %s", s.step, exc)
                formations.append(prev)
                synthesis.append(_synthesis_row(s.step, prev, aparams.max_restarts + 1,
                                                s.configuration, cfg, "failed"))
        rep = straight_line_transition_check(prev, formations[-1], params.d_s)
        transitions.append({"step": s.step, "min_separation": rep.min_separation,
                            "violations": [[i + 1, j + 1] for i, j in rep.violations]})
    return ScenarioResult(trace, formations, synthesis, transitions)


def _synthesis_row(step, formation, attempts, config, cfg, status) -> dict:
    rep = check_feasibility(formation, config, cfg.geometry())
    return {"step": step, "status": status, "attempts": attempts,
            "stress": stress_objective(formation, config), "worst_margin": rep.worst,
            "feasible": rep.feasible}


def scenario_files(result: ScenarioResult, cfg: ExperimentConfig) -> dict[str, str]:
    trace = trace_to_dict(result.trace)
    trace["formations"] = [f.points.tolist() for f in result.formations]
    trace["synthesis"] = result.synthesis
    trace["transitions"] = result.transitions
    rows = []
    for s, syn, tr in zip(result.trace.steps, result.synthesis[1:], result.transitions):
        rows.append({
            "step": s.step, "robot": s.event.robot + 1, "resource": s.event.resource + 1,
            "kind": s.event.kind.value, "status": s.status,
            "toggled_edges": " ".join(f"{i + 1}-{j + 1}" for i, j in s.toggled_edges),
            "edges": s.configuration.topology.edge_count,
            "inefficacy_before": s.inefficacy_before, "inefficacy_after": s.inefficacy_after,
            "trace_of_L": s.trace_of_l, "synthesis": syn["status"], "attempts": syn["attempts"],
            "stress": syn["stress"], "worst_margin": syn["worst_margin"],
            "transition_min_separation": tr["min_separation"],
            "transition_violations": len(tr["violations"]),
        })
    summary = {
        "experiment": "scenario", "seed": cfg.seed, "n": cfg.n, "r": cfg.r,
        "trace_length": len(result.trace),
        "tolerable_failures": sum(1 for s in result.trace.steps
                                  if s.event.kind is FailureKind.TOLERABLE),
        "reconfigurations": sum(1 for s in result.trace.steps if s.status == "reconfigured"),
        "failed_syntheses": result.failed_syntheses,
    }
    formation_rows = [
        {"step": k, "robot": i + 1, "x": float(p[0]), "y": float(p[1]), "z": float(p[2])}
        for k, f in enumerate(result.formations) for i, p in enumerate(f.points)
    ]
    return {
        "scenario_trace.json": json_text(trace),
        "scenario_steps.csv": csv_text(rows, SCENARIO_STEP_COLUMNS),
        "scenario_formations.csv": csv_text(formation_rows, ["step", "robot", "x", "y", "z"]),
        "scenario_summary.json": json_text(summary),
    }


# ---------------------------------------------------------------------------
# random-edge comparison


def density_bin(edges: int, n: int, bins: int) -> int:
    """Index of the equal-width bin over (0, 1] holding ``edges / C(n, 2)``, exactly."""
    total = n * (n - 1) // 2
    return max(0, min(bins - 1, -(-edges * bins // total) - 1))


def random_edge_trial(seed: int, p_r: float, cfg: ExperimentConfig, trial: int = 0) -> dict:
    """One Delta_V record; reproducible from ``seed`` alone."""
    params = cfg.geometry()
    inst = rng_stream(seed, "instance")
    redraws = 0
    while True:
        n = int(inst.integers(cfg.n_min, cfg.n_max + 1))
        r = int(inst.integers(cfg.r_min, cfg.r_max + 1))
        if resource_count(n, r, p_r) < cfg.threshold * r or cfg.threshold > n:
            redraws += 1
            continue
        total = n * (n - 1) // 2
        edges = int(inst.integers(n - 1, total + 1))
        topo = random_connected_graph(n, edges / total, inst)
        resources = random_feasible_resources(n, r, p_r, cfg.threshold, inst)
        failed, event = apply_failure(resources, inst)
        if event.kind is FailureKind.TOLERABLE:
            break
        redraws += 1
    lap, _ = optimize_edge_weights(topo, params)
    parent = Configuration(topo, distance_from_laplacian(lap, params), resources)
    try:
        ours = generate_configuration(parent, failed, params).configuration.topology
        status = "reconfigured"
    except NoImprovingCandidate:
        ours, status = topo, "unchanged"
    rand = random_edge_strategy(parent.with_resources(failed), event.robot,
                                rng_stream(seed, "random-edge"), params).topology
    ineff_ours = task_inefficacy(ours, failed)
    ineff_rand = task_inefficacy(rand, failed)
    return {
        "p_r": p_r, "trial": trial, "sub_seed": seed, "n": n, "r": r,
        "edges": topo.edge_count, "edge_density": edge_density(topo),
        "bin": density_bin(topo.edge_count, n, cfg.bins),
        "failed_robot": event.robot + 1, "failed_resource": event.resource + 1,
        "redraws": redraws, "ours_status": status,
        "inefficacy_parent": task_inefficacy(topo, failed),
        "inefficacy_ours": ineff_ours, "inefficacy_random": ineff_rand,
        "delta_v": delta_v(failed, rand, ours),
    }


@dataclass
class BinnedSeries:
    p_r: float
    bins: int
    counts: list[int]
    sums: list[float]

    @property
    def edges(self) -> list[float]:
        return [k / self.bins for k in range(self.bins + 1)]

    def means(self) -> dict[int, float]:
        return {k: self.sums[k] / c for k, c in enumerate(self.counts) if c}

    def fraction_positive(self) -> float:
        m = self.means()
        return sum(1 for v in m.values() if v > 0) / len(m) if m else float("nan")

    def rows(self) -> list[dict]:
        out = []
        for k, mean in self.means().items():
            lo, hi = k / self.bins, (k + 1) / self.bins
            out.append({"p_r": self.p_r, "bin": k, "lower": lo, "upper": hi,
                        "midpoint": (lo + hi) / 2, "count": self.counts[k], "mean_delta_v": mean})
        return out


def bin_records(records: Sequence[dict], p_r: float, bins: int) -> BinnedSeries:
    counts = [0] * bins
    sums = [0.0] * bins
    for rec in records:
        counts[rec["bin"]] += 1
        sums[rec["bin"]] += rec["delta_v"]
    return BinnedSeries(p_r, bins, counts, sums)


def run_random_edge_comparison(cfg: ExperimentConfig) -> tuple[list[dict], dict[float, BinnedSeries]]:
    records: list[dict] = []
    series = {}
    for p_r in cfg.p_r:
        args = [(sub_seed(cfg.seed, "compare-random", repr(float(p_r)), t), p_r, cfg, t)
                for t in range(cfg.trials)]
        recs = _map(random_edge_trial, args, cfg.workers)
        records.extend(recs)
        series[p_r] = bin_records(recs, p_r, cfg.bins)
    return records, series


def random_comparison_files(records, series, cfg: ExperimentConfig) -> dict[str, str]:
    bins = [row for s in series.values() for row in s.rows()]
    summary = {
        "experiment": "compare-random", "seed": cfg.seed, "trials_per_p_r": cfg.trials,
        "bins": cfg.bins,
        "per_p_r": {repr(float(p)): {"occupied_bins": len(s.means()),
                                     "fraction_positive_bins": s.fraction_positive(),
                                     "mean_delta_v": (sum(s.sums) / sum(s.counts)
                                                      if sum(s.counts) else None)}
                    for p, s in series.items()},
    }
    return {
        "compare_random_records.csv": csv_text(records, RANDOM_RECORD_COLUMNS),
        "compare_random_bins.csv": csv_text(bins, BIN_COLUMNS),
        "compare_random_summary.json": json_text(summary),
    }


# ---------------------------------------------------------------------------
# hindsight comparison


def hindsight_trial(seed: int, n: int, cfg: ExperimentConfig, trial: int = 0) -> list[dict]:
    """Replay one tolerable failure sequence with both strategies; one row per step."""
    params = cfg.geometry()
    resources = ResourceMatrix.ones(n, cfg.hindsight_r, cfg.threshold)
    initial = initial_configuration(n, resources, cfg)
    sequence = draw_failure_sequence(resources, rng_stream(seed, "failures"))
    tolerable = [(g, e) for g, e in sequence if e.kind is FailureKind.TOLERABLE]
    strategy_rng = rng_stream(seed, "strategy")
    ours = replay_failure_sequence(initial, tolerable, Strategy.OURS, params, strategy_rng,
                                   cfg.max_escalations)
    hind = replay_failure_sequence(initial, tolerable, Strategy.HINDSIGHT, params, strategy_rng)
    futures = [g for g, _ in tolerable]
    parents = ours.configurations
    rows = []
    for k, (so, sh) in enumerate(zip(ours.steps, hind.steps), start=1):
        current = futures[k - 1]
        oracle = Oracle(tuple(futures[k:]))
        ours_h = hindsight_inefficacy(so.configuration.topology, current, oracle)
        budget = so.budget if so.budget is not None else params.ne
        same = hindsight_strategy(parents[k - 1].with_resources(current), current, oracle,
                                  params.with_budget(budget)).hindsight_inefficacy
        ok = same <= ours_h + 1e-9 * max(1.0, abs(ours_h))
        rows.append({
            "n": n, "trial": trial, "sub_seed": seed, "step": k, "ours_status": so.status,
            "ours_budget": budget, "ours_hindsight": ours_h,
            "hindsight_hindsight": sh.hindsight, "same_parent_hindsight": same,
            "dominance_ok": ok,
        })
    return rows


def hindsight_series(rows: Sequence[dict]) -> list[dict]:
    groups: dict[tuple[int, int], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["n"], row["step"]), []).append(row)
    return [
        {"n": n, "step": step, "trials": len(g),
         "ours_max": max(r["ours_hindsight"] for r in g),
         "hindsight_min": min(r["hindsight_hindsight"] for r in g)}
        for (n, step), g in sorted(groups.items())
    ]


def run_hindsight_comparison(cfg: ExperimentConfig, ns: Sequence[int] | None = None) -> list[dict]:
    rows: list[dict] = []
    for n in (cfg.hindsight_n if ns is None else ns):
        args = [(sub_seed(cfg.seed, "compare-hindsight", n, t), n, cfg, t)
                for t in range(cfg.hindsight_trials)]
        for trial_rows in _map(hindsight_trial, args, cfg.workers):
            rows.extend(trial_rows)
    return rows


def hindsight_files(rows: Sequence[dict], cfg: ExperimentConfig) -> dict[str, str]:
    summary = {
        "experiment": "compare-hindsight", "seed": cfg.seed, "trials": cfg.hindsight_trials,
        "n": list(cfg.hindsight_n), "evaluations": len(rows),
        "dominance_violations": sum(1 for r in rows if not r["dominance_ok"]),
    }
    return {
        "compare_hindsight_records.csv": csv_text(rows, HINDSIGHT_RECORD_COLUMNS),
        "compare_hindsight_series.csv": csv_text(hindsight_series(rows), HINDSIGHT_SERIES_COLUMNS),
        "compare_hindsight_summary.json": json_text(summary),
    }
