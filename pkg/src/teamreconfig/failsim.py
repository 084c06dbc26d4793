"""Resource failures, reconfiguration strategies and comparison metrics."""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field
from math import ceil
from typing import Sequence

import numpy as np

from .confgen import (
    ConfigGenResult,
    _build_result,
    _near,
    candidate_inefficacies,
    connected_after,
    generate_with_escalation,
    iter_toggle_chunks,
    select_best,
    toggles_of,
    weight_trace,
)
from .core import (
    Configuration,
    Edge,
    GeometryParams,
    ResourceMatrix,
    Topology,
    closed_adjacency,
    is_connected,
    nuclear_norm,
    resource_feasible,
    task_inefficacy,
)


class FailureKind(str, enum.Enum):
    TOLERABLE = "tolerable"
    CATASTROPHIC = "catastrophic"


class Strategy(str, enum.Enum):
    OURS = "ours"
    RANDOM_EDGE = "random_edge"
    HINDSIGHT = "hindsight"


@dataclass(frozen=True)
class FailureEvent:
    robot: int
    resource: int
    kind: FailureKind


def rng_stream(seed: int, *names: str | int) -> np.random.Generator:
    """Independent generator for a named purpose under a master seed."""
    key = tuple(zlib.crc32(str(name).encode()) for name in names)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def sub_seed(seed: int, *names: str | int) -> int:
    key = tuple(zlib.crc32(str(name).encode()) for name in names)
    return int(np.random.SeedSequence(int(seed), spawn_key=key).generate_state(1, np.uint32)[0])


# ---------------------------------------------------------------------------
# failures


def apply_failure(
    resources: ResourceMatrix, rng: np.random.Generator
) -> tuple[ResourceMatrix, FailureEvent]:
    rows, cols = np.nonzero(resources.gamma)
    if rows.size == 0:
        raise ValueError("cannot fail a resource in an all-zero resource matrix")
    k = int(rng.integers(rows.size))
    robot, resource = int(rows[k]), int(cols[k])
    after = resources.with_entry_cleared(robot, resource)
    kind = FailureKind.TOLERABLE if resource_feasible(after) else FailureKind.CATASTROPHIC
    return after, FailureEvent(robot, resource, kind)


def draw_failure_sequence(
    resources: ResourceMatrix, rng: np.random.Generator
) -> list[tuple[ResourceMatrix, FailureEvent]]:
    """Failures up to and including the first catastrophic one (or exhaustion)."""
    out = []
    current = resources
    while current.gamma.any():
        current, event = apply_failure(current, rng)
        out.append((current, event))
        if event.kind is FailureKind.CATASTROPHIC:
            break
    return out


def events_from_order(
    resources: ResourceMatrix, order: Sequence[tuple[int, int]]
) -> list[tuple[ResourceMatrix, FailureEvent]]:
    """Deterministic failure sequence from explicit (robot, resource) pairs."""
    out = []
    current = resources
    for robot, resource in order:
        if current.gamma[robot, resource] != 1:
            raise ValueError(f"entry ({robot}, {resource}) is already zero")
        current = current.with_entry_cleared(robot, resource)
        kind = FailureKind.TOLERABLE if resource_feasible(current) else FailureKind.CATASTROPHIC
        out.append((current, FailureEvent(robot, resource, kind)))
        if kind is FailureKind.CATASTROPHIC:
            break
    return out


# ---------------------------------------------------------------------------
# strategies and metrics


def random_edge_strategy(
    config: Configuration, failed_robot: int, rng: np.random.Generator, params: GeometryParams
) -> Configuration:
    """Connect the failed robot to a uniformly chosen non-neighbour at distance ``d_mc``."""
    options = config.topology.non_neighbors(failed_robot)
    if not options:
        return config
    other = options[int(rng.integers(len(options)))]
    topo = config.topology.toggled([(failed_robot, other)])
    return Configuration(topo, config.distances.with_entry(failed_robot, other, params.d_mc),
                         config.resources)


def delta_v(resources: ResourceMatrix, topo_random: Topology, topo_ours: Topology) -> float:
    if topo_random.n != topo_ours.n:
        raise ValueError("topologies have different sizes")
    return task_inefficacy(topo_random, resources) - task_inefficacy(topo_ours, resources)


@dataclass(frozen=True)
class Oracle:
    """Future resource matrices, each one failure after the previous."""

    future: tuple[ResourceMatrix, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "future", tuple(self.future))

    def check(self, current: ResourceMatrix) -> None:
        prev = current
        for g in self.future:
            diff = prev.gamma - g.gamma
            if diff.shape != prev.gamma.shape or not (diff.min() == 0 and diff.sum() == 1):
                raise ValueError("oracle matrices must each clear exactly one entry")
            prev = g


def hindsight_inefficacy(topology: Topology, current: ResourceMatrix, oracle: Oracle) -> float:
    n = topology.n
    total = task_inefficacy(topology, current)
    adj = closed_adjacency(topology)
    for g in oracle.future:
        total += nuclear_norm(n - adj @ g.gamma)
    return total


def hindsight_strategy(
    prev: Configuration, current: ResourceMatrix, oracle: Oracle, params: GeometryParams
) -> ConfigGenResult:
    """Connected in-budget topology with minimal hindsight inefficacy (no decrease filter)."""
    topo = prev.topology
    if not is_connected(topo):
        raise ValueError("previous topology must be connected")
    gammas = np.stack([current.gamma] + [g.gamma for g in oracle.future]).astype(float)
    adj = [set(a) for a in topo.adjacency_lists()]
    scored: list[tuple[float, tuple[Edge, ...]]] = []
    count = 0
    for block in iter_toggle_chunks(topo.n, params.ne):
        count += block.shape[0]
        totals = candidate_inefficacies(topo, gammas, block).sum(axis=1)
        for k in range(block.shape[0]):
            toggles = toggles_of(topo, block[k])
            if connected_after(topo, adj, toggles):
                scored.append((float(totals[k]), toggles))
    best_h = min(s for s, _ in scored)
    rows, tops = [], []
    for s, toggles in scored:
        if s <= best_h or _near(s, best_h):
            cand = topo.toggled(toggles)
            rows.append((s, weight_trace(cand, params), toggles))
            tops.append(cand)
    # primary: hindsight (tolerant), secondary: trace, then toggles
    k = select_best(rows)
    before = task_inefficacy(topo, current)
    return _build_result(prev, tops[k], rows[k][2], current, params, before, count,
                         hindsight=rows[k][0])


# ---------------------------------------------------------------------------
# random instances


def random_connected_graph(n: int, target_density: float, rng: np.random.Generator) -> Topology:
    """Uniform spanning tree (random Pruefer code) plus uniformly sampled extra edges."""
    if n < 2:
        raise ValueError("need at least two vertices")
    total = n * (n - 1) // 2
    want = int(np.floor(target_density * total + 1e-9))
    if want < n - 1 or target_density > 1:
        raise ValueError(f"density {target_density} outside [{(n - 1) / total}, 1]")
    edges = set(_pruefer_tree(n, rng))
    rest = [e for e in ((i, j) for i in range(n) for j in range(i + 1, n)) if e not in edges]
    extra = rng.choice(len(rest), size=want - len(edges), replace=False) if want > len(edges) else []
    edges.update(rest[int(k)] for k in extra)
    return Topology(n, frozenset(edges))


def _pruefer_tree(n: int, rng: np.random.Generator) -> list[Edge]:
    if n == 2:
        return [(0, 1)]
    code = rng.integers(0, n, n - 2).tolist()
    degree = [1] * n
    for v in code:
        degree[v] += 1
    edges = []
    for v in code:
        leaf = min(u for u in range(n) if degree[u] == 1)
        edges.append((min(leaf, v), max(leaf, v)))
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = [x for x in range(n) if degree[x] == 1]
    edges.append((u, w))
    return edges


def resource_count(n: int, r: int, p_r: float) -> int:
    return ceil(p_r * n * r / 100 - 1e-9)


def random_feasible_resources(
    n: int, r: int, p_r: float, threshold: int, rng: np.random.Generator
) -> ResourceMatrix:
    total = resource_count(n, r, p_r)
    if total < threshold * r or threshold > n or total > n * r:
        raise ValueError(f"{total} ones cannot make a feasible {n}x{r} matrix at threshold {threshold}")
    g = np.zeros((n, r), dtype=np.int64)
    for j in range(r):
        g[rng.choice(n, size=threshold, replace=False), j] = 1
    empty = np.flatnonzero(g.ravel() == 0)
    fill = rng.choice(empty, size=total - threshold * r, replace=False)
    g.ravel()[fill] = 1
    return ResourceMatrix(g, threshold)


# ---------------------------------------------------------------------------
# sequences


@dataclass
class TraceStep:
    step: int
    event: FailureEvent
    resources: ResourceMatrix
    status: str  # reconfigured | unchanged | catastrophic
    configuration: Configuration
    toggled_edges: tuple[Edge, ...] = ()
    inefficacy_before: float | None = None
    inefficacy_after: float | None = None
    trace_of_l: float | None = None
    budget: int | None = None
    escalations: list[int] = field(default_factory=list)
    hindsight: float | None = None


@dataclass
class FailureTrace:
    initial: Configuration
    strategy: Strategy
    steps: list[TraceStep] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def configurations(self) -> list[Configuration]:
        return [self.initial] + [s.configuration for s in self.steps]


def reconfigure(
    strategy: Strategy,
    prev: Configuration,
    resources: ResourceMatrix,
    event: FailureEvent,
    params: GeometryParams,
    rng: np.random.Generator,
    oracle: Oracle = Oracle(),
    max_escalations: int = 3,
) -> tuple[Configuration, dict]:
    """One strategy response to a tolerable failure; returns the new configuration and metrics."""
    before = task_inefficacy(prev.topology, resources)
    info: dict = {"inefficacy_before": before, "toggled_edges": (), "trace_of_l": None,
                  "budget": None, "escalations": [], "hindsight": None}
    if strategy is Strategy.RANDOM_EDGE:
        new = random_edge_strategy(prev.with_resources(resources), event.robot, rng, params)
        info["toggled_edges"] = tuple(prev.topology.difference(new.topology))
        info["status"] = "reconfigured" if info["toggled_edges"] else "unchanged"
    elif strategy is Strategy.HINDSIGHT:
        res = hindsight_strategy(prev, resources, oracle, params)
        new = res.configuration
        info.update(toggled_edges=res.toggled_edges, trace_of_l=res.trace, budget=res.budget,
                    hindsight=res.hindsight_inefficacy,
                    status="reconfigured" if res.toggled_edges else "unchanged")
    else:
        res, record = generate_with_escalation(prev, resources, params, max_escalations)
        info["escalations"] = record.attempts[1:]
        if res is None:
            new = prev.with_resources(resources)
            info["status"] = "unchanged"
        else:
            new = res.configuration
            info.update(toggled_edges=res.toggled_edges, trace_of_l=res.trace, budget=res.budget,
                        status="reconfigured")
    info["inefficacy_after"] = task_inefficacy(new.topology, resources)
    return new, info


def replay_failure_sequence(
    initial: Configuration,
    sequence: Sequence[tuple[ResourceMatrix, FailureEvent]],
    strategy: Strategy | str,
    params: GeometryParams,
    rng: np.random.Generator,
    max_escalations: int = 3,
) -> FailureTrace:
    strategy = Strategy(strategy)
    trace = FailureTrace(initial, strategy)
    tolerable = [g for g, e in sequence if e.kind is FailureKind.TOLERABLE]
    config = initial
    for k, (resources, event) in enumerate(sequence, start=1):
        if event.kind is FailureKind.CATASTROPHIC:
            config = config.with_resources(resources)
            trace.steps.append(TraceStep(k, event, resources, "catastrophic", config))
            break
        oracle = Oracle(tuple(tolerable[k:]))
        config, info = reconfigure(strategy, config, resources, event, params, rng, oracle,
                                   max_escalations)
        trace.steps.append(TraceStep(
            k, event, resources, info["status"], config, tuple(info["toggled_edges"]),
            info["inefficacy_before"], info["inefficacy_after"], info["trace_of_l"],
            info["budget"], info["escalations"], info["hindsight"],
        ))
    return trace


def run_failure_sequence(
    initial: Configuration,
    strategy: Strategy | str,
    params: GeometryParams,
    rng: np.random.Generator,
    max_escalations: int = 3,
) -> FailureTrace:
    """Draw failures until the first catastrophic one and respond with ``strategy``."""
    if not resource_feasible(initial.resources):
        raise ValueError("initial resource matrix must be feasible")
    sequence = draw_failure_sequence(initial.resources, rng)
    return replay_failure_sequence(initial, sequence, strategy, params, rng, max_escalations)


def max_trace_length(n: int, r: int, threshold: int) -> int:
    return n * r - threshold * r + 1

