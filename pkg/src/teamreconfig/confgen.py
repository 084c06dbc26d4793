"""Configuration generation: choose a new communication topology and distances.

The mixed-integer semidefinite program is solved exactly by decomposition.
The binary part only selects a topology within the Frobenius budget, so the
candidates are enumerated explicitly. Connectivity and the strict
task-inefficacy decrease are checked combinatorially, and the remaining
weight problem is a linear program:

    minimize    sum_i L_ii = 2 * sum_e w_e
    subject to  c_min <= w_e <= c_max                 for every edge e
                sum_{e incident to i} w_e >= c_max    for every vertex i

Writing ``w_e = c_min + s_e``, a vertex is *deficient* when
``deg(i) * c_min < c_max``. Only deficient vertices constrain the slacks, so
the program splits into independent pieces, one per group of edges linked
through deficient vertices. Pieces with a single deficient vertex have a
closed form. The rest go to HiGHS and are memoized.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import chain, combinations, islice
from math import comb
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linprog

from .core import (
    Configuration,
    Edge,
    GeometryParams,
    ResourceMatrix,
    Topology,
    WeightedLaplacian,
    algebraic_certificate,
    closed_adjacency,
    distance_from_laplacian,
    is_connected,
    laplacian_from_weights,
    nuclear_norms,
    resource_feasible,
    task_inefficacy,
)

log = logging.getLogger(__name__)

EPS_NUC = 1e-9
TIE_TOL = 1e-9
MAX_NE = 6
CHUNK = 4096


class Infeasible(Exception):
    """The edge-weight program has no solution (an isolated vertex)."""


class NoImprovingCandidate(Exception):
    """No topology within the budget is connected and strictly improves inefficacy."""


@dataclass(frozen=True)
class TopologyCandidate:
    topology: Topology
    toggled_edges: tuple[Edge, ...]
    frobenius_cost: int


class WeightSolution(NamedTuple):
    laplacian: WeightedLaplacian
    trace: float


@dataclass(frozen=True)
class ConfigGenResult:
    configuration: Configuration
    laplacian: WeightedLaplacian
    trace: float
    inefficacy_before: float
    inefficacy_after: float
    candidate_count: int
    toggled_edges: tuple[Edge, ...] = ()
    budget: int = 2
    hindsight_inefficacy: float | None = None


# ---------------------------------------------------------------------------
# candidate enumeration


def pair_index(n: int) -> tuple[NDArray[np.intp], NDArray[np.intp]]:
    """Row and column indices of all vertex pairs i < j, lexicographic."""
    if n < 2:
        return np.empty(0, np.intp), np.empty(0, np.intp)
    i, j = np.triu_indices(n, 1)
    return i.astype(np.intp), j.astype(np.intp)


def count_candidates(n: int, ne: int) -> int:
    p = n * (n - 1) // 2
    return sum(comb(p, k) for k in range(ne // 2 + 1))


def iter_toggle_chunks(n: int, ne: int, chunk: int = CHUNK) -> Iterator[NDArray[np.intp]]:
    """Yield pair-index arrays of shape (m, k), for k = 0 .. ne // 2, in lexicographic order."""
    p = n * (n - 1) // 2
    yield np.zeros((1, 0), dtype=np.intp)
    for k in range(1, min(ne // 2, p) + 1):
        combos = combinations(range(p), k)
        while True:
            block = np.fromiter(chain.from_iterable(islice(combos, chunk)), dtype=np.intp)
            if not block.size:
                break
            yield block.reshape(-1, k)


def enumerate_topology_candidates(prev: Topology, ne: int) -> list[TopologyCandidate]:
    if ne < 0:
        raise ValueError("budget must be nonnegative")
    pi, pj = pair_index(prev.n)
    out = []
    for block in iter_toggle_chunks(prev.n, ne):
        for row in block:
            toggles = tuple((int(pi[t]), int(pj[t])) for t in row)
            out.append(TopologyCandidate(prev.toggled(toggles), toggles, 2 * len(toggles)))
    return out


def stacked_products(
    prev: Topology, gammas: NDArray, block: NDArray[np.intp]
) -> NDArray[np.float64]:
    """Closed-adjacency products for every candidate in ``block``.

    ``gammas`` has shape (q, n, r). Returns shape (m, q, n, r) with entry
    ``[c, t] = A_c @ gammas[t]`` where ``A_c`` is candidate c's closed adjacency.
    """
    gammas = np.asarray(gammas, dtype=float)
    base = np.einsum("ij,qjr->qir", closed_adjacency(prev).astype(float), gammas)
    m = block.shape[0]
    out = np.broadcast_to(base.transpose(1, 0, 2), (m,) + base.transpose(1, 0, 2).shape).copy()
    # out is (m, n, q, r) here; rows are indexed per candidate without collisions
    if block.shape[1]:
        pi, pj = pair_index(prev.n)
        present = np.zeros(len(pi), dtype=bool)
        adj = closed_adjacency(prev)
        present[:] = adj[pi, pj] == 1
        rows = np.arange(m)
        g = gammas.transpose(1, 0, 2)  # (n, q, r)
        for t in range(block.shape[1]):
            idx = block[:, t]
            sign = np.where(present[idx], -1.0, 1.0)[:, None, None]
            a, b = pi[idx], pj[idx]
            out[rows, a] += sign * g[b]
            out[rows, b] += sign * g[a]
    return out.transpose(0, 2, 1, 3)


def candidate_inefficacies(
    prev: Topology, gammas: NDArray, block: NDArray[np.intp]
) -> NDArray[np.float64]:
    """Task inefficacy of each candidate against each resource matrix: shape (m, q)."""
    n = prev.n
    prods = stacked_products(prev, gammas, block)
    return nuclear_norms(np.ascontiguousarray(n - prods))


def toggles_of(prev: Topology, row: Sequence[int]) -> tuple[Edge, ...]:
    pi, pj = pair_index(prev.n)
    return tuple((int(pi[t]), int(pj[t])) for t in row)


def connected_after(prev: Topology, adj: list[set[int]], toggles: Sequence[Edge]) -> bool:
    """Connectivity of ``prev`` with ``toggles`` applied, assuming ``prev`` is connected."""
    if all(not prev.has_edge(*e) for e in toggles):
        return True
    local = [set(s) for s in adj]
    for i, j in toggles:
        if j in local[i]:
            local[i].discard(j)
            local[j].discard(i)
        else:
            local[i].add(j)
            local[j].add(i)
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for u in local[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == prev.n


# ---------------------------------------------------------------------------
# edge weights


@lru_cache(maxsize=8192)
def _component_slacks(
    edges: tuple[tuple[int, int], ...], demands: tuple[float, ...], cap: float
) -> tuple[float, ...]:
    """Minimal slacks for one piece; vertices are local, ``demands[v] <= 0`` means unconstrained."""
    needy = [v for v, b in enumerate(demands) if b > 0]
    if len(needy) == 1:
        v = needy[0]
        return tuple(demands[v] / len(edges) for _ in edges)
    if len(edges) == 1:
        return (max(demands),)
    a = np.zeros((len(needy), len(edges)))
    row = {v: k for k, v in enumerate(needy)}
    for e, (u, v) in enumerate(edges):
        if u in row:
            a[row[u], e] = -1.0
        if v in row:
            a[row[v], e] = -1.0
    b = -np.array([demands[v] for v in needy])
    res = linprog(np.ones(len(edges)), A_ub=a, b_ub=b, bounds=[(0.0, cap)] * len(edges),
                  method="highs")
    if res.status != 0:
        raise Infeasible(res.message)
    return tuple(float(s) for s in np.clip(res.x, 0.0, cap))


def edge_weights(topology: Topology, params: GeometryParams) -> dict[Edge, float]:
    """Trace-minimal edge weights; raises :class:`Infeasible` for an isolated vertex."""
    n = topology.n
    deg = topology.degrees()
    if any(d == 0 for d in deg):
        raise Infeasible("an isolated vertex cannot meet the diagonal lower bound")
    c_min, c_max = params.c_min, params.c_max
    cap = c_max - c_min
    demand = [c_max - d * c_min for d in deg]
    needy = [b > 1e-12 * c_max for b in demand]
    weights = {e: c_min for e in topology.edges}

    # union-find over needy vertices; an edge joins the pieces of its needy endpoints
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    touching = [e for e in topology.sorted_edges if needy[e[0]] or needy[e[1]]]
    for i, j in touching:
        if needy[i] and needy[j]:
            parent[find(i)] = find(j)
    groups: dict[int, list[Edge]] = {}
    for i, j in touching:
        root = find(i) if needy[i] else find(j)
        groups.setdefault(root, []).append((i, j))

    for piece in groups.values():
        label: dict[int, int] = {}
        for e in piece:
            for v in e:
                label.setdefault(v, len(label))
        local = tuple((label[i], label[j]) for i, j in piece)
        dem = [0.0] * len(label)
        for v, k in label.items():
            if needy[v]:
                dem[k] = demand[v]
        slacks = _component_slacks(local, tuple(dem), cap)
        for e, s in zip(piece, slacks):
            weights[e] = c_min + s
    return weights


def optimize_edge_weights(topology: Topology, params: GeometryParams) -> WeightSolution:
    if not is_connected(topology):
        raise ValueError("edge weights are only defined for connected topologies")
    weights = edge_weights(topology, params)
    lap = laplacian_from_weights(topology, weights)
    return WeightSolution(lap, 2.0 * sum(weights.values()))


def weight_trace(topology: Topology, params: GeometryParams) -> float:
    return 2.0 * sum(edge_weights(topology, params).values())


# ---------------------------------------------------------------------------
# selection


def _near(a: float, b: float) -> bool:
    return abs(a - b) <= TIE_TOL * max(1.0, abs(a), abs(b))


def select_best(rows: list[tuple[float, float, tuple[Edge, ...]]]) -> int:
    """Index of the row minimizing (primary, secondary, toggles) with tolerant ties."""
    best_p = min(r[0] for r in rows)
    pool = [k for k, r in enumerate(rows) if r[0] <= best_p or _near(r[0], best_p)]
    best_s = min(rows[k][1] for k in pool)
    pool = [k for k in pool if rows[k][1] <= best_s or _near(rows[k][1], best_s)]
    return min(pool, key=lambda k: rows[k][2])


def _build_result(
    prev: Configuration,
    topology: Topology,
    toggles: tuple[Edge, ...],
    resources: ResourceMatrix,
    params: GeometryParams,
    before: float,
    count: int,
    hindsight: float | None = None,
) -> ConfigGenResult:
    lap, trace = optimize_edge_weights(topology, params)
    distances = distance_from_laplacian(lap, params)
    return ConfigGenResult(
        configuration=Configuration(topology, distances, resources),
        laplacian=lap,
        trace=trace,
        inefficacy_before=before,
        inefficacy_after=task_inefficacy(topology, resources),
        candidate_count=count,
        toggled_edges=toggles,
        budget=params.ne,
        hindsight_inefficacy=hindsight,
    )


def _check_inputs(prev: Configuration, resources: ResourceMatrix) -> None:
    if resources.n != prev.n:
        raise ValueError("resource matrix does not match the team size")
    if not resource_feasible(resources):
        raise ValueError("new resource matrix is infeasible")
    if not is_connected(prev.topology):
        raise ValueError("previous topology must be connected")


def generate_configuration(
    prev: Configuration, new_resources: ResourceMatrix, params: GeometryParams
) -> ConfigGenResult:
    """Trace-minimal connected topology within budget that strictly lowers inefficacy."""
    _check_inputs(prev, new_resources)
    topo = prev.topology
    before = task_inefficacy(topo, new_resources)
    gammas = new_resources.gamma[None].astype(float)
    adj = [set(a) for a in topo.adjacency_lists()]
    rows: list[tuple[float, float, tuple[Edge, ...]]] = []
    tops: list[Topology] = []
    count = 0
    for block in iter_toggle_chunks(topo.n, params.ne):
        count += block.shape[0]
        values = candidate_inefficacies(topo, gammas, block)[:, 0]
        for k in np.flatnonzero(values < before - EPS_NUC):
            toggles = toggles_of(topo, block[k])
            if not connected_after(topo, adj, toggles):
                continue
            cand = topo.toggled(toggles)
            rows.append((weight_trace(cand, params), float(values[k]), toggles))
            tops.append(cand)
    if not rows:
        raise NoImprovingCandidate(
            f"no connected topology within ne={params.ne} lowers inefficacy below {before:.6g}"
        )
    k = select_best(rows)
    return _build_result(prev, tops[k], rows[k][2], new_resources, params, before, count)


@dataclass
class EscalationLog:
    attempts: list[int] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)


def generate_with_escalation(
    prev: Configuration,
    new_resources: ResourceMatrix,
    params: GeometryParams,
    max_escalations: int = 3,
    max_ne: int = MAX_NE,
    max_candidates: int = 250_000,
) -> tuple[ConfigGenResult | None, EscalationLog]:
    """Retry with budget ne+2, ne+4, ... when nothing improves.

    Budgets above ``max_ne`` or with more than ``max_candidates`` candidates
    are skipped. Returns ``(None, log)`` when every attempt fails.
    """
    record = EscalationLog()
    ne = params.ne
    for step in range(max_escalations + 1):
        budget = ne + 2 * step
        if step and (budget > max_ne or count_candidates(prev.n, budget) > max_candidates):
            record.skipped.append(budget)
            log.info("skipping escalation to ne=%d", budget)
            break
        record.attempts.append(budget)
        try:
            return generate_configuration(prev, new_resources, params.with_budget(budget)), record
        except NoImprovingCandidate:
            log.info("no improving candidate at ne=%d", budget)
    return None, record


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ConstraintReport:
    checks: tuple[ConstraintCheck, ...]

    @property
    def violations(self) -> list[ConstraintCheck]:
        return [c for c in self.checks if not c.passed]

    @property
    def ok(self) -> bool:
        return not self.violations


def check_misdp_constraints(
    laplacian: NDArray,
    pi: NDArray,
    prev_closed: NDArray,
    resources: ResourceMatrix,
    params: GeometryParams,
    tol: float = 1e-9,
) -> ConstraintReport:
    lap = np.asarray(laplacian, dtype=float)
    pi = np.asarray(pi)
    n = lap.shape[0]
    checks = []

    rowsum = float(np.max(np.abs(lap.sum(axis=1)))) if n else 0.0
    checks.append(ConstraintCheck("zero_row_sums", rowsum <= tol * max(1.0, params.c_max * n),
                                  f"max |row sum| = {rowsum:.3g}"))
    mu = algebraic_certificate(lap)
    checks.append(ConstraintCheck("connectivity", mu > tol, f"mu = {mu:.6g}"))
    checks.append(ConstraintCheck("pi_unit_diagonal", bool(np.all(np.diag(pi) == 1))))
    checks.append(ConstraintCheck("pi_symmetric", bool(np.array_equal(pi, pi.T))))
    checks.append(ConstraintCheck("pi_binary", bool(np.all((pi == 0) | (pi == 1)))))
    dmin = float(np.min(np.diag(lap))) if n else params.c_max
    checks.append(ConstraintCheck("diagonal_lower_bound", dmin >= params.c_max - tol,
                                  f"min diagonal = {dmin:.6g}"))

    bad = []
    for i, j in combinations(range(n), 2):
        for a, b in ((i, j), (j, i)):
            mag = abs(lap[a, b])
            lo, hi = params.c_min * pi[a, b], params.c_max * pi[a, b]
            if not (lo - tol <= mag <= hi + tol) or lap[a, b] > tol:
                bad.append((a + 1, b + 1))
    checks.append(ConstraintCheck("off_diagonal_bounds", not bad,
                                  f"violating entries: {bad[:5]}" if bad else ""))

    cost = int(np.sum((pi.astype(int) - np.asarray(prev_closed).astype(int)) ** 2))
    checks.append(ConstraintCheck("frobenius_budget", cost <= params.ne,
                                  f"||Pi - A_prev||_F^2 = {cost}, ne = {params.ne}"))

    n_ = resources.n
    after = nuclear_norms((n_ - pi @ resources.gamma)[None])[0]
    before = nuclear_norms((n_ - np.asarray(prev_closed) @ resources.gamma)[None])[0]
    checks.append(ConstraintCheck("strict_decrease", after < before - EPS_NUC,
                                  f"{after:.9g} vs {before:.9g}"))
    return ConstraintReport(tuple(checks))


def verify_misdp_constraints(
    result: ConfigGenResult, prev: Configuration, params: GeometryParams
) -> ConstraintReport:
    return check_misdp_constraints(
        result.laplacian.matrix,
        closed_adjacency(result.configuration.topology),
        closed_adjacency(prev.topology),
        result.configuration.resources,
        params.with_budget(result.budget),
    )
