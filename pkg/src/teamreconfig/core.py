"""Graph, Laplacian, resource-matrix and task-inefficacy algebra.

Vertices are 0-indexed internally; the text formats in :mod:`teamreconfig.textio`
use 1-indexed vertices.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Iterator, Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray

Edge = tuple[int, int]

EIGEN_TOL = 1e-9


def normalize_edge(i: int, j: int) -> Edge:
    i, j = int(i), int(j)
    if i == j:
        raise ValueError(f"self-loop ({i}, {j}) is not allowed")
    return (i, j) if i < j else (j, i)


def _frozen(a: NDArray) -> NDArray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Topology:
    """Undirected simple graph on ``n`` vertices."""

    n: int
    edges: frozenset[Edge] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("vertex count must be nonnegative")
        clean = set()
        for e in self.edges:
            i, j = normalize_edge(*e)
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge {e} out of range for n={self.n}")
            clean.add((i, j))
        object.__setattr__(self, "edges", frozenset(clean))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> Topology:
        edges = list(edges)
        normalized = [normalize_edge(*e) for e in edges]
        if len(set(normalized)) != len(normalized):
            raise ValueError("duplicate edges")
        return cls(n, frozenset(normalized))

    @classmethod
    def line(cls, n: int) -> Topology:
        return cls(n, frozenset((i, i + 1) for i in range(n - 1)))

    @classmethod
    def complete(cls, n: int) -> Topology:
        return cls(n, frozenset(combinations(range(n), 2)))

    @property
    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def has_edge(self, i: int, j: int) -> bool:
        return normalize_edge(i, j) in self.edges

    def adjacency_lists(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.sorted_edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def degrees(self) -> list[int]:
        deg = [0] * self.n
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def non_neighbors(self, i: int) -> list[int]:
        return [j for j in range(self.n) if j != i and not self.has_edge(i, j)]

    def toggled(self, toggles: Iterable[Edge]) -> Topology:
        edges = set(self.edges)
        for e in toggles:
            edges ^= {normalize_edge(*e)}
        return Topology(self.n, frozenset(edges))

    def difference(self, other: Topology) -> list[Edge]:
        """Edges present in exactly one of the two topologies, sorted."""
        if other.n != self.n:
            raise ValueError("vertex counts differ")
        return sorted(self.edges ^ other.edges)


@dataclass(frozen=True, eq=False)
class ResourceMatrix:
    """Binary n-by-r matrix of resource possession.

    ``threshold`` is the minimum number of robots that must hold each
    resource for the matrix to count as feasible.
    """

    gamma: NDArray[np.int64]
    threshold: int = 1

    def __post_init__(self) -> None:
        g = np.asarray(self.gamma)
        if g.ndim != 2:
            raise ValueError("resource matrix must be two-dimensional")
        if not np.all((g == 0) | (g == 1)):
            raise ValueError("resource matrix entries must be 0 or 1")
        if int(self.threshold) < 1:
            raise ValueError("threshold must be a positive integer")
        object.__setattr__(self, "gamma", _frozen(g.astype(np.int64)))
        object.__setattr__(self, "threshold", int(self.threshold))

    @classmethod
    def ones(cls, n: int, r: int, threshold: int = 1) -> ResourceMatrix:
        return cls(np.ones((n, r), dtype=np.int64), threshold)

    @property
    def n(self) -> int:
        return self.gamma.shape[0]

    @property
    def r(self) -> int:
        return self.gamma.shape[1]

    def with_entry_cleared(self, robot: int, resource: int) -> ResourceMatrix:
        g = np.array(self.gamma)
        g[robot, resource] = 0
        return ResourceMatrix(g, self.threshold)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ResourceMatrix):
            return NotImplemented
        return self.threshold == other.threshold and np.array_equal(self.gamma, other.gamma)

    def __hash__(self) -> int:
        return hash((self.gamma.shape, self.gamma.tobytes(), self.threshold))


@dataclass(frozen=True)
class GeometryParams:
    """Distances and weight bounds shared by configuration generation and synthesis.

    Defaults follow the simulation setting ``c_min = d_s``, ``c_max = d_mc``,
    ``ne = 2`` at a one-metre scale.
    """

    d_s: float = 0.5
    d_mc: float = 1.0
    c_min: float = 0.5
    c_max: float = 1.0
    ne: int = 2
    box_min: tuple[float, float, float] = (-2.0, -2.0, 0.0)
    box_max: tuple[float, float, float] = (2.0, 2.0, 2.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "box_min", tuple(float(v) for v in self.box_min))
        object.__setattr__(self, "box_max", tuple(float(v) for v in self.box_max))
        if not 0 < self.d_s < self.d_mc:
            raise ValueError("require 0 < d_s < d_mc")
        if not 0 < self.c_min < self.c_max:
            raise ValueError("require 0 < c_min < c_max")
        if self.ne < 0 or self.ne % 2:
            raise ValueError("ne must be a nonnegative even integer")
        if len(self.box_min) != 3 or len(self.box_max) != 3:
            raise ValueError("bounding box corners must be 3-vectors")
        if not all(lo < hi for lo, hi in zip(self.box_min, self.box_max)):
            raise ValueError("box_min must be below box_max on every axis")

    @property
    def kappa(self) -> float:
        return (self.d_s - self.d_mc) / (self.c_max - self.c_min)

    def with_budget(self, ne: int) -> GeometryParams:
        return GeometryParams(self.d_s, self.d_mc, self.c_min, self.c_max, ne,
                              self.box_min, self.box_max)


@dataclass(frozen=True)
class NeighborDistanceMatrix:
    """Desired distances for communicating pairs.

    Absent (non-communicating) pairs have no entry; :meth:`get` returns
    ``None`` for them. :meth:`as_array` renders them as ``inf`` for export.
    """

    n: int
    entries: Mapping[Edge, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean = {}
        for (i, j), d in self.entries.items():
            e = normalize_edge(i, j)
            if not (0 <= e[0] and e[1] < self.n):
                raise ValueError(f"pair {e} out of range for n={self.n}")
            d = float(d)
            if not np.isfinite(d):
                raise ValueError("distance entries must be finite; omit absent pairs")
            clean[e] = d
        object.__setattr__(self, "entries", dict(sorted(clean.items())))

    def get(self, i: int, j: int) -> float | None:
        return self.entries.get(normalize_edge(i, j))

    @property
    def pattern(self) -> frozenset[Edge]:
        return frozenset(self.entries)

    def as_array(self) -> NDArray[np.float64]:
        d = np.full((self.n, self.n), np.inf)
        for (i, j), v in self.entries.items():
            d[i, j] = d[j, i] = v
        return d

    @classmethod
    def from_array(cls, d: ArrayLike) -> NeighborDistanceMatrix:
        d = np.asarray(d, dtype=float)
        n = d.shape[0]
        if d.shape != (n, n):
            raise ValueError("distance matrix must be square")
        entries = {}
        for i, j in combinations(range(n), 2):
            if np.isfinite(d[i, j]) != np.isfinite(d[j, i]) or (
                np.isfinite(d[i, j]) and d[i, j] != d[j, i]
            ):
                raise ValueError(f"distance matrix is not symmetric at ({i}, {j})")
            if np.isfinite(d[i, j]):
                entries[(i, j)] = d[i, j]
        return cls(n, entries)

    def with_entry(self, i: int, j: int, value: float) -> NeighborDistanceMatrix:
        entries = dict(self.entries)
        entries[normalize_edge(i, j)] = value
        return NeighborDistanceMatrix(self.n, entries)


@dataclass(frozen=True)
class Configuration:
    topology: Topology
    distances: NeighborDistanceMatrix
    resources: ResourceMatrix

    def __post_init__(self) -> None:
        n = self.topology.n
        if self.distances.n != n or self.resources.n != n:
            raise ValueError("configuration parts disagree on the number of robots")
        if self.distances.pattern != self.topology.edges:
            raise ValueError("distance pattern must equal the topology's edge set")

    @property
    def n(self) -> int:
        return self.topology.n

    def with_resources(self, resources: ResourceMatrix) -> Configuration:
        return Configuration(self.topology, self.distances, resources)


@dataclass(frozen=True)
class ConnectivityCertificate:
    connected: bool
    mu: float


@dataclass(frozen=True, eq=False)
class WeightedLaplacian:
    matrix: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", _frozen(np.asarray(self.matrix, dtype=float)))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def weight(self, i: int, j: int) -> float:
        return float(-self.matrix[i, j])

    def topology(self) -> Topology:
        i, j = np.nonzero(np.triu(self.matrix, 1))
        return Topology(self.n, frozenset(zip(i.tolist(), j.tolist())))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightedLaplacian):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)

    __hash__ = None  # type: ignore[assignment]


def closed_adjacency(topology: Topology) -> NDArray[np.int64]:
    a = np.eye(topology.n, dtype=np.int64)
    for i, j in topology.edges:
        a[i, j] = a[j, i] = 1
    return a


def laplacian_from_weights(topology: Topology, weights: Mapping[Edge, float]) -> WeightedLaplacian:
    w = {normalize_edge(*e): float(v) for e, v in weights.items()}
    a = np.zeros((topology.n, topology.n))
    for e in topology.edges:
        if e not in w:
            raise KeyError(f"missing weight for edge {e}")
        a[e[0], e[1]] = a[e[1], e[0]] = w[e]
    return WeightedLaplacian(np.diag(a.sum(axis=1)) - a)


def unit_laplacian(topology: Topology) -> NDArray[np.float64]:
    a = closed_adjacency(topology).astype(float) - np.eye(topology.n)
    return np.diag(a.sum(axis=1)) - a


def is_connected(topology: Topology) -> bool:
    n = topology.n
    if n <= 1:
        return True
    adj = topology.adjacency_lists()
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        v = queue.popleft()
        for u in adj[v]:
            if not seen[u]:
                seen[u] = True
                count += 1
                queue.append(u)
    return count == n


def algebraic_certificate(laplacian: ArrayLike) -> float:
    """Smallest eigenvalue of ``J/n + L``; positive iff the graph is connected."""
    lap = np.asarray(laplacian, dtype=float)
    n = lap.shape[0]
    if n == 0:
        return 0.0
    m = np.full((n, n), 1.0 / n) + lap
    return max(float(np.linalg.eigvalsh(m)[0]), 0.0)


def connectivity(topology: Topology) -> ConnectivityCertificate:
    """Decide connectivity by graph search and attach the eigenvalue certificate."""
    if topology.n < 1:
        raise ValueError("connectivity needs at least one vertex")
    return ConnectivityCertificate(is_connected(topology), algebraic_certificate(unit_laplacian(topology)))


def nuclear_norm(m: ArrayLike) -> float:
    """Sum of singular values."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("nuclear norm needs finite entries")
    if m.size == 0:
        return 0.0
    return float(np.linalg.svd(m, compute_uv=False).sum())


def nuclear_norms(stack: ArrayLike) -> NDArray[np.float64]:
    """Nuclear norms of a stack of matrices with shape (..., p, q)."""
    stack = np.asarray(stack, dtype=float)
    if stack.shape[-1] == 0 or stack.shape[-2] == 0:
        return np.zeros(stack.shape[:-2])
    return np.linalg.svd(stack, compute_uv=False).sum(axis=-1)


def _check_dims(topology: Topology, resources: ResourceMatrix) -> None:
    if topology.n != resources.n:
        raise ValueError(f"topology has {topology.n} robots, resources have {resources.n}")


def inefficacy_matrix(topology: Topology, resources: ResourceMatrix) -> NDArray[np.int64]:
    _check_dims(topology, resources)
    n = topology.n
    return n - closed_adjacency(topology) @ resources.gamma


def task_inefficacy(topology: Topology, resources: ResourceMatrix) -> float:
    return nuclear_norm(inefficacy_matrix(topology, resources))


def resource_feasible(resources: ResourceMatrix) -> bool:
    return bool(np.all(resources.gamma.sum(axis=0) >= resources.threshold))


def distance_from_weight(weight: float, params: GeometryParams) -> float:
    """Map an edge weight in [c_min, c_max] affinely onto [d_mc, d_s]."""
    t = (weight - params.c_min) / (params.c_max - params.c_min)
    return t * params.d_s + (1.0 - t) * params.d_mc


def distance_from_laplacian(
    laplacian: WeightedLaplacian | ArrayLike, params: GeometryParams, *, tol: float = 1e-9
) -> NeighborDistanceMatrix:
    lap = laplacian.matrix if isinstance(laplacian, WeightedLaplacian) else np.asarray(laplacian, float)
    n = lap.shape[0]
    span = tol * params.c_max
    entries = {}
    for i, j in combinations(range(n), 2):
        v = lap[i, j]
        if v < 0:
            w = -v
            if not params.c_min - span <= w <= params.c_max + span:
                raise ValueError(f"|L[{i},{j}]| = {w} outside [{params.c_min}, {params.c_max}]")
            w = min(max(w, params.c_min), params.c_max)
            entries[(i, j)] = distance_from_weight(w, params)
        elif v > 0:
            raise ValueError(f"positive off-diagonal entry at ({i}, {j})")
    return NeighborDistanceMatrix(n, entries)


def edge_density(topology: Topology) -> float:
    n = topology.n
    if n < 2:
        raise ValueError("edge density needs at least two vertices")
    return topology.edge_count / (n * (n - 1) / 2)


def all_pairs(n: int) -> Iterator[Edge]:
    return combinations(range(n), 2)
