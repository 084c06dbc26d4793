"""Formation synthesis by simulated annealing with exponential penalties.

Coordinates are in metres. The energy is the squared mismatch between
realized and desired edge lengths plus ``exp(H * y)`` penalties for every
constraint ``y <= 0``: non-neighbours at least ``d_mc`` apart, neighbours
between ``d_s`` and ``d_mc``, and every coordinate inside the bounding box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import Configuration, GeometryParams

MAX_EXPONENT = 700.0
TOL_FEAS = 1e-6


class SynthesisFailed(Exception):
    def __init__(self, message: str, report: FeasibilityReport | None = None,
                 best: Formation | None = None):
        super().__init__(message)
        self.report = report
        self.best = best


@dataclass(frozen=True, eq=False)
class Formation:
    points: NDArray[np.float64]

    def __post_init__(self) -> None:
        p = np.array(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("formation coordinates must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Formation):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class AnnealParams:
    steps: int = 20_000
    t_start: float = 1.0
    t_end: float = 1e-8
    h_start: float = 1.0
    h_end: float = 1e3
    delta_max: float | None = None  # None -> d_s / 10
    max_restarts: int = 5
    seed: int = 0
    acceptance: str = "metropolis"  # or "printed": exp(-T * dE)
    max_exponent: float = MAX_EXPONENT

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if not self.t_start > self.t_end > 0:
            raise ValueError("require t_start > t_end > 0")
        if not self.h_end >= self.h_start > 0:
            raise ValueError("require h_end >= h_start > 0")
        if self.delta_max is not None and self.delta_max <= 0:
            raise ValueError("delta_max must be positive")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be nonnegative")
        if self.acceptance not in ("metropolis", "printed"):
            raise ValueError("acceptance must be 'metropolis' or 'printed'")

    def step_bound(self, gparams: GeometryParams) -> float:
        return self.delta_max if self.delta_max is not None else gparams.d_s / 10.0


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    edge_min: float
    edge_max: float
    non_edge: float
    box: float
    tol: float = TOL_FEAS

    @property
    def worst(self) -> float:
        return min(self.edge_min, self.edge_max, self.non_edge, self.box)


class AnnealResult(NamedTuple):
    formation: Formation
    energy: float
    saturations: int
    accepted: int


@dataclass
class SynthesisResult:
    formation: Formation
    report: FeasibilityReport
    stress: float
    attempts: int
    energies: list[float] = field(default_factory=list)


def _as_points(x: Formation | ArrayLike) -> NDArray[np.float64]:
    return x.points if isinstance(x, Formation) else np.asarray(x, dtype=float).reshape(-1, 3)


def stress_objective(x: Formation | ArrayLike, config: Configuration) -> float:
    p = _as_points(x)
    total = 0.0
    for (i, j), d in config.distances.entries.items():
        total += (float(np.linalg.norm(p[i] - p[j])) - d) ** 2
    return total


def penalty(y: float, h: float, max_exponent: float = MAX_EXPONENT) -> float:
    if h <= 0:
        raise ValueError("hardness must be positive")
    return math.exp(min(h * y, max_exponent))


class _Counter:
    __slots__ = ("saturated",)

    def __init__(self) -> None:
        self.saturated = 0


def _pen(z: float, cap: float, counter: _Counter | None) -> float:
    if z > cap:
        if counter is not None:
            counter.saturated += 1
        z = cap
    return math.exp(z)


def energy(
    x: Formation | ArrayLike,
    config: Configuration,
    params: GeometryParams,
    h: float,
    max_exponent: float = MAX_EXPONENT,
) -> float:
    return _full_energy(_as_points(x).tolist(), _Model(config, params), h, max_exponent, None)


class _Model:
    """Per-robot neighbour lists for O(n) energy differences."""

    def __init__(self, config: Configuration, params: GeometryParams):
        n = config.n
        self.n = n
        self.d_s = params.d_s
        self.d_mc = params.d_mc
        self.bmin = list(params.box_min)
        self.bmax = list(params.box_max)
        target = config.distances.entries
        self.pairs = []
        for i, j in combinations(range(n), 2):
            self.pairs.append((i, j, target.get((i, j))))
        self.partners: list[list[tuple[int, float | None]]] = [[] for _ in range(n)]
        for i, j, d in self.pairs:
            self.partners[i].append((j, d))
            self.partners[j].append((i, d))


def _pair_terms(dist: float, d: float | None, m: _Model, h: float, cap: float,
                counter: _Counter | None) -> float:
    if d is None:
        return _pen(h * (m.d_mc - dist), cap, counter)
    return ((dist - d) ** 2 + _pen(h * (m.d_s - dist), cap, counter)
            + _pen(h * (dist - m.d_mc), cap, counter))


def _box_terms(p: list[float], m: _Model, h: float, cap: float, counter: _Counter | None) -> float:
    s = 0.0
    for a in range(3):
        s += _pen(h * (p[a] - m.bmax[a]), cap, counter) + _pen(h * (m.bmin[a] - p[a]), cap, counter)
    return s


def _local_energy(pts: list[list[float]], j: int, pj: list[float], m: _Model, h: float,
                  cap: float, counter: _Counter | None) -> float:
    x, y, z = pj
    s = _box_terms(pj, m, h, cap, counter)
    for k, d in m.partners[j]:
        q = pts[k]
        dist = math.sqrt((x - q[0]) ** 2 + (y - q[1]) ** 2 + (z - q[2]) ** 2)
        s += _pair_terms(dist, d, m, h, cap, counter)
    return s


def _full_energy(pts: list[list[float]], m: _Model, h: float, cap: float,
                 counter: _Counter | None) -> float:
    s = 0.0
    for i, j, d in m.pairs:
        dist = math.dist(pts[i], pts[j])
        s += _pair_terms(dist, d, m, h, cap, counter)
    for p in pts:
        s += _box_terms(p, m, h, cap, counter)
    return s


def geometric_schedule(start: float, end: float, steps: int) -> NDArray[np.float64]:
    """``steps`` values decaying (or growing) geometrically from ``start`` to exactly ``end``."""
    if steps == 1:
        return np.array([float(end)])
    k = np.arange(steps) / (steps - 1)
    out = start * (end / start) ** k
    out[0], out[-1] = start, end
    return out


def propose(x: Formation, delta_max: float, rng: np.random.Generator) -> Formation:
    if delta_max <= 0:
        raise ValueError("delta_max must be positive")
    p = np.array(x.points)
    j = rng.integers(x.n)
    d = rng.integers(3)
    p[j, d] += rng.uniform(-delta_max, delta_max)
    return Formation(p)


def anneal(
    x0: Formation,
    config: Configuration,
    gparams: GeometryParams,
    aparams: AnnealParams,
    rng: np.random.Generator | None = None,
    history: list[float] | None = None,
) -> AnnealResult:
    """Run exactly ``aparams.steps`` proposals and return the best state seen.

    States are ranked by their energy at the final hardness ``h_end``. If
    ``history`` is given, that energy of the current state after each step is
    appended to it (slow; for diagnostics).
    """
    if rng is None:
        rng = np.random.default_rng(aparams.seed)
    n = x0.n
    m = _Model(config, gparams)
    cap = aparams.max_exponent
    h_final = aparams.h_end
    counter = _Counter()
    steps = aparams.steps
    temps = geometric_schedule(aparams.t_start, aparams.t_end, steps).tolist()
    hards = geometric_schedule(aparams.h_start, aparams.h_end, steps).tolist()
    delta = aparams.step_bound(gparams)
    js = rng.integers(0, n, steps).tolist() if n else [0] * steps
    axes = rng.integers(0, 3, steps).tolist()
    moves = rng.uniform(-delta, delta, steps).tolist()
    coins = rng.random(steps).tolist()
    printed = aparams.acceptance == "printed"

    pts = x0.points.tolist()
    current = _full_energy(pts, m, h_final, cap, counter)
    best = current
    best_pts = [p[:] for p in pts]
    accepted = 0
    since_sync = 0
    for k in range(steps):
        if n == 0:
            break
        j, a = js[k], axes[k]
        old = pts[j]
        new = old[:]
        new[a] += moves[k]
        h, t = hards[k], temps[k]
        de = (_local_energy(pts, j, new, m, h, cap, counter)
              - _local_energy(pts, j, old, m, h, cap, counter))
        if de < 0:
            take = True
        else:
            arg = -t * de if printed else -de / t
            take = coins[k] < math.exp(max(arg, -745.0))
        if take:
            de_final = (_local_energy(pts, j, new, m, h_final, cap, counter)
                        - _local_energy(pts, j, old, m, h_final, cap, counter))
            pts[j] = new
            accepted += 1
            current += de_final
            since_sync += 1
            if current < best or since_sync >= 512:
                current = _full_energy(pts, m, h_final, cap, None)
                since_sync = 0
                if current < best:
                    best = current
                    best_pts = [p[:] for p in pts]
        if history is not None:
            history.append(_full_energy(pts, m, h_final, cap, None))
    return AnnealResult(Formation(np.array(best_pts).reshape(-1, 3)), best, counter.saturated, accepted)


def check_feasibility(
    x: Formation | ArrayLike, config: Configuration, gparams: GeometryParams, tol: float = TOL_FEAS
) -> FeasibilityReport:
    p = _as_points(x)
    edge_min = edge_max = non_edge = math.inf
    for i, j in combinations(range(p.shape[0]), 2):
        dist = float(np.linalg.norm(p[i] - p[j]))
        if config.topology.has_edge(i, j):
            edge_min = min(edge_min, dist - gparams.d_s)
            edge_max = min(edge_max, gparams.d_mc - dist)
        else:
            non_edge = min(non_edge, dist - gparams.d_mc)
    box = math.inf
    if p.size:
        box = float(min(np.min(p - np.array(gparams.box_min)), np.min(np.array(gparams.box_max) - p)))
    ok = min(edge_min, edge_max, non_edge, box) >= -tol
    return FeasibilityReport(ok, edge_min, edge_max, non_edge, box, tol)


def grid_formation(n: int, gparams: GeometryParams) -> Formation:
    """Robots on a 3-D grid with spacing ``d_mc``, filled x-first from the box corner."""
    lo = np.array(gparams.box_min)
    hi = np.array(gparams.box_max)
    spacing = gparams.d_mc
    margin = np.minimum(spacing / 2, (hi - lo) / 2)
    counts = np.maximum(1, np.floor((hi - lo - 2 * margin) / spacing).astype(int) + 1)
    pts = []
    for k in range(n):
        ix = k % counts[0]
        iy = (k // counts[0]) % counts[1]
        iz = (k // (counts[0] * counts[1])) % counts[2]
        pts.append(lo + margin + spacing * np.array([ix, iy, iz]))
    return Formation(np.array(pts).reshape(-1, 3))


def synthesize(
    initial: Formation,
    config: Configuration,
    gparams: GeometryParams,
    aparams: AnnealParams,
) -> SynthesisResult:
    """Anneal from ``initial``; on an infeasible result restart from a perturbed guess.

    Attempt ``k`` draws from its own child of ``SeedSequence(aparams.seed)``.
    Raises :class:`SynthesisFailed` when no attempt passes the feasibility check.
    """
    if initial.n != config.n:
        raise ValueError("initial formation has the wrong number of robots")
    lo = np.array(gparams.box_min)
    hi = np.array(gparams.box_max)
    if config.n <= 1:
        f = Formation(np.clip(initial.points, lo, hi))
        return SynthesisResult(f, check_feasibility(f, config, gparams), 0.0, 0)

    streams = np.random.SeedSequence(aparams.seed).spawn(aparams.max_restarts + 1)
    best: tuple[float, Formation, FeasibilityReport] | None = None
    energies = []
    for attempt, seq in enumerate(streams):
        rng = np.random.default_rng(seq)
        start = initial.points
        if attempt:
            jitter = rng.uniform(-gparams.d_s / 2, gparams.d_s / 2, start.shape)
            start = np.clip(start + jitter, lo, hi)
        result = anneal(Formation(start), config, gparams, aparams, rng)
        energies.append(result.energy)
        report = check_feasibility(result.formation, config, gparams)
        if report.feasible:
            return SynthesisResult(result.formation, report,
                                   stress_objective(result.formation, config), attempt + 1, energies)
        if best is None or report.worst > best[2].worst:
            best = (result.energy, result.formation, report)
    assert best is not None
    raise SynthesisFailed(
        f"no feasible formation after {aparams.max_restarts + 1} attempts "
        f"(worst margin {best[2].worst:.3g} m)",
        best[2],
        best[1],
    )


@dataclass
class TransitionReport:
    min_separation: float
    violations: list[tuple[int, int]]
    samples: int


def straight_line_transition_check(
    start: Formation | ArrayLike, end: Formation | ArrayLike, d_s: float, samples: int = 101
) -> TransitionReport:
    """Closest approach of every pair when all robots move linearly in lockstep.

    The pair distance along the path is the norm of ``a + s * b`` for ``s`` in
    [0, 1], whose minimum has a closed form; a uniform sample grid guards the
    analytic value. Pairs that come closer than ``d_s`` are reported.
    """
    p0, p1 = _as_points(start), _as_points(end)
    if p0.shape != p1.shape:
        raise ValueError("formations differ in size")
    s = np.linspace(0.0, 1.0, max(samples, 2))
    worst = math.inf
    bad = []
    for i, j in combinations(range(p0.shape[0]), 2):
        a = p0[i] - p0[j]
        b = (p1[i] - p1[j]) - a
        bb = float(b @ b)
        t = 0.0 if bb == 0 else min(1.0, max(0.0, -float(a @ b) / bb))
        closest = float(np.linalg.norm(a + t * b))
        sampled = float(np.min(np.linalg.norm(a[None, :] + s[:, None] * b[None, :], axis=1)))
        d = min(closest, sampled)
        worst = min(worst, d)
        if d < d_s:
            bad.append((i, j))
    return TransitionReport(worst, bad, len(s))
