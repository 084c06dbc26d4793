from __future__ import annotations

import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamreconfig.core import Configuration, GeometryParams, NeighborDistanceMatrix, ResourceMatrix, Topology
from teamreconfig.formation import (
    AnnealParams,
    Formation,
    SynthesisFailed,
    anneal,
    check_feasibility,
    energy,
    geometric_schedule,
    grid_formation,
    penalty,
    propose,
    straight_line_transition_check,
    stress_objective,
    synthesize,
)

P = GeometryParams()


def config_from(n, distances: dict) -> Configuration:
    topo = Topology(n, frozenset(distances))
    return Configuration(topo, NeighborDistanceMatrix(n, distances), ResourceMatrix.ones(n, 1))


def energy_oracle(pts, config, params, h):
    """Term-by-term energy, written independently of the incremental model."""
    pts = np.asarray(pts, float)
    total = 0.0
    for i, j in combinations(range(len(pts)), 2):
        dist = float(np.sqrt(np.sum((pts[i] - pts[j]) ** 2)))
        d = config.distances.get(i, j)
        if d is None:
            total += math.exp(h * (params.d_mc - dist))
        else:
            total += (dist - d) ** 2 + math.exp(h * (params.d_s - dist)) + math.exp(h * (dist - params.d_mc))
    for p in pts:
        for a in range(3):
            total += math.exp(h * (p[a] - params.box_max[a])) + math.exp(h * (params.box_min[a] - p[a]))
    return total


# --- objective and penalties ------------------------------------------------------


def test_stress_examples():
    cfg = config_from(2, {(0, 1): 0.7})
    assert stress_objective([[0, 0, 0], [0.7, 0, 0]], cfg) == 0
    assert stress_objective([[0, 0, 0], [1.7, 0, 0]], cfg) == pytest.approx(1.0)


def test_stress_matches_direct_sum_on_random_instance():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1, 1, (5, 3))
    d = {(0, 1): 0.6, (1, 2): 0.9, (2, 4): 0.75, (0, 3): 0.5}
    cfg = config_from(5, d)
    expect = sum((np.linalg.norm(pts[i] - pts[j]) - v) ** 2 for (i, j), v in d.items())
    assert stress_objective(pts, cfg) == pytest.approx(expect, rel=1e-12)


def test_penalty_values():
    assert penalty(0.0, 7.0) == 1.0
    assert penalty(-0.02, 1000) == pytest.approx(2.061153622438558e-09, rel=1e-12)
    assert penalty(0.02, 1000) == pytest.approx(485165195.4097903, rel=1e-12)
    assert penalty(5.0, 1000) == math.exp(700)  # clamped, stays finite
    with pytest.raises(ValueError):
        penalty(0.1, 0.0)


def test_energy_of_strictly_feasible_point_is_nearly_stress():
    cfg = config_from(3, {(0, 1): 0.75, (1, 2): 0.75})
    pts = np.array([[0, 0, 1], [0.75, 0, 1], [1.5, 0, 1]])
    terms = 1 * 1 + 2 * 2 + 3 * 6  # non-edge pairs, edge pairs (two each), box terms
    gap = energy(pts, cfg, P, 1e3) - stress_objective(pts, cfg)
    assert 0 <= gap <= terms * 2.1e-9


def test_non_edge_at_exact_range_contributes_one():
    cfg = config_from(2, {})
    pts = np.array([[0, 0, 1], [P.d_mc, 0, 1]])
    box = sum(math.exp(1e3 * (p[a] - P.box_max[a])) + math.exp(1e3 * (P.box_min[a] - p[a]))
              for p in pts for a in range(3))
    assert energy(pts, cfg, P, 1e3) - box == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(-2.5, 2.5), min_size=15, max_size=15), st.floats(1.0, 50.0))
def test_energy_matches_term_by_term_oracle(coords, h):
    pts = np.array(coords).reshape(5, 3)
    cfg = config_from(5, {(0, 1): 0.6, (1, 2): 0.9, (3, 4): 0.5, (0, 4): 1.0})
    assert energy(pts, cfg, P, h) == pytest.approx(energy_oracle(pts, cfg, P, h), rel=1e-10)


# --- annealing ----------------------------------------------------------------------


def test_geometric_schedule_hits_both_ends():
    t = geometric_schedule(1.0, 1e-8, 20000)
    assert t[0] == 1.0 and t[-1] == 1e-8
    assert np.all(np.diff(t) < 0)
    h = geometric_schedule(1.0, 1e3, 5)
    assert h[-1] == 1e3 and np.allclose(h, [1, 10 ** 0.75, 10 ** 1.5, 10 ** 2.25, 1e3])
    assert geometric_schedule(3.0, 2.0, 1).tolist() == [2.0]


def test_propose_changes_one_coordinate_within_bound():
    x = Formation(np.zeros((4, 3)))
    rng = np.random.default_rng(0)
    for _ in range(50):
        y = propose(x, 0.05, rng)
        diff = y.points - x.points
        assert np.count_nonzero(diff) <= 1
        assert np.all(np.abs(diff) <= 0.05)


def test_anneal_is_deterministic_and_never_worse_than_start():
    cfg = config_from(3, {(0, 1): 0.75, (1, 2): 0.75})
    start = Formation(np.array([[0, 0, 1], [1.0, 0, 1], [2.0, 0, 1]]))
    ap = AnnealParams(steps=3000, seed=9)
    a = anneal(start, cfg, P, ap)
    b = anneal(start, cfg, P, ap)
    assert a.formation == b.formation and a.energy == b.energy
    assert a.energy <= energy(start.points, cfg, P, ap.h_end) + 1e-12
    assert a.energy == pytest.approx(energy(a.formation.points, cfg, P, ap.h_end), rel=1e-9)


def test_anneal_history_records_each_step():
    cfg = config_from(2, {(0, 1): 0.8})
    hist: list[float] = []
    anneal(Formation(np.array([[0, 0, 1], [1, 0, 1.0]])), cfg, P, AnnealParams(steps=50), history=hist)
    assert len(hist) == 50


def test_printed_acceptance_runs_and_stays_finite():
    cfg = config_from(2, {(0, 1): 0.8})
    res = anneal(Formation(np.array([[0, 0, 1], [1, 0, 1.0]])), cfg, P,
                 AnnealParams(steps=500, acceptance="printed"))
    assert math.isfinite(res.energy)


def test_anneal_params_validation():
    with pytest.raises(ValueError):
        AnnealParams(t_start=1e-9)
    with pytest.raises(ValueError):
        AnnealParams(acceptance="greedy")
    with pytest.raises(ValueError):
        AnnealParams(steps=0)
    assert AnnealParams().step_bound(P) == pytest.approx(P.d_s / 10)


# --- feasibility ------------------------------------------------------------------


def test_feasibility_examples():
    cfg = config_from(2, {(0, 1): P.d_s})
    assert check_feasibility([[0, 0, 1], [P.d_s, 0, 1]], cfg, P).feasible
    non = config_from(2, {})
    rep = check_feasibility([[0, 0, 1], [0.99 * P.d_mc, 0, 1]], non, P)
    assert not rep.feasible and rep.non_edge == pytest.approx(-0.01 * P.d_mc)
    rep = check_feasibility([[0, 0, -0.1], [P.d_mc + 0.1, 0, 1]], non, P)
    assert rep.box == pytest.approx(-0.1) and not rep.feasible


def test_grid_formation_is_feasible_for_an_empty_graph():
    f = grid_formation(7, P)
    assert check_feasibility(f, config_from(7, {}), P).feasible


# --- synthesis ------------------------------------------------------------------


def test_realizable_chain():
    d = {(i, i + 1): P.d_mc for i in range(3)}
    big = GeometryParams(box_min=(-5, -5, -5), box_max=(5, 5, 5))
    cfg = config_from(4, d)
    # a bent chain: consecutive links exactly d_mc, other pairs farther apart
    start = Formation(np.array([[0, 0, 0], [1, 0, 0], [1.5, 0.8, 0], [2.3, 1.4, 0.0]]))
    res = synthesize(start, cfg, big, AnnealParams(seed=1))
    assert res.report.feasible and res.stress <= 1e-3


def test_single_robot_is_clamped():
    cfg = config_from(1, {})
    res = synthesize(Formation(np.array([[9.0, 0.0, -3.0]])), cfg, P, AnnealParams())
    assert res.report.feasible
    assert res.formation.points.tolist() == [[2.0, 0.0, 0.0]]


def test_impossible_box_raises():
    tiny = GeometryParams(box_min=(0, 0, 0), box_max=(0.1, 0.1, 0.1))
    cfg = config_from(2, {(0, 1): 0.75})
    with pytest.raises(SynthesisFailed) as err:
        synthesize(Formation(np.zeros((2, 3))), cfg, tiny, AnnealParams(steps=500, max_restarts=1))
    assert err.value.report is not None and not err.value.report.feasible


def test_synthesis_is_deterministic():
    cfg = config_from(4, {(0, 1): 0.75, (1, 2): 0.75, (2, 3): 0.6, (0, 3): 0.9})
    ap = AnnealParams(steps=4000, seed=3)
    a = synthesize(grid_formation(4, P), cfg, P, ap)
    b = synthesize(grid_formation(4, P), cfg, P, ap)
    assert a.formation == b.formation and a.attempts == b.attempts


def test_wrong_size_start_rejected():
    with pytest.raises(ValueError):
        synthesize(Formation(np.zeros((3, 3))), config_from(2, {}), P, AnnealParams())


# --- straight-line transitions ----------------------------------------------------


def test_identical_formations_report_min_pairwise_distance():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0.0]])
    rep = straight_line_transition_check(pts, pts, 0.5)
    assert rep.min_separation == pytest.approx(1.0) and not rep.violations


def test_swap_along_a_line_collides():
    a = np.array([[0, 0, 0], [1, 0, 0.0]])
    rep = straight_line_transition_check(a, a[::-1], 0.5)
    assert rep.violations == [(0, 1)] and rep.min_separation == pytest.approx(0, abs=1e-12)


def test_analytic_minimum_matches_dense_sampling():
    rng = np.random.default_rng(8)
    for _ in range(20):
        p0 = rng.uniform(-2, 2, (4, 3))
        p1 = p0 + rng.uniform(-1, 1, (1, 3)) + rng.uniform(-0.3, 0.3, (4, 3))
        rep = straight_line_transition_check(p0, p1, 0.0)
        s = np.linspace(0, 1, 200001)[:, None, None]
        path = p0[None] + s * (p1 - p0)[None]
        dense = min(np.linalg.norm(path[:, i] - path[:, j], axis=1).min()
                    for i, j in combinations(range(4), 2))
        assert rep.min_separation == pytest.approx(dense, abs=1e-6)
    with pytest.raises(ValueError):
        straight_line_transition_check(np.zeros((2, 3)), np.zeros((3, 3)), 0.1)


def test_formation_rejects_bad_points():
    with pytest.raises(ValueError):
        Formation(np.array([[np.nan, 0, 0]]))
    with pytest.raises(ValueError):
        Formation(np.zeros((2, 2)))
