from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from teamreconfig.config import ExperimentConfig
from teamreconfig.core import ResourceMatrix, Topology, task_inefficacy
from teamreconfig.failsim import Strategy, events_from_order, run_failure_sequence, rng_stream
from teamreconfig.harness import (
    BIN_COLUMNS,
    HINDSIGHT_RECORD_COLUMNS,
    RANDOM_RECORD_COLUMNS,
    SCENARIO_STEP_COLUMNS,
    bin_records,
    csv_text,
    density_bin,
    emit_outputs,
    hindsight_files,
    hindsight_trial,
    initial_configuration,
    random_comparison_files,
    random_edge_trial,
    run_hindsight_comparison,
    run_random_edge_comparison,
    run_scenario,
    scenario_files,
    trace_from_dict,
    trace_to_dict,
)

FAST = ExperimentConfig(steps=4000, trials=12, p_r=[20.0, 100.0], n_max=8, r_max=5,
                        hindsight_n=[4], hindsight_trials=2, seed=3)


def _header(text):
    return next(csv.reader(io.StringIO(text)))


# --- binning ----------------------------------------------------------------------


def test_density_bins_partition_unit_interval():
    assert density_bin(1, 2, 50) == 49  # density exactly 1 -> last bin
    assert density_bin(1, 11, 50) == 0  # 1/55 lies in (0, 0.02]
    assert density_bin(1, 5, 50) == 4  # 0.1 is the upper edge of bin 4
    assert density_bin(3, 6, 5) == 0  # 0.2 closes the first of five bins


@given(st.integers(2, 40), st.data(), st.integers(1, 60))
def test_density_bin_contains_density(n, data, bins):
    total = n * (n - 1) // 2
    e = data.draw(st.integers(1, total))
    k = density_bin(e, n, bins)
    # exact rational comparison: k / bins < e / total <= (k + 1) / bins
    assert k * total < e * bins <= (k + 1) * total


def test_binned_series_reports_only_occupied_bins():
    recs = [{"bin": 0, "delta_v": 1.0}, {"bin": 0, "delta_v": -3.0}, {"bin": 2, "delta_v": 2.0}]
    s = bin_records(recs, 20.0, 4)
    assert s.means() == {0: -1.0, 2: 2.0}
    assert s.fraction_positive() == 0.5
    assert s.edges == [0, 0.25, 0.5, 0.75, 1.0]
    rows = s.rows()
    assert [r["midpoint"] for r in rows] == [0.125, 0.625]
    assert bin_records([], 20.0, 3).rows() == []


# --- CSV / JSON -------------------------------------------------------------------


def test_empty_results_give_header_only_csv():
    text = csv_text([], RANDOM_RECORD_COLUMNS)
    assert text == ",".join(RANDOM_RECORD_COLUMNS) + "\n"
    with pytest.raises(ValueError):
        csv_text([{"x": 1}], ["y"])


def test_trace_round_trip():
    cfg = ExperimentConfig()
    initial = initial_configuration(5, ResourceMatrix.ones(5, 2), cfg)
    for strategy in Strategy:
        trace = run_failure_sequence(initial, strategy, cfg.geometry(), rng_stream(1, strategy.value))
        doc = json.loads(json.dumps(trace_to_dict(trace)))
        back = trace_from_dict(doc)
        assert back.initial == trace.initial and back.strategy == trace.strategy
        assert len(back) == len(trace)
        for a, b in zip(back.steps, trace.steps):
            assert a == b
        step = doc["steps"][0]
        assert {"step", "event", "kind", "toggled_edges", "inefficacy_before", "inefficacy_after",
                "trace_of_L", "distances"} <= set(step)


def test_emit_outputs(tmp_path):
    paths = emit_outputs({"b.csv": "x\n", "a.json": "{}\n"}, tmp_path / "new")
    assert [p.name for p in paths] == ["a.json", "b.csv"]
    assert (tmp_path / "new" / "b.csv").read_text() == "x\n"


# --- experiments ------------------------------------------------------------------


def test_random_trial_reproducible_from_sub_seed():
    records, series = run_random_edge_comparison(FAST)
    assert len(records) == 24
    for rec in records[::5]:
        again = random_edge_trial(rec["sub_seed"], rec["p_r"], FAST, rec["trial"])
        assert again == rec
    for rec in records:
        n = rec["n"]
        assert FAST.n_min <= n <= FAST.n_max
        assert rec["bin"] == density_bin(rec["edges"], n, FAST.bins)
        assert rec["delta_v"] == pytest.approx(rec["inefficacy_random"] - rec["inefficacy_ours"])
    files = random_comparison_files(records, series, FAST)
    assert _header(files["compare_random_records.csv"]) == RANDOM_RECORD_COLUMNS
    assert _header(files["compare_random_bins.csv"]) == BIN_COLUMNS


def test_delta_is_zero_when_neither_strategy_can_improve():
    # complete parent: the random robot has no non-neighbour, and every
    # candidate topology removes edges, which cannot lower inefficacy here
    cfg = ExperimentConfig(trials=40, p_r=[100.0], n_min=3, n_max=4, seed=11)
    records, _ = run_random_edge_comparison(cfg)
    complete = [r for r in records if r["edge_density"] == 1.0]
    assert complete
    for r in complete:
        assert r["delta_v"] == 0 and r["ours_status"] == "unchanged"


def test_ours_improves_on_the_parent():
    records, _ = run_random_edge_comparison(FAST)
    for r in records:
        if r["ours_status"] == "reconfigured":
            assert r["inefficacy_ours"] < r["inefficacy_parent"]


def test_hindsight_comparison_dominance_and_determinism():
    rows = run_hindsight_comparison(FAST)
    assert rows and all(r["dominance_ok"] for r in rows)
    assert rows == run_hindsight_comparison(FAST)
    files = hindsight_files(rows, FAST)
    assert _header(files["compare_hindsight_records.csv"]) == HINDSIGHT_RECORD_COLUMNS
    one = hindsight_trial(rows[0]["sub_seed"], 4, FAST, 0)
    assert one == [r for r in rows if r["trial"] == 0]


def test_scenario_outputs():
    cfg = ExperimentConfig(steps=6000, n=5, r=2, seed=4)
    result = run_scenario(cfg)
    assert len(result.trace) <= 5 * 2 - 2 + 1
    assert len(result.formations) == len(result.trace) + 1
    assert all(s["feasible"] for s in result.synthesis if s["status"] != "failed")
    files = scenario_files(result, cfg)
    assert _header(files["scenario_steps.csv"]) == SCENARIO_STEP_COLUMNS
    summary = json.loads(files["scenario_summary.json"])
    assert summary["trace_length"] == len(result.trace)
    assert files == scenario_files(run_scenario(cfg), cfg)


def test_scenario_with_fixed_order():
    cfg = ExperimentConfig(steps=3000, n=3, r=1)
    seq = events_from_order(ResourceMatrix.ones(3, 1), [(0, 0), (1, 0), (2, 0)])
    result = run_scenario(cfg, seq)
    assert [s.status for s in result.trace.steps][-1] == "catastrophic"
    assert len(result.trace) == 3
    assert task_inefficacy(Topology.line(3), ResourceMatrix.ones(3, 1)) > 0


def test_worker_pool_matches_serial():
    import dataclasses

    serial, _ = run_random_edge_comparison(FAST)
    pooled, _ = run_random_edge_comparison(dataclasses.replace(FAST, workers=2))
    assert pooled == serial
