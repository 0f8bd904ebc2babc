import dataclasses
import json
import math
import os
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phaselens.cli import main
from phaselens.core import DomainError, ZeroNoise
from phaselens.experiments import (CSV_COLUMNS, ExperimentPlan, TrialRecord, aggregate,
                                   coefficient_of_variation, preset, records_from_csv,
                                   records_to_csv, resolve_m_values, run_experiment, run_trial,
                                   sample_signal)
from phaselens.solvers import SolverConfig, SparseSpectral


def small_plan(**kw):
    base = dict(kind="dense", d=8, m_values={"multiples_of_d": [6, 12, 24]}, trials=3)
    base.update(kw)
    return ExperimentPlan(**base)


def test_resolve_m_values():
    assert resolve_m_values([10, 20], 4) == [10, 20]
    assert resolve_m_values({"multiples_of_d": [4, 8]}, 64) == [256, 512]
    s, d = 10, 256
    expect = [math.ceil(c * s * math.log(math.e * d / s)) for c in (6, 20)]
    assert resolve_m_values({"multiples_of_slog": [6, 20]}, d, s) == expect
    for bad in ([], [5, 5], [4, 3], {"multiples_of_x": [1]}):
        with pytest.raises(DomainError):
            resolve_m_values(bad, 4)
    with pytest.raises(DomainError):
        resolve_m_values({"multiples_of_slog": [1]}, 4)


def test_plan_validation_and_round_trip(tmp_path):
    with pytest.raises(DomainError):
        ExperimentPlan("sparse", d=10, m_values=[20], trials=1, s=11)
    with pytest.raises(DomainError):
        ExperimentPlan("other", d=10, m_values=[20], trials=1)
    plan = preset("desk", "sparse")
    assert plan.d == 256 and plan.s == 10 and len(plan.ms) == 5 and plan.trials == 20
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan.to_dict()))
    assert ExperimentPlan.load(path) == plan
    dense = preset("desk", "dense")
    assert dense.ms == [256, 512, 768, 1024, 1280]
    assert preset("paper", "dense").d == 500 and preset("paper", "sparse").s == 100


def test_sparse_signal_law():
    plan = ExperimentPlan("sparse", d=50, s=4, m_values=[100], trials=1)
    x0 = sample_signal(plan, 3)
    assert np.count_nonzero(x0) == 4 and np.all(x0.imag == 0)


def test_run_trial_determinism_and_seed():
    plan = small_plan()
    a, b = run_trial(plan, 48, 1), run_trial(plan, 48, 1)
    assert a == b
    assert a.seed != run_trial(plan, 48, 2).seed
    with pytest.raises(DomainError):
        run_trial(plan, 49, 0)


def test_noiseless_trials_recover():
    plan = small_plan(d=16, m_values=[128], noise=ZeroNoise())
    for t in range(3):
        rec = run_trial(plan, 128, t)
        assert rec.converged and rec.rho_m == 0
        assert rec.dist <= 1e-5 * 4  # ||x0|| is about sqrt(16)


records_st = st.builds(
    TrialRecord, m=st.integers(1, 10**6), trial=st.integers(0, 10**4),
    seed=st.integers(0, 2**128), dist=st.floats(0, 1e6), rho_m=st.none() | st.floats(0, 1e6),
    bound=st.floats(0, 1e6), iterations=st.integers(0, 10**5),
    final_loss=st.floats(allow_infinity=False) | st.just(float("nan")),
    converged=st.booleans(), residual_ok=st.booleans(), fourth_power_ok=st.booleans(),
    cone_ok=st.none() | st.booleans())


def _same(a, b):
    for f in dataclasses.fields(TrialRecord):
        x, y = getattr(a, f.name), getattr(b, f.name)
        if isinstance(x, float) and math.isnan(x):
            assert math.isnan(y)
        else:
            assert x == y and type(x) is type(y)


@settings(max_examples=60)
@given(recs=st.lists(records_st, min_size=1, max_size=5, unique_by=lambda r: (r.m, r.trial)))
def test_csv_and_json_round_trip(recs):
    text = records_to_csv(recs)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    back = records_from_csv(text)
    for a, b in zip(sorted(recs, key=lambda r: (r.m, r.trial)), back):
        _same(a, b)
        _same(TrialRecord.from_json(json.loads(json.dumps(a.to_json()))), b)


def test_aggregation_is_order_independent():
    plan = small_plan()
    recs = [run_trial(plan, m, t) for m in plan.ms for t in range(plan.trials)]
    shuffled = recs[:]
    random.Random(4).shuffle(shuffled)
    assert aggregate(shuffled) == aggregate(recs)
    for agg in aggregate(recs):
        rhos = [r.rho_m for r in recs if r.m == agg.m and r.converged]
        assert agg.mean_rho == pytest.approx(sum(rhos) / len(rhos), rel=1e-12)
        assert agg.trials == 3 and agg.excluded == 3 - len(rhos)


def test_failed_trials_are_excluded_but_listed():
    recs = [TrialRecord(10, 0, 1, 1.0, 2.0, 1.0, 5, 0.1, True, True, True),
            TrialRecord(10, 1, 2, 9.0, 90.0, 1.0, 5, 0.1, False, True, True)]
    (agg,) = aggregate(recs)
    assert agg.mean_rho == 2.0 and agg.excluded == 1 and agg.convergence_rate == 0.5
    assert coefficient_of_variation([1.0, 1.0]) == 0.0


def test_mean_dist_decreases_with_m(tmp_path):
    plan = small_plan(d=16, m_values={"multiples_of_d": [4, 8, 16, 32]}, trials=8)
    report = run_experiment(plan, out_dir=tmp_path)
    dists = [a.mean_dist for a in report.per_m]
    inversions = sum(b > a for a, b in zip(dists, dists[1:]))
    assert inversions <= 1


def test_run_experiment_outputs(tmp_path):
    plan = small_plan(output_path=str(tmp_path / "out"))
    report = run_experiment(plan)
    text = (tmp_path / "out" / "trials.csv").read_text(encoding="utf-8")
    assert len(text.splitlines()) == 1 + 9
    data = json.loads((tmp_path / "out" / "report.json").read_text())
    assert data["plan"]["d"] == 8 and len(data["per_m"]) == 3
    assert records_from_csv(text) == sorted(report.records, key=lambda r: (r.m, r.trial))
    # replay and parallel execution give identical bytes
    run_experiment(plan, out_dir=tmp_path / "again", workers=2)
    assert (tmp_path / "again" / "trials.csv").read_text(encoding="utf-8") == text


def test_unwritable_path_fails_before_work(tmp_path, monkeypatch):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    import phaselens.experiments as ex
    monkeypatch.setattr(ex, "run_trial", lambda *a: pytest.fail("trial ran"))
    with pytest.raises(OSError):
        run_experiment(small_plan(output_path=str(blocker / "sub")))


def test_cli_dense_and_errors(tmp_path, capsys):
    plan = small_plan()
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan.to_dict()))
    out = tmp_path / "res"
    assert main(["dense", "--plan", str(path), "--out", str(out), "--trials", "2",
                 "--seed", "5"]) == 0
    assert "coefficient of variation" in capsys.readouterr().out
    assert len((out / "trials.csv").read_text().splitlines()) == 1 + 6
    assert main(["sparse", "--plan", str(path), "--out", str(out)]) == 1
    assert main(["dense", "--plan", str(tmp_path / "missing.json")]) == 1
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["dense", "--plan", str(path), "--out", str(blocker / "x")]) == 1


def test_cli_theory_passes(tmp_path, capsys):
    assert main(["theory", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 11
    assert json.loads((tmp_path / "report.json").read_text())["checks"]


def test_cli_theory_failure_exit_code(tmp_path, monkeypatch):
    import phaselens.cli as cli
    from phaselens.experiments import TheoryCheck
    monkeypatch.setattr(cli, "run_theory_suite",
                        lambda seed: [TheoryCheck("x", False, 1.0, "<= 0")])
    assert main(["theory", "--out", str(tmp_path)]) == 2


@pytest.mark.slow
def test_large_dense_trial_rho_band():
    plan = ExperimentPlan("dense", d=500, m_values={"multiples_of_d": [20]}, trials=1)
    rec = run_trial(plan, 10_000, 0)
    assert rec.converged and 0.2 <= rec.rho_m <= 0.6


def test_cv_undefined_for_noiseless_sweep():
    assert math.isnan(coefficient_of_variation([0.0, 0.0]))
    plan = small_plan(noise=ZeroNoise(), trials=1)
    assert run_experiment(plan, write=False).rho_cv is None
