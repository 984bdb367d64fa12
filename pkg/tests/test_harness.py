import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rplcil.exceptions import ConfigError, DataError
from rplcil.harness import (
    CilReport,
    RegimeSpec,
    SuiteConfig,
    TimingReport,
    assess_forgetting,
    bench_update_time,
    compute_delta,
    compute_gap,
    compute_metrics,
    compute_recovery,
    roc_auc,
    run_experiment_suite,
    run_regime,
    speedup_pct,
    training_union,
)


def brute_force_auc(labels, scores):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


# -- metrics ---------------------------------------------------------------

def test_perfect_predictions():
    m = compute_metrics([0, 1, 1, 0], [0.1, 0.9, 0.8, 0.2])
    assert (m.accuracy, m.precision, m.recall, m.f1, m.auc) == (1.0, 1.0, 1.0, 1.0, 1.0)


def test_confusion_arithmetic():
    labels = [1] * 10 + [0] * 90
    probs = [0.9] * 8 + [0.1] * 2 + [0.9] * 2 + [0.1] * 88
    m = compute_metrics(labels, probs)
    assert m.confusion == (8, 2, 2, 88)
    assert m.precision == pytest.approx(0.8) and m.recall == pytest.approx(0.8) and m.f1 == pytest.approx(0.8)


def test_auc_against_pairwise_count():
    rng = np.random.default_rng(7)
    labels = rng.integers(0, 2, size=50)
    scores = np.round(rng.random(50), 1)  # rounding forces ties
    assert roc_auc(labels, scores) == pytest.approx(brute_force_auc(labels, scores), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 5)), min_size=2, max_size=40))
def test_auc_property(pairs):
    labels = [p[0] for p in pairs]
    scores = [p[1] / 5 for p in pairs]
    if len(set(labels)) < 2:
        assert math.isnan(roc_auc(labels, scores))
    else:
        assert roc_auc(labels, scores) == pytest.approx(brute_force_auc(labels, scores), abs=1e-12)


def test_threshold_is_inclusive():
    assert compute_metrics([1], [0.5]).confusion == (1, 0, 0, 0)


def test_metrics_errors():
    with pytest.raises(DataError):
        compute_metrics([], [])
    with pytest.raises(DataError):
        compute_metrics([0, 1], [0.3])


def test_nan_auc_serializes_as_null():
    d = compute_metrics([0, 0], [0.2, 0.7]).to_dict()
    assert d["auc"] is None
    json.dumps(d)


# -- derived scores --------------------------------------------------------

def test_delta_values():
    assert compute_delta(0.9533, 0.9924) == pytest.approx(0.0391, abs=5e-5)
    assert compute_delta(0.6316, 0.9401) == pytest.approx(0.3085, abs=5e-5)
    assert compute_delta(0.5, 0.5) == 0.0


def test_gap_values():
    assert compute_gap(0.7, 0.7) == 0.0
    assert compute_gap(0.9934, 0.9924) == pytest.approx(0.0010, abs=5e-5)
    assert compute_gap(0.9086, 0.9347) == pytest.approx(-0.0261, abs=5e-5)


def test_recovery_values():
    assert compute_recovery(0.9934, 0.9533, 0.9924) == pytest.approx(97.506, abs=0.01)
    assert compute_recovery(0.9730, 0.9291, 0.9908) == pytest.approx(140.55, abs=0.01)
    assert compute_recovery(0.8, 0.8, 0.9) is None


def test_speedup():
    assert speedup_pct(4.0, 4.0) == 0.0
    assert speedup_pct(10.0, 2.5) == 75.0
    assert TimingReport.from_times(10.0, 2.5, 5).speedup_pct == 75.0


def test_cil_report_fields():
    r = CilReport.from_f1(0.9, 0.5, 0.8)
    assert r.delta == pytest.approx(0.3) and r.gap == pytest.approx(0.1) and r.recovery_pct == pytest.approx(75.0)


# -- regimes ---------------------------------------------------------------

def test_regime_spec_validation():
    with pytest.raises(ConfigError):
        RegimeSpec("R4", "HF", "gbdt")
    with pytest.raises(ConfigError):
        RegimeSpec("R1", "XX", "gbdt")
    with pytest.raises(ConfigError):
        RegimeSpec("R1", "HF", "svm")


def test_unseen_regime_excludes_target(default_datasets):
    for target in ("HF", "DR", "VN"):
        union = training_union(RegimeSpec("R2", target, "gbdt"), default_datasets)
        assert target not in set(union.attack_kind)
        upper = training_union(RegimeSpec("R1", target, "gbdt"), default_datasets)
        assert set(upper.attack_kind) == {"NONE", target}


def test_upper_bound_hello_flood(default_datasets):
    _, metrics = run_regime(RegimeSpec("R1", "HF", "gbdt"), default_datasets)
    assert metrics.f1 >= 0.95


@pytest.mark.parametrize("kind", ["gbdt", "mlp"])
def test_update_beats_unseen_on_version_attack(default_suite, kind):
    cell = next(c for c in default_suite.cells if c.attack == "VN" and c.model_kind == kind)
    assert cell.r3.f1 >= cell.r2.f1


def test_forgetting_identity_and_scope(default_datasets):
    model, _ = run_regime(RegimeSpec("R2", "VN", "gbdt"), default_datasets)
    tests = {a: default_datasets[a].test for a in ("HF", "DR")}
    report = assess_forgetting(model, model, tests)
    assert set(report.per_attack) == {"HF", "DR"}
    assert all(v == 0.0 for v in report.f1_drop().values())
    with pytest.raises(DataError):
        assess_forgetting(model, model, {})


def test_hello_flood_kept_after_version_update(default_suite):
    for cell in default_suite.cells:
        if cell.attack == "VN":
            assert cell.forgetting.f1_drop()["HF"] <= 0.05


# -- timing and suite ------------------------------------------------------

def test_bench_gbdt_positive_speedup(default_datasets):
    report = bench_update_time(default_datasets, "VN", "gbdt", repetitions=3)
    assert report.speedup_pct > 0
    assert report.repetitions == 3 and report.exclusive


def test_bench_needs_repetitions(default_datasets):
    with pytest.raises(ConfigError):
        bench_update_time(default_datasets, "VN", "gbdt", repetitions=2)


def test_suite_shape(default_suite):
    assert len(default_suite.cil_reports) == 6
    assert {(c.attack, c.model_kind) for c in default_suite.cells} == {
        (a, k) for a in ("HF", "DR", "VN") for k in ("gbdt", "mlp")
    }
    table = default_suite.table()
    assert len(table) == 6 + 2 + 3 + 1
    overall = table[-1]
    assert overall["model"] == "mean" and overall["attack"] == "mean"
    assert overall["Delta"] == pytest.approx(np.mean([c.cil.delta for c in default_suite.cells]))


def test_suite_repeatable(default_datasets):
    cfg = SuiteConfig(model_kinds=("gbdt",))
    a = run_experiment_suite(cfg, datasets=default_datasets, with_timing=False)
    b = run_experiment_suite(cfg, datasets=default_datasets, with_timing=False)
    assert a.to_dict() == b.to_dict()


def test_suite_write(tmp_path, default_suite):
    default_suite.write(tmp_path / "s.json", tmp_path / "s.csv")
    data = json.loads((tmp_path / "s.json").read_text())
    assert len(data["cells"]) == 6
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "model,attack,R2_F1,R3_F1,Delta,R1_F1,Gap,Recovery_pct"
    assert len(lines) == 13
