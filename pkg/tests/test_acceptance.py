"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line for the session summary."""

import statistics
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_RESULTS, toy_dataset
from rplcil.cil import ExemplarBuffer
from rplcil.features import N_FEATURES, extract_features, read_dataset_csv, write_dataset_csv
from rplcil.harness import bench_update_time, compute_delta, compute_recovery
from rplcil.models import (
    MlpClassifier,
    Objective,
    TrainConfig,
    UpdatePlan,
    combined_loss,
    ewc_penalty,
    kd_loss,
    l2sp_penalty,
    load_model,
    mlp_gradients,
    save_model,
)
from rplcil.simnet import make_config, simulate

from test_models import _numeric_grads, max_relative_error
from test_simnet import acyclic_toward_root


def record(n, ok, detail):
    ACCEPTANCE_RESULTS[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# Published per-row F1 values: (model, attack, R2, R3, printed delta, R1, printed recovery %).
PUBLISHED_ROWS = [
    ("XGBoost", "HF", 0.9533, 0.9924, 0.0391, 0.9934, 97.50623441),
    ("XGBoost", "DR", 0.4615, 0.5333, 0.0718, 0.5161, 131.5018315),
    ("XGBoost", "VN", 0.6745, 0.9463, 0.2718, 0.9532, 97.52421959),
    ("LightGBM", "HF", 0.9449, 0.9730, 0.0281, 0.9908, 61.22),
    ("LightGBM", "DR", 0.6571, 0.5872, -0.0699, 0.5263, 53.44),
    ("LightGBM", "VN", 0.6316, 0.9401, 0.3085, 0.9493, 97.104),
    ("CatBoost", "HF", 0.9291, 0.9908, 0.0617, 0.9730, 140.546697),
    ("CatBoost", "DR", 0.4694, 0.5169, 0.0475, 0.5055, 131.578),
    ("CatBoost", "VN", 0.6467, 0.9469, 0.3002, 0.9449, 100.67),
    ("DL", "HF", 0.9220, 0.9543, 0.0323, 0.9529, 104.53),
    ("DL", "DR", 0.5106, 0.5437, 0.0331, 0.6182, 30.7620),
    ("DL", "VN", 0.4495, 0.9215, 0.4720, 0.9324, 97.74),
    ("GNN", "HF", 0.9359, 0.9347, -0.0012, 0.9086, 4.395),
    ("GNN", "DR", 0.6412, 0.6372, -0.0040, 0.5824, 6.802),
    ("GNN", "VN", 0.6747, 0.9228, 0.2481, 0.9304, 97.027),
]


def test_criterion_1_metric_arithmetic():
    worst_delta = max(abs(compute_delta(r2, r3) - d) for _, _, r2, r3, d, _, _ in PUBLISHED_ROWS)
    worst_rec = max(abs(compute_recovery(r1, r2, r3) - rec) for _, _, r2, r3, _, r1, rec in PUBLISHED_ROWS)
    ok = worst_delta <= 5e-4 and worst_rec <= 0.01
    record(1, ok, f"15 rows; max |delta err| {worst_delta:.2e} (<= 5e-4), max |recovery err| {worst_rec:.2e} (<= 0.01)")


def test_criterion_2_cil_benefit(default_suite):
    deltas = [c.cil.delta for c in default_suite.cells]
    vn = {c.model_kind: c.cil.delta for c in default_suite.cells if c.attack == "VN"}
    ok = statistics.fmean(deltas) > 0 and all(d > 0 for d in vn.values()) and len(deltas) == 6
    detail = f"mean delta {statistics.fmean(deltas):+.4f} over {len(deltas)} cells; VN delta " + ", ".join(
        f"{k} {v:+.4f}" for k, v in vn.items()
    )
    record(2, ok, detail)


def test_criterion_3_recovery(default_suite):
    recs = [c.cil.recovery_pct for c in default_suite.cells if c.cil.recovery_pct is not None]
    med = statistics.median(recs)
    record(3, med >= 60.0 and len(recs) > 0, f"median recovery {med:.2f}% over {len(recs)} defined cells (>= 60)")


def test_criterion_4_forgetting(default_suite):
    drops = {
        f"{c.attack}-{c.model_kind}:{old}": drop
        for c in default_suite.cells
        for old, drop in c.forgetting.f1_drop().items()
    }
    worst = max(drops, key=drops.get)
    record(4, drops[worst] <= 0.05, f"{len(drops)} old-attack checks; worst F1 drop {drops[worst]:+.4f} at {worst} (<= 0.05)")


def test_criterion_5_timing(default_datasets):
    reports = {kind: bench_update_time(default_datasets, "VN", kind, repetitions=5) for kind in ("gbdt", "mlp")}
    ok = reports["gbdt"].speedup_pct >= 50.0 and reports["mlp"].speedup_pct >= 30.0
    detail = "; ".join(
        f"{k} speedup {r.speedup_pct:.1f}% (full {r.t_full_retrain_s:.3f}s vs update {r.t_incremental_s:.3f}s)"
        for k, r in reports.items()
    )
    record(5, ok, detail + "; thresholds gbdt >= 50, mlp >= 30")


def test_criterion_6_loss_oracles():
    rng = np.random.default_rng(0)
    pairs = rng.normal(scale=5, size=(500, 2, 2))
    identity = all(kd_loss(p[0], p[0]) == 0.0 for p in pairs)
    nonneg = all(kd_loss(p[0], p[1], T) >= 0 for p in pairs for T in (0.5, 1.0, 2.0))
    hand = abs(kd_loss((2.0, 0.0), (0.0, 2.0), T=1.0) - 1.5232) <= 1e-3
    reduction = combined_loss(0.42, 3.0, 7.0, UpdatePlan(lambda_kd=0.0, gamma_reg=0.0)) == 0.42
    p = [rng.normal(size=(3, 2)), rng.normal(size=2)]
    zero_anchor = l2sp_penalty(p, p) == 0.0 and ewc_penalty(p, p, [np.ones((3, 2)), np.ones(2)]) == 0.0
    zero_fisher = ewc_penalty(p, [np.zeros((3, 2)), np.zeros(2)], [np.zeros((3, 2)), np.zeros(2)]) == 0.0
    ok = identity and nonneg and hand and reduction and zero_anchor and zero_fisher
    record(
        6,
        ok,
        f"identity {identity}, non-negative {nonneg}, (2,0)/(0,2) case {kd_loss((2.0, 0.0), (0.0, 2.0), T=1.0):.4f}, "
        f"reduction {reduction}, zero-anchor {zero_anchor}, zero-fisher {zero_fisher}",
    )


def test_criterion_7_gradient_check():
    rng = np.random.default_rng(7)
    data = toy_dataset(n=64, seed=7, shift=1.5)
    model = MlpClassifier(epochs=2, random_state=7).fit(data)
    X = rng.normal(size=(16, N_FEATURES)) * model.scale_ + model.mean_
    y = rng.integers(0, 2, size=16)
    objective = Objective(
        lambda_kd=1.0,
        temperature=2.0,
        gamma_reg=0.1,
        anchor=[p + rng.normal(scale=0.1, size=p.shape) for p in model.params_],
        fisher=[rng.uniform(0, 2, size=p.shape) for p in model.params_],
        teacher_logits=rng.normal(size=(16, 2)),
        kd_mask=np.arange(16) % 2 == 0,
    )
    start = time.perf_counter()
    worst_plain = max_relative_error(mlp_gradients(model, X, y)[1], _numeric_grads(model, X, y, None))
    worst_full = max_relative_error(mlp_gradients(model, X, y, objective=objective)[1], _numeric_grads(model, X, y, objective))
    elapsed = time.perf_counter() - start
    worst = max(worst_plain, worst_full)
    n_params = sum(p.size for p in model.params_)
    record(7, worst <= 1e-4, f"{n_params} parameters, max relative error {worst:.2e} (<= 1e-4), {elapsed:.1f}s")


def test_criterion_8_simulator_invariants(traces):
    again = {k: simulate(make_config(k)) for k in traces}
    deterministic = all(
        again[k].records == traces[k].records and np.array_equal(again[k].node_timeline, traces[k].node_timeline)
        for k in traces
    )
    acyclic = all(acyclic_toward_root(snap[:, 1]) for t in traces.values() for snap in t.node_timeline)
    hf_volume = len(traces["HF"].records) > len(traces["NONE"].records)

    vn = traces["VN"]
    attacker = set(vn.config.attacker_ids)
    t_check = min(int(vn.config.attack_window[1]) + 10, int(vn.config.duration_s))
    versions = vn.node_timeline[t_check, :, 2]
    others = [i for i in range(vn.config.num_nodes) if i not in attacker]
    share = float(np.mean([versions[i] > vn.node_timeline[0, i, 2] for i in others]))

    dr = traces["DR"]
    t0, t1 = (int(t) for t in dr.config.attack_window)
    switches = (dr.node_timeline[1:, :, 1] != dr.node_timeline[:-1, :, 1]).sum(axis=1)
    inside = switches[t0:t1].mean()
    outside = np.r_[switches[:t0], switches[t1:]].mean()

    ok = deterministic and acyclic and hf_volume and share >= 0.5 and inside > outside
    record(
        8,
        ok,
        f"deterministic {deterministic}, acyclic {acyclic}, HF records {len(traces['HF'].records)} vs "
        f"{len(traces['NONE'].records)}, VN version reach {share:.0%} (>= 50%), "
        f"DR parent switches/s {inside:.2f} inside vs {outside:.2f} outside",
    )


def test_criterion_9_buffer_balance():
    rng = np.random.default_rng(9)
    keys = ("benign", "HF", "DR")
    kinds = {"benign": (0, "NONE"), "HF": (1, "HF"), "DR": (1, "DR")}
    violations = 0
    checks = 0
    for seq in range(1000):
        capacity = int(rng.integers(1, 40))
        buf = ExemplarBuffer(capacity=capacity, seed=seq)
        for step in range(int(rng.integers(1, 60))):
            key = keys[int(rng.integers(0, 3))]
            label, kind = kinds[key]
            buf.insert(np.full(N_FEATURES, float(step)), label, kind, key)
            counts = [c for c in buf.counts().values() if c > 0]
            checks += 1
            if sum(counts) > capacity or (counts and max(counts) - min(counts) > 1):
                violations += 1
    record(9, violations == 0, f"1000 random insert sequences, {checks} post-insert checks, {violations} violations")


def test_criterion_10_persistence(tmp_path, traces):
    data = toy_dataset(n=200, shift=1.0)
    X = np.random.default_rng(10).normal(size=(1000, N_FEATURES)) * 10
    exact = {}
    for kind in ("gbdt", "mlp"):
        model = TrainConfig(epochs=20).estimator(kind).fit(data)
        path = tmp_path / f"{kind}.model"
        save_model(model, path)
        loaded = load_model(path)
        exact[kind] = bool(np.array_equal(model.predict_proba(X), loaded.predict_proba(X)))
    ds = extract_features(traces["VN"])
    csv_path = tmp_path / "vn.csv"
    write_dataset_csv(ds, csv_path)
    back = read_dataset_csv(csv_path)
    lossless = (
        np.array_equal(back.X, ds.X)
        and np.array_equal(back.y, ds.y)
        and back.attack_kind.tolist() == ds.attack_kind.tolist()
    )
    record(10, all(exact.values()) and lossless, f"bit-exact predictions on 1000 vectors {exact}; dataset CSV lossless {lossless}")
