"""Experiment harness: new-attack regimes, forgetting assessment and update timing."""

from __future__ import annotations

import csv
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
from scipy.stats import rankdata

from .cil import ExemplarBuffer, incremental_update
from .exceptions import ConfigError, DataError
from .features import WindowedDataset, extract_features, merge, split
from .models.config import TrainConfig, UpdatePlan
from .simnet import Attack, make_config, simulate

ATTACKS = ("HF", "DR", "VN")
MODEL_KINDS = ("gbdt", "mlp")
REGIMES = ("R1", "R2", "R3")


# -- metrics ---------------------------------------------------------------

@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    confusion: tuple[int, int, int, int]  # tp, fp, fn, tn

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confusion"] = dict(zip(("tp", "fp", "fn", "tn"), self.confusion))
        if math.isnan(self.auc):
            d["auc"] = None
        return d


def roc_auc(labels, scores) -> float:
    """Rank-sum (Mann-Whitney) AUC with average ranks for ties; NaN when a class is missing."""
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=float)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def compute_metrics(labels, probs, threshold: float = 0.5) -> EvalMetrics:
    labels = np.asarray(labels).astype(np.int64).reshape(-1)
    probs = np.asarray(probs, dtype=float).reshape(-1)
    if len(labels) != len(probs):
        raise DataError("labels and probabilities differ in length")
    if len(labels) == 0:
        raise DataError("cannot evaluate an empty set")
    pred = probs >= threshold
    pos = labels == 1
    tp = int((pred & pos).sum())
    fp = int((pred & ~pos).sum())
    fn = int((~pred & pos).sum())
    tn = int((~pred & ~pos).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalMetrics((tp + tn) / len(labels), precision, recall, f1, roc_auc(labels, probs), (tp, fp, fn, tn))


def evaluate(model, data: WindowedDataset, threshold: float = 0.5) -> EvalMetrics:
    return compute_metrics(data.y, model.predict_proba(data.X)[:, 1], threshold)


def compute_delta(f1_r2: float, f1_r3: float) -> float:
    return f1_r3 - f1_r2


def compute_gap(f1_r1: float, f1_r3: float) -> float:
    return f1_r1 - f1_r3


def compute_recovery(f1_r1: float, f1_r2: float, f1_r3: float) -> float | None:
    """Share of the R1-R2 deficit regained by R3, in percent; None when R1 == R2."""
    denom = f1_r1 - f1_r2
    if abs(denom) < 1e-9:
        return None
    return (f1_r3 - f1_r2) / denom * 100.0


# -- reports ---------------------------------------------------------------

@dataclass(frozen=True)
class CilReport:
    f1_r1: float
    f1_r2: float
    f1_r3: float
    delta: float
    gap: float
    recovery_pct: float | None

    @classmethod
    def from_f1(cls, f1_r1: float, f1_r2: float, f1_r3: float) -> "CilReport":
        return cls(
            f1_r1, f1_r2, f1_r3, compute_delta(f1_r2, f1_r3), compute_gap(f1_r1, f1_r3), compute_recovery(f1_r1, f1_r2, f1_r3)
        )


@dataclass(frozen=True)
class ForgettingReport:
    per_attack: dict[str, tuple[EvalMetrics, EvalMetrics]]

    def f1_drop(self) -> dict[str, float]:
        return {a: before.f1 - after.f1 for a, (before, after) in self.per_attack.items()}

    def to_dict(self) -> dict:
        return {a: {"before": b.to_dict(), "after": f.to_dict()} for a, (b, f) in self.per_attack.items()}


@dataclass(frozen=True)
class TimingReport:
    t_full_retrain_s: float
    t_incremental_s: float
    speedup_pct: float
    repetitions: int = 0
    exclusive: bool = True

    @classmethod
    def from_times(cls, t_full: float, t_inc: float, repetitions: int = 0) -> "TimingReport":
        return cls(t_full, t_inc, speedup_pct(t_full, t_inc), repetitions)


def speedup_pct(t_full: float, t_inc: float) -> float:
    return (t_full - t_inc) / t_full * 100.0


# -- datasets --------------------------------------------------------------

@dataclass(frozen=True)
class AttackData:
    train: WindowedDataset
    test: WindowedDataset


def build_datasets(
    attacks=ATTACKS,
    seed: int = 3,
    train_frac: float = 0.7,
    sim_overrides: Mapping | None = None,
    traces_per_attack: int = 1,
) -> dict[str, AttackData]:
    """Simulate traces for every attack plus benign traffic and split each trace stratified.

    Trace ``r`` of an attack uses simulation seed ``seed + r``; per-trace
    splits are merged so every topology contributes to both sides.
    """
    sim_overrides = sim_overrides or {}
    out = {}
    for name in ("NONE", *attacks):
        trains, tests = [], []
        for r in range(traces_per_attack):
            overrides = {"seed": seed + r}
            overrides.update((k, v) for k, v in sim_overrides.items() if not isinstance(v, Mapping))
            overrides.update(sim_overrides.get(name, {}))
            trace = simulate(make_config(Attack.parse(name), **overrides))
            train, test = split(extract_features(trace), train_frac, seed + r)
            trains.append(train)
            tests.append(test)
        out[name] = AttackData(merge(*trains), merge(*tests))
    return out


@dataclass(frozen=True)
class RegimeSpec:
    regime: str
    target_attack: str
    model_kind: str
    seed: int = 3

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}")
        if self.target_attack not in ATTACKS:
            raise ConfigError(f"target attack must be one of {ATTACKS}")
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"model kind must be one of {MODEL_KINDS}")

    def others(self) -> tuple[str, ...]:
        return tuple(a for a in ATTACKS if a != self.target_attack)


def training_union(spec: RegimeSpec, datasets: Mapping[str, AttackData]) -> WindowedDataset:
    """Training rows of R1 (target + benign) or R2/R3's starting point (others + benign)."""
    attacks = (spec.target_attack,) if spec.regime == "R1" else spec.others()
    return merge(datasets["NONE"].train, *(datasets[a].train for a in attacks))


def fill_buffer(data: WindowedDataset, capacity: int, seed: int) -> ExemplarBuffer:
    return ExemplarBuffer(capacity=capacity, seed=seed).insert_dataset(data)


def run_regime(
    spec: RegimeSpec,
    datasets: Mapping[str, AttackData],
    cfg: TrainConfig | None = None,
    plan: UpdatePlan | None = None,
    base_model=None,
    buffer_capacity: int = 200,
):
    """Train (R1, R2) or update (R3) the requested model and score it on the target's test split.

    For R3, ``base_model`` is the R2 model to update; one is trained when omitted.
    """
    cfg = cfg or TrainConfig(seed=spec.seed)
    plan = plan or UpdatePlan()
    test = datasets[spec.target_attack].test
    if spec.regime in ("R1", "R2"):
        model = cfg.estimator(spec.model_kind).fit(training_union(spec, datasets))
    else:
        old = training_union(RegimeSpec("R2", spec.target_attack, spec.model_kind, spec.seed), datasets)
        if base_model is None:
            base_model = cfg.estimator(spec.model_kind).fit(old)
        buf = fill_buffer(old, buffer_capacity, spec.seed)
        model = incremental_update(base_model, datasets[spec.target_attack].train, buf, plan)
    return model, evaluate(model, test)


def assess_forgetting(model_before, model_after, old_attack_tests: Mapping[str, WindowedDataset]) -> ForgettingReport:
    if not old_attack_tests:
        raise DataError("no old-attack test sets given")
    return ForgettingReport({a: (evaluate(model_before, t), evaluate(model_after, t)) for a, t in old_attack_tests.items()})


def bench_update_time(
    datasets: Mapping[str, AttackData],
    target_attack: str,
    model_kind: str,
    cfg: TrainConfig | None = None,
    plan: UpdatePlan | None = None,
    repetitions: int = 5,
    buffer_capacity: int = 200,
    seed: int = 3,
) -> TimingReport:
    """Median wall-clock of a from-scratch retrain on old + new data versus an incremental update.

    Must run without concurrent load; the report's ``exclusive`` flag records that assumption.
    """
    if repetitions < 3:
        raise ConfigError("timing needs at least 3 repetitions")
    cfg = cfg or TrainConfig(seed=seed)
    plan = plan or UpdatePlan()
    spec = RegimeSpec("R2", target_attack, model_kind, seed)
    old = training_union(spec, datasets)
    new = datasets[target_attack].train
    full_data = merge(old, new)
    pretrained = cfg.estimator(model_kind).fit(old)
    t_full, t_inc = [], []
    for _ in range(repetitions):
        start = time.perf_counter()
        cfg.estimator(model_kind).fit(full_data)
        t_full.append(time.perf_counter() - start)
        buf = fill_buffer(old, buffer_capacity, seed)
        start = time.perf_counter()
        incremental_update(pretrained, new, buf, plan)
        t_inc.append(time.perf_counter() - start)
    return TimingReport.from_times(statistics.median(t_full), statistics.median(t_inc), repetitions)


# -- suite -----------------------------------------------------------------

@dataclass(frozen=True)
class SuiteConfig:
    attacks: tuple[str, ...] = ATTACKS
    model_kinds: tuple[str, ...] = MODEL_KINDS
    seed: int = 3
    train_frac: float = 0.7
    buffer_capacity: int = 200
    timing_repetitions: int = 3
    traces_per_attack: int = 3
    train: TrainConfig = field(default_factory=TrainConfig)
    plan: UpdatePlan = field(default_factory=UpdatePlan)
    sim_overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CellResult:
    attack: str
    model_kind: str
    r1: EvalMetrics
    r2: EvalMetrics
    r3: EvalMetrics
    cil: CilReport
    forgetting: ForgettingReport
    timing: TimingReport | None

    def to_dict(self) -> dict:
        return {
            "attack": self.attack,
            "model_kind": self.model_kind,
            "r1": self.r1.to_dict(),
            "r2": self.r2.to_dict(),
            "r3": self.r3.to_dict(),
            "delta": self.cil.delta,
            "gap": self.cil.gap,
            "recovery_pct": self.cil.recovery_pct,
            "forgetting": self.forgetting.to_dict(),
            "timing": None if self.timing is None else asdict(self.timing),
        }


TABLE_COLUMNS = ("model", "attack", "R2_F1", "R3_F1", "Delta", "R1_F1", "Gap", "Recovery_pct")


@dataclass(frozen=True)
class SuiteReport:
    config: SuiteConfig
    cells: tuple[CellResult, ...]

    @property
    def cil_reports(self) -> list[CilReport]:
        return [c.cil for c in self.cells]

    def _mean_row(self, model: str, attack: str, cells) -> dict:
        recs = [c.cil.recovery_pct for c in cells if c.cil.recovery_pct is not None]
        return {
            "model": model,
            "attack": attack,
            "R2_F1": statistics.fmean(c.cil.f1_r2 for c in cells),
            "R3_F1": statistics.fmean(c.cil.f1_r3 for c in cells),
            "Delta": statistics.fmean(c.cil.delta for c in cells),
            "R1_F1": statistics.fmean(c.cil.f1_r1 for c in cells),
            "Gap": statistics.fmean(c.cil.gap for c in cells),
            "Recovery_pct": statistics.fmean(recs) if recs else None,
        }

    def table(self) -> list[dict]:
        rows = [
            {
                "model": c.model_kind,
                "attack": c.attack,
                "R2_F1": c.cil.f1_r2,
                "R3_F1": c.cil.f1_r3,
                "Delta": c.cil.delta,
                "R1_F1": c.cil.f1_r1,
                "Gap": c.cil.gap,
                "Recovery_pct": c.cil.recovery_pct,
            }
            for c in self.cells
        ]
        for kind in dict.fromkeys(c.model_kind for c in self.cells):
            rows.append(self._mean_row(kind, "mean", [c for c in self.cells if c.model_kind == kind]))
        for attack in dict.fromkeys(c.attack for c in self.cells):
            rows.append(self._mean_row("mean", attack, [c for c in self.cells if c.attack == attack]))
        if self.cells:
            rows.append(self._mean_row("mean", "mean", self.cells))
        return rows

    def to_dict(self) -> dict:
        return {
            "seed": self.config.seed,
            "timing_exclusive": True,
            "cells": [c.to_dict() for c in self.cells],
            "table": self.table(),
        }

    def write(self, json_path, csv_path) -> None:
        with open(json_path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in self.table():
                writer.writerow({k: ("" if v is None else v) for k, v in row.items()})


def run_experiment_suite(config: SuiteConfig | None = None, datasets=None, with_timing: bool = True) -> SuiteReport:
    config = config or SuiteConfig()
    datasets = datasets or build_datasets(
        ATTACKS, config.seed, config.train_frac, config.sim_overrides, config.traces_per_attack
    )
    cells = []
    for attack in config.attacks:
        for kind in config.model_kinds:
            r1_model, r1 = run_regime(RegimeSpec("R1", attack, kind, config.seed), datasets, config.train, config.plan)
            r2_model, r2 = run_regime(RegimeSpec("R2", attack, kind, config.seed), datasets, config.train, config.plan)
            r3_model, r3 = run_regime(
                RegimeSpec("R3", attack, kind, config.seed),
                datasets,
                config.train,
                config.plan,
                base_model=r2_model,
                buffer_capacity=config.buffer_capacity,
            )
            others = [a for a in ATTACKS if a != attack]
            forgetting = assess_forgetting(r2_model, r3_model, {a: datasets[a].test for a in others})
            timing = None
            if with_timing:
                timing = bench_update_time(
                    datasets, attack, kind, config.train, config.plan, config.timing_repetitions, config.buffer_capacity, config.seed
                )
            cells.append(CellResult(attack, kind, r1, r2, r3, CilReport.from_f1(r1.f1, r2.f1, r3.f1), forgetting, timing))
    return SuiteReport(config, tuple(cells))
