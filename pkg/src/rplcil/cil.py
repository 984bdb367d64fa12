"""Incremental-improvement loop: exemplar memory, novelty detection, seed selection, model update."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import KMeans

from .exceptions import DataError, EmptyBufferError
from .features import FEATURE_NAMES, WindowedDataset, merge, read_dataset_csv, write_dataset_csv
from .models.config import UpdatePlan
from .models.gbdt import GbdtClassifier
from .models.mlp import MlpClassifier, Objective, estimate_fisher
from .utils import as_matrix

CLASS_KEYS = ("benign", "HF", "DR", "VN")

UNCERTAIN_BAND = (0.35, 0.65)
Z_DISTANCE_LIMIT = 3.0
MIN_CLUSTER_ROWS = 20
STABLE_BATCHES = 3
MAX_CENTROID_DRIFT = 0.10
KMEANS_ITERATIONS = 25


def class_key_for(label: int, attack_kind: str) -> str:
    return "benign" if int(label) == 0 else str(attack_kind)


@dataclass(frozen=True)
class Exemplar:
    x: tuple[float, ...]
    label: int
    attack_kind: str


class ExemplarBuffer:
    """Bounded, class-balanced replay memory.

    Each class keeps a reservoir sample of its stream, capped at
    ``ceil(capacity / n_classes)`` rows. The visible buffer (``slots``)
    takes an equal share from every class, so per-class counts never differ
    by more than one and never total more than ``capacity``; spare shares go
    to the classes inserted first.
    """

    def __init__(self, capacity: int = 200, seed: int = 3):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.seed = int(seed)
        self._reservoirs: dict[str, list[Exemplar]] = {}
        self._seen: dict[str, int] = {}
        self._rng = np.random.default_rng([self.seed, 2])

    def _limit(self) -> int:
        return math.ceil(self.capacity / max(len(self._reservoirs), 1))

    def insert(self, x, label: int, attack_kind: str, class_key: str | None = None) -> "ExemplarBuffer":
        key = class_key or class_key_for(label, attack_kind)
        row = Exemplar(tuple(float(v) for v in np.asarray(x, dtype=float).ravel()), int(label), str(attack_kind))
        if key not in self._reservoirs:
            self._reservoirs[key] = []
            self._seen[key] = 0
            limit = self._limit()
            for k, res in self._reservoirs.items():
                if len(res) > limit:
                    keep = np.sort(self._rng.choice(len(res), size=limit, replace=False))
                    self._reservoirs[k] = [res[i] for i in keep]
        res = self._reservoirs[key]
        self._seen[key] += 1
        limit = self._limit()
        if len(res) < limit:
            res.append(row)
        else:
            j = int(self._rng.integers(0, self._seen[key]))
            if j < limit:
                res[j] = row
        return self

    def insert_dataset(self, data: WindowedDataset) -> "ExemplarBuffer":
        for x, lab, kind in zip(data.X, data.y, data.attack_kind):
            self.insert(x, lab, kind)
        return self

    def counts(self) -> dict[str, int]:
        if not self._reservoirs:
            return {}
        k = len(self._reservoirs)
        avail = {c: len(r) for c, r in self._reservoirs.items()}
        base = min(min(avail.values()), self.capacity // k)
        spare = self.capacity - k * base
        out = {}
        for c in self._reservoirs:
            n = base
            if spare > 0 and avail[c] > base:
                n += 1
                spare -= 1
            out[c] = n
        return out

    @property
    def slots(self) -> dict[str, list[Exemplar]]:
        return {c: self._reservoirs[c][:n] for c, n in self.counts().items()}

    def __len__(self) -> int:
        return sum(self.counts().values())

    @property
    def retained(self) -> int:
        """Rows physically held, including reservoir rows outside the balanced view."""
        return sum(len(r) for r in self._reservoirs.values())

    def sample(self, n: int) -> WindowedDataset:
        """Round-robin draw across classes; the within-class order is seeded and repeatable."""
        slots = self.slots
        if not slots or len(self) == 0:
            raise EmptyBufferError("cannot sample from an empty exemplar buffer")
        rng = np.random.default_rng([self.seed, 3])
        queues = [[rows[i] for i in rng.permutation(len(rows))] for rows in slots.values()]
        picked: list[Exemplar] = []
        depth = max(len(q) for q in queues)
        for i in range(depth):
            for q in queues:
                if i < len(q):
                    picked.append(q[i])
        picked = picked[: max(int(n), 0)]
        return _to_dataset(picked)

    def to_dataset(self) -> WindowedDataset:
        return _to_dataset([row for rows in self.slots.values() for row in rows])

    def to_csv(self, path) -> None:
        rows = [(c, r) for c, res in self._reservoirs.items() for r in res]
        write_dataset_csv(_to_dataset([r for _, r in rows]), path, extra_column=("class_key", [c for c, _ in rows]))

    @classmethod
    def from_csv(cls, path, capacity: int = 200, seed: int = 3) -> "ExemplarBuffer":
        data, keys = read_dataset_csv(path, extra_column="class_key")
        buf = cls(capacity=capacity, seed=seed)
        for x, lab, kind, key in zip(data.X, data.y, data.attack_kind, keys):
            buf.insert(x, lab, kind, class_key=key)
        return buf


def _to_dataset(rows: list[Exemplar]) -> WindowedDataset:
    if not rows:
        return WindowedDataset.empty()
    return WindowedDataset(
        np.array([r.x for r in rows], dtype=float),
        np.array([r.label for r in rows], dtype=np.int64),
        np.array([r.attack_kind for r in rows], dtype=object),
        FEATURE_NAMES,
    )


def buffer_insert(buf: ExemplarBuffer, row, class_key: str) -> ExemplarBuffer:
    """Insert one feature row under ``class_key`` (label inferred from the key)."""
    label = 0 if class_key == "benign" else 1
    kind = "NONE" if label == 0 else class_key
    return buf.insert(row, label, kind, class_key=class_key)


def buffer_sample(buf: ExemplarBuffer, n: int) -> WindowedDataset:
    return buf.sample(n)


# -- novelty detection -----------------------------------------------------

@dataclass(frozen=True)
class NoveltyReport:
    declared: bool
    cluster_rows: np.ndarray
    centroid: np.ndarray | None
    stability_count: int
    n_flagged: int = 0


@dataclass
class NoveltyState:
    """Reference statistics of the training data plus cluster tracking across batches."""

    mean: np.ndarray
    scale: np.ndarray
    seed: int = 3
    tracked: np.ndarray | None = None
    stability_count: int = 0
    batches_seen: int = field(default=0)

    @classmethod
    def from_training(cls, X, seed: int = 3) -> "NoveltyState":
        X = as_matrix(X)
        std = X.std(axis=0)
        return cls(mean=X.mean(axis=0), scale=np.where(std > 0, std, 1.0), seed=seed)

    def zscores(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


def _kmeans_labels(Z: np.ndarray, seed: int) -> np.ndarray:
    if len(Z) < 2 or len(np.unique(Z, axis=0)) < 2:
        return np.zeros(len(Z), dtype=np.int64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        km = KMeans(n_clusters=2, n_init=1, max_iter=KMEANS_ITERATIONS, random_state=seed).fit(Z)
    return km.labels_.astype(np.int64)


def detect_novelty(model, batch, state: NoveltyState) -> NoveltyReport:
    """Flag uncertain or far-from-training rows, cluster them, and track cluster stability.

    A new attack is declared once a cluster of at least ``MIN_CLUSTER_ROWS``
    rows has persisted for ``STABLE_BATCHES`` consecutive batches with its
    z-space centroid moving less than 10% (relative) between batches.
    ``state`` is updated in place.
    """
    X = as_matrix(batch)
    state.batches_seen += 1
    prob = model.predict_proba(X)[:, 1]
    Z = state.zscores(X)
    dist = np.sqrt((Z**2).mean(axis=1))
    flagged = ((prob >= UNCERTAIN_BAND[0]) & (prob <= UNCERTAIN_BAND[1])) | (dist > Z_DISTANCE_LIMIT)
    idx = np.flatnonzero(flagged)

    chosen = None
    if len(idx) >= MIN_CLUSTER_ROWS:
        labels = _kmeans_labels(Z[idx], state.seed)
        clusters = []
        for lab in np.unique(labels):
            members = idx[labels == lab]
            if len(members) >= MIN_CLUSTER_ROWS:
                clusters.append((members, Z[members].mean(axis=0)))
        if clusters:
            if state.tracked is not None:
                chosen = min(clusters, key=lambda c: np.linalg.norm(c[1] - state.tracked))
            else:
                chosen = max(clusters, key=lambda c: len(c[0]))

    if chosen is None:
        state.tracked = None
        state.stability_count = 0
        return NoveltyReport(False, X[idx], None, 0, len(idx))

    members, centroid_z = chosen
    if state.tracked is not None:
        drift = np.linalg.norm(centroid_z - state.tracked) / max(np.linalg.norm(state.tracked), 1e-12)
        state.stability_count = state.stability_count + 1 if drift < MAX_CENTROID_DRIFT else 1
    else:
        state.stability_count = 1
    state.tracked = centroid_z
    declared = state.stability_count >= STABLE_BATCHES
    return NoveltyReport(declared, X[members], X[members].mean(axis=0), state.stability_count, len(idx))


# -- seed selection --------------------------------------------------------

def predictive_entropy(prob: np.ndarray) -> np.ndarray:
    p = np.clip(np.asarray(prob, dtype=float), 1e-15, 1 - 1e-15)
    return -(p * np.log(p) + (1 - p) * np.log(1 - p))


def k_center_greedy(Z: np.ndarray, k: int, first: int = 0) -> list[int]:
    """Farthest-point selection starting from ``first``; ties go to the lower index."""
    chosen = [first]
    min_dist = np.linalg.norm(Z - Z[first], axis=1)
    while len(chosen) < min(k, len(Z)):
        nxt = int(np.argmax(min_dist))
        chosen.append(nxt)
        min_dist = np.minimum(min_dist, np.linalg.norm(Z - Z[nxt], axis=1))
    return chosen


def seed_indices(candidates, model, k: int) -> np.ndarray:
    """Indices picked by entropy pre-filtering (top 2k) and k-center greedy on z-scored features."""
    X = as_matrix(candidates)
    if len(X) == 0:
        raise DataError("no candidates to select from")
    if k < 1:
        raise DataError("k must be >= 1")
    if k >= len(X):
        return np.arange(len(X))
    entropy = predictive_entropy(model.predict_proba(X)[:, 1])
    pool = np.argsort(-entropy, kind="stable")[: 2 * k]
    P = X[pool]
    std = P.std(axis=0)
    Z = (P - P.mean(axis=0)) / np.where(std > 0, std, 1.0)
    return pool[k_center_greedy(Z, k)]


def select_seed_set(candidates, model, k: int):
    """Rows of ``candidates`` to label first (same container type as the input)."""
    idx = seed_indices(candidates, model, k)
    if isinstance(candidates, WindowedDataset):
        return candidates.subset(idx)
    return as_matrix(candidates)[idx]


# -- incremental update ----------------------------------------------------

def incremental_update(model, new_data: WindowedDataset, buf: ExemplarBuffer, plan: UpdatePlan | None = None):
    """Extend ``model`` with ``new_data`` plus replayed exemplars; returns a new model.

    The MLP path fine-tunes a copy of the model against cross-entropy on the
    union, distillation toward the frozen original on the replayed rows, and
    an L2-SP or EWC anchor. The GBDT path appends warm-started trees fit on
    the same union. ``new_data`` rows are then added to ``buf``.
    """
    plan = plan or UpdatePlan()
    if len(new_data) == 0:
        raise DataError("incremental update needs new data")
    n_replay = int(round(plan.replay_ratio * len(new_data)))
    replay = buf.sample(n_replay) if len(buf) > 0 and n_replay > 0 else WindowedDataset.empty()
    union = merge(new_data, replay) if len(replay) else new_data

    if isinstance(model, GbdtClassifier):
        updated = model.warm_start(union, n_rounds=plan.update_rounds)
    elif isinstance(model, MlpClassifier):
        kd_mask = np.r_[np.zeros(len(new_data), dtype=bool), np.ones(len(replay), dtype=bool)]
        fisher = None
        if plan.reg_kind == "ewc":
            if len(replay):
                fisher = estimate_fisher(model, replay)
            else:
                fisher = [np.zeros_like(p) for p in model.params_]
        objective = Objective(
            lambda_kd=plan.lambda_kd,
            temperature=plan.temperature,
            gamma_reg=plan.gamma_reg,
            anchor=model.get_flat_params(),
            fisher=fisher,
            teacher_logits=model.logits(union.X),
            kd_mask=kd_mask,
        )
        updated = model.fine_tune(union, epochs=plan.update_epochs, objective=objective)
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")

    buf.insert_dataset(new_data)
    return updated
