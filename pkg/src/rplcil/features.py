"""One-second windowed features extracted from simulated traces."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import SchemaError, SplitError
from .simnet import Attack, Kind, Trace, label_seconds

FEATURE_NAMES: tuple[str, ...] = (
    "pkt_count",
    "dio_count",
    "dis_count",
    "dao_count",
    "data_count",
    "mean_len",
    "max_len",
    "dio_rate",
    "dis_rate",
    "rank_changes",
    "parent_switches",
    "delivery_ratio",
    "version_changes",
)
N_FEATURES = len(FEATURE_NAMES)
ATTACK_KINDS = ("NONE", "HF", "DR", "VN")


@dataclass(frozen=True)
class FeatureVector:
    pkt_count: float
    dio_count: float
    dis_count: float
    dao_count: float
    data_count: float
    mean_len: float
    max_len: float
    dio_rate: float
    dis_rate: float
    rank_changes: float
    parent_switches: float
    delivery_ratio: float
    version_changes: float

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in FEATURE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values) -> "FeatureVector":
        return cls(*(float(v) for v in values))


@dataclass(frozen=True, eq=False)
class WindowedDataset:
    """Rows of features, 0/1 labels and attack-kind tags held as parallel arrays."""

    X: np.ndarray
    y: np.ndarray
    attack_kind: np.ndarray
    feature_order: tuple[str, ...] = field(default=FEATURE_NAMES)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float).reshape(-1, len(self.feature_order))
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        kind = np.asarray(self.attack_kind, dtype=object).reshape(-1)
        if not (len(X) == len(y) == len(kind)):
            raise SchemaError("X, y and attack_kind must have the same number of rows")
        if np.any((y == 0) != (kind == "NONE")):
            raise SchemaError("attack_kind must be NONE exactly for benign rows")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "attack_kind", kind)
        object.__setattr__(self, "feature_order", tuple(self.feature_order))

    def __len__(self) -> int:
        return len(self.y)

    @property
    def rows(self) -> list[tuple[FeatureVector, int, str]]:
        return [(FeatureVector.from_array(x), int(lab), str(k)) for x, lab, k in zip(self.X, self.y, self.attack_kind)]

    def subset(self, index) -> "WindowedDataset":
        index = np.asarray(index)
        return WindowedDataset(self.X[index], self.y[index], self.attack_kind[index], self.feature_order)

    def where(self, mask) -> "WindowedDataset":
        return self.subset(np.flatnonzero(mask))

    def benign(self) -> "WindowedDataset":
        return self.where(self.y == 0)

    def malicious(self, kind: str | None = None) -> "WindowedDataset":
        mask = self.y == 1
        if kind is not None:
            mask &= self.attack_kind == kind
        return self.where(mask)

    def to_csv(self, path) -> None:
        write_dataset_csv(self, path)

    @classmethod
    def empty(cls) -> "WindowedDataset":
        return cls(np.zeros((0, N_FEATURES)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=object))


def extract_features(trace: Trace) -> WindowedDataset:
    """Aggregate a trace into one network-wide feature row per whole second."""
    n_seconds = int(np.floor(trace.config.duration_s))
    times = np.fromiter((r.time_s for r in trace.records), dtype=float, count=len(trace.records))
    kinds = np.fromiter((int(r.kind) for r in trace.records), dtype=np.int64, count=len(trace.records))
    lengths = np.fromiter((r.length_bytes for r in trace.records), dtype=float, count=len(trace.records))
    sec = np.floor(times).astype(np.int64)
    keep = (sec >= 0) & (sec < n_seconds)
    sec, kinds, lengths = sec[keep], kinds[keep], lengths[keep]

    counts = np.zeros((n_seconds, 4))
    np.add.at(counts, (sec, kinds), 1.0)
    pkt = counts.sum(axis=1)
    len_sum = np.bincount(sec, weights=lengths, minlength=n_seconds)
    max_len = np.zeros(n_seconds)
    np.maximum.at(max_len, sec, lengths)
    mean_len = np.divide(len_sum, pkt, out=np.zeros(n_seconds), where=pkt > 0)

    tl = trace.node_timeline
    before, after = tl[:n_seconds], tl[1 : n_seconds + 1]
    rank_changes = (after[:, :, 0] != before[:, :, 0]).sum(axis=1)
    parent_switches = (after[:, :, 1] != before[:, :, 1]).sum(axis=1)
    version_changes = (after[:, :, 2] != before[:, :, 2]).sum(axis=1)
    delivered = (after[:, :, 3] - before[:, :, 3]).sum(axis=1)
    sent = (after[:, :, 4] - before[:, :, 4]).sum(axis=1)
    delivery = np.divide(delivered, sent, out=np.ones(n_seconds), where=sent > 0)

    X = np.column_stack(
        [
            pkt,
            counts[:, Kind.DIO],
            counts[:, Kind.DIS],
            counts[:, Kind.DAO],
            counts[:, Kind.DATA],
            mean_len,
            max_len,
            counts[:, Kind.DIO],  # 1 s windows: rate equals count
            counts[:, Kind.DIS],
            rank_changes,
            parent_switches,
            delivery,
            version_changes,
        ]
    ).astype(float)
    y = label_seconds(trace)
    kind = np.where(y == 1, trace.config.attack.value, Attack.NONE.value).astype(object)
    return WindowedDataset(X, y, kind)


def split(dataset: WindowedDataset, train_frac: float, seed: int = 3) -> tuple[WindowedDataset, WindowedDataset]:
    """Stratified train/test split: floor(train_frac * n_class) rows of each class go to train."""
    if not 0.0 < train_frac < 1.0:
        raise SplitError("train_frac must lie strictly between 0 and 1")
    if len(dataset) == 0:
        raise SplitError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in (0, 1):
        idx = np.flatnonzero(dataset.y == label)
        if len(idx) == 0:
            continue
        n_train = int(np.floor(train_frac * len(idx)))
        if len(idx) - n_train == 0:
            raise SplitError(f"class {label} would receive no test rows")
        perm = rng.permutation(idx)
        train_idx.append(perm[:n_train])
        test_idx.append(perm[n_train:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    return dataset.subset(train), dataset.subset(test)


def merge(*datasets: WindowedDataset) -> WindowedDataset:
    """Concatenate datasets in argument order."""
    if not datasets:
        return WindowedDataset.empty()
    order = datasets[0].feature_order
    for d in datasets[1:]:
        if d.feature_order != order:
            raise SchemaError("cannot merge datasets with different feature_order")
    return WindowedDataset(
        np.concatenate([d.X for d in datasets]),
        np.concatenate([d.y for d in datasets]),
        np.concatenate([d.attack_kind for d in datasets]),
        order,
    )


# -- CSV -------------------------------------------------------------------

def _fmt(value: float) -> str:
    return repr(float(value))


def write_dataset_csv(dataset: WindowedDataset, path, extra_column: tuple[str, list] | None = None) -> None:
    header = list(dataset.feature_order) + ["label", "attack_kind"]
    if extra_column is not None:
        header.append(extra_column[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [_fmt(v) for v in dataset.X[i]] + [int(dataset.y[i]), dataset.attack_kind[i]]
            if extra_column is not None:
                row.append(extra_column[1][i])
            writer.writerow(row)


def read_dataset_csv(path, extra_column: str | None = None):
    """Load a dataset CSV; with ``extra_column`` also return that column's values."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        n_feat = len(header) - 2 - (1 if extra_column else 0)
        order = tuple(header[:n_feat])
        expected_tail = ["label", "attack_kind"] + ([extra_column] if extra_column else [])
        if header[n_feat:] != expected_tail:
            raise SchemaError(f"{path}: unexpected header tail {header[n_feat:]}")
        X, y, kind, extra = [], [], [], []
        for i, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise SchemaError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
            try:
                X.append([float(v) for v in row[:n_feat]])
                y.append(int(row[n_feat]))
            except ValueError as exc:
                raise SchemaError(f"{path}: row {i}: {exc}") from None
            if row[n_feat + 1] not in ATTACK_KINDS:
                raise SchemaError(f"{path}: row {i}: unknown attack_kind {row[n_feat + 1]!r}")
            kind.append(row[n_feat + 1])
            if extra_column:
                extra.append(row[n_feat + 2])
    X_arr = np.asarray(X, dtype=float).reshape(-1, n_feat)
    ds = WindowedDataset(X_arr, np.asarray(y, dtype=np.int64), np.asarray(kind, dtype=object), order)
    if extra_column:
        return ds, extra
    return ds
