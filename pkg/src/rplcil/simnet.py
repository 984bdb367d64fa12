"""Deterministic event-driven RPL DODAG simulator with routing-attack injection.

The simulator runs on a millisecond clock. Every node emits DIOs on a fixed
interval with seeded jitter, non-root nodes originate DATA toward the root and
forward it hop by hop along their preferred parent, and the three supported
attacks (hello flood, decreased rank, version number) only act inside the
configured attack window.
"""

from __future__ import annotations

import csv
import heapq
import json
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .exceptions import ConfigError, TopologyError

MIN_RANK = 128
RANK_STEP = 128
INFINITE_RANK = 0xFFFF
BROADCAST = -1

DIO_BYTES = 80
DIS_BYTES = 48
DAO_BYTES = 64
DATA_BYTES_RANGE = (90, 110)

HOP_DELAY_MS = 2
DAO_PERIOD_S = 60.0
JITTER = 0.10
MAX_RANGE_DOUBLINGS = 10
DR_DROP_PROB = 0.5

TRACE_HEADER = (
    "time_s",
    "src",
    "dst",
    "kind",
    "length_bytes",
    "rank_advertised",
    "version",
    "attack_origin",
)


class Attack(str, Enum):
    NONE = "NONE"
    HF = "HF"
    DR = "DR"
    VN = "VN"

    @classmethod
    def parse(cls, value: "str | Attack | None") -> "Attack":
        if value is None:
            return cls.NONE
        if isinstance(value, Attack):
            return value
        key = str(value).strip().upper()
        aliases = {
            "": cls.NONE,
            "NONE": cls.NONE,
            "BENIGN": cls.NONE,
            "HF": cls.HF,
            "HELLOFLOOD": cls.HF,
            "HELLO_FLOOD": cls.HF,
            "DR": cls.DR,
            "DECREASEDRANK": cls.DR,
            "DECREASED_RANK": cls.DR,
            "VN": cls.VN,
            "VERSIONNUMBER": cls.VN,
            "VERSION_NUMBER": cls.VN,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ConfigError(f"unknown attack {value!r}") from None


class Kind(IntEnum):
    DIO = 0
    DIS = 1
    DAO = 2
    DATA = 3


class PacketRecord(NamedTuple):
    time_s: float
    src: int
    dst: int
    kind: Kind
    length_bytes: int
    rank_advertised: int | None
    version: int | None
    attack_origin: bool


@dataclass
class NodeState:
    rank: int
    parent: int | None
    version: int = 0
    delivered: int = 0
    sent: int = 0


@dataclass(frozen=True)
class SimConfig:
    num_nodes: int = 20
    area_side: float = 100.0
    radio_range: float = 35.0
    duration_s: float = 300.0
    dio_interval_s: float = 10.0
    data_rate_pps: float = 0.5
    loss_prob: float = 0.05
    attack: Attack = Attack.NONE
    attacker_ids: tuple[int, ...] = ()
    attack_window: tuple[float, float] = (60.0, 240.0)
    attack_intensity: float = 10.0
    seed: int = 3

    def __post_init__(self):
        object.__setattr__(self, "attack", Attack.parse(self.attack))
        object.__setattr__(self, "attacker_ids", tuple(sorted(set(int(a) for a in self.attacker_ids))))
        object.__setattr__(self, "attack_window", tuple(float(t) for t in self.attack_window))

    def validate(self) -> "SimConfig":
        if self.num_nodes < 2:
            raise ConfigError("num_nodes must be >= 2")
        if self.area_side <= 0 or self.radio_range <= 0:
            raise ConfigError("area_side and radio_range must be positive")
        if self.duration_s <= 0 or self.dio_interval_s <= 0:
            raise ConfigError("duration_s and dio_interval_s must be positive")
        if self.data_rate_pps < 0:
            raise ConfigError("data_rate_pps must be non-negative")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ConfigError("loss_prob must lie in [0, 1]")
        if self.attack_intensity < 1:
            raise ConfigError("attack_intensity must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be unsigned")
        if bool(self.attacker_ids) != (self.attack is not Attack.NONE):
            raise ConfigError("attacker_ids must be nonempty iff an attack is configured")
        if 0 in self.attacker_ids:
            raise ConfigError("the root (node 0) cannot be an attacker")
        if any(a < 0 or a >= self.num_nodes for a in self.attacker_ids):
            raise ConfigError("attacker id out of range")
        if len(self.attack_window) != 2:
            raise ConfigError("attack_window must be (t_start_s, t_end_s)")
        t0, t1 = self.attack_window
        if not 0 <= t0 < t1 <= self.duration_s:
            raise ConfigError("attack window must satisfy 0 <= t_start < t_end <= duration_s")
        return self


def make_config(attack: "Attack | str | None" = None, **overrides) -> SimConfig:
    """Build a validated config, choosing a default attacker when none is given.

    The default attacker is the node with the most neighbors that a forged
    minimal rank could attract (non-ancestors whose parent is not the root),
    ties going to the deeper node and then the higher id.
    """
    attack = Attack.parse(attack)
    cfg = SimConfig(attack=Attack.NONE, attacker_ids=(), **{k: v for k, v in overrides.items() if k != "attacker_ids"})
    attackers = tuple(overrides.get("attacker_ids", ()))
    cfg.validate()
    if attack is not Attack.NONE and not attackers:
        adjacency = build_topology(cfg)
        states = form_dodag(adjacency)

        def ancestors(i):
            out = set()
            while states[i].parent is not None:
                i = states[i].parent
                out.add(i)
            return out

        def victims(i):
            anc = ancestors(i)
            return sum(1 for v in adjacency[i] if v not in anc and states[v].rank > MIN_RANK + RANK_STEP)

        best = max(range(1, cfg.num_nodes), key=lambda i: (victims(i), states[i].rank, i))
        attackers = (best,)
    if attack is Attack.NONE:
        attackers = ()
    return replace(cfg, attack=attack, attacker_ids=attackers).validate()


def _positions(config: SimConfig) -> np.ndarray:
    rng = np.random.default_rng([config.seed, 0])
    return rng.uniform(0.0, config.area_side, size=(config.num_nodes, 2))


def _is_connected(adjacency: Sequence[frozenset[int]]) -> bool:
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == len(adjacency)


def build_topology(config: SimConfig) -> list[frozenset[int]]:
    """Unit-disk neighbor sets for seeded uniform node placement."""
    if config.num_nodes < 2:
        raise ConfigError("num_nodes must be >= 2")
    pos = _positions(config)
    dist = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1))
    radio = float(config.radio_range)
    for _ in range(MAX_RANGE_DOUBLINGS + 1):
        within = dist <= radio
        np.fill_diagonal(within, False)
        adjacency = [frozenset(np.flatnonzero(row).tolist()) for row in within]
        if _is_connected(adjacency):
            return adjacency
        radio *= 2.0
    raise TopologyError(f"graph still disconnected after {MAX_RANGE_DOUBLINGS} range doublings")


def form_dodag(adjacency: Sequence[Iterable[int]]) -> list[NodeState]:
    """Breadth-first DODAG formation rooted at node 0."""
    n = len(adjacency)
    hops = [-1] * n
    hops[0] = 0
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in sorted(adjacency[u]):
            if hops[v] < 0:
                hops[v] = hops[u] + 1
                queue.append(v)
    states = []
    for v in range(n):
        if hops[v] < 0:
            raise TopologyError(f"node {v} is unreachable from the root")
        rank = MIN_RANK + RANK_STEP * hops[v]
        if v == 0:
            states.append(NodeState(rank=MIN_RANK, parent=None))
            continue
        parent = min(adjacency[v], key=lambda u: (hops[u], u))
        states.append(NodeState(rank=rank, parent=parent))
    return states


@dataclass(frozen=True)
class Trace:
    config: SimConfig
    records: tuple[PacketRecord, ...]
    # shape (duration + 1, num_nodes, 5): rank, parent (-1 for none), version, delivered, sent
    node_timeline: np.ndarray = field(repr=False)

    def states_at(self, second: int) -> list[NodeState]:
        snap = self.node_timeline[second]
        return [
            NodeState(int(r), None if p < 0 else int(p), int(v), int(d), int(s))
            for r, p, v, d, s in snap
        ]

    def to_csv(self, path) -> None:
        write_trace_csv(self, path)


class _Simulator:
    # event type codes; ticks sort ahead of everything else at the same millisecond
    TICK, DIO, DIS, DATA, DAO, DAO_PERIODIC = range(6)

    def __init__(self, config: SimConfig):
        self.cfg = config
        self.n = config.num_nodes
        self.adj = [tuple(sorted(a)) for a in build_topology(config)]
        init = form_dodag(self.adj)
        self.rank = [s.rank for s in init]
        self.parent = [-1 if s.parent is None else s.parent for s in init]
        self.version = [0] * self.n
        self.delivered = [0] * self.n
        self.sent = [0] * self.n
        # neighbor tables: node -> {neighbor: (advertised rank, version)}
        self.table = [{u: (self.rank[u], 0) for u in self.adj[v]} for v in range(self.n)]
        self.repair_until = [-1] * self.n
        self.suspect: list[set[int]] = [set() for _ in range(self.n)]
        self.attackers = frozenset(config.attacker_ids)
        self.rng = np.random.default_rng([config.seed, 1])
        self.duration_ms = int(round(config.duration_s * 1000))
        t0, t1 = config.attack_window
        self.win = (int(round(t0 * 1000)), int(round(t1 * 1000)))
        self.records: list[PacketRecord] = []
        self.heap: list = []
        self.seq = 0
        self.n_seconds = int(np.floor(config.duration_s))
        self.timeline = np.zeros((self.n_seconds + 1, self.n, 5), dtype=np.int64)

    # -- helpers -----------------------------------------------------------
    def push(self, t_ms: int, etype: int, *data) -> None:
        if t_ms > self.duration_ms:
            return
        prio = 0 if etype == self.TICK else 1
        heapq.heappush(self.heap, (t_ms, prio, self.seq, etype, data))
        self.seq += 1

    def jittered(self, period_s: float) -> int:
        return max(1, int(round(1000 * period_s * (1.0 + self.rng.uniform(-JITTER, JITTER)))))

    def in_window(self, t_ms: int) -> bool:
        return self.win[0] <= t_ms < self.win[1]

    def attack_active(self, kind: Attack, node: int, t_ms: int) -> bool:
        return self.cfg.attack is kind and node in self.attackers and self.in_window(t_ms)

    def record(self, t_ms, src, dst, kind, length, rank=None, version=None, attack=False):
        self.records.append(PacketRecord(t_ms / 1000.0, src, dst, kind, length, rank, version, bool(attack)))

    def reaches(self, start: int, target: int) -> bool:
        """True when following parent links from ``start`` hits ``target``."""
        cur = start
        for _ in range(self.n + 1):
            if cur == target:
                return True
            if cur < 0:
                return False
            cur = self.parent[cur]
        return False

    def snapshot(self, second: int) -> None:
        snap = self.timeline[second]
        snap[:, 0] = self.rank
        snap[:, 1] = self.parent
        snap[:, 2] = self.version
        snap[:, 3] = self.delivered
        snap[:, 4] = self.sent

    # -- event handlers ----------------------------------------------------
    def on_tick(self, t_ms: int, second: int) -> None:
        if second > 0:
            for v in range(1, self.n):
                self.reevaluate(v, t_ms)
        for s in self.suspect:
            s.clear()
        self.snapshot(second)

    def reevaluate(self, v: int, t_ms: int) -> None:
        tab = self.table[v]
        ver = self.version[v]

        def usable(u):
            entry = tab.get(u)
            return entry is not None and entry[1] == ver and entry[0] < INFINITE_RANK and u not in self.suspect[v]

        cur = self.parent[v]
        cur_adv = tab[cur][0] if usable(cur) else INFINITE_RANK
        best = None
        for u in self.adj[v]:
            if u == cur or not usable(u) or self.reaches(u, v):
                continue
            if best is None or (tab[u][0], u) < (tab[best][0], best):
                best = u
        if best is not None and tab[best][0] < cur_adv:
            self.parent[v] = best
            self.push(t_ms + int(self.rng.integers(10, 100)), self.DAO, v, best)
        p = self.parent[v]
        if tab[p][1] == ver:
            self.rank[v] = tab[p][0] + RANK_STEP

    def on_dio(self, t_ms: int, u: int, forced_attack: bool, periodic: bool) -> None:
        if periodic:
            self.push(t_ms + self.jittered(self.cfg.dio_interval_s), self.DIO, u, False, True)
        adv_rank = self.rank[u]
        if self.attack_active(Attack.DR, u, t_ms):
            adv_rank = MIN_RANK
        attack = forced_attack or t_ms < self.repair_until[u]
        if self.attack_active(Attack.VN, u, t_ms):
            attack = True
            if periodic:
                self.version[u] += 1
        elif self.attack_active(Attack.DR, u, t_ms):
            attack = True
        adv_version = self.version[u]
        self.record(t_ms, u, BROADCAST, Kind.DIO, DIO_BYTES, adv_rank, adv_version, attack)
        for v in self.adj[u]:
            self.receive_dio(t_ms, v, u, adv_rank, adv_version)

    def receive_dio(self, t_ms: int, v: int, u: int, adv_rank: int, adv_version: int) -> None:
        self.table[v][u] = (adv_rank, adv_version)
        if adv_version <= self.version[v]:
            return
        # global repair: adopt the newer version, rejoin through the announcing neighbor
        self.version[v] = adv_version
        self.repair_until[v] = t_ms + 1000
        if v != 0 and not self.reaches(u, v):
            if self.parent[v] != u:
                self.parent[v] = u
                self.push(t_ms + int(self.rng.integers(10, 100)), self.DAO, v, u)
            self.rank[v] = adv_rank + RANK_STEP
        self.push(t_ms + int(self.rng.integers(10, 50)), self.DIO, v, False, False)

    def on_dis(self, t_ms: int, a: int) -> None:
        period = self.cfg.dio_interval_s / self.cfg.attack_intensity
        nxt = t_ms + self.jittered(period)
        if nxt < self.win[1]:
            self.push(nxt, self.DIS, a)
        self.record(t_ms, a, BROADCAST, Kind.DIS, DIS_BYTES, attack=True)
        for v in self.adj[a]:
            self.push(t_ms + int(self.rng.integers(5, 50)), self.DIO, v, True, False)

    def on_data(self, t_ms: int, u: int) -> None:
        self.push(t_ms + self.jittered(1.0 / self.cfg.data_rate_pps), self.DATA, u)
        if t_ms + HOP_DELAY_MS * self.n > self.duration_ms:
            return
        self.sent[u] += 1
        length = int(self.rng.integers(DATA_BYTES_RANGE[0], DATA_BYTES_RANGE[1] + 1))
        cur, hop = u, 0
        while cur != 0 and hop < self.n:
            nxt = self.parent[cur]
            t_hop = t_ms + hop * HOP_DELAY_MS
            to_attacker = self.attack_active(Attack.DR, nxt, t_hop)
            self.record(t_hop, cur, nxt, Kind.DATA, length, attack=to_attacker)
            if self.rng.random() < self.cfg.loss_prob:
                return
            if to_attacker and self.rng.random() < DR_DROP_PROB:
                # silent drop; the sender notices the missing forward and distrusts the attacker until the next tick
                self.suspect[cur].add(nxt)
                return
            cur, hop = nxt, hop + 1
        if cur == 0:
            self.delivered[u] += 1

    def on_dao(self, t_ms: int, v: int, parent: int) -> None:
        if self.parent[v] != parent:
            return
        self.record(t_ms, v, parent, Kind.DAO, DAO_BYTES, attack=self.attack_active(Attack.DR, parent, t_ms))

    def on_dao_periodic(self, t_ms: int, v: int) -> None:
        self.push(t_ms + self.jittered(DAO_PERIOD_S), self.DAO_PERIODIC, v)
        p = self.parent[v]
        self.record(t_ms, v, p, Kind.DAO, DAO_BYTES, attack=self.attack_active(Attack.DR, p, t_ms))

    # -- main loop ---------------------------------------------------------
    def run(self) -> Trace:
        cfg = self.cfg
        for second in range(self.n_seconds + 1):
            self.push(second * 1000, self.TICK, second)
        for v in range(self.n):
            self.push(int(self.rng.integers(0, int(1000 * cfg.dio_interval_s))), self.DIO, v, False, True)
        if cfg.data_rate_pps > 0:
            period_ms = int(1000 / cfg.data_rate_pps)
            for v in range(1, self.n):
                self.push(int(self.rng.integers(0, max(period_ms, 1))), self.DATA, v)
        for v in range(1, self.n):
            self.push(int(self.rng.integers(0, int(1000 * DAO_PERIOD_S))), self.DAO_PERIODIC, v)
        if cfg.attack is Attack.HF:
            period_ms = int(1000 * cfg.dio_interval_s / cfg.attack_intensity)
            for a in sorted(self.attackers):
                self.push(self.win[0] + int(self.rng.integers(0, max(period_ms, 1))), self.DIS, a)

        handlers = {
            self.TICK: self.on_tick,
            self.DIO: self.on_dio,
            self.DIS: self.on_dis,
            self.DATA: self.on_data,
            self.DAO: self.on_dao,
            self.DAO_PERIODIC: self.on_dao_periodic,
        }
        while self.heap:
            t_ms, _, _, etype, data = heapq.heappop(self.heap)
            handlers[etype](t_ms, *data)

        self.records.sort(key=lambda r: (r.time_s, r.src, r.kind))
        self.timeline.setflags(write=False)
        return Trace(config=cfg, records=tuple(self.records), node_timeline=self.timeline)


def simulate(config: SimConfig) -> Trace:
    """Run one deterministic simulation; identical configs give identical traces."""
    config.validate()
    return _Simulator(config).run()


def label_seconds(trace: Trace) -> np.ndarray:
    """Per-second 0/1 labels: 1 iff any attack-origin record falls in [k, k+1)."""
    n_seconds = int(np.floor(trace.config.duration_s))
    labels = np.zeros(n_seconds, dtype=np.int64)
    for rec in trace.records:
        if rec.attack_origin:
            k = int(np.floor(rec.time_s))
            if 0 <= k < n_seconds:
                labels[k] = 1
    return labels


def _fmt_opt(value) -> str:
    return "" if value is None else str(value)


def write_trace_csv(trace: Trace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for r in trace.records:
            writer.writerow(
                [
                    repr(r.time_s),
                    r.src,
                    r.dst,
                    r.kind.name,
                    r.length_bytes,
                    _fmt_opt(r.rank_advertised),
                    _fmt_opt(r.version),
                    int(r.attack_origin),
                ]
            )


class TraceFormatError(ValueError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


def read_trace_records(path) -> list[PacketRecord]:
    """Parse a trace CSV; raises TraceFormatError naming the offending data row (1-based)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_HEADER:
            raise TraceFormatError(0, f"bad header {header!r}")
        for i, row in enumerate(reader, start=1):
            if len(row) != len(TRACE_HEADER):
                raise TraceFormatError(i, f"expected {len(TRACE_HEADER)} fields, got {len(row)}")
            try:
                kind = Kind[row[3]]
                rec = PacketRecord(
                    float(row[0]),
                    int(row[1]),
                    int(row[2]),
                    kind,
                    int(row[4]),
                    int(row[5]) if row[5] != "" else None,
                    int(row[6]) if row[6] != "" else None,
                    row[7] == "1",
                )
            except (KeyError, ValueError) as exc:
                raise TraceFormatError(i, f"malformed field ({exc})") from None
            if row[7] not in ("0", "1"):
                raise TraceFormatError(i, f"attack_origin must be 0/1, got {row[7]!r}")
            if (rec.kind is Kind.DIO) != (rec.rank_advertised is not None):
                raise TraceFormatError(i, "rank_advertised must be present exactly for DIO records")
            records.append(rec)
    return records


def meta_path(path) -> str:
    return f"{path}.meta.json"


def config_to_dict(config: SimConfig) -> dict:
    return {
        "num_nodes": config.num_nodes,
        "area_side": config.area_side,
        "radio_range": config.radio_range,
        "duration_s": config.duration_s,
        "dio_interval_s": config.dio_interval_s,
        "data_rate_pps": config.data_rate_pps,
        "loss_prob": config.loss_prob,
        "attack": config.attack.value,
        "attacker_ids": list(config.attacker_ids),
        "attack_window": list(config.attack_window),
        "attack_intensity": config.attack_intensity,
        "seed": config.seed,
    }


def config_from_dict(data: dict) -> SimConfig:
    data = dict(data)
    data["attacker_ids"] = tuple(data.get("attacker_ids", ()))
    data["attack_window"] = tuple(data.get("attack_window", (60.0, 240.0)))
    try:
        return SimConfig(**data).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def save_trace(trace: Trace, path) -> None:
    """Write the trace CSV plus a JSON sidecar holding the config and node timeline."""
    write_trace_csv(trace, path)
    with open(meta_path(path), "w") as fh:
        json.dump({"config": config_to_dict(trace.config), "node_timeline": trace.node_timeline.tolist()}, fh)


def load_trace(path) -> Trace:
    records = read_trace_records(path)
    with open(meta_path(path)) as fh:
        meta = json.load(fh)
    timeline = np.asarray(meta["node_timeline"], dtype=np.int64)
    timeline.setflags(write=False)
    return Trace(config=config_from_dict(meta["config"]), records=tuple(records), node_timeline=timeline)
