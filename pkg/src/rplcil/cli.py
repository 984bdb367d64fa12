"""Command-line entry point: simulate, featurize, train, update, evaluate, suite, bench.

Exit codes: 0 ok, 2 configuration error, 3 I/O or malformed input, 4 training failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass, field, fields

from .cil import ExemplarBuffer, incremental_update
from .exceptions import (
    ConfigError,
    DataError,
    DivergenceError,
    EmptyBufferError,
    ModelFileError,
    SchemaError,
    ShapeError,
)
from .features import extract_features, merge, read_dataset_csv, write_dataset_csv
from .harness import (
    ATTACKS,
    MODEL_KINDS,
    RegimeSpec,
    SuiteConfig,
    bench_update_time,
    build_datasets,
    evaluate,
    fill_buffer,
    run_experiment_suite,
    training_union,
)
from .models import TrainConfig, UpdatePlan, load_model, model_kind, save_model
from .models.persistence import next_free_path
from .simnet import Attack, SimConfig, TraceFormatError, load_trace, make_config, save_trace, simulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TRAIN = 4

SEED_ENV = "RPLCIL_SEED"
DEFAULT_SEED = 3
DEFAULT_CONFIG = os.path.join(os.path.dirname(__file__), "data", "default.ini")

_SIM_KEYS = tuple(f.name for f in fields(SimConfig) if f.name not in ("attack", "seed"))


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, resolved from the config file, flags and environment."""

    seed: int = DEFAULT_SEED
    output_dir: str = "runs"
    train_frac: float = 0.7
    traces_per_attack: int = 3
    sim_overrides: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    plan: UpdatePlan = field(default_factory=UpdatePlan)
    attacks: tuple[str, ...] = ATTACKS
    model_kinds: tuple[str, ...] = MODEL_KINDS
    buffer_capacity: int = 200
    timing_repetitions: int = 5

    def suite(self) -> SuiteConfig:
        return SuiteConfig(
            attacks=self.attacks,
            model_kinds=self.model_kinds,
            seed=self.seed,
            train_frac=self.train_frac,
            buffer_capacity=self.buffer_capacity,
            timing_repetitions=self.timing_repetitions,
            traces_per_attack=self.traces_per_attack,
            train=self.train,
            plan=self.plan,
            sim_overrides=self.sim_overrides,
        )

    def sim_config(self, attack) -> SimConfig:
        attack = Attack.parse(attack)
        overrides = {k: v for k, v in self.sim_overrides.items() if not isinstance(v, dict)}
        overrides.update(self.sim_overrides.get(attack.value, {}))
        return make_config(attack, seed=self.seed, **overrides)

    def datasets(self):
        return build_datasets(ATTACKS, self.seed, self.train_frac, self.sim_overrides, self.traces_per_attack)


# Element types for comma-separated list values.
_LIST_TYPES = {
    "nadam": float,
    "hidden_layer_sizes": int,
    "attack_window": float,
    "attacker_ids": int,
    "attacks": str,
    "model_kinds": str,
}


def _coerce(default, text: str, key: str):
    """Parse ``text`` into the type of ``default``."""
    text = text.strip()
    name = key.rsplit(".", 1)[-1]
    try:
        if isinstance(default, tuple):
            return tuple(_LIST_TYPES.get(name, str)(t.strip()) for t in text.split(",") if t.strip())
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    return text


def _section(parser, name: str, template, key_prefix: str) -> dict:
    """Typed overrides for the dataclass ``template`` from one INI section."""
    if not parser.has_section(name):
        return {}
    known = {f.name for f in fields(template)}
    out = {}
    for key, text in parser.items(name):
        if key not in known:
            raise ConfigError(f"unknown key [{name}] {key}")
        out[key] = _coerce(getattr(template, key), text, f"{key_prefix}.{key}")
    return out


def _sim_section(parser, name: str) -> dict:
    if not parser.has_section(name):
        return {}
    template = SimConfig()
    out = {}
    for key, text in parser.items(name):
        if key not in _SIM_KEYS:
            raise ConfigError(f"unknown key [{name}] {key}")
        out[key] = _coerce(getattr(template, key), text, f"{name}.{key}")
    return out


def resolve_seed(cli_seed: int | None, config_seed: int | None) -> int:
    """Flag beats config file beats the environment beats the built-in default."""
    if cli_seed is not None:
        seed = cli_seed
    elif config_seed is not None:
        seed = config_seed
    elif os.environ.get(SEED_ENV, "").strip():
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    else:
        seed = DEFAULT_SEED
    if seed < 0:
        raise ConfigError("seed must be unsigned")
    return seed


def load_run_config(path: str | None = None, seed: int | None = None) -> RunConfig:
    """Read an INI config (sections run, data, simulation[.ATTACK], train, update, suite)."""
    parser = configparser.ConfigParser()
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None

    known = {"run", "data", "simulation", "train", "update", "suite"} | {f"simulation.{a.value}" for a in Attack}
    for name in parser.sections():
        if name not in known and name.split(".")[0] != "simulation":
            raise ConfigError(f"unknown section [{name}]")

    base = RunConfig()
    run = _section(parser, "run", base, "run") if parser.has_section("run") else {}
    for key in run:
        if key not in ("seed", "output_dir"):
            raise ConfigError(f"unknown key [run] {key}")
    data = _section(parser, "data", base, "data")
    for key in data:
        if key not in ("train_frac", "traces_per_attack"):
            raise ConfigError(f"unknown key [data] {key}")
    suite = _section(parser, "suite", base, "suite")
    for key in suite:
        if key not in ("attacks", "model_kinds", "buffer_capacity", "timing_repetitions"):
            raise ConfigError(f"unknown key [suite] {key}")

    resolved_seed = resolve_seed(seed, run.get("seed"))
    train_kw = _section(parser, "train", TrainConfig(), "train")
    train_kw["seed"] = resolved_seed
    train = TrainConfig(**train_kw)
    plan = UpdatePlan(**_section(parser, "update", UpdatePlan(), "update"))

    sim = _sim_section(parser, "simulation")
    for name in parser.sections():
        if name.startswith("simulation."):
            try:
                attack = Attack.parse(name.split(".", 1)[1])
            except (ValueError, KeyError):
                raise ConfigError(f"unknown attack in section [{name}]") from None
            sim[attack.value] = _sim_section(parser, name)

    attacks = tuple(Attack.parse(a).value for a in suite.pop("attacks", ATTACKS))
    kinds = tuple(k.lower() for k in suite.pop("model_kinds", MODEL_KINDS))
    if not set(attacks) <= set(ATTACKS) or not attacks:
        raise ConfigError(f"suite attacks must be drawn from {ATTACKS}")
    if not set(kinds) <= set(MODEL_KINDS) or not kinds:
        raise ConfigError(f"suite model kinds must be drawn from {MODEL_KINDS}")
    cfg = RunConfig(
        seed=resolved_seed,
        output_dir=run.get("output_dir", base.output_dir),
        sim_overrides=sim,
        train=train,
        plan=plan,
        attacks=attacks,
        model_kinds=kinds,
        **data,
        **suite,
    )
    if not 0.0 < cfg.train_frac < 1.0 or cfg.traces_per_attack < 1:
        raise ConfigError("train_frac must lie in (0, 1) and traces_per_attack must be >= 1")
    if cfg.buffer_capacity < 1 or cfg.timing_repetitions < 3:
        raise ConfigError("buffer_capacity must be positive and timing_repetitions >= 3")
    # Simulation settings are checked once up front so bad values fail as config errors.
    for attack in Attack:
        cfg.sim_config(attack)
    return cfg


# -- helpers ---------------------------------------------------------------

def buffer_path(model_path: str) -> str:
    return f"{model_path}.buffer.csv"


def _out_path(args, cfg: RunConfig, default_name: str) -> str:
    path = args.out or os.path.join(cfg.output_dir, default_name)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _load_data(paths):
    return merge(*(read_dataset_csv(p) for p in paths))


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _attack_name(args) -> str:
    return Attack.parse(args.attack or "none").value


# -- commands --------------------------------------------------------------

def cmd_simulate(args, cfg: RunConfig) -> int:
    sim = cfg.sim_config(_attack_name(args))
    trace = simulate(sim)
    out = _out_path(args, cfg, f"trace_{sim.attack.value.lower()}.csv")
    save_trace(trace, out)
    t0, t1 = sim.attack_window
    window = "none" if sim.attack is Attack.NONE else f"{t0:g}-{t1:g}s"
    print(f"{out}: {len(trace.records)} records, attack {sim.attack.value}, window {window}")
    return EXIT_OK


def cmd_featurize(args, cfg: RunConfig) -> int:
    data = extract_features(load_trace(args.trace))
    out = _out_path(args, cfg, os.path.splitext(os.path.basename(args.trace))[0] + "_features.csv")
    write_dataset_csv(data, out)
    print(f"{out}: {len(data)} rows, {int(data.y.sum())} malicious")
    return EXIT_OK


def _training_data(args, cfg: RunConfig):
    """Dataset CSVs when given, else simulated training rows for every attack except --attack."""
    if args.data:
        return _load_data(args.data)
    target = _attack_name(args)
    ds = cfg.datasets()
    if target == "NONE":
        return merge(*(d.train for d in ds.values()))
    return training_union(RegimeSpec("R2", target, args.model_kind, cfg.seed), ds)


def cmd_train(args, cfg: RunConfig) -> int:
    data = _training_data(args, cfg)
    model = cfg.train.estimator(args.model_kind).fit(data)
    out = next_free_path(_out_path(args, cfg, f"{args.model_kind}.model"))
    save_model(model, out)
    fill_buffer(data, cfg.buffer_capacity, cfg.seed).to_csv(buffer_path(out))
    print(f"{out}: {model_kind(model)} trained on {len(data)} rows")
    return EXIT_OK


def cmd_update(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    if args.data:
        new = _load_data(args.data)
    else:
        if args.attack is None:
            raise ConfigError("update needs dataset files or --attack")
        new = cfg.datasets()[_attack_name(args)].train
    old_buffer = buffer_path(args.model)
    if os.path.exists(old_buffer):
        buf = ExemplarBuffer.from_csv(old_buffer, capacity=cfg.buffer_capacity, seed=cfg.seed)
    else:
        buf = ExemplarBuffer(capacity=cfg.buffer_capacity, seed=cfg.seed)
    updated = incremental_update(model, new, buf, cfg.plan)
    out = next_free_path(args.out or args.model)
    save_model(updated, out)
    buf.to_csv(buffer_path(out))
    print(f"{out}: updated {args.model} with {len(new)} rows")
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    if args.data:
        data = _load_data(args.data)
    else:
        ds = cfg.datasets()
        names = [_attack_name(args)] if args.attack else list(ds)
        data = merge(*(ds[n].test for n in names))
    metrics = evaluate(model, data).to_dict()
    _print_json(metrics)
    if args.out:
        with open(_out_path(args, cfg, "metrics.json"), "w") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
    return EXIT_OK


def cmd_suite(args, cfg: RunConfig) -> int:
    report = run_experiment_suite(cfg.suite(), with_timing=not args.no_timing)
    out_dir = args.out or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, "suite.json")
    csv_path = os.path.join(out_dir, "suite.csv")
    report.write(json_path, csv_path)
    for row in report.table():
        print("  ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    print(f"wrote {json_path} and {csv_path}")
    return EXIT_OK


def cmd_bench(args, cfg: RunConfig) -> int:
    attack = _attack_name(args) if args.attack else "VN"
    if attack not in ATTACKS:
        raise ConfigError(f"bench needs an attack from {ATTACKS}")
    kinds = [args.model_kind] if args.model_kind else list(cfg.model_kinds)
    ds = cfg.datasets()
    result = {}
    for kind in kinds:
        rep = bench_update_time(ds, attack, kind, cfg.train, cfg.plan, cfg.timing_repetitions, cfg.buffer_capacity, cfg.seed)
        result[kind] = {
            "t_full_retrain_s": rep.t_full_retrain_s,
            "t_incremental_s": rep.t_incremental_s,
            "speedup_pct": rep.speedup_pct,
            "repetitions": rep.repetitions,
        }
    _print_json({"attack": attack, **result})
    if args.out:
        with open(_out_path(args, cfg, "bench.json"), "w") as fh:
            json.dump({"attack": attack, **result}, fh, indent=2, sort_keys=True)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "update": cmd_update,
    "evaluate": cmd_evaluate,
    "suite": cmd_suite,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"INI config file; a documented example ships at {DEFAULT_CONFIG}")
    common.add_argument("--seed", type=int, help=f"global seed; overrides the config and ${SEED_ENV}")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--attack", type=str.lower, choices=("hf", "dr", "vn", "none"))
    common.add_argument("--model-kind", type=str.lower, choices=MODEL_KINDS)

    parser = argparse.ArgumentParser(prog="rplcil", description="RPL intrusion detection with class-incremental updates")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate one RPL trace")
    p = sub.add_parser("featurize", parents=[common], help="turn a trace into one-second feature rows")
    p.add_argument("trace")
    p = sub.add_parser("train", parents=[common], help="train a detector")
    p.add_argument("data", nargs="*", help="dataset CSVs (default: simulated data without --attack)")
    p = sub.add_parser("update", parents=[common], help="incrementally update a saved detector")
    p.add_argument("data", nargs="*", help="dataset CSVs with the new attack (default: simulated --attack rows)")
    p.add_argument("--model", required=True)
    p = sub.add_parser("evaluate", parents=[common], help="score a saved detector")
    p.add_argument("data", nargs="*", help="dataset CSVs (default: simulated test rows)")
    p.add_argument("--model", required=True)
    p = sub.add_parser("suite", parents=[common], help="run the full R1/R2/R3 experiment grid")
    p.add_argument("--no-timing", action="store_true", help="skip the update-time benchmark")
    sub.add_parser("bench", parents=[common], help="time full retraining against an incremental update")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train" and args.model_kind is None:
        args.model_kind = "gbdt"
    try:
        cfg = load_run_config(args.config, args.seed)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceFormatError as exc:
        print(f"malformed trace: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, SchemaError, ModelFileError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DataError, DivergenceError, ShapeError, EmptyBufferError) as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
