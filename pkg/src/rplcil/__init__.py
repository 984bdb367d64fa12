"""Synthetic RPL intrusion detection with class-incremental model updates."""

from .cil import (
    ExemplarBuffer,
    NoveltyReport,
    NoveltyState,
    buffer_insert,
    buffer_sample,
    detect_novelty,
    incremental_update,
    select_seed_set,
)
from .exceptions import (
    ConfigError,
    DataError,
    DivergenceError,
    EmptyBufferError,
    ModelFileError,
    RplCilError,
    SchemaError,
    ShapeError,
    SplitError,
    TopologyError,
)
from .features import FEATURE_NAMES, FeatureVector, WindowedDataset, extract_features, merge, split
from .harness import (
    CilReport,
    EvalMetrics,
    SuiteConfig,
    TimingReport,
    bench_update_time,
    build_datasets,
    compute_delta,
    compute_gap,
    compute_metrics,
    compute_recovery,
    evaluate,
    run_experiment_suite,
)
from .models import (
    GbdtClassifier,
    MlpClassifier,
    TrainConfig,
    UpdatePlan,
    combined_loss,
    ewc_penalty,
    kd_loss,
    l2sp_penalty,
    load_model,
    save_model,
)
from .simnet import Attack, SimConfig, Trace, label_seconds, load_trace, make_config, save_trace, simulate

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
