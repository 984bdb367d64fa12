import numpy as np
import pytest

from rplcil.features import FEATURE_NAMES, WindowedDataset
from rplcil.harness import SuiteConfig, build_datasets, run_experiment_suite
from rplcil.simnet import make_config, simulate

# Filled by the acceptance tests; printed once at the end of the session.
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def traces():
    """Default seed-3 traces for every attack kind."""
    return {name: simulate(make_config(name)) for name in ("NONE", "HF", "DR", "VN")}


@pytest.fixture(scope="session")
def default_datasets():
    cfg = SuiteConfig()
    return build_datasets(cfg.attacks, cfg.seed, cfg.train_frac, cfg.sim_overrides, cfg.traces_per_attack)


@pytest.fixture(scope="session")
def default_suite(default_datasets):
    return run_experiment_suite(SuiteConfig(), datasets=default_datasets, with_timing=False)


def make_dataset(X, y, kinds=None):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if kinds is None:
        kinds = np.where(y == 1, "HF", "NONE")
    return WindowedDataset(X, y, np.asarray(kinds, dtype=object), FEATURE_NAMES)


def toy_dataset(n=200, seed=0, shift=3.0, kind="HF"):
    """Two Gaussian blobs in feature space; class 1 is shifted by ``shift``."""
    rng = np.random.default_rng(seed)
    y = np.r_[np.zeros(n // 2), np.ones(n - n // 2)].astype(np.int64)
    X = rng.normal(size=(n, len(FEATURE_NAMES))) + shift * y[:, None]
    return make_dataset(X, y, np.where(y == 1, kind, "NONE"))
