from __future__ import annotations

from dataclasses import dataclass, field

from ..exceptions import ConfigError

REG_KINDS = ("l2sp", "ewc")


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters for both detector families.

    ``learning_rate`` is the Nadam step size for the MLP; ``shrinkage`` is the
    per-tree learning rate of the boosted ensemble.
    """

    n_rounds: int = 20
    max_depth: int = 3
    shrinkage: float = 0.1
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.002
    nadam: tuple[float, float, float] = (0.9, 0.999, 1e-7)
    hidden_layer_sizes: tuple[int, ...] = (32, 16)
    seed: int = 3

    def __post_init__(self):
        if not 1 <= self.n_rounds <= 20:
            raise ConfigError("n_rounds must lie in [1, 20]")
        if not 2 <= self.max_depth <= 10:
            raise ConfigError("max_depth must lie in [2, 10]")
        if self.shrinkage <= 0 or self.learning_rate <= 0:
            raise ConfigError("learning rates must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        b1, b2, eps = self.nadam
        if not (0 < b1 < 1 and 0 < b2 < 1 and eps > 0):
            raise ConfigError("nadam betas must lie in (0, 1) and epsilon must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be unsigned")

    def gbdt(self, n_rounds: int | None = None):
        from .gbdt import GbdtClassifier

        return GbdtClassifier(
            n_rounds=self.n_rounds if n_rounds is None else n_rounds,
            learning_rate=self.shrinkage,
            max_depth=self.max_depth,
        )

    def mlp(self, epochs: int | None = None):
        from .mlp import MlpClassifier

        b1, b2, eps = self.nadam
        return MlpClassifier(
            hidden_layer_sizes=tuple(self.hidden_layer_sizes),
            epochs=self.epochs if epochs is None else epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            beta1=b1,
            beta2=b2,
            epsilon=eps,
            random_state=self.seed,
        )

    def estimator(self, kind: str):
        kind = kind.lower()
        if kind == "gbdt":
            return self.gbdt()
        if kind == "mlp":
            return self.mlp()
        raise ConfigError(f"unknown model kind {kind!r}")


@dataclass(frozen=True)
class UpdatePlan:
    temperature: float = 2.0
    lambda_kd: float = 1.0
    gamma_reg: float = 0.1
    reg_kind: str = "l2sp"
    update_epochs: int = 20
    update_rounds: int = 10
    replay_ratio: float = 1.0
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.lambda_kd < 0 or self.gamma_reg < 0:
            raise ConfigError("lambda_kd and gamma_reg must be non-negative")
        if self.reg_kind.lower() not in REG_KINDS:
            raise ConfigError(f"reg_kind must be one of {REG_KINDS}")
        object.__setattr__(self, "reg_kind", self.reg_kind.lower())
        if self.update_epochs < 1 or not 1 <= self.update_rounds <= 20:
            raise ConfigError("update_epochs must be >= 1 and update_rounds in [1, 20]")
        if self.replay_ratio < 0:
            raise ConfigError("replay_ratio must be non-negative")
