from .config import TrainConfig, UpdatePlan
from .gbdt import GbdtClassifier, RegressionTree, gbdt_predict, gbdt_train, gbdt_warm_start
from .losses import combined_loss, ewc_penalty, kd_loss, l2sp_penalty, softmax
from .mlp import MlpClassifier, Nadam, Objective, estimate_fisher, mlp_gradients, mlp_predict, mlp_train
from .persistence import MAGIC, load_model, model_kind, save_model

__all__ = [
    "MAGIC",
    "GbdtClassifier",
    "MlpClassifier",
    "Nadam",
    "Objective",
    "RegressionTree",
    "TrainConfig",
    "UpdatePlan",
    "combined_loss",
    "estimate_fisher",
    "ewc_penalty",
    "gbdt_predict",
    "gbdt_train",
    "gbdt_warm_start",
    "kd_loss",
    "l2sp_penalty",
    "load_model",
    "mlp_gradients",
    "mlp_predict",
    "mlp_train",
    "model_kind",
    "save_model",
    "softmax",
]
