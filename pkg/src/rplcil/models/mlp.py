"""Two-logit ReLU multilayer perceptron trained with Nadam."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import DataError, DivergenceError
from ..utils import as_matrix, as_sample_weight, as_Xy, require_both_classes
from .losses import ewc_penalty, kd_loss, l2sp_penalty, log_softmax, softmax


class Nadam:
    """Adam with a Nesterov look-ahead on the first moment."""

    def __init__(self, learning_rate=0.002, beta1=0.9, beta2=0.999, epsilon=1e-7):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update ``params`` in place."""
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2, t = self.beta1, self.beta2, self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = b1 * m / (1 - b1 ** (t + 1)) + (1 - b1) * g / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


@dataclass
class Objective:
    """Extra terms of the incremental-update loss.

    ``teacher_logits`` and ``kd_mask`` are row-aligned with the training data;
    distillation is averaged over the rows where the mask is set.
    """

    lambda_kd: float = 0.0
    temperature: float = 2.0
    gamma_reg: float = 0.0
    anchor: list | None = None
    fisher: list | None = None
    teacher_logits: np.ndarray | None = None
    kd_mask: np.ndarray | None = None

    def penalty(self, params) -> float:
        if self.anchor is None or self.gamma_reg == 0:
            return 0.0
        if self.fisher is None:
            return l2sp_penalty(params, self.anchor)
        return ewc_penalty(params, self.anchor, self.fisher)

    def penalty_grads(self, params) -> list[np.ndarray]:
        if self.anchor is None or self.gamma_reg == 0:
            return [np.zeros_like(p) for p in params]
        if self.fisher is None:
            return [self.gamma_reg * (p - a) for p, a in zip(params, self.anchor)]
        return [self.gamma_reg * f * (p - a) for p, a, f in zip(params, self.anchor, self.fisher)]


class MlpClassifier(ClassifierMixin, BaseEstimator):
    """ReLU network with a two-logit softmax head, trained by minibatch Nadam.

    Inputs are standardized with statistics from the first ``fit``; later
    fine-tuning keeps that scaling so teacher and student see the same inputs.
    """

    def __init__(
        self,
        hidden_layer_sizes=(32, 16),
        epochs=100,
        batch_size=32,
        learning_rate=0.002,
        beta1=0.9,
        beta2=0.999,
        epsilon=1e-7,
        random_state=3,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.random_state = random_state

    # -- parameters ----------------------------------------------------------
    @property
    def layer_dims(self) -> list[int]:
        return [self.n_features_in_, *self.hidden_layer_sizes, 2]

    @property
    def params_(self) -> list[np.ndarray]:
        """Flat parameter list [W1, b1, W2, b2, ...] (views, not copies)."""
        out = []
        for W, b in zip(self.coefs_, self.intercepts_):
            out += [W, b]
        return out

    def get_flat_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params_]

    def set_params_list(self, params) -> None:
        params = list(params)
        self.coefs_ = [np.array(p, dtype=float) for p in params[0::2]]
        self.intercepts_ = [np.array(p, dtype=float) for p in params[1::2]]

    def _init_params(self, n_features: int, rng: np.random.Generator) -> None:
        dims = [n_features, *self.hidden_layer_sizes, 2]
        self.coefs_, self.intercepts_ = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / fan_in)
            self.coefs_.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.intercepts_.append(np.zeros(fan_out))

    # -- forward / backward --------------------------------------------------
    def _scale(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean_) / self.scale_

    def _forward(self, Xs: np.ndarray, params=None):
        params = self.params_ if params is None else params
        acts = [Xs]
        pre = []
        h = Xs
        n_layers = len(params) // 2
        for layer in range(n_layers):
            W, b = params[2 * layer], params[2 * layer + 1]
            a = h @ W + b
            pre.append(a)
            h = np.maximum(a, 0.0) if layer < n_layers - 1 else a
            acts.append(h)
        return h, acts, pre

    def _loss_and_grads(self, Xs, y, w, objective: Objective | None = None, rows=None, params=None):
        """Total loss and exact gradients on standardized inputs ``Xs``.

        ``rows`` indexes into the objective's row-aligned arrays.
        """
        params = self.params_ if params is None else params
        n = len(y)
        z, acts, pre = self._forward(Xs, params)
        logp = log_softmax(z)
        onehot = np.eye(2)[y]
        ce = float(-(w * (onehot * logp).sum(axis=1)).sum() / n)
        dz = (w[:, None] * (np.exp(logp) - onehot)) / n
        kd = 0.0
        reg = 0.0
        if objective is not None:
            if objective.lambda_kd > 0 and objective.teacher_logits is not None:
                t_logits = objective.teacher_logits[rows]
                mask = np.ones(n) if objective.kd_mask is None else objective.kd_mask[rows].astype(float)
                n_kd = mask.sum()
                if n_kd > 0:
                    T = objective.temperature
                    kd = float((mask * kd_loss(t_logits, z, T)).sum() / n_kd)
                    dz += objective.lambda_kd * (mask / n_kd)[:, None] * T * (softmax(z / T) - softmax(t_logits / T))
            reg = objective.penalty(params)
        total = ce
        if objective is not None:
            total = ce + objective.lambda_kd * kd + objective.gamma_reg * reg

        grads = [None] * len(params)
        da = dz
        for layer in range(len(params) // 2 - 1, -1, -1):
            grads[2 * layer] = acts[layer].T @ da
            grads[2 * layer + 1] = da.sum(axis=0)
            if layer > 0:
                da = (da @ params[2 * layer].T) * (pre[layer - 1] > 0)
        if objective is not None:
            for g, pg in zip(grads, objective.penalty_grads(params)):
                g += pg
        return total, grads

    # -- training ------------------------------------------------------------
    def _run_epochs(self, Xs, y, w, epochs, objective=None):
        rng = np.random.default_rng([int(self.random_state), self.n_updates_])
        opt = Nadam(self.learning_rate, self.beta1, self.beta2, self.epsilon)
        params = self.params_
        n = len(y)
        bs = int(self.batch_size)
        self.loss_curve_ = []
        for _ in range(int(epochs)):
            order = rng.permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, bs):
                rows = order[start : start + bs]
                loss, grads = self._loss_and_grads(Xs[rows], y[rows], w[rows], objective, rows)
                if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads):
                    raise DivergenceError("training loss became non-finite")
                opt.step(params, grads)
                epoch_loss += loss * len(rows)
            self.loss_curve_.append(epoch_loss / n)

    def fit(self, X, y=None, sample_weight=None):
        X, y = as_Xy(X, y)
        require_both_classes(y)
        if int(self.epochs) < 1 or int(self.batch_size) < 1:
            raise DataError("epochs and batch_size must be positive")
        w = as_sample_weight(sample_weight, len(y))
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([0, 1])
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        self.scale_ = np.where(scale > 0, scale, 1.0)
        self._init_params(X.shape[1], np.random.default_rng(int(self.random_state)))
        self.n_updates_ = 0
        self._run_epochs(self._scale(X), y, w, self.epochs)
        return self

    def fine_tune(self, X, y=None, *, epochs, objective: Objective | None = None, sample_weight=None):
        """Return a copy trained further on (X, y), starting from the current weights."""
        check_is_fitted(self, "coefs_")
        X, y = as_Xy(X, y)
        if len(y) == 0:
            raise DataError("fine-tuning needs at least one row")
        new = copy.deepcopy(self)
        new.n_updates_ = self.n_updates_ + 1
        new._run_epochs(new._scale(X), y, as_sample_weight(sample_weight, len(y)), epochs, objective)
        return new

    # -- inference -----------------------------------------------------------
    def logits(self, X) -> np.ndarray:
        check_is_fitted(self, "coefs_")
        X = as_matrix(X, self.n_features_in_)
        return self._forward(self._scale(X))[0]

    def decision_function(self, X) -> np.ndarray:
        z = self.logits(X)
        return z[:, 1] - z[:, 0]

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.logits(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)


def mlp_train(data, cfg) -> MlpClassifier:
    return cfg.mlp().fit(data)


def mlp_predict(model: MlpClassifier, x):
    logits = model.logits(x)[0]
    prob = float(softmax(logits)[1])
    return prob, (float(logits[0]), float(logits[1]))


def mlp_gradients(model: MlpClassifier, X, y=None, sample_weight=None, objective: Objective | None = None):
    """Exact gradients of the active total loss on one batch, as a [W1, b1, ...] list.

    Returns ``(loss, grads)``. The objective's row-aligned arrays must match the batch.
    """
    X, y = as_Xy(X, y)
    w = as_sample_weight(sample_weight, len(y))
    return model._loss_and_grads(model._scale(X), y, w, objective, np.arange(len(y)))


def estimate_fisher(model: MlpClassifier, data, y=None) -> list[np.ndarray]:
    """Diagonal empirical Fisher: mean over rows of squared per-row log-likelihood gradients."""
    X, y = as_Xy(data, y)
    if len(y) == 0:
        raise DataError("Fisher estimation needs at least one row")
    params = model.params_
    z, acts, pre = model._forward(model._scale(X))
    da = softmax(z) - np.eye(2)[y]  # per-row gradient of -log p(y|x) w.r.t. logits
    fisher = [None] * len(params)
    for layer in range(len(params) // 2 - 1, -1, -1):
        per_row_W = np.einsum("ni,nj->nij", acts[layer], da)
        fisher[2 * layer] = (per_row_W**2).mean(axis=0)
        fisher[2 * layer + 1] = (da**2).mean(axis=0)
        if layer > 0:
            da = (da @ params[2 * layer].T) * (pre[layer - 1] > 0)
    return fisher
