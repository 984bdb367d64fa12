"""Loss terms for incremental updates: distillation, the combined objective, and anchoring penalties."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..exceptions import ShapeError


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.exp(log_softmax(z, axis=axis))


def kd_loss(teacher, student, T: float = 2.0) -> float | np.ndarray:
    """T^2 * KL(softmax(teacher / T) || softmax(student / T)) in nats.

    Accepts single logit pairs or arrays of shape (n, 2); for arrays the
    per-row losses are returned.
    """
    if T <= 0:
        raise ValueError("temperature must be positive")
    t = np.asarray(teacher, dtype=float)
    s = np.asarray(student, dtype=float)
    log_pt = log_softmax(t / T)
    log_ps = log_softmax(s / T)
    kl = (np.exp(log_pt) * (log_pt - log_ps)).sum(axis=-1)
    # KL is non-negative; clamp float round-off
    out = T * T * np.maximum(kl, 0.0)
    return float(out) if out.ndim == 0 else out


def combined_loss(ce: float, kd: float, reg: float, plan) -> float:
    return ce + plan.lambda_kd * kd + plan.gamma_reg * reg


def _check_shapes(params: Sequence[np.ndarray], *others: Sequence[np.ndarray]) -> None:
    for other in others:
        if len(other) != len(params):
            raise ShapeError(f"parameter list lengths differ: {len(params)} vs {len(other)}")
        for a, b in zip(params, other):
            if np.shape(a) != np.shape(b):
                raise ShapeError(f"shape mismatch {np.shape(a)} vs {np.shape(b)}")


def _as_list(params) -> list[np.ndarray]:
    if isinstance(params, np.ndarray) or np.isscalar(params):
        return [np.asarray(params, dtype=float)]
    return [np.asarray(p, dtype=float) for p in params]


def l2sp_penalty(params, anchor_params) -> float:
    """Half squared distance to the anchor parameters."""
    params, anchor = _as_list(params), _as_list(anchor_params)
    _check_shapes(params, anchor)
    return 0.5 * float(sum(((p - a) ** 2).sum() for p, a in zip(params, anchor)))


def ewc_penalty(params, anchor, fisher) -> float:
    """Fisher-weighted half squared distance to the anchor parameters."""
    params, anchor, fisher = _as_list(params), _as_list(anchor), _as_list(fisher)
    _check_shapes(params, anchor, fisher)
    if any((f < 0).any() for f in fisher):
        raise ValueError("fisher weights must be non-negative")
    return 0.5 * float(sum((f * (p - a) ** 2).sum() for p, a, f in zip(params, anchor, fisher)))
