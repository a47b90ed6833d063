"""Noise-robust classification losses.

All losses take rows of predicted probabilities and rows of target
distributions (one-hot or soft) and return the mean over samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_prob_matrix
from .exceptions import ConfigError

CLIP_EPS = 1e-12


@dataclass(frozen=True)
class RobustLossConfig:
    """Weights of the combined loss; ``A`` stands in for ``log 0``."""

    alpha: float = 0.1
    beta: float = 4.0
    A: float = -4.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"alpha and beta must be >= 0, got ({self.alpha}, {self.beta})")
        if not self.A < 0:
            raise ConfigError(f"A must be strictly negative, got {self.A}")


@dataclass(frozen=True)
class RobustLossValue:
    total: float
    ce_train: float
    ce_pseudo: float
    rce_train: float


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _pair(predictions, labels):
    P = check_prob_matrix(predictions, "predictions")
    Y = check_prob_matrix(labels, "labels")
    if P.shape != Y.shape:
        raise ValueError(f"predictions {P.shape} and labels {Y.shape} differ in shape")
    return P, Y


def _check_one_hot(Y):
    if not (np.all((Y == 0) | (Y == 1)) and np.all(Y.sum(axis=1) == 1)):
        raise ValueError("reverse cross-entropy requires strictly one-hot labels")


def cross_entropy(predictions, labels) -> float:
    """Mean of ``-sum_k y_k log p_k``; predictions clipped below at 1e-12."""
    P, Y = _pair(predictions, labels)
    return float(-np.mean(np.sum(Y * np.log(np.maximum(P, CLIP_EPS)), axis=1)))


def reverse_cross_entropy(predictions, labels, A: float = -4.0) -> float:
    """Mean of ``-A (1 - p_y)`` for one-hot labels ``y``."""
    if not A < 0:
        raise ConfigError(f"A must be strictly negative, got {A}")
    P, Y = _pair(predictions, labels)
    _check_one_hot(Y)
    p_true = np.sum(P * Y, axis=1)
    return float(np.mean(-A * (1.0 - p_true)))


def reverse_cross_entropy_direct(predictions, labels, A: float = -4.0) -> float:
    """``-sum_k p_k log y_k`` evaluated term by term with ``log 0 = A``."""
    P, Y = _pair(predictions, labels)
    _check_one_hot(Y)
    log_y = np.where(Y > 0, np.log(np.where(Y > 0, Y, 1.0)), A)
    return float(-np.mean(np.sum(P * log_y, axis=1)))


def make_pseudo_labels(model_outputs) -> np.ndarray:
    """Soft pseudo-labels: a read-only copy of the model's probabilities."""
    Z = np.array(check_prob_matrix(model_outputs, "model outputs"), dtype=np.float64, copy=True)
    Z.setflags(write=False)
    return Z


def robust_loss(train_preds, train_labels, pseudo_preds, pseudo_labels,
                config: RobustLossConfig) -> RobustLossValue:
    """``CE(T) + alpha * CE(P) + beta * RCE(T)`` with its components."""
    ce_t = cross_entropy(train_preds, train_labels)
    ce_p = cross_entropy(pseudo_preds, pseudo_labels)
    rce_t = reverse_cross_entropy(train_preds, train_labels, config.A)
    total = ce_t + config.alpha * ce_p + config.beta * rce_t
    return RobustLossValue(total, ce_t, ce_p, rce_t)


# Gradients with respect to softmax logits. Each returns (value, dL/dz)
# with dL/dz of shape (n, K) already divided by n.

def cross_entropy_grad_logits(P, Y):
    n = P.shape[0]
    value = -np.sum(Y * np.log(np.maximum(P, CLIP_EPS))) / n
    grad = (P * Y.sum(axis=1, keepdims=True) - Y) / n
    return value, grad


def reverse_cross_entropy_grad_logits(P, Y, A):
    n = P.shape[0]
    p_true = np.sum(P * Y, axis=1, keepdims=True)
    value = float(np.sum(-A * (1.0 - p_true)) / n)
    # d(-A(1 - p_y))/dz_j = A * p_y * (1[j = y] - p_j)
    grad = A * p_true * (Y - P) / n
    return value, grad


def robust_loss_value(P, Y, pseudo, config: RobustLossConfig) -> float:
    """Unvalidated total robust loss for a batch whose predictions are ``P``."""
    n = P.shape[0]
    logp = np.log(np.maximum(P, CLIP_EPS))
    ce_t = -np.sum(Y * logp) / n
    rce_t = -config.A * (1.0 - np.sum(P * Y) / n)
    total = ce_t + config.beta * rce_t
    if config.alpha:
        total += config.alpha * (-np.sum(pseudo * logp) / n)
    return float(total)


def robust_loss_grad_logits(P, Y, pseudo, config: RobustLossConfig):
    """Total robust loss on one batch and its gradient w.r.t. the logits."""
    v_ce, g_ce = cross_entropy_grad_logits(P, Y)
    v_rce, g_rce = reverse_cross_entropy_grad_logits(P, Y, config.A)
    value = v_ce + config.beta * v_rce
    grad = g_ce + config.beta * g_rce
    if config.alpha:
        v_ps, g_ps = cross_entropy_grad_logits(P, pseudo)
        value += config.alpha * v_ps
        grad = grad + config.alpha * g_ps
    return value, grad
