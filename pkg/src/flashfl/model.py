"""Small softmax classifier trained on the robust loss.

Parameters live in a single flat vector so that federated averaging is a
plain weighted mean. The default architecture is multinomial logistic
regression; a single ``tanh`` hidden layer is optional.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._random import as_generator
from .exceptions import ConfigError, TrainingDivergedError
from .losses import (RobustLossConfig, cross_entropy_grad_logits, one_hot,
                     robust_loss_grad_logits)


@dataclass(frozen=True)
class Architecture:
    in_dim: int
    n_classes: int
    hidden: int = 0

    def shapes(self):
        if self.hidden:
            return [(self.in_dim, self.hidden), (self.hidden,),
                    (self.hidden, self.n_classes), (self.n_classes,)]
        return [(self.in_dim, self.n_classes), (self.n_classes,)]

    @property
    def size(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes())


@dataclass
class ModelParams:
    arch: Architecture
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.arch.size,):
            raise ValueError(
                f"weight vector of length {self.weights.size} does not fit {self.arch}"
            )

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.weights.copy())

    def unpack(self):
        out, offset = [], 0
        for shape in self.arch.shapes():
            n = int(np.prod(shape))
            out.append(self.weights[offset:offset + n].reshape(shape))
            offset += n
        return out


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    epochs: int = 5
    batch_size: int = 32
    method: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.method not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.method!r}")


def init_params(arch: Architecture, rng=None) -> ModelParams:
    """Zeros for logistic regression; scaled Gaussian first layer for the MLP."""
    if not arch.hidden:
        return ModelParams(arch, np.zeros(arch.size))
    rng = as_generator(rng)
    W1 = rng.standard_normal((arch.in_dim, arch.hidden)) / np.sqrt(arch.in_dim)
    W2 = rng.standard_normal((arch.hidden, arch.n_classes)) / np.sqrt(arch.hidden)
    flat = np.concatenate([W1.ravel(), np.zeros(arch.hidden), W2.ravel(), np.zeros(arch.n_classes)])
    return ModelParams(arch, flat)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_inputs(params: ModelParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.arch.in_dim:
        raise ValueError(f"inputs of shape {X.shape} do not match in_dim={params.arch.in_dim}")
    return X


def _split(arch: Architecture, w: np.ndarray):
    out, offset = [], 0
    for shape in arch.shapes():
        n = int(np.prod(shape))
        out.append(w[offset:offset + n].reshape(shape))
        offset += n
    return out


def _forward_raw(arch: Architecture, w: np.ndarray, X):
    parts = _split(arch, w)
    if arch.hidden:
        W1, b1, W2, b2 = parts
        H = np.tanh(X @ W1 + b1)
        return H @ W2 + b2, H
    W, b = parts
    return X @ W + b, None


def _forward_cache(params: ModelParams, X):
    return _forward_raw(params.arch, params.weights, X)


def logits(params: ModelParams, X) -> np.ndarray:
    return _forward_cache(params, _check_inputs(params, X))[0]


def forward(params: ModelParams, X) -> np.ndarray:
    """Class probabilities, one row per input."""
    return softmax(logits(params, X))


def _backward_raw(arch: Architecture, w, X, H, G):
    """Flat parameter gradient given ``G = dL/dlogits``."""
    if arch.hidden:
        W2 = _split(arch, w)[2]
        dH = (G @ W2.T) * (1.0 - H * H)
        return np.concatenate([(X.T @ dH).ravel(), dH.sum(axis=0),
                               (H.T @ G).ravel(), G.sum(axis=0)])
    return np.concatenate([(X.T @ G).ravel(), G.sum(axis=0)])


def _loss_and_grad_raw(arch, w, X, Y, pseudo, loss_config):
    Z, H = _forward_raw(arch, w, X)
    P = softmax(Z)
    if loss_config is None:
        value, G = cross_entropy_grad_logits(P, Y)
    else:
        value, G = robust_loss_grad_logits(P, Y, pseudo, loss_config)
    return float(value), _backward_raw(arch, w, X, H, G)


def loss_and_grad(params: ModelParams, X, Y, pseudo=None, loss_config: RobustLossConfig | None = None):
    """Loss value and flat gradient.

    With ``loss_config=None`` the loss is plain cross-entropy against ``Y``;
    otherwise it is the robust loss with ``pseudo`` as soft targets.
    """
    X = _check_inputs(params, X)
    return _loss_and_grad_raw(params.arch, params.weights, X, np.asarray(Y, dtype=np.float64),
                              pseudo, loss_config)


class _Adam:
    def __init__(self, opt: OptimizerConfig, size: int):
        self.opt = opt
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, w, g):
        o = self.opt
        self.t += 1
        self.m = o.beta1 * self.m + (1 - o.beta1) * g
        self.v = o.beta2 * self.v + (1 - o.beta2) * g * g
        m_hat = self.m / (1 - o.beta1 ** self.t)
        v_hat = self.v / (1 - o.beta2 ** self.t)
        return w - o.learning_rate * m_hat / (np.sqrt(v_hat) + o.eps)


def local_training(params: ModelParams, X, y, loss_config: RobustLossConfig,
                   opt: OptimizerConfig, rng, pseudo_labels=None, *,
                   round_index=None, client_id=None, return_history=False):
    """Mini-batch training on the robust loss for ``opt.epochs`` passes.

    Pseudo-labels are taken from ``params`` (the received model) before the
    first step unless given, and stay fixed for all epochs. Returns new
    parameters; the input is not modified. With ``return_history`` also
    returns the full-batch training cross-entropy after each epoch.
    """
    X = _check_inputs(params, X)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("local training needs a nonempty training set")
    rng = as_generator(rng)
    Y = one_hot(y, params.arch.n_classes)
    pseudo = forward(params, X) if pseudo_labels is None else np.asarray(pseudo_labels)

    arch = params.arch
    w = params.weights.copy()
    adam = _Adam(opt, w.size) if opt.method == "adam" else None
    history = []
    for epoch in range(opt.epochs):
        order = rng.permutation(n)
        for start in range(0, n, opt.batch_size):
            idx = order[start:start + opt.batch_size]
            value, g = _loss_and_grad_raw(arch, w, X[idx], Y[idx], pseudo[idx], loss_config)
            if not np.isfinite(value) or not np.all(np.isfinite(g)):
                raise TrainingDivergedError(
                    f"non-finite loss (client={client_id}, round={round_index}, epoch={epoch})",
                    round_index=round_index, epoch=epoch, client_id=client_id,
                )
            w = adam.step(w, g) if adam is not None else w - opt.learning_rate * g
        if return_history:
            history.append(_loss_and_grad_raw(arch, w, X, Y, None, None)[0])
    work = ModelParams(arch, w)
    if return_history:
        return work, history
    return work


def evaluate(params: ModelParams, X, y) -> tuple[float, float]:
    """Mean cross-entropy against the true labels and top-1 accuracy."""
    X = _check_inputs(params, X)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("cannot evaluate on empty data")
    P = forward(params, X)
    ce = float(-np.mean(np.log(np.maximum(P[np.arange(len(y)), y], 1e-12))))
    acc = float(np.mean(np.argmax(P, axis=1) == y))
    return ce, acc


class RobustSoftmaxClassifier(ClassifierMixin, BaseEstimator):
    """Softmax classifier fitted on the noise-robust loss.

    ``fit`` accepts ``initial`` parameters to continue from a given model, which
    is how a federated client trains on top of the broadcast weights.
    """

    def __init__(self, n_classes=None, hidden=0, alpha=0.1, beta=4.0, A=-4.0,
                 learning_rate=0.01, epochs=5, batch_size=32, optimizer="adam",
                 random_state=None):
        self.n_classes = n_classes
        self.hidden = hidden
        self.alpha = alpha
        self.beta = beta
        self.A = A
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.random_state = random_state

    def fit(self, X, y, initial: ModelParams | None = None, pseudo_labels=None):
        X, y = check_X_y(X, y)
        y = np.asarray(y, dtype=np.int64)
        k = self.n_classes or int(y.max()) + 1
        self.classes_ = np.arange(k)
        rng = as_generator(self.random_state)
        arch = Architecture(X.shape[1], k, self.hidden)
        start = initial if initial is not None else init_params(arch, rng)
        self.params_ = local_training(
            start, X, y, RobustLossConfig(self.alpha, self.beta, self.A),
            OptimizerConfig(self.learning_rate, self.epochs, self.batch_size, self.optimizer),
            rng, pseudo_labels,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        return forward(self.params_, check_array(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

