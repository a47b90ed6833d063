"""Linear contextual combinatorial bandit.

The learner keeps ridge-regression sufficient statistics ``(V, b)`` and
scores every arm either with a posterior draw (Thompson sampling) or with
an optimistic upper confidence bound. A round's super arm is the top-M
arms by score.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._random import as_generator
from ._validation import check_contexts, check_vector
from .exceptions import ConfigError, InvalidStateError, NumericError


@dataclass
class RidgeState:
    """Sufficient statistics of the ridge estimator.

    ``V`` is ``lam * I`` plus the sum of ``x x^T`` over every ingested
    observation and ``b`` the reward-weighted sum of contexts.
    """

    V: np.ndarray
    b: np.ndarray
    lam: float
    observation_count: int = 0

    @classmethod
    def initial(cls, d: int, lam: float = 1.0) -> "RidgeState":
        if d < 1:
            raise ValueError(f"dimension must be positive, got {d}")
        if not lam > 0:
            raise ConfigError(f"lambda must be > 0, got {lam}")
        return cls(V=lam * np.eye(d), b=np.zeros(d), lam=float(lam))

    @property
    def d(self) -> int:
        return self.b.shape[0]

    def copy(self) -> "RidgeState":
        return RidgeState(self.V.copy(), self.b.copy(), self.lam, self.observation_count)


@dataclass(frozen=True)
class SelectionResult:
    chosen: tuple[int, ...]
    scores: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(set(self.chosen)) != len(self.chosen):
            raise ValueError("chosen indices must be distinct")


def _check_state(state: RidgeState) -> None:
    if not (np.all(np.isfinite(state.V)) and np.all(np.isfinite(state.b))):
        raise InvalidStateError("ridge state contains non-finite entries")


def _cholesky(V: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(V)
    except np.linalg.LinAlgError as exc:
        eig = np.linalg.eigvalsh((V + V.T) / 2)
        raise NumericError(
            f"Cholesky factorisation failed; smallest eigenvalue {eig.min():.3e}"
        ) from exc


def ridge_solve(state: RidgeState) -> np.ndarray:
    """Return ``theta_hat`` solving ``V theta = b`` by a Cholesky solve."""
    _check_state(state)
    L = _cholesky(state.V)
    return scipy.linalg.cho_solve((L, True), state.b)


def exploration_width(t: int, m: int, d: int, lam: float, delta: float) -> float:
    """Thompson-sampling scale ``sqrt(lam) + sqrt(d * ln((1 + t*m) / delta))``."""
    if not 0 < delta < 1:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if t < 0 or m < 1:
        raise ConfigError(f"need t >= 0 and m >= 1, got t={t}, m={m}")
    return math.sqrt(lam) + math.sqrt(d * math.log((1.0 + t * m) / delta))


def theory_width(t: int, d: int, lam: float, delta: float, R: float, L: float, S: float) -> float:
    """Confidence width of the LinUCB regret analysis.

    ``R * sqrt(d * log((1 + t L^2 / lam) / delta)) + sqrt(lam) * S``
    """
    if not 0 < delta < 1:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    return R * math.sqrt(d * math.log((1.0 + t * L * L / lam) / delta)) + math.sqrt(lam) * S


def ts_sample(state: RidgeState, gamma: float, rng) -> np.ndarray:
    """Draw ``theta ~ N(theta_hat, gamma^2 V^{-1})``.

    With ``V = L L^T`` the draw is ``theta_hat + gamma * L^{-T} z``.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    rng = as_generator(rng)
    _check_state(state)
    L = _cholesky(state.V)
    theta_hat = scipy.linalg.cho_solve((L, True), state.b)
    z = rng.standard_normal(state.d)
    if gamma == 0:
        return theta_hat
    return theta_hat + gamma * scipy.linalg.solve_triangular(L, z, lower=True, trans="T")


def score_clients(theta, contexts) -> np.ndarray:
    theta = check_vector(theta, "theta")
    X = check_contexts(contexts, theta.shape[0])
    return X @ theta


def ucb_score_clients(state: RidgeState, gamma: float, contexts) -> np.ndarray:
    """Mean estimate plus ``gamma * ||x||_{V^{-1}}`` for every context."""
    _check_state(state)
    X = check_contexts(contexts, state.d)
    L = _cholesky(state.V)
    theta_hat = scipy.linalg.cho_solve((L, True), state.b)
    # ||x||_{V^-1} = ||L^{-1} x||_2
    W = scipy.linalg.solve_triangular(L, X.T, lower=True)
    width = np.sqrt(np.sum(W * W, axis=0))
    return X @ theta_hat + gamma * width


def update_state(state: RidgeState, pairs) -> RidgeState:
    """Return a new state with ``pairs`` of ``(context, reward)`` ingested."""
    new = state.copy()
    for x, r in pairs:
        x = check_vector(x, "context", new.d)
        r = float(r)
        if not math.isfinite(r):
            raise ValueError(f"reward must be finite, got {r}")
        new.V += np.outer(x, x)
        new.b += r * x
        new.observation_count += 1
    return new


def select_top_m(scores, M: int) -> SelectionResult:
    """Indices of the ``M`` largest scores, ties broken by lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    m = scores.shape[0]
    if not 1 <= M <= m:
        raise ValueError(f"need 1 <= M <= m, got M={M}, m={m}")
    # stable sort on -score keeps lower indices first among ties
    order = np.argsort(-scores, kind="stable")
    return SelectionResult(tuple(int(i) for i in order[:M]), scores.copy())


class _RidgeSelector(BaseEstimator):

    def _reset(self, d):
        self.state_ = RidgeState.initial(d, self.lam)
        self.n_features_in_ = d

    def fit(self, X, y):
        """Reset the statistics and ingest ``(X, y)``."""
        X = check_contexts(X)
        self._reset(X.shape[1])
        return self.partial_fit(X, y)

    def partial_fit(self, X, y):
        """Ingest observed rewards ``y`` for contexts ``X``."""
        X = check_contexts(X)
        if not hasattr(self, "state_"):
            self._reset(X.shape[1])
        y = check_vector(y, "rewards", X.shape[0])
        self.state_ = update_state(self.state_, zip(X, y))
        return self

    @property
    def coef_(self):
        check_is_fitted(self, "state_")
        return ridge_solve(self.state_)

    def select(self, X, n_select, round_index=0, random_state=None) -> SelectionResult:
        return select_top_m(self.decision_function(X, round_index, random_state), n_select)


class ThompsonSamplingSelector(_RidgeSelector):
    """Linear Thompson sampling over client contexts.

    Parameters
    ----------
    lam : float
        Ridge regularisation; ``V_0 = lam * I``.
    delta : float
        Confidence parameter in ``(0, 1)`` of the exploration width.
    n_arms : int or None
        Number of arms ``m`` entering the width; defaults to ``len(X)``
        at scoring time.
    random_state : int, Generator or None
        Source of the posterior draws when no generator is passed to
        :meth:`decision_function`.
    """

    def __init__(self, lam=1.0, delta=0.05, n_arms=None, random_state=None):
        self.lam = lam
        self.delta = delta
        self.n_arms = n_arms
        self.random_state = random_state

    def width(self, round_index, m):
        return exploration_width(round_index, m, self.n_features_in_, self.lam, self.delta)

    def decision_function(self, X, round_index=0, random_state=None):
        X = check_contexts(X)
        if not hasattr(self, "state_"):
            self._reset(X.shape[1])
        if random_state is None:
            if not hasattr(self, "_rng"):
                self._rng = as_generator(self.random_state)
            random_state = self._rng
        m = self.n_arms or X.shape[0]
        theta = ts_sample(self.state_, self.width(round_index, m), random_state)
        return score_clients(theta, X)


class LinUCBSelector(_RidgeSelector):
    """Optimistic linear selector.

    ``width="flash"`` uses the same schedule as :class:`ThompsonSamplingSelector`;
    ``width="theory"`` uses the regret-analysis width and needs the noise
    scale ``R`` and the norm bounds ``L`` (contexts) and ``S`` (parameter).
    """

    def __init__(self, lam=1.0, delta=0.05, width="flash", n_arms=None, R=1.0, L=1.0, S=1.0):
        self.lam = lam
        self.delta = delta
        self.width = width
        self.n_arms = n_arms
        self.R = R
        self.L = L
        self.S = S

    def gamma(self, round_index, m):
        if self.width == "flash":
            return exploration_width(round_index, m, self.n_features_in_, self.lam, self.delta)
        if self.width == "theory":
            return theory_width(round_index, self.n_features_in_, self.lam, self.delta,
                                self.R, self.L, self.S)
        raise ConfigError(f"unknown width schedule {self.width!r}")

    def decision_function(self, X, round_index=0, random_state=None):
        X = check_contexts(X)
        if not hasattr(self, "state_"):
            self._reset(X.shape[1])
        m = self.n_arms or X.shape[0]
        return ucb_score_clients(self.state_, self.gamma(round_index, m), X)
