"""Synthetic linear-bandit environment and cumulative-regret measurement."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._random import derive_rng
from .bandit import (RidgeState, exploration_width, select_top_m, theory_width,
                     ts_sample, ucb_score_clients, update_state)
from .exceptions import ConfigError
from .selection import FlashTS, PlainLinUCB, RandomSelection

CSV_COLUMNS = ("round", "instantaneous_regret", "cumulative_regret", "bound_value")


def sample_ball(rng, n, d, radius):
    """``n`` points uniform in the ``d``-ball of the given radius."""
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (radius * rng.random(n) ** (1.0 / d))[:, None]


@dataclass
class SyntheticEnv:
    """Linear rewards ``theta*^T x + N(0, R^2)`` over ``m`` arms.

    With ``per_client`` each arm has its own parameter row in ``theta_star``.
    """

    theta_star: np.ndarray
    m: int
    M: int
    R: float = 0.1
    L: float = 1.0
    S: float = 1.0

    def __post_init__(self):
        norms = np.linalg.norm(np.atleast_2d(self.theta_star), axis=1)
        if np.any(norms > self.S + 1e-12):
            raise ConfigError(f"||theta*|| = {norms.max():.4f} exceeds S = {self.S}")
        if not 1 <= self.M <= self.m:
            raise ConfigError(f"need 1 <= M <= m, got M={self.M}, m={self.m}")

    @classmethod
    def random(cls, d=4, m=20, M=4, R=0.1, L=1.0, S=1.0, per_client=False, rng=None):
        rng = np.random.default_rng(rng)
        rows = m if per_client else 1
        theta = rng.standard_normal((rows, d))
        theta *= S / np.linalg.norm(theta, axis=1, keepdims=True)
        return cls(theta if per_client else theta[0], m, M, R, L, S)

    @property
    def per_client(self) -> bool:
        return self.theta_star.ndim == 2

    @property
    def d(self) -> int:
        return self.theta_star.shape[-1]

    def sample_contexts(self, rng) -> np.ndarray:
        return sample_ball(rng, self.m, self.d, self.L)

    def expected_rewards(self, contexts) -> np.ndarray:
        if self.per_client:
            return np.einsum("ij,ij->i", contexts, self.theta_star)
        return contexts @ self.theta_star

    def observe(self, contexts, chosen, rng) -> np.ndarray:
        mean = self.expected_rewards(contexts)[list(chosen)]
        return mean + self.R * rng.standard_normal(len(chosen))


def oracle_select(env: SyntheticEnv, contexts) -> tuple[int, ...]:
    """Top-M arms by true expected reward."""
    return select_top_m(env.expected_rewards(contexts), env.M).chosen


def regret_bound(n, M, d, lam, delta, R, L, S) -> float:
    """``M log(1 + n L^2 / (5 lam)) * (R sqrt(d log((1 + n L^2/lam)/delta)) + sqrt(lam) S)``."""
    width = R * math.sqrt(d * math.log((1 + n * L * L / lam) / delta)) + math.sqrt(lam) * S
    return M * math.log(1 + n * L * L / (5 * lam)) * width


@dataclass
class RegretTrace:
    instantaneous: np.ndarray
    cumulative: np.ndarray
    bound: np.ndarray
    params: dict

    def average(self, n: int) -> float:
        """Per-round regret averaged over the first ``n`` rounds."""
        return float(self.cumulative[n - 1] / n)

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for t, (inst, cum, bound) in enumerate(zip(self.instantaneous, self.cumulative, self.bound)):
            writer.writerow([t, repr(float(inst)), repr(float(cum)), repr(float(bound))])


class _PerClientLearner:
    """One ridge state per arm; each arm scored with its own estimate."""

    def __init__(self, kind, env, lam, delta):
        self.kind = kind
        self.env = env
        self.lam = lam
        self.delta = delta
        self.states = [RidgeState.initial(env.d, lam) for _ in range(env.m)]

    def choose(self, t, contexts, M, rng):
        env = self.env
        scores = np.empty(env.m)
        for i, (state, x) in enumerate(zip(self.states, contexts)):
            if self.kind == "flash":
                gamma = exploration_width(t, env.m, env.d, self.lam, self.delta)
                scores[i] = ts_sample(state, gamma, rng) @ x
            else:
                gamma = theory_width(t, env.d, self.lam, self.delta, env.R, env.L, env.S)
                scores[i] = ucb_score_clients(state, gamma, x[None, :])[0]
        return select_top_m(scores, M)

    def observe(self, chosen, contexts, rewards):
        for i, r in zip(chosen, rewards):
            self.states[i] = update_state(self.states[i], [(contexts[i], r)])


def _make_learner(strategy, env, lam, delta):
    if strategy == "random":
        return RandomSelection()
    if env.per_client:
        if strategy not in ("flash", "linucb"):
            raise ConfigError(f"unknown strategy {strategy!r}")
        return _PerClientLearner(strategy, env, lam, delta)
    if strategy == "flash":
        return FlashTS(lam=lam, delta=delta)
    if strategy == "linucb":
        return PlainLinUCB(lam=lam, delta=delta, width="theory", R=env.R, L=env.L, S=env.S)
    raise ConfigError(f"unknown strategy {strategy!r}")


def run_regret(env: SyntheticEnv, strategy: str, n: int, seed: int = 0, *,
               lam: float = 1.0, delta: float = 0.05, fixed_contexts=False) -> RegretTrace:
    """Play ``n`` rounds and record regret against :func:`oracle_select`.

    ``flash`` explores with the Thompson-sampling width schedule and
    ``linucb`` with the regret-analysis confidence width.
    """
    learner = _make_learner(strategy, env, lam, delta)
    ctx_rng = derive_rng(seed, "contexts")
    noise_rng = derive_rng(seed, "reward-noise")
    select_rng = derive_rng(seed, "select")
    fixed = env.sample_contexts(ctx_rng) if fixed_contexts else None
    inst = np.empty(n)
    for t in range(n):
        X = fixed if fixed is not None else env.sample_contexts(ctx_rng)
        chosen = learner.choose(t, X, env.M, select_rng).chosen
        mu = env.expected_rewards(X)
        inst[t] = max(mu[list(oracle_select(env, X))].sum() - mu[list(chosen)].sum(), 0.0)
        rewards = env.observe(X, chosen, noise_rng)
        if isinstance(learner, _PerClientLearner):
            learner.observe(chosen, X, rewards)
        else:
            learner.observe(X[list(chosen)], rewards)
    bound = np.array([regret_bound(t + 1, env.M, env.d, lam, delta, env.R, env.L, env.S)
                      for t in range(n)])
    params = dict(strategy=strategy, d=env.d, m=env.m, M=env.M, R=env.R, L=env.L, S=env.S,
                  lam=lam, delta=delta, seed=seed, per_client=env.per_client)
    return RegretTrace(inst, np.cumsum(inst), bound, params)
