"""Client selection strategies pluggable into the federated round loop."""
from __future__ import annotations

import numpy as np

from .bandit import LinUCBSelector, SelectionResult, ThompsonSamplingSelector, select_top_m
from .exceptions import ConfigError


class SelectionStrategy:
    """Chooses the next super arm from the contexts of all clients."""

    name = "base"

    def choose(self, t, contexts, n_select, rng) -> SelectionResult:
        raise NotImplementedError

    def observe(self, contexts, rewards) -> None:
        """Feed back the rewards observed for the selected clients."""


class _RewardScaler:
    """Divides rewards by an exponential moving average of their magnitude.

    Keeps the regression target near unit scale, which the exploration
    width assumes, whatever the time unit of the raw rewards.
    """

    def __init__(self, decay):
        self.decay = decay
        self.level = None

    def __call__(self, rewards):
        rewards = np.asarray(rewards, dtype=np.float64)
        mag = float(np.mean(np.abs(rewards)))
        if self.level is None:
            self.level = mag
        else:
            self.level = self.decay * self.level + (1 - self.decay) * mag
        if self.level <= 0:
            return rewards
        return rewards / self.level


class _BanditStrategy(SelectionStrategy):

    def __init__(self, selector, reward_scaling="none", scaling_decay=0.9):
        if reward_scaling not in ("none", "ema"):
            raise ConfigError(f"unknown reward_scaling {reward_scaling!r}")
        self.selector = selector
        self.reward_scaling = reward_scaling
        self._scaler = _RewardScaler(scaling_decay) if reward_scaling == "ema" else None

    def observe(self, contexts, rewards):
        if self._scaler is not None:
            rewards = self._scaler(rewards)
        self.selector.partial_fit(contexts, rewards)

    def choose(self, t, contexts, n_select, rng):
        return self.selector.select(contexts, n_select, round_index=t, random_state=rng)


class FlashTS(_BanditStrategy):
    name = "flash"

    def __init__(self, lam=1.0, delta=0.05, reward_scaling="none", scaling_decay=0.9):
        super().__init__(ThompsonSamplingSelector(lam=lam, delta=delta),
                         reward_scaling, scaling_decay)


class PlainLinUCB(_BanditStrategy):
    name = "linucb"

    def __init__(self, lam=1.0, delta=0.05, width="flash", R=1.0, L=1.0, S=1.0,
                 reward_scaling="none", scaling_decay=0.9):
        super().__init__(LinUCBSelector(lam=lam, delta=delta, width=width, R=R, L=L, S=S),
                         reward_scaling, scaling_decay)


class RandomSelection(SelectionStrategy):
    name = "random"

    def choose(self, t, contexts, n_select, rng):
        m = len(contexts)
        chosen = rng.choice(m, size=n_select, replace=False)
        return SelectionResult(tuple(int(i) for i in chosen), np.zeros(m))


class FullParticipation(SelectionStrategy):
    name = "full"

    def choose(self, t, contexts, n_select, rng):
        m = len(contexts)
        return select_top_m(np.zeros(m), m)


STRATEGIES = {
    "flash": FlashTS,
    "linucb": PlainLinUCB,
    "random": RandomSelection,
    "full": FullParticipation,
}


def make_strategy(name: str, **kwargs) -> SelectionStrategy:
    try:
        cls = STRATEGIES[name]
    except KeyError:
        raise ConfigError(f"unknown strategy {name!r}; choose from {sorted(STRATEGIES)}") from None
    if cls in (RandomSelection, FullParticipation):
        return cls()
    return cls(**kwargs)
