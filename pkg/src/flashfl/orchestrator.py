"""Federated round loop with bandit-driven client selection."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._random import derive_rng
from .exceptions import DegenerateBaselineError
from .hetero import ClientDataset, LabeledData, LatencyModel, round_duration
from .losses import RobustLossConfig, one_hot, robust_loss_value
from .model import (Architecture, ModelParams, OptimizerConfig, evaluate, forward,
                    init_params, local_training)
from .selection import SelectionStrategy

logger = logging.getLogger(__name__)

BASELINE_EPS = 1e-8


@dataclass
class ClientRoundStats:
    robust_loss_now: float
    robust_loss_round1: float
    val_ce_now: float
    val_ce_round1: float
    tau: float
    last_reward: float


@dataclass(frozen=True)
class RoundRecord:
    t: int
    selected: tuple[int, ...]
    reward: float
    tau: float
    cum_time: float
    global_ce: float
    global_acc: float
    val_ce: float
    scores: np.ndarray = field(repr=False, compare=False)


@dataclass
class ExperimentResult:
    records: list[RoundRecord]
    initial_ce: float
    initial_acc: float
    best_acc: float
    best_round: int
    params: ModelParams

    @property
    def total_time(self) -> float:
        return self.records[-1].cum_time if self.records else 0.0


def build_context(stats: ClientRoundStats) -> np.ndarray:
    """``[L_robust / L_robust^1, CE_val / CE_val^1, tau, r_prev]``."""
    if stats.robust_loss_round1 <= 0 or stats.val_ce_round1 <= 0:
        raise DegenerateBaselineError("context ratios need positive round-1 baselines")
    return np.array([
        stats.robust_loss_now / stats.robust_loss_round1,
        stats.val_ce_now / stats.val_ce_round1,
        stats.tau,
        stats.last_reward,
    ])


def compute_reward(robust_prev: float, robust_now: float, tau_prev: float) -> float:
    """Absolute loss change per unit of elapsed round time."""
    if not tau_prev > 0:
        raise ValueError(f"round duration must be > 0, got {tau_prev}")
    return abs(robust_now - robust_prev) / tau_prev


def fedavg(locals_) -> ModelParams:
    """Dataset-size weighted mean of ``(client_id, params, n)`` triples.

    Summation runs in ascending client id so the floating-point result does
    not depend on the order in which local updates arrived.
    """
    locals_ = sorted(locals_, key=lambda item: item[0])
    if not locals_:
        raise ValueError("fedavg needs at least one local model")
    arch = locals_[0][1].arch
    total = float(sum(n for _, _, n in locals_))
    acc = np.zeros(arch.size)
    for _, params, n in locals_:
        if params.arch != arch:
            raise ValueError(f"architecture mismatch: {params.arch} vs {arch}")
        acc += (n / total) * params.weights
    return ModelParams(arch, acc)


def _safe_baseline(value, what, cid):
    if value <= 0:
        logger.warning("client %d: zero %s baseline replaced by %g", cid, what, BASELINE_EPS)
        return BASELINE_EPS
    return value


def robust_loss_of(params: ModelParams, X, y, pseudo, config: RobustLossConfig) -> float:
    P = forward(params, X)
    return robust_loss_value(P, one_hot(y, params.arch.n_classes), pseudo, config)


class FederatedSimulation:
    """Runs the selection / local training / aggregation loop.

    Clients are held in ascending id order; every random stream is keyed
    by ``(seed, purpose, round, client id)``.
    """

    def __init__(self, clients, server_val: LabeledData, test: LabeledData,
                 strategy: SelectionStrategy, n_select: int, *,
                 loss_config=RobustLossConfig(), opt_config=OptimizerConfig(),
                 latency=LatencyModel(), hidden=0, seed=0, workers=1, initial=None):
        self.clients: list[ClientDataset] = sorted(clients, key=lambda c: c.client_id)
        ids = [c.client_id for c in self.clients]
        if ids != list(range(len(ids))):
            raise ValueError("client ids must be exactly 0..m-1")
        self.m = len(self.clients)
        if not 1 <= n_select <= self.m:
            raise ValueError(f"n_select must lie in [1, {self.m}], got {n_select}")
        self.server_val = server_val
        self.test = test
        self.strategy = strategy
        self.n_select = n_select
        self.loss_config = loss_config
        self.opt_config = opt_config
        self.latency = latency
        self.seed = seed
        self.workers = workers
        arch = Architecture(server_val.X.shape[1], server_val.n_classes, hidden)
        self.params = initial.copy() if initial is not None else init_params(
            arch, derive_rng(seed, "init"))
        self.t = 0
        self.selection = tuple(range(self.m))
        self.cum_time = 0.0
        self.last_reward = 0.0
        self.baselines = None
        pseudo = forward(self.params, server_val.X)
        self.global_robust = robust_loss_of(self.params, server_val.X, server_val.y,
                                            pseudo, loss_config)

    def _map(self, fn, items):
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                return list(pool.map(fn, items))
        return [fn(item) for item in items]

    def _train(self, t, cid):
        c = self.clients[cid]
        return local_training(self.params, c.train.X, c.train.y, self.loss_config,
                              self.opt_config, derive_rng(self.seed, "train", t, cid),
                              round_index=t, client_id=cid)

    def _probe(self, t, cid):
        c = self.clients[cid]
        w = self.params
        pseudo = forward(w, c.train.X)
        rob = robust_loss_of(w, c.train.X, c.train.y, pseudo, self.loss_config)
        val_ce = evaluate(w, c.validation.X, c.validation.y)[0]
        tau = float(self.latency.sample(c.n_train, derive_rng(self.seed, "latency", t, cid)))
        return rob, val_ce, tau

    def run_round(self) -> RoundRecord:
        t = self.t
        selected = tuple(sorted(self.selection))
        locals_ = self._map(lambda cid: self._train(t, cid), selected)
        probes = self._map(lambda cid: self._probe(t, cid), range(self.m))
        if self.baselines is None:
            self.baselines = [
                (_safe_baseline(rob, "robust loss", cid), _safe_baseline(v, "validation", cid))
                for cid, (rob, v, _) in enumerate(probes)
            ]
        contexts = np.array([
            build_context(ClientRoundStats(rob, b_rob, v, b_v, tau, self.last_reward))
            for (rob, v, tau), (b_rob, b_v) in zip(probes, self.baselines)
        ])
        taus = np.array([p[2] for p in probes])
        tau = round_duration(taus[list(selected)])
        self.cum_time += tau

        broadcast = self.params
        self.params = fedavg([(cid, w, self.clients[cid].n_train)
                              for cid, w in zip(selected, locals_)])
        sv = self.server_val
        pseudo = forward(broadcast, sv.X)
        robust_now = robust_loss_of(self.params, sv.X, sv.y, pseudo, self.loss_config)
        reward = compute_reward(self.global_robust, robust_now, tau)
        self.global_robust = robust_now
        self.last_reward = reward
        val_ce, _ = evaluate(self.params, sv.X, sv.y)
        test_ce, test_acc = evaluate(self.params, self.test.X, self.test.y)

        idx = list(selected)
        self.strategy.observe(contexts[idx], np.full(len(idx), reward))
        result = self.strategy.choose(t, contexts, self.n_select,
                                      derive_rng(self.seed, "select", t))
        self.selection = result.chosen
        self.t += 1
        return RoundRecord(t, selected, reward, tau, self.cum_time, test_ce, test_acc,
                           val_ce, result.scores)

    def run(self, n_rounds: int, patience: float = math.inf, callback=None) -> ExperimentResult:
        """Run up to ``n_rounds`` rounds, stopping early on stalled validation CE."""
        ce0, acc0 = evaluate(self.params, self.test.X, self.test.y)
        best_acc, best_round = acc0, -1
        best_val, stale = math.inf, 0
        records = []
        for _ in range(n_rounds):
            rec = self.run_round()
            records.append(rec)
            if callback is not None:
                callback(rec)
            if rec.global_acc > best_acc:
                best_acc, best_round = rec.global_acc, rec.t
            if rec.val_ce < best_val:
                best_val, stale = rec.val_ce, 0
            else:
                stale += 1
                if stale >= patience:
                    break
        return ExperimentResult(records, ce0, acc0, best_acc, best_round, self.params)
