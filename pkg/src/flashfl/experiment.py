"""Build and run experiments from an :class:`ExperimentConfig`."""
from __future__ import annotations

import csv

import numpy as np

from ._random import derive_rng
from .config import ExperimentConfig
from .hetero import (holdout_split, inject_label_noise, load_csv, make_blobs_dataset,
                     partition_dirichlet, partition_fraction_skew, LatencyModel)
from .losses import RobustLossConfig
from .model import OptimizerConfig
from .orchestrator import ExperimentResult, FederatedSimulation
from .regret import RegretTrace, SyntheticEnv, run_regret
from .selection import make_strategy

FEDSIM_COLUMNS = ("round", "selected_ids", "reward", "tau", "cum_time", "global_ce", "global_acc")


def build_clients(cfg: ExperimentConfig):
    """Source data, hold-out pools and heterogeneous clients for ``cfg``."""
    d, c, seed = cfg.data, cfg.clients, cfg.experiment.seed
    if d.source == "csv":
        data = load_csv(d.path)
    else:
        data = make_blobs_dataset(d.n_samples, d.n_classes, d.n_features, d.center_box,
                                  derive_rng(seed, "data"))
    server_val, test, rest = holdout_split(data, [d.server_fraction, d.test_fraction],
                                           derive_rng(seed, "holdout"))
    sizes = None
    if c.size_max > 0:
        sizes = derive_rng(seed, "sizes").integers(c.size_min, c.size_max + 1, size=c.m)
    rng = derive_rng(seed, "partition")
    if c.partition == "dirichlet":
        clients = partition_dirichlet(rest, c.m, c.dirichlet_alpha, rng, sizes, d.val_fraction)
    else:
        skew = c.skew_fraction if c.partition == "skew" else 0.0
        clients = partition_fraction_skew(rest, c.m, skew, rng, sizes, val_fraction=d.val_fraction)
    if c.alpha_beta > 0:
        clients = inject_label_noise(clients, c.alpha_beta, derive_rng(seed, "noise"))
    return clients, server_val, test


def build_simulation(cfg: ExperimentConfig) -> FederatedSimulation:
    clients, server_val, test = build_clients(cfg)
    b, o = cfg.bandit, cfg.optimizer
    strategy = make_strategy(cfg.experiment.strategy, lam=b.lam, delta=b.delta,
                             reward_scaling=b.reward_scaling, scaling_decay=b.scaling_decay)
    return FederatedSimulation(
        clients, server_val, test, strategy, cfg.n_select,
        loss_config=RobustLossConfig(cfg.loss.alpha, cfg.loss.beta, cfg.loss.a),
        opt_config=OptimizerConfig(o.learning_rate, o.epochs, o.batch_size, o.method),
        latency=LatencyModel(cfg.latency.alpha_t, cfg.latency.lambda_t),
        hidden=o.hidden, seed=cfg.experiment.seed, workers=cfg.experiment.workers,
    )


def run_fedsim(cfg: ExperimentConfig, callback=None) -> ExperimentResult:
    sim = build_simulation(cfg)
    return sim.run(cfg.experiment.rounds, cfg.experiment.patience, callback)


def run_regret_experiment(cfg: ExperimentConfig) -> RegretTrace:
    r, seed = cfg.regret, cfg.experiment.seed
    env = SyntheticEnv.random(r.d, r.m, r.n_select, r.noise, r.context_bound, r.theta_bound,
                              r.per_client, derive_rng(seed, "env"))
    return run_regret(env, cfg.experiment.strategy, cfg.experiment.rounds, seed,
                      lam=cfg.bandit.lam, delta=cfg.bandit.delta)


def write_fedsim_csv(records, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(FEDSIM_COLUMNS)
    for rec in records:
        writer.writerow([rec.t, ";".join(str(i) for i in rec.selected), repr(rec.reward),
                         repr(rec.tau), repr(rec.cum_time), repr(rec.global_ce), repr(rec.global_acc)])


def time_to_accuracy(records, target: float) -> float:
    """Cumulative simulated time when test accuracy first reaches ``target``."""
    for rec in records:
        if rec.global_acc >= target:
            return rec.cum_time
    return float(np.inf)
