"""Experiment configuration: INI files, flag overrides, validation.

Every key lives in a section. ``[experiment] seed`` is ``seed`` in the file
and ``--seed`` on the command line; keys of other sections map to
``--<section>-<key>`` flags (underscores become dashes).
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import math
import os
from dataclasses import dataclass, field, fields

from .exceptions import ConfigError

OUTPUT_ENV = "FLASHFL_OUTPUT_DIR"


@dataclass
class ExperimentSection:
    mode: str = ""
    seed: int = 0
    rounds: int = 300
    patience: float = math.inf
    strategy: str = "flash"
    output: str = ""
    workers: int = 1


@dataclass
class DataSection:
    source: str = "blobs"
    path: str = ""
    n_samples: int = 20000
    n_classes: int = 10
    n_features: int = 10
    center_box: float = 3.0
    server_fraction: float = 0.1
    test_fraction: float = 0.1
    val_fraction: float = 0.2


@dataclass
class ClientsSection:
    m: int = 50
    select_fraction: float = 0.2
    n_select: int = 0
    size_min: int = 20
    size_max: int = 200
    partition: str = "skew"
    skew_fraction: float = 0.3
    dirichlet_alpha: float = 0.1
    alpha_beta: float = 0.0


@dataclass
class LatencySection:
    alpha_t: float = 1.0
    lambda_t: float = 1.0


@dataclass
class LossSection:
    alpha: float = 0.1
    beta: float = 4.0
    a: float = -4.0


@dataclass
class BanditSection:
    lam: float = 1.0
    delta: float = 0.05
    reward_scaling: str = "ema"
    scaling_decay: float = 0.9


@dataclass
class OptimizerSection:
    method: str = "adam"
    learning_rate: float = 0.01
    epochs: int = 5
    batch_size: int = 32
    hidden: int = 0


@dataclass
class RegretSection:
    d: int = 4
    m: int = 20
    n_select: int = 4
    noise: float = 0.1
    context_bound: float = 1.0
    theta_bound: float = 1.0
    per_client: bool = False


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    data: DataSection = field(default_factory=DataSection)
    clients: ClientsSection = field(default_factory=ClientsSection)
    latency: LatencySection = field(default_factory=LatencySection)
    loss: LossSection = field(default_factory=LossSection)
    bandit: BanditSection = field(default_factory=BanditSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    regret: RegretSection = field(default_factory=RegretSection)

    @property
    def n_select(self) -> int:
        c = self.clients
        return c.n_select or max(1, int(round(c.select_fraction * c.m)))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict, validate_config=True) -> "ExperimentConfig":
        cfg = cls()
        for section, values in raw.items():
            for key, value in values.items():
                _set(cfg, section, key, value)
        if validate_config:
            validate(cfg)
        return cfg


SECTIONS = {f.name: f for f in fields(ExperimentConfig)}


def flag_name(section: str, key: str) -> str:
    if section == "experiment":
        return "--out" if key == "output" else f"--{key.replace('_', '-')}"
    return f"--{section}-{key.replace('_', '-')}"


def iter_keys():
    cfg = ExperimentConfig()
    for section in SECTIONS:
        for f in fields(getattr(cfg, section)):
            yield section, f.name, f.type


def _coerce(value, typ: str, name: str):
    try:
        if typ == "bool":
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if typ == "float":
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot read {value!r} as {typ}") from None


def _set(cfg: ExperimentConfig, section: str, key: str, value):
    if section not in SECTIONS:
        raise ConfigError(f"unknown section [{section}]")
    sec = getattr(cfg, section)
    types = {f.name: f.type for f in fields(sec)}
    if key not in types:
        raise ConfigError(f"unknown key {section}.{key}")
    setattr(sec, key, _coerce(value, types[key], f"{section}.{key}"))


def _check(cond, key, message):
    if not cond:
        raise ConfigError(f"{key}: {message}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    e, d, c, lat, loss, b, o, r = (cfg.experiment, cfg.data, cfg.clients, cfg.latency,
                                   cfg.loss, cfg.bandit, cfg.optimizer, cfg.regret)
    _check(e.mode != "", "experiment.mode", "missing required field")
    _check(e.mode in ("fedsim", "regret"), "experiment.mode", f"must be fedsim or regret, got {e.mode!r}")
    _check(e.seed >= 0, "experiment.seed", "must be >= 0")
    _check(e.rounds >= 0, "experiment.rounds", "must be >= 0")
    _check(e.patience >= 1, "experiment.patience", "must be >= 1")
    _check(e.workers >= 1, "experiment.workers", "must be >= 1")
    strategies = ("flash", "linucb", "random", "full") if e.mode == "fedsim" else ("flash", "linucb", "random")
    _check(e.strategy in strategies, "experiment.strategy", f"must be one of {strategies}")
    _check(d.source in ("blobs", "csv"), "data.source", "must be blobs or csv")
    _check(d.source != "csv" or d.path, "data.path", "required when data.source = csv")
    _check(d.n_samples >= 1, "data.n_samples", "must be >= 1")
    _check(d.n_classes >= 2, "data.n_classes", "must be >= 2")
    _check(d.n_features >= 1, "data.n_features", "must be >= 1")
    _check(d.center_box > 0, "data.center_box", "must be > 0")
    for key in ("server_fraction", "test_fraction"):
        _check(0 < getattr(d, key) < 1, f"data.{key}", "must lie in (0, 1)")
    _check(d.server_fraction + d.test_fraction < 1, "data.test_fraction",
           "hold-out fractions must leave data for clients")
    _check(0 <= d.val_fraction < 1, "data.val_fraction", "must lie in [0, 1)")
    _check(c.m >= 1, "clients.m", "must be >= 1")
    _check(0 < c.select_fraction <= 1, "clients.select_fraction", "must lie in (0, 1]")
    _check(0 <= c.n_select <= c.m, "clients.n_select", "must lie in [0, m]")
    # size_max = 0 splits the client pool evenly instead of drawing sizes
    _check(c.size_max == 0 or 2 <= c.size_min <= c.size_max, "clients.size_max",
           "need 2 <= size_min <= size_max, or size_max = 0")
    _check(c.partition in ("skew", "dirichlet", "iid"), "clients.partition", "must be skew, dirichlet or iid")
    _check(0 <= c.skew_fraction <= 1, "clients.skew_fraction", "must lie in [0, 1]")
    _check(c.dirichlet_alpha > 0, "clients.dirichlet_alpha", "must be > 0")
    _check(0 <= c.alpha_beta < 100, "clients.alpha_beta", "must lie in [0, 100); 0 disables noise")
    _check(lat.alpha_t >= 0, "latency.alpha_t", "must be >= 0")
    _check(lat.lambda_t > 0, "latency.lambda_t", "must be > 0")
    _check(loss.alpha >= 0, "loss.alpha", "must be >= 0")
    _check(loss.beta >= 0, "loss.beta", "must be >= 0")
    _check(loss.a < 0, "loss.a", "must be < 0")
    _check(b.lam > 0, "bandit.lam", "must be > 0")
    _check(0 < b.delta < 1, "bandit.delta", "must lie in (0, 1)")
    _check(b.reward_scaling in ("none", "ema"), "bandit.reward_scaling", "must be none or ema")
    _check(0 <= b.scaling_decay < 1, "bandit.scaling_decay", "must lie in [0, 1)")
    _check(o.method in ("adam", "sgd"), "optimizer.method", "must be adam or sgd")
    _check(o.learning_rate >= 0, "optimizer.learning_rate", "must be >= 0")
    _check(o.epochs >= 1, "optimizer.epochs", "must be >= 1")
    _check(o.batch_size >= 1, "optimizer.batch_size", "must be >= 1")
    _check(o.hidden >= 0, "optimizer.hidden", "must be >= 0")
    _check(r.d >= 1, "regret.d", "must be >= 1")
    _check(r.m >= 1, "regret.m", "must be >= 1")
    _check(1 <= r.n_select <= r.m, "regret.n_select", "must lie in [1, regret.m]")
    _check(r.noise >= 0, "regret.noise", "must be >= 0")
    _check(r.context_bound > 0, "regret.context_bound", "must be > 0")
    _check(r.theta_bound > 0, "regret.theta_bound", "must be > 0")
    return cfg


def read_ini(text: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return {s: dict(parser.items(s)) for s in parser.sections()}


def parse_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Load ``path`` (if any), apply ``{(section, key): value}`` overrides, validate."""
    raw = {}
    if path is not None:
        with open(path) as fh:
            raw = read_ini(fh.read())
    cfg = ExperimentConfig.from_dict(raw, validate_config=False)
    for (section, key), value in (overrides or {}).items():
        _set(cfg, section, key, value)
    if not cfg.experiment.output:
        cfg.experiment.output = os.environ.get(OUTPUT_ENV, "runs")
    return validate(cfg)


def write_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, values in cfg.to_dict().items():
        parser[section] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in values.items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
