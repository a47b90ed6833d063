"""Heterogeneity generators: non-IID partitions, label noise and latency."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from sklearn.datasets import make_blobs

from ._random import as_generator
from .exceptions import AllocationError, ConfigError


@dataclass(frozen=True)
class LabeledData:
    X: np.ndarray
    y: np.ndarray
    n_classes: int

    def __post_init__(self):
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y have different numbers of rows")

    def __len__(self):
        return self.y.shape[0]

    def subset(self, idx) -> "LabeledData":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledData(self.X[idx], self.y[idx], self.n_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)


@dataclass(frozen=True)
class ClientDataset:
    """One client's local data.

    ``true_train_labels`` keeps the labels from before noise injection and
    is only used for diagnostics; training code never reads it.
    """

    client_id: int
    train: LabeledData
    validation: LabeledData
    true_train_labels: np.ndarray
    noise_level: float = 0.0
    dominant_class: int | None = None

    @property
    def n_train(self) -> int:
        return len(self.train)

    @property
    def size(self) -> int:
        return len(self.train) + len(self.validation)

    def class_counts(self) -> np.ndarray:
        """Class histogram of the client's clean data (train and validation)."""
        k = self.train.n_classes
        return (np.bincount(self.true_train_labels, minlength=k)
                + np.bincount(self.validation.y, minlength=k))

    def dominant_share(self) -> float:
        counts = self.class_counts()
        return float(counts.max() / counts.sum())


def make_blobs_dataset(n_samples=10000, n_classes=10, n_features=10, center_box=4.0,
                       random_state=None) -> LabeledData:
    """Balanced Gaussian blobs with unit covariance around random centers."""
    rng = as_generator(random_state)
    per_class = [n_samples // n_classes + (1 if k < n_samples % n_classes else 0)
                 for k in range(n_classes)]
    centers = rng.uniform(-center_box, center_box, size=(n_classes, n_features))
    X, y = make_blobs(n_samples=per_class, centers=centers, cluster_std=1.0,
                      random_state=int(rng.integers(2**31 - 1)))
    return LabeledData(X, y.astype(np.int64), n_classes)


def load_csv(path) -> LabeledData:
    """Read ``n, in_dim, K`` on the first line, then ``n`` rows of features and label."""
    with open(path) as fh:
        header = [int(v) for v in fh.readline().replace(",", " ").split()]
        if len(header) != 3:
            raise ValueError(f"{path}: header must hold n, in_dim, K")
        n, in_dim, k = header
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    if rows.shape != (n, in_dim + 1):
        raise ValueError(f"{path}: expected {n} rows of {in_dim + 1} columns, got {rows.shape}")
    y = rows[:, -1].astype(np.int64)
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"{path}: labels outside [0, {k})")
    return LabeledData(rows[:, :-1], y, k)


def save_csv(data: LabeledData, path) -> None:
    rows = np.column_stack([data.X, data.y])
    fmt = ["%.17g"] * data.X.shape[1] + ["%d"]
    with open(Path(path), "w") as fh:
        fh.write(f"{len(data)}, {data.X.shape[1]}, {data.n_classes}\n")
        np.savetxt(fh, rows, delimiter=",", fmt=fmt)


def holdout_split(data: LabeledData, fractions, rng):
    """Carve IID hold-out pools off ``data``; returns ``(pools..., rest)``."""
    rng = as_generator(rng)
    order = rng.permutation(len(data))
    out, start = [], 0
    for frac in fractions:
        n = int(round(frac * len(data)))
        out.append(data.subset(np.sort(order[start:start + n])))
        start += n
    out.append(data.subset(np.sort(order[start:])))
    return tuple(out)


def _client_sizes(data, m, client_sizes):
    if client_sizes is None:
        return [len(data) // m] * m
    if len(client_sizes) != m:
        raise ValueError(f"client_sizes has {len(client_sizes)} entries, expected {m}")
    return [int(s) for s in client_sizes]


def _spread(total, bins, rng):
    """Split ``total`` over ``bins`` as evenly as possible, remainder at random."""
    counts = np.full(bins, total // bins, dtype=np.int64)
    counts[rng.choice(bins, size=total % bins, replace=False)] += 1
    return counts


def _make_client(cid, data, idx, val_fraction, rng, dominant=None):
    idx = rng.permutation(np.asarray(idx, dtype=np.int64))
    n_val = int(round(val_fraction * len(idx)))
    if len(idx) - n_val < 1:
        n_val = len(idx) - 1
    train = data.subset(idx[n_val:])
    return ClientDataset(cid, train, data.subset(idx[:n_val]), train.y.copy(),
                         dominant_class=dominant)


def _class_pools(data, rng):
    return [list(rng.permutation(np.flatnonzero(data.y == k))) for k in range(data.n_classes)]


def _draw(pools, counts, client_id):
    taken = []
    for k, c in enumerate(counts):
        if c > len(pools[k]):
            raise AllocationError(
                f"class {k} has {len(pools[k])} samples left, client {client_id} needs {c}"
            )
        taken.extend(pools[k][:c])
        del pools[k][:c]
    return taken


def n_skewed_clients(m: int, skew_fraction: float) -> int:
    # round first so that e.g. 0.3 * 10 does not ceil to 4
    return math.ceil(round(skew_fraction * m, 9))


def partition_fraction_skew(data: LabeledData, m: int, skew_fraction: float, rng,
                            client_sizes=None, dominant_fraction=0.8,
                            val_fraction=0.2) -> list[ClientDataset]:
    """Give ``ceil(skew_fraction * m)`` clients an 80/20 single-class profile.

    Skewed clients are a random subset; their dominant classes cycle over
    the class ids in ascending client order. The remaining share of a
    skewed client and all of an unskewed client are spread uniformly.
    """
    if not 0 <= skew_fraction <= 1:
        raise ConfigError(f"skew_fraction must lie in [0, 1], got {skew_fraction}")
    rng = as_generator(rng)
    K = data.n_classes
    sizes = _client_sizes(data, m, client_sizes)
    skewed = np.sort(rng.permutation(m)[:n_skewed_clients(m, skew_fraction)])
    dominant = {int(c): j % K for j, c in enumerate(skewed)}
    pools = _class_pools(data, rng)
    clients = []
    for cid in range(m):
        B = sizes[cid]
        if cid in dominant:
            k = dominant[cid]
            n_dom = int(round(dominant_fraction * B))
            others = [c for c in range(K) if c != k]
            counts = np.zeros(K, dtype=np.int64)
            counts[k] = n_dom
            counts[others] = _spread(B - n_dom, K - 1, rng)
        else:
            counts = _spread(B, K, rng)
        idx = _draw(pools, counts, cid)
        clients.append(_make_client(cid, data, idx, val_fraction, rng, dominant.get(cid)))
    return clients


def partition_dirichlet(data: LabeledData, m: int, alpha: float, rng, client_sizes=None,
                        val_fraction=0.2, max_retries=100) -> list[ClientDataset]:
    """Per-client class proportions from ``Dirichlet(alpha, ..., alpha)``.

    Each client's counts are a multinomial draw from its proportions; a
    draw the remaining pools cannot serve is redrawn up to ``max_retries``
    times.
    """
    if not alpha > 0:
        raise ConfigError(f"dirichlet alpha must be > 0, got {alpha}")
    rng = as_generator(rng)
    K = data.n_classes
    sizes = _client_sizes(data, m, client_sizes)
    pools = _class_pools(data, rng)
    clients = []
    for cid in range(m):
        for _ in range(max_retries):
            counts = rng.multinomial(sizes[cid], rng.dirichlet(np.full(K, alpha)))
            if counts.sum() > 0 and all(c <= len(p) for c, p in zip(counts, pools)):
                break
        else:
            raise AllocationError(
                f"client {cid}: no feasible Dirichlet allocation after {max_retries} draws"
            )
        idx = _draw(pools, counts, cid)
        clients.append(_make_client(cid, data, idx, val_fraction, rng, int(np.argmax(counts))))
    return clients


def flip_labels(labels, noise_level: float, n_classes: int, rng):
    """Replace ``round(noise_level * n)`` labels by a uniformly drawn other class."""
    rng = as_generator(rng)
    labels = np.asarray(labels, dtype=np.int64).copy()
    n_flip = int(round(noise_level * labels.shape[0]))
    idx = rng.choice(labels.shape[0], size=n_flip, replace=False)
    # shift by 1..K-1 so the new label always differs
    labels[idx] = (labels[idx] + rng.integers(1, n_classes, size=n_flip)) % n_classes
    return labels, idx


def inject_label_noise(clients, alpha_beta: float, rng) -> list[ClientDataset]:
    """Per-client noise level ``~ Beta(alpha_beta, 100 - alpha_beta)`` on train labels."""
    if not 0 < alpha_beta < 100:
        raise ConfigError(f"alpha_beta must lie in (0, 100), got {alpha_beta}")
    rng = as_generator(rng)
    out = []
    for c in clients:
        level = float(rng.beta(alpha_beta, 100.0 - alpha_beta))
        noisy, _ = flip_labels(c.train.y, level, c.train.n_classes, rng)
        out.append(replace(c, train=replace(c.train, y=noisy), noise_level=level))
    return out


@dataclass(frozen=True)
class LatencyModel:
    """Shifted exponential ``T = alpha_T * N + E`` with ``E ~ Exp(mean lambda_T * N)``."""

    alpha_T: float = 1.0
    lambda_T: float = 1.0

    def __post_init__(self):
        if self.alpha_T < 0:
            raise ConfigError(f"alpha_T must be >= 0, got {self.alpha_T}")
        if not self.lambda_T > 0:
            raise ConfigError(f"lambda_T must be > 0, got {self.lambda_T}")

    def mean(self, n: int) -> float:
        return (self.alpha_T + self.lambda_T) * n

    def cdf(self, t, n: int):
        z = (np.asarray(t, dtype=np.float64) - self.alpha_T * n) / (self.lambda_T * n)
        return np.where(z > 0, -np.expm1(-np.maximum(z, 0.0)), 0.0)

    def sample(self, n: int, rng, size=None):
        if n < 1:
            raise ValueError(f"dataset size must be >= 1, got {n}")
        rng = as_generator(rng)
        return self.alpha_T * n + rng.exponential(self.lambda_T * n, size=size)


def sample_latency(model: LatencyModel, n: int, rng, size=None):
    return model.sample(n, rng, size)


def round_duration(latencies) -> float:
    """A round lasts as long as its slowest selected client."""
    latencies = np.asarray(latencies, dtype=np.float64)
    if latencies.size == 0:
        raise ValueError("round duration of an empty selection is undefined")
    return float(latencies.max())
