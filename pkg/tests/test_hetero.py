import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from flashfl.exceptions import AllocationError, ConfigError
from flashfl.hetero import (LabeledData, LatencyModel, flip_labels, holdout_split,
                            inject_label_noise, load_csv, make_blobs_dataset, n_skewed_clients,
                            partition_dirichlet, partition_fraction_skew, round_duration,
                            sample_latency, save_csv)


def _balanced(n_per_class=200, K=10, d=2):
    y = np.repeat(np.arange(K), n_per_class)
    X = np.arange(len(y), dtype=np.float64)[:, None] * np.ones((1, d))
    return LabeledData(X, y, K)


def _all_indices(clients):
    rows = []
    for c in clients:
        rows.extend(c.train.X[:, 0].astype(int))
        rows.extend(c.validation.X[:, 0].astype(int))
    return rows


# fraction skew

@pytest.mark.parametrize("m,frac,expected", [(10, 0.3, 3), (50, 0.3, 15), (7, 0.5, 4), (10, 0.0, 0),
                                             (10, 1.0, 10), (3, 0.1, 1)])
def test_skewed_count(m, frac, expected):
    assert n_skewed_clients(m, frac) == expected


def test_skew_profile_counts():
    clients = partition_fraction_skew(_balanced(), 10, 0.3, np.random.default_rng(0),
                                      client_sizes=[100] * 10)
    skewed = [c for c in clients if c.dominant_class is not None]
    assert len(skewed) == 3
    # dominant classes cycle over class ids in ascending client order
    assert [c.dominant_class for c in skewed] == [0, 1, 2]
    for c in skewed:
        counts = c.class_counts()
        assert counts[c.dominant_class] == 80
        others = np.delete(counts, c.dominant_class)
        assert others.sum() == 20 and others.max() - others.min() <= 1
    for c in clients:
        if c.dominant_class is None:
            counts = c.class_counts()
            assert counts.sum() == 100 and counts.max() - counts.min() <= 1


def test_skew_partition_disjoint_and_val_split():
    clients = partition_fraction_skew(_balanced(), 10, 0.3, 1, client_sizes=[100] * 10, val_fraction=0.2)
    rows = _all_indices(clients)
    assert len(rows) == len(set(rows)) == 1000
    for c in clients:
        assert len(c.validation) == 20 and c.n_train == 80


def test_skew_rejects_bad_fraction():
    with pytest.raises(ConfigError):
        partition_fraction_skew(_balanced(), 5, 1.5, 0)


def test_skew_allocation_error_when_pool_exhausted():
    with pytest.raises(AllocationError):
        partition_fraction_skew(_balanced(n_per_class=10), 10, 1.0, 0, client_sizes=[100] * 10)


# Dirichlet

def _dominant_fraction(m, alpha, reps, seed=0):
    data = _balanced(n_per_class=2000, K=10, d=1)
    shares = []
    for r in range(reps):
        clients = partition_dirichlet(data, m, alpha, np.random.default_rng([seed, r]),
                                      client_sizes=[100] * m)
        shares.extend(c.dominant_share() > 0.8 for c in clients)
    return float(np.mean(shares))


def test_dirichlet_extreme_alpha_is_single_class():
    assert _dominant_fraction(50, 1e-3, 2) > 0.97


def test_dirichlet_large_alpha_is_mixed():
    assert _dominant_fraction(50, 100.0, 2) == 0.0


def test_dirichlet_matches_beta_marginal_oracle():
    # max share > 0.8 happens for at most one class, so the probability is
    # K * P(Beta(alpha, (K-1) alpha) > 0.8) up to multinomial rounding
    alpha = 0.3
    oracle = 10 * stats.beta(alpha, 9 * alpha).sf(0.8)
    assert abs(_dominant_fraction(100, alpha, 20) - oracle) < 0.03


def test_dirichlet_disjoint_and_sizes():
    clients = partition_dirichlet(_balanced(n_per_class=1000), 20, 0.5, 3, client_sizes=[50] * 20)
    rows = _all_indices(clients)
    assert len(rows) == len(set(rows)) == 1000
    assert all(c.size == 50 for c in clients)


def test_dirichlet_rejects_bad_alpha():
    with pytest.raises(ConfigError):
        partition_dirichlet(_balanced(), 5, 0.0, 0)


def test_dirichlet_infeasible_raises():
    with pytest.raises(AllocationError):
        partition_dirichlet(_balanced(n_per_class=5, K=2), 2, 0.01, 0, client_sizes=[9, 9], max_retries=3)


# label noise

def test_flip_labels_exact_count_and_always_different():
    labels = np.repeat(np.arange(5), 40)
    noisy, idx = flip_labels(labels, 0.25, 5, np.random.default_rng(0))
    assert len(idx) == 50
    assert np.all(noisy[idx] != labels[idx])
    mask = np.ones(200, bool)
    mask[idx] = False
    np.testing.assert_array_equal(noisy[mask], labels[mask])


def test_flip_labels_uniform_over_other_classes():
    labels = np.zeros(100_000, dtype=np.int64)
    noisy, _ = flip_labels(labels, 1.0, 5, np.random.default_rng(1))
    counts = np.bincount(noisy, minlength=5)
    assert counts[0] == 0
    assert stats.chisquare(counts[1:]).pvalue > 1e-3


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 300), st.floats(0, 1), st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_flip_labels_properties(n, level, K, seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, K, n)
    noisy, idx = flip_labels(labels, level, K, rng)
    assert len(idx) == int(round(level * n))
    assert np.all((noisy >= 0) & (noisy < K))
    assert np.count_nonzero(noisy != labels) == len(idx)


def test_noise_levels_follow_beta_mean():
    data = _balanced(n_per_class=100)
    clients = partition_fraction_skew(data, 100, 0.0, 0, client_sizes=[10] * 100)
    levels = []
    for r in range(40):
        noisy = inject_label_noise(clients, 15.0, np.random.default_rng(r))
        levels.extend(c.noise_level for c in noisy)
    assert np.mean(levels) == pytest.approx(0.15, abs=0.005)
    assert stats.kstest(levels, stats.beta(15, 85).cdf).statistic < 0.03


def test_noise_keeps_clean_copy_and_validation():
    clients = partition_fraction_skew(_balanced(), 10, 0.3, 0, client_sizes=[100] * 10)
    noisy = inject_label_noise(clients, 50.0, 1)
    for before, after in zip(clients, noisy):
        np.testing.assert_array_equal(after.true_train_labels, before.train.y)
        np.testing.assert_array_equal(after.validation.y, before.validation.y)
        changed = np.count_nonzero(after.train.y != before.train.y)
        assert changed == int(round(after.noise_level * before.n_train))


@pytest.mark.parametrize("bad", [0.0, 100.0, -1.0])
def test_noise_rejects_bad_alpha(bad):
    with pytest.raises(ConfigError):
        inject_label_noise([], bad, 0)


# latency

def test_latency_mean_and_ks():
    model = LatencyModel(1.0, 1.0)
    draws = sample_latency(model, 100, np.random.default_rng(0), size=100_000)
    assert abs(draws.mean() - 200) <= 0.02 * 200
    assert stats.kstest(draws, lambda t: model.cdf(t, 100)).statistic < 0.01


def test_latency_lower_bound_and_cdf():
    model = LatencyModel(2.0, 0.5)
    draws = model.sample(40, 0, size=1000)
    assert draws.min() >= 80
    assert model.cdf(80, 40) == 0.0
    assert model.cdf(80 + 20 * np.log(2), 40) == pytest.approx(0.5)
    assert model.mean(40) == 100


def test_latency_validation():
    with pytest.raises(ConfigError):
        LatencyModel(-1.0, 1.0)
    with pytest.raises(ConfigError):
        LatencyModel(1.0, 0.0)
    with pytest.raises(ValueError):
        LatencyModel().sample(0, 0)


def test_round_duration_is_max():
    assert round_duration([3.0, 9.5, 1.0]) == 9.5
    with pytest.raises(ValueError):
        round_duration([])


# data sources

def test_blobs_balanced_and_seeded():
    a = make_blobs_dataset(1003, 10, 4, random_state=5)
    b = make_blobs_dataset(1003, 10, 4, random_state=5)
    np.testing.assert_array_equal(a.X, b.X)
    counts = a.class_counts()
    assert counts.sum() == 1003 and counts.max() - counts.min() <= 1


def test_csv_round_trip(tmp_path):
    data = make_blobs_dataset(50, 3, 4, random_state=0)
    save_csv(data, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.X, data.X)
    np.testing.assert_array_equal(back.y, data.y)
    assert back.n_classes == 3


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("3, 2\n1,2,0\n")
    with pytest.raises(ValueError):
        load_csv(path)


def test_holdout_split_partitions_rows():
    data = _balanced(n_per_class=100)
    a, b, rest = holdout_split(data, [0.1, 0.2], 0)
    assert (len(a), len(b), len(rest)) == (100, 200, 700)
    rows = np.concatenate([a.X[:, 0], b.X[:, 0], rest.X[:, 0]])
    assert len(np.unique(rows)) == 1000


def test_dirichlet_huge_alpha_near_uniform():
    clients = partition_dirichlet(_balanced(n_per_class=5000, d=1), 20, 1e3, 0, client_sizes=[2000] * 20)
    props = np.array([c.class_counts() / c.size for c in clients])
    assert np.abs(props - 0.1).max() < 0.05


def test_latency_lambda_ratio():
    rng = np.random.default_rng(0)
    slow = LatencyModel(1.0, 100.0).sample(50, rng, size=100_000).mean()
    fast = LatencyModel(1.0, 1.0).sample(50, rng, size=100_000).mean()
    assert slow / fast == pytest.approx(101 / 2, rel=0.02)


def test_round_duration_fold_max_oracle():
    draws = LatencyModel().sample(30, np.random.default_rng(1), size=20)
    oracle = draws[0]
    for v in draws[1:]:
        oracle = v if v > oracle else oracle
    assert round_duration(draws) == oracle


def test_zero_noise_level_leaves_labels():
    labels = np.arange(10) % 3
    noisy, idx = flip_labels(labels, 0.0, 3, 0)
    np.testing.assert_array_equal(noisy, labels)
    assert len(idx) == 0


def test_full_skew_cycles_dominant_classes():
    clients = partition_fraction_skew(_balanced(n_per_class=300), 12, 1.0, 0, client_sizes=[50] * 12)
    assert [c.dominant_class for c in clients] == [i % 10 for i in range(12)]
