import numpy as np
import pytest
from sklearn.base import clone

from _helpers import central_difference, relative_error
from flashfl.exceptions import ConfigError, TrainingDivergedError
from flashfl.hetero import make_blobs_dataset
from flashfl.losses import RobustLossConfig, one_hot
from flashfl.model import (Architecture, ModelParams, OptimizerConfig, RobustSoftmaxClassifier,
                           evaluate, forward, init_params, local_training, loss_and_grad, softmax)


@pytest.fixture(scope="module")
def blobs():
    return make_blobs_dataset(600, 4, 5, center_box=3.0, random_state=0)


def test_softmax_rows_sum_to_one_and_stable():
    P = softmax(np.array([[1000.0, 1000.0], [-1000.0, 0.0]]))
    np.testing.assert_allclose(P.sum(axis=1), 1.0)
    np.testing.assert_allclose(P[0], [0.5, 0.5])


def test_architecture_sizes():
    assert Architecture(5, 3).size == 5 * 3 + 3
    assert Architecture(5, 3, hidden=4).size == 5 * 4 + 4 + 4 * 3 + 3


def test_zero_init_predicts_uniform():
    p = init_params(Architecture(3, 4))
    np.testing.assert_allclose(forward(p, np.ones((2, 3))), 0.25)


@pytest.mark.parametrize("hidden", [0, 6])
@pytest.mark.parametrize("robust", [False, True])
def test_parameter_gradient_matches_finite_differences(hidden, robust):
    rng = np.random.default_rng(hidden + robust)
    arch = Architecture(4, 3, hidden)
    w = 0.5 * rng.standard_normal(arch.size)
    X = rng.standard_normal((10, 4))
    Y = one_hot(rng.integers(0, 3, 10), 3)
    pseudo = rng.dirichlet(np.ones(3), size=10)
    cfg = RobustLossConfig() if robust else None

    def f(v):
        return loss_and_grad(ModelParams(arch, v), X, Y, pseudo, cfg)[0]

    _, g = loss_and_grad(ModelParams(arch, w), X, Y, pseudo, cfg)
    assert relative_error(g, central_difference(f, w)) <= 1e-4


def test_zero_learning_rate_leaves_weights_unchanged(blobs):
    p = init_params(Architecture(5, 4, hidden=3), np.random.default_rng(0))
    out = local_training(p, blobs.X, blobs.y, RobustLossConfig(),
                         OptimizerConfig(learning_rate=0.0, method="sgd"), np.random.default_rng(0))
    np.testing.assert_array_equal(out.weights, p.weights)


def test_training_does_not_mutate_input(blobs):
    p = init_params(Architecture(5, 4))
    local_training(p, blobs.X, blobs.y, RobustLossConfig(), OptimizerConfig(), 0)
    np.testing.assert_array_equal(p.weights, 0.0)


def test_clean_training_ce_decreases(blobs):
    p = init_params(Architecture(5, 4))
    _, hist = local_training(p, blobs.X, blobs.y, RobustLossConfig(),
                             OptimizerConfig(learning_rate=0.01, epochs=8), np.random.default_rng(1),
                             return_history=True)
    assert len(hist) == 8
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))
    assert hist[-1] < np.log(4)


def test_training_is_deterministic(blobs):
    p = init_params(Architecture(5, 4))
    cfg, opt = RobustLossConfig(), OptimizerConfig(epochs=2)
    a = local_training(p, blobs.X, blobs.y, cfg, opt, np.random.default_rng(7))
    b = local_training(p, blobs.X, blobs.y, cfg, opt, np.random.default_rng(7))
    np.testing.assert_array_equal(a.weights, b.weights)


def test_pseudo_labels_fixed_from_received_model(blobs):
    p = init_params(Architecture(5, 4))
    cfg, opt = RobustLossConfig(), OptimizerConfig(epochs=2)
    a = local_training(p, blobs.X, blobs.y, cfg, opt, 3)
    b = local_training(p, blobs.X, blobs.y, cfg, opt, 3, pseudo_labels=forward(p, blobs.X))
    np.testing.assert_array_equal(a.weights, b.weights)


def test_divergence_raises_with_context(blobs):
    arch = Architecture(5, 4)
    p = ModelParams(arch, np.full(arch.size, np.nan))
    with pytest.raises(TrainingDivergedError) as err:
        local_training(p, blobs.X, blobs.y, RobustLossConfig(), OptimizerConfig(), 0,
                       round_index=4, client_id=9)
    assert (err.value.round_index, err.value.client_id, err.value.epoch) == (4, 9, 0)


@pytest.mark.parametrize("bad", [dict(learning_rate=-1), dict(epochs=0), dict(batch_size=0),
                                 dict(method="rmsprop")])
def test_optimizer_config_validation(bad):
    with pytest.raises(ConfigError):
        OptimizerConfig(**bad)


def test_evaluate_uniform_model():
    ce, acc = evaluate(init_params(Architecture(2, 4)), np.zeros((4, 2)), [0, 1, 2, 3])
    assert ce == pytest.approx(np.log(4))
    assert acc == 0.25  # argmax ties resolve to class 0


def test_classifier_estimator(blobs):
    clf = RobustSoftmaxClassifier(epochs=10, random_state=0)
    assert clone(clf).get_params() == clf.get_params()
    clf.fit(blobs.X, blobs.y)
    assert clf.score(blobs.X, blobs.y) > 0.8
    assert clf.predict_proba(blobs.X[:3]).shape == (3, 4)
    again = RobustSoftmaxClassifier(epochs=10, random_state=0).fit(blobs.X, blobs.y)
    np.testing.assert_array_equal(clf.params_.weights, again.params_.weights)


def test_robust_loss_resists_label_noise():
    data = make_blobs_dataset(2000, 4, 5, center_box=3.0, random_state=1)
    rng = np.random.default_rng(2)
    y = data.y.copy()
    flip = rng.random(len(y)) < 0.4
    y[flip] = (y[flip] + rng.integers(1, 4, flip.sum())) % 4
    robust = RobustSoftmaxClassifier(epochs=10, random_state=0).fit(data.X, y)
    assert robust.score(data.X, data.y) > 0.85
