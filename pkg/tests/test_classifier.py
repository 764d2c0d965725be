import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from hybridchain.classifier import (
    LogisticScorer,
    ThresholdParams,
    WeightVector,
    loss_and_gradient,
    retrain_epoch_hook,
    score,
    sigmoid,
    thresholds,
    train,
    train_batch,
)
from hybridchain.workload import sample_training_set

ZERO = WeightVector((0.0,) * 5)


def hp_sigmoid(a, w, b):
    mpmath.mp.dps = 50
    z = mpmath.fsum(mpmath.mpf(float(x)) * mpmath.mpf(float(y)) for x, y in zip(a, w)) + mpmath.mpf(b)
    return float(1 / (1 + mpmath.exp(-z)))


def test_score_matches_high_precision(rng):
    for _ in range(500):
        a = rng.uniform(-3, 3, 5)
        w = rng.normal(0, 2, 5)
        b = float(rng.normal())
        assert abs(score(a, WeightVector(tuple(w), b)) - hp_sigmoid(a, w, b)) < 1e-12


def test_sigmoid_tails_are_finite():
    z = np.array([-700.0, -50.0, 0.0, 50.0, 700.0])
    s = sigmoid(z)
    assert np.all(np.isfinite(s))
    assert s[2] == 0.5
    assert np.all(np.diff(s) >= 0)
    assert s[0] > 0 and s[-1] == 1.0


def test_thresholds_at_half_score():
    assert thresholds(np.zeros(5), ZERO) == (0.75, 0.25)


def test_thresholds_limit_for_confident_score():
    big = WeightVector((50.0, 0, 0, 0, 0))
    eta1, eta2 = thresholds(np.array([20.0, 0, 0, 0, 0]), big)
    assert eta1 == pytest.approx(0.5) and eta2 == pytest.approx(0.0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=5, max_size=5),
    st.lists(st.floats(-5, 5), min_size=5, max_size=5),
)
def test_threshold_gap_is_constant(a, w):
    eta1, eta2 = thresholds(np.array(a), WeightVector(tuple(w)))
    assert abs((eta1 - eta2) - 0.5) <= 2.0**-52  # one rounding step at most
    assert 0.5 <= eta1 <= 1.0 and 0.0 <= eta2 <= 0.5


def test_thresholds_decrease_with_logit():
    w = WeightVector((1.0, 0, 0, 0, 0))
    xs = np.linspace(-5, 5, 50)
    eta1 = [thresholds(np.array([x, 0, 0, 0, 0]), w)[0] for x in xs]
    assert np.all(np.diff(eta1) < 0)


def test_threshold_params_validated():
    with pytest.raises(ValueError):
        ThresholdParams(mu1=0.5, mu2=0.5)


def test_gradient_matches_central_differences(rng):
    Z = rng.normal(size=(200, 5))
    labels = (rng.random(200) < 0.5).astype(float)
    center = rng.normal(size=5)
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        theta = rng.normal(0, 1.5, 6)
        _, grad = loss_and_gradient(theta, Z, labels, 0.1, center)
        fd = np.empty(6)
        for k in range(6):
            e = np.zeros(6)
            e[k] = h
            fd[k] = (loss_and_gradient(theta + e, Z, labels, 0.1, center)[0]
                     - loss_and_gradient(theta - e, Z, labels, 0.1, center)[0]) / (2 * h)
        rel = np.abs(grad - fd) / np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-8)
        worst = max(worst, rel.max())
    assert worst < 1e-4


def test_separable_toy_set(rng):
    def make(n):
        X = np.column_stack([rng.uniform(0.1, 10, n), rng.uniform(0, 0.8, n),
                             rng.integers(0, 50, n), rng.uniform(0.1, 1, n), rng.uniform(0.1, 1, n)])
        X = X[np.abs(X[:, 1] - 0.4) > 0.02]
        return X, (X[:, 1] > 0.4).astype(int)

    X, y = make(2000)
    Xh, yh = make(1000)
    model = LogisticScorer(reg=0.0, max_iter=20_000).fit(X, y)
    assert model.score(Xh, yh) == 1.0


def test_bootstrap_heldout_accuracy():
    rng = np.random.default_rng(0)
    X, y = sample_training_set(10_000, rng)
    Xh, yh = sample_training_set(5_000, rng)
    assert LogisticScorer().fit(X, y).score(Xh, yh) >= 0.90


def test_loss_non_increasing():
    X, y = sample_training_set(3000, np.random.default_rng(1))
    curve = np.array(LogisticScorer(max_iter=500, tol=0).fit(X, y).loss_curve_)
    assert np.all(np.diff(curve) <= 1e-12)


def test_training_is_deterministic():
    X, y = sample_training_set(2000, np.random.default_rng(2))
    assert train(X, y) == train(X, y)


def test_single_class_is_a_noop():
    X, _ = sample_training_set(10, np.random.default_rng(3))
    assert train(X, np.ones(10, dtype=int)) is None
    assert train(X[:0], np.ones(0, dtype=int)) is None


def test_estimator_protocol():
    model = LogisticScorer(reg=0.5)
    assert clone(model).get_params()["reg"] == 0.5
    X, y = sample_training_set(500, np.random.default_rng(4))
    model.fit(X, y)
    proba = model.predict_proba(X)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    np.testing.assert_array_equal(model.predict(X), (proba[:, 1] >= 0.5).astype(int))
    eta1, eta2 = model.thresholds(X)
    np.testing.assert_allclose(eta1 - eta2, 0.5)


def test_weights_record_round_trip():
    X, y = sample_training_set(500, np.random.default_rng(5))
    w = train(X, y)
    assert WeightVector.from_record(w.to_record()) == w


def test_restandardize_preserves_decision_function(rng):
    w = WeightVector(tuple(rng.normal(size=5)), 0.3, tuple(rng.normal(size=5)), tuple(rng.uniform(0.5, 2, 5)))
    moved = w.restandardize(rng.normal(size=5), rng.uniform(0.5, 2, 5))
    X = rng.normal(size=(20, 5))
    np.testing.assert_allclose(w.linear(X), moved.linear(X), rtol=1e-12, atol=1e-12)


def _window(n, seed, both=True):
    X, y = sample_training_set(n, np.random.default_rng(seed))
    if not both:
        y = np.ones_like(y)
    return list(zip(X.tolist(), y.tolist()))


def test_hook_off_cadence():
    prior = train(*sample_training_set(1000, np.random.default_rng(6)))
    assert retrain_epoch_hook(prior, _window(40, 7), epoch=19, cadence=20) is None
    assert retrain_epoch_hook(prior, [], epoch=20, cadence=20) is None
    assert retrain_epoch_hook(prior, _window(40, 7), epoch=20, cadence=20) is not None


def test_hook_three_epoch_trace():
    prior = train(*sample_training_set(1000, np.random.default_rng(8)))
    windows = {1: _window(30, 9), 2: _window(30, 10, both=False), 3: []}
    current = prior
    changed = []
    for epoch in (1, 2, 3):
        new = retrain_epoch_hook(current, windows[epoch], epoch, cadence=1)
        changed.append(new is not None and new != current)
        current = new or current
    assert changed == [True, False, False]


def test_hook_rejects_bad_cadence():
    with pytest.raises(ValueError):
        retrain_epoch_hook(ZERO, [], 1, 0)


def test_batch_matches_individual_fits():
    base = train(*sample_training_set(2000, np.random.default_rng(11)))
    problems = []
    for seed in range(6):
        X, y = sample_training_set(10 + 5 * seed, np.random.default_rng(100 + seed))
        prior = base if seed % 2 else None
        problems.append((X, y, base, prior))
    X1, _ = sample_training_set(8, np.random.default_rng(99))
    problems.append((X1, np.ones(8, dtype=int), base, base))
    batch = train_batch(problems, reg=0.1, max_iter=200)
    assert batch[-1] is None
    for (X, y, init, prior), got in zip(problems[:-1], batch[:-1]):
        want = train(X, y, reg=0.1, max_iter=200, init=init, prior=prior)
        np.testing.assert_allclose(got.weights, want.weights, atol=1e-12)
        assert got.bias == pytest.approx(want.bias, abs=1e-12)
