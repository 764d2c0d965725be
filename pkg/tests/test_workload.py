import json

import numpy as np
import pytest
from scipy import integrate, stats

from hybridchain.ledger import A3_CAP
from hybridchain.workload import (
    SpendablePool,
    UserProfile,
    WorkloadConfig,
    arrival_schedule,
    assign_user_types,
    generate_transaction,
    make_users,
    pick_submitter,
    sample_attribute_matrix,
    sample_attributes,
    sample_training_set,
)


def truncated_gamma_mean(shape, scale, cap):
    """E[min(X, cap)] for X ~ Gamma(shape, scale), by quadrature."""
    pdf = stats.gamma(shape, scale=scale).pdf
    body, _ = integrate.quad(lambda x: x * pdf(x), 0.0, cap)
    tail = stats.gamma(shape, scale=scale).sf(cap)
    return body + cap * tail


def test_valid_a1_mean_matches_truncated_density():
    X, _ = sample_attribute_matrix(np.ones(100_000, dtype=int), np.random.default_rng(0))
    oracle = truncated_gamma_mean(3.0, 1.0, 10.0)
    assert abs(X[:, 0].mean() - 3.0) / 3.0 < 0.05
    assert abs(X[:, 0].mean() - oracle) / oracle < 0.01


def test_invalid_a1_mean_matches_truncated_density():
    X, _ = sample_attribute_matrix(np.zeros(100_000, dtype=int), np.random.default_rng(1))
    oracle = truncated_gamma_mean(17.5, 0.5, 10.0)
    assert abs(X[:, 0].mean() - oracle) / oracle < 0.01


@pytest.mark.parametrize("validity,mean", [(1, 0.7), (0, 0.4)])
def test_a5_column_means(validity, mean):
    X, _ = sample_attribute_matrix(np.full(50_000, validity), np.random.default_rng(2))
    assert X[:, 4].mean() == pytest.approx(mean, abs=0.005)


def test_attributes_stay_in_range():
    rng = np.random.default_rng(3)
    y = rng.integers(0, 2, 20_000)
    X, sizes = sample_attribute_matrix(y, rng)
    assert np.all((X[:, 0] > 0) & (X[:, 0] <= 10))
    assert np.all(X[:, 1] > 0)
    a3 = X[:, 2]
    assert np.all((a3 >= 0) & (a3 <= A3_CAP) & (a3 == np.floor(a3)))
    assert np.all(sizes >= 1)
    np.testing.assert_array_equal(X[:, 3], 1.0 / sizes)
    assert np.all((X[:, 4] > 0) & (X[:, 4] <= 1))


def test_sample_attributes_builds_valid_vector(rng):
    for v in (0, 1):
        a = sample_attributes(v, rng)
        assert isinstance(a.a3, int)


def test_training_set_is_balanced(rng):
    X, y = sample_training_set(1001, rng)
    assert X.shape == (1001, 5)
    assert y.sum() == 501


def _make(validity, pool_ids, rng, **kw):
    return generate_transaction(1000, validity, UserProfile(0, 0.5), pool_ids, rng, **kw)


def test_valid_transaction_has_clean_bits(rng):
    for _ in range(200):
        t = _make(1, range(50), rng)
        assert t.truth_valid == 1 and not any(t.conflict_bits)


def test_single_witness_invalid_conflicts(rng):
    t = _make(0, [7], rng)
    assert t.witness_ids == (7,) and t.conflict_bits == (1,)


def test_conflict_subset_uniform_for_three_witnesses():
    rng = np.random.default_rng(4)
    counts = {}
    seen = 0
    while seen < 10_000:
        t = _make(0, range(100), rng)
        if len(t.witness_ids) != 3:
            continue
        counts[t.conflict_bits] = counts.get(t.conflict_bits, 0) + 1
        seen += 1
    assert len(counts) == 7 and (0, 0, 0) not in counts
    _, p = stats.chisquare(list(counts.values()))
    assert p > 0.01


def test_witness_count_shrinks_to_pool(rng):
    for _ in range(100):
        t = _make(0, [1, 2], rng)
        assert 1 <= len(t.witness_ids) <= 2
        assert t.attributes.a4 == pytest.approx(1 / len(t.witness_ids))


def test_empty_pool_rejected(rng):
    with pytest.raises(ValueError):
        _make(1, [], rng)


def test_witnesses_drawn_without_replacement(rng):
    for _ in range(200):
        t = _make(1, range(5), rng)
        assert len(set(t.witness_ids)) == len(t.witness_ids)
        assert set(t.witness_ids) <= set(range(5))


def test_first_submission_is_maximally_stale(rng):
    assert _make(1, range(10), rng, first_submission=True).attributes.a3 == A3_CAP


def test_arrivals_evenly_spaced():
    sched = arrival_schedule(WorkloadConfig(gamma=600, duration=1), np.random.default_rng(0))
    times = np.array([t for t, _ in sched])
    assert len(sched) == 600
    np.testing.assert_allclose(np.diff(times), 100.0)


def test_arrival_total_for_five_minutes():
    sched = arrival_schedule(WorkloadConfig(gamma=6000, duration=5), np.random.default_rng(0))
    assert len(sched) == 30_000


def test_invalid_count_within_binomial_bound():
    sched = arrival_schedule(WorkloadConfig(gamma=10_000, duration=1), np.random.default_rng(5))
    invalid = sum(1 for _, v in sched if v == 0)
    sigma = np.sqrt(10_000 * 0.25)
    assert abs(invalid - 5000) <= 3 * sigma


def test_same_seed_same_workload():
    def build(seed):
        rng = np.random.default_rng(seed)
        pool = SpendablePool(range(30))
        recs = []
        for i, (t, v) in enumerate(arrival_schedule(WorkloadConfig(duration=0.5), rng)):
            recs.append(_make(v, pool, rng, submit_time=t).to_record())
        return json.dumps(recs, sort_keys=True)

    assert build(9) == build(9)
    assert build(9) != build(10)


def test_user_reliability_initial_range(rng):
    users = make_users(1000, rng)
    rel = np.array([u.reliability for u in users])
    assert rel.min() >= 0.3 and rel.max() <= 0.8


@pytest.mark.parametrize("n,frac,expected", [(100, 0.5, 50), (10, 0.01, 1), (10, 0.99, 9), (4, 0.0, 0)])
def test_dishonest_user_count(n, frac, expected, rng):
    assert assign_user_types(n, frac, rng).sum() == expected


def test_typed_submitters_follow_validity(rng):
    dishonest = assign_user_types(20, 0.5, rng)
    for _ in range(500):
        v = int(rng.integers(0, 2))
        s = pick_submitter(v, dishonest, rng, "typed")
        assert dishonest[s] == (v == 0)


def test_uniform_submitters_ignore_validity(rng):
    dishonest = assign_user_types(20, 0.5, rng)
    picked = {pick_submitter(1, dishonest, rng, "uniform") for _ in range(2000)}
    assert picked == set(range(20))


def test_config_validation():
    with pytest.raises(ValueError):
        WorkloadConfig(gamma=0)
    with pytest.raises(ValueError):
        WorkloadConfig(invalid_fraction=1.5)
    with pytest.raises(ValueError):
        WorkloadConfig(user_model="mixed")
