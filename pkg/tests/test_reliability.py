import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridchain.reliability import (
    PairVerdictBook,
    ReliabilityParams,
    agreement_fraction,
    majority_perception,
    settle_users,
    settle_validators,
    update_user_reliability,
    update_validator_reliability,
)
from hybridchain.validation import ConfigError


def test_majority_small_cases():
    assert majority_perception([1, 1, 0]) == 1
    assert majority_perception([0, 0, 1, 1, 0]) == 0
    assert majority_perception([1, 0]) is None
    with pytest.raises(ValueError):
        majority_perception([])


def test_majority_matches_counting_oracle():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        v = rng.integers(0, 2, int(rng.integers(1, 12))).tolist()
        ones, zeros = v.count(1), v.count(0)
        expected = 1 if ones > zeros else 0 if zeros > ones else None
        assert majority_perception(v) == expected


def test_validator_update_arithmetic():
    params = ReliabilityParams()
    assert update_validator_reliability(0.5, [(1, 1)] * 10, params) == pytest.approx(0.51, abs=1e-15)
    assert update_validator_reliability(0.5, [], params) == 0.5
    assert update_validator_reliability(0.5, [(0, 1)] * 10, params) == pytest.approx(0.98 * 0.5, abs=1e-15)


def test_tied_pairs_are_excluded():
    assert agreement_fraction([(1, None), (0, None)]) is None
    assert agreement_fraction([(1, None), (1, 1), (0, 1)]) == 0.5
    assert update_validator_reliability(0.4, [(1, None)]) == 0.4


def test_literal_xor_scores_disagreement():
    sent = [(1, 1), (1, 1), (0, 1)]
    assert agreement_fraction(sent, literal_xor=True) == pytest.approx(1 / 3)
    params = ReliabilityParams(literal_xor=True)
    assert update_validator_reliability(0.5, [(1, 1)] * 4, params) == pytest.approx(0.49)


def test_user_update_arithmetic():
    params = ReliabilityParams()
    assert update_user_reliability(0.6, [1, 1], params) == pytest.approx(0.64, abs=1e-15)
    assert update_user_reliability(0.6, [], params) == 0.6
    assert update_user_reliability(0.6, [0], params) == pytest.approx(0.54, abs=1e-15)


@pytest.mark.parametrize("zeta1,zeta2", [(0.0, 0.9), (1.0, 0.9), (0.98, 1.2)])
def test_params_validated(zeta1, zeta2):
    with pytest.raises(ConfigError):
        ReliabilityParams(zeta1=zeta1, zeta2=zeta2)


@pytest.mark.parametrize("rho0", [0.0, 0.3, 0.55, 0.8])
def test_agreeing_validator_converges_geometrically(rho0):
    params = ReliabilityParams()
    rho = rho0
    for n in range(1, 201):
        rho = update_validator_reliability(rho, [(1, 1), (0, 0), (1, 1)], params)
        assert abs(abs(rho - 1) - params.zeta1**n * abs(rho0 - 1)) < 1e-12


@pytest.mark.parametrize("rho0", [0.3, 0.8, 1.0])
def test_confirmed_user_converges_geometrically(rho0):
    params = ReliabilityParams()
    rho = rho0
    for n in range(1, 201):
        rho = update_user_reliability(rho, [1, 1, 1], params)
        assert abs(abs(rho - 1) - params.zeta2**n * abs(rho0 - 1)) < 1e-12


def test_rejected_user_decays_to_zero():
    params = ReliabilityParams()
    rho = 0.7
    for n in range(1, 101):
        rho = update_user_reliability(rho, [0], params)
        assert rho == pytest.approx(params.zeta2**n * 0.7, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(
    st.floats(0, 1),
    st.lists(st.tuples(st.integers(0, 1), st.one_of(st.none(), st.integers(0, 1))), max_size=20),
    st.lists(st.integers(0, 1), max_size=10),
)
def test_updates_stay_in_unit_interval(rho, sent, outcomes):
    assert 0.0 <= update_validator_reliability(rho, sent) <= 1.0
    assert 0.0 <= update_user_reliability(rho, outcomes) <= 1.0


def test_settlement_from_book_is_order_independent():
    rng = np.random.default_rng(1)
    records = [(int(s), int(j), int(k), int(q)) for s, j, k, q in
               zip(rng.integers(0, 5, 300), rng.integers(0, 4, 300), rng.integers(0, 10, 300), rng.integers(0, 2, 300))]
    rho = rng.uniform(0.3, 0.8, 10)
    results = []
    for order in (records, records[::-1], [records[i] for i in rng.permutation(len(records))]):
        book = PairVerdictBook()
        for s, j, k, q in order:
            book.record(s, j, k, q)
        results.append(settle_validators(rho, book))
    np.testing.assert_allclose(results[0], results[1], rtol=0, atol=1e-15)
    np.testing.assert_allclose(results[0], results[2], rtol=0, atol=1e-15)


def test_book_majorities_and_senders():
    book = PairVerdictBook()
    book.record_many(7, [1, 1, 1, 2, 2], [0, 1, 2, 0, 1], [1, 1, 0, 1, 0])
    assert book.majorities() == {(7, 1): 1, (7, 2): None}
    sent = book.sent_by()
    assert sorted(sent[2]) == [(0, 1)]
    new = settle_validators(np.full(3, 0.5), book)
    assert new[2] == pytest.approx(0.98 * 0.5)
    assert new[0] == pytest.approx(0.51)


def test_settle_users_leaves_idle_users():
    new = settle_users(np.array([0.5, 0.6, 0.7]), {1: [1, 0]})
    np.testing.assert_allclose(new, [0.5, 0.9 * 0.6 + 0.1 * 0.5, 0.7])
