"""Synthetic transaction workload.

Attributes follow per-class distributions (valid / invalid):

    a1  Gamma(3, 1)       Gamma(17.5, 0.5)   clipped to (0, 10]
    a2  Normal(0.5, 0.15) Normal(0.25, 0.075) clipped to (0, inf)
    a3  Exp(mean 10)      Exp(mean 5)        floored, clipped to [0, 50]
    |W| Poisson(1.5)      Poisson(2.5)       clipped to [1, inf); a4 = 1/|W|
    a5  Normal(0.7, 0.1)  Normal(0.4, 0.1)   clipped to (0, 1]

Gamma is parameterised by (shape, scale) and Exp by its mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ledger import A1_CAP, A3_CAP, AttributeVector, Ledger, Transaction
from .validation import check_int, check_positive, check_unit_interval

_EPS = 1e-6

_DISTRIBUTIONS = {
    # validity: (a1 shape, a1 scale, a2 mean, a2 sd, a3 mean, |W| rate, a5 mean, a5 sd)
    1: (3.0, 1.0, 0.5, 0.15, 10.0, 1.5, 0.7, 0.1),
    0: (17.5, 0.5, 0.25, 0.075, 5.0, 2.5, 0.4, 0.1),
}


USER_MODELS = ("typed", "uniform")


@dataclass
class WorkloadConfig:
    gamma: float = 600.0
    n_users: int = 100
    invalid_fraction: float = 0.5
    seed: int | None = None
    duration: float = 1.0
    a5_source: str = "sampled"
    source_file: str | None = None
    user_model: str = "typed"

    def __post_init__(self):
        check_positive(self.gamma, "workload.gamma")
        check_int(self.n_users, "workload.n_users", minimum=1)
        check_unit_interval(self.invalid_fraction, "workload.invalid_fraction")
        check_positive(self.duration, "workload.duration")
        if self.a5_source not in ("sampled", "owners"):
            raise ValueError(f"workload.a5_source must be 'sampled' or 'owners', got {self.a5_source!r}")
        if self.user_model not in USER_MODELS:
            raise ValueError(f"workload.user_model must be one of {USER_MODELS}, got {self.user_model!r}")

    @property
    def n_transactions(self):
        return int(round(self.gamma * self.duration))


@dataclass
class UserProfile:
    user_id: int
    reliability: float
    last_submit_round: int | None = None

    def __post_init__(self):
        check_unit_interval(self.reliability, f"user {self.user_id} reliability")


def make_users(n_users, rng, low=0.3, high=0.8):
    return [UserProfile(s, float(r)) for s, r in enumerate(rng.uniform(low, high, n_users))]


def assign_user_types(n_users, invalid_fraction, rng):
    """Mark which users submit invalid transactions.

    ``round(invalid_fraction * n_users)`` users are dishonest, kept inside
    ``[1, n_users - 1]`` whenever both kinds of transaction occur.
    """
    count = int(round(invalid_fraction * n_users))
    if 0 < invalid_fraction < 1 and n_users > 1:
        count = min(max(count, 1), n_users - 1)
    dishonest = np.zeros(n_users, dtype=bool)
    dishonest[rng.choice(n_users, size=count, replace=False)] = True
    return dishonest


def pick_submitter(validity, dishonest, rng, model="typed"):
    """Submitter for a transaction of the given validity.

    ``typed``: valid transactions come from honest users and invalid ones
    from dishonest users (falling back to everyone if a side is empty).
    ``uniform``: any user, regardless of validity.
    """
    if model == "uniform":
        return int(rng.integers(dishonest.size))
    side = np.flatnonzero(dishonest if validity == 0 else ~dishonest)
    if side.size == 0:
        return int(rng.integers(dishonest.size))
    return int(side[rng.integers(side.size)])


def sample_attribute_matrix(validity, rng):
    """Draw attribute rows for an array of validity bits.

    Returns an ``(n, 5)`` float array and the integer witness sizes; column 3
    holds ``1 / |W|``.
    """
    validity = np.asarray(validity, dtype=int)
    n = validity.size
    out = np.empty((n, 5))
    sizes = np.empty(n, dtype=int)
    for v in (0, 1):
        idx = np.flatnonzero(validity == v)
        if idx.size == 0:
            continue
        shape, scale, m2, s2, m3, lam, m5, s5 = _DISTRIBUTIONS[v]
        k = idx.size
        a1 = np.clip(rng.gamma(shape, scale, k), _EPS, A1_CAP)
        a2 = np.maximum(rng.normal(m2, s2, k), _EPS)
        a3 = np.clip(np.floor(rng.exponential(m3, k)), 0, A3_CAP)
        w = np.maximum(rng.poisson(lam, k), 1)
        a5 = np.clip(rng.normal(m5, s5, k), _EPS, 1.0)
        out[idx] = np.column_stack([a1, a2, a3, 1.0 / w, a5])
        sizes[idx] = w
    return out, sizes


def sample_attributes(validity, rng):
    row, _ = sample_attribute_matrix([validity], rng)
    a1, a2, a3, a4, a5 = row[0]
    return AttributeVector(float(a1), float(a2), int(a3), float(a4), float(a5))


def sample_training_set(n, rng):
    """Table-distributed examples with the first half valid and the rest invalid."""
    y = np.zeros(n, dtype=int)
    y[: n - n // 2] = 1
    X, _ = sample_attribute_matrix(y, rng)
    return X, y


class SpendablePool:
    """Confirmed, unspent transaction ids with O(1) add/remove and indexed draws."""

    def __init__(self, ids=()):
        self._items: list[int] = []
        self._pos: dict[int, int] = {}
        for i in ids:
            self.add(i)

    def __len__(self):
        return len(self._items)

    def __contains__(self, item):
        return item in self._pos

    def add(self, item):
        if item not in self._pos:
            self._pos[item] = len(self._items)
            self._items.append(item)

    def discard(self, item):
        pos = self._pos.pop(item, None)
        if pos is None:
            return
        last = self._items.pop()
        if pos < len(self._items):
            self._items[pos] = last
            self._pos[last] = pos

    def draw(self, k, rng):
        idx = rng.choice(len(self._items), size=k, replace=False)
        return [self._items[i] for i in idx]

    def ids(self):
        return sorted(self._items)


def _random_nonempty_subset(w, rng):
    if w <= 62:
        mask = int(rng.integers(1, 2**w))
        return [(mask >> i) & 1 for i in range(w)]
    while True:
        bits = [int(b) for b in rng.integers(0, 2, w)]
        if any(bits):
            return bits


def owner_weighted_reliability(ledger, witness_ids, user_reliability):
    """Value-weighted mean reliability of the users who own the witnesses."""
    values = np.array([ledger[j].value for j in witness_ids], dtype=float)
    rel = np.array([user_reliability[ledger[j].submitter] for j in witness_ids], dtype=float)
    total = values.sum()
    if total <= 0:
        return float(rel.mean())
    return float(values @ rel / total)


def generate_transaction(
    tx_id,
    validity,
    user: UserProfile,
    confirmed_pool,
    rng,
    *,
    submit_time=0.0,
    ledger: Ledger | None = None,
    user_reliability=None,
    a5_source="owners",
    first_submission=False,
):
    """Build one transaction whose witnesses come from ``confirmed_pool``.

    ``confirmed_pool`` is either a :class:`SpendablePool` or a sequence of ids.
    The witness count shrinks to the pool size when the pool is small. A
    user's first transaction has no predecessor, so its a3 is pinned to the
    cap.
    """
    if not isinstance(confirmed_pool, SpendablePool):
        confirmed_pool = SpendablePool(sorted(confirmed_pool))
    if len(confirmed_pool) == 0:
        raise ValueError("cannot draw witnesses from an empty pool")
    row, sizes = sample_attribute_matrix([validity], rng)
    a1, a2, a3, _, a5 = row[0]
    w = min(int(sizes[0]), len(confirmed_pool))
    witnesses = confirmed_pool.draw(w, rng)
    bits = _random_nonempty_subset(w, rng) if validity == 0 else [0] * w
    if a5_source == "owners" and ledger is not None and user_reliability is not None:
        a5 = min(max(owner_weighted_reliability(ledger, witnesses, user_reliability), _EPS), 1.0)
    if first_submission:
        a3 = A3_CAP
    attrs = AttributeVector(float(a1), float(a2), int(a3), 1.0 / w, float(a5))
    return Transaction(
        id=tx_id,
        submitter=user.user_id,
        witness_ids=tuple(int(j) for j in witnesses),
        attributes=attrs,
        truth_valid=int(validity),
        conflict_bits=tuple(bits),
        value=1.0 / attrs.a1,
        fee=attrs.a2,
        submit_time=float(submit_time),
    )


def arrival_schedule(config: WorkloadConfig, rng):
    """Evenly spaced arrivals at ``gamma`` per simulated minute.

    Returns ``(submit_time_ms, validity)`` pairs.
    """
    n = config.n_transactions
    spacing = 60_000.0 / config.gamma
    valid = rng.random(n) >= config.invalid_fraction
    return [(i * spacing, int(v)) for i, v in enumerate(valid)]
