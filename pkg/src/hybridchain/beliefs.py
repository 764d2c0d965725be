"""Belief updates run by each community member once per round.

Two beliefs are tracked per (validator, transaction):

* the intermediate belief, a Bayesian posterior that the transaction is valid
  given the perceptions received this round, weighted by sender reliability;
* the actual belief, the minimum of the intermediate belief, the validator's
  own previous actual belief and the peer beliefs that survive trimming the
  ``f`` highest and ``f`` lowest values.

The actual belief never increases, which is what makes a first-hand conflict
sighting (the "hard zero") permanent.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .validation import ProtocolViolation


class Decision(enum.IntEnum):
    UNDECIDED = -1
    REJECT = 0
    ACCEPT = 1


@dataclass(frozen=True)
class BeliefState:
    psi: float
    p: float
    decision: Decision = Decision.UNDECIDED
    hard_zero: bool = False
    round_of_decision: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.psi <= 1.0 and 0.0 <= self.p <= 1.0):
            raise ValueError(f"beliefs must lie in [0, 1]: psi={self.psi}, p={self.p}")
        if self.hard_zero and self.p != 0.0:
            raise ValueError("a hard-zero state must carry p = 0")
        if self.decision != Decision.UNDECIDED and self.round_of_decision is None:
            raise ValueError("a decided state needs round_of_decision")

    @classmethod
    def initial(cls, user_reliability):
        return cls(psi=float(user_reliability), p=float(user_reliability))


@dataclass(frozen=True)
class PerceptionBatch:
    """Perceptions received about one transaction in one round.

    ``entries`` holds ``(verdict, sender_reliability)`` pairs.
    """

    entries: tuple[tuple[int, float], ...] = ()
    subject: int = -1
    round: int = 0

    def __post_init__(self):
        for q, rho in self.entries:
            if q not in (0, 1) or not 0.0 <= rho <= 1.0:
                raise ValueError(f"bad perception entry ({q}, {rho})")


@dataclass(frozen=True)
class TrimSet:
    """Peer actual beliefs from the previous round: ``(source, p)`` pairs."""

    received: tuple[tuple[int, float], ...] = field(default_factory=tuple)
    f: int = 0


def beta(witness_size):
    """Probability that an invalid transaction conflicts with one given witness.

    Of the ``2^w - 1`` non-empty conflict patterns over ``w`` witnesses,
    ``2^(w-1)`` include any particular witness.
    """
    w = int(witness_size)
    if w < 1 or w != witness_size:
        raise ValueError(f"witness size must be an integer >= 1, got {witness_size!r}")
    return 2.0 ** (w - 1) / (2.0**w - 1.0)


def perception_log_factors(verdicts, reliabilities, beta_val):
    """Per-perception log-likelihoods under "valid" and "invalid".

    Returns two arrays; ``-inf`` marks an impossible observation.
    """
    q = np.asarray(verdicts, dtype=float)
    rho = np.asarray(reliabilities, dtype=float)
    given_valid = np.where(q == 1, rho, 1.0 - rho)
    given_invalid = np.where(
        q == 1,
        (1.0 - beta_val) * rho + beta_val * (1.0 - rho),
        beta_val * rho + (1.0 - beta_val) * (1.0 - rho),
    )
    with np.errstate(divide="ignore"):
        return np.log(given_valid), np.log(given_invalid)


def posterior_from_loglik(psi_prev, ll_valid, ll_invalid):
    """Bayes update of ``psi_prev`` given summed log-likelihoods (vectorised).

    0 and 1 are absorbing; an observation impossible under both hypotheses
    leaves the prior unchanged.
    """
    psi_prev = np.asarray(psi_prev, dtype=float)
    ll_valid = np.broadcast_to(np.asarray(ll_valid, dtype=float), psi_prev.shape)
    ll_invalid = np.broadcast_to(np.asarray(ll_invalid, dtype=float), psi_prev.shape)
    out = psi_prev.copy()
    interior = (psi_prev > 0.0) & (psi_prev < 1.0)
    both_impossible = np.isneginf(ll_valid) & np.isneginf(ll_invalid)
    live = interior & ~both_impossible
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        prior_logit = np.log(psi_prev) - np.log1p(-psi_prev)
        d = prior_logit + ll_valid - ll_invalid
    d = np.where(live, d, 0.0)
    # logistic without overflow
    pos = d >= 0
    ed = np.exp(-np.abs(d))
    post = np.where(pos, 1.0 / (1.0 + ed), ed / (1.0 + ed))
    out[live] = post[live]
    return out if out.ndim else float(out)


def update_intermediate(psi_prev, batch: PerceptionBatch, beta_val):
    """Posterior validity belief after one round of perceptions."""
    if not 0.0 <= psi_prev <= 1.0:
        raise ValueError(f"psi_prev must lie in [0, 1], got {psi_prev}")
    if not batch.entries:
        return float(psi_prev)
    q, rho = zip(*batch.entries)
    lv, li = perception_log_factors(q, rho, beta_val)
    return float(posterior_from_loglik(psi_prev, lv.sum(), li.sum()))


def update_actual(own_p_prev, trims: TrimSet, psi_now):
    """Trimmed-min pooling of peer beliefs with the validator's own state.

    Ties in the sort are broken by source index so the surviving set is
    deterministic.
    """
    f = trims.f
    if f < 0:
        raise ValueError("f must be non-negative")
    received = sorted(trims.received, key=lambda item: (item[1], item[0]))
    if len(received) < 2 * f + 1:
        raise ProtocolViolation(
            f"trimming needs at least {2 * f + 1} peer beliefs, got {len(received)}"
        )
    survivors = received[f: len(received) - f]
    return min(min(p for _, p in survivors), own_p_prev, psi_now)


def trimmed_floor(received, f):
    """Smallest value left after dropping the ``f`` lowest and ``f`` highest of
    each row of ``received`` (vectorised form of the survivor minimum)."""
    received = np.asarray(received, dtype=float)
    n = received.shape[-1]
    if n < 2 * f + 1:
        raise ProtocolViolation(f"trimming needs at least {2 * f + 1} peer beliefs, got {n}")
    return np.partition(received, f, axis=-1)[..., f]


def apply_hard_zero(state: BeliefState, own_verdict):
    """Pin the actual belief at zero after a first-hand conflict sighting."""
    if own_verdict is None or own_verdict == 1 or state.hard_zero:
        return state
    return replace(state, p=0.0, hard_zero=True)


def local_decision(p, eta1, eta2):
    if not eta2 < eta1:
        raise ValueError(f"need eta2 < eta1, got {eta2}, {eta1}")
    if p >= eta1:
        return Decision.ACCEPT
    if p <= eta2:
        return Decision.REJECT
    return Decision.UNDECIDED


def forced_decision(p, eta1, eta2):
    """Pick whichever threshold ``p`` is closer to; an exact tie rejects."""
    return Decision.ACCEPT if eta1 - p < p - eta2 else Decision.REJECT
