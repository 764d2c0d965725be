"""Simulated message layer, logical clock and Byzantine behaviours.

Messages travel in columnar batches (one numpy array per field) because a
single round can carry thousands of perceptions. Delivery is loss-free,
constant-latency and ordered by (send time, sender, sequence number).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ledger import Ledger, Perception, Transaction, honest_perceive
from .validation import ConfigError, check_positive, check_unit_interval

log = logging.getLogger(__name__)

BEHAVIORS = ("invert", "withhold", "replay-injector")
BELIEF_POLICIES = ("extreme", "random")


@dataclass
class NetConfig:
    link_latency_ms: float = 100.0
    round_time_ms: float = 500.0
    settlement_ms: float = 100.0
    bandwidth_note: str = "20 Mbps; never binding within the round budget"

    def __post_init__(self):
        check_positive(self.link_latency_ms, "net.link_latency_ms", strict=False)
        check_positive(self.round_time_ms, "net.round_time_ms")
        check_positive(self.settlement_ms, "net.settlement_ms", strict=False)
        if self.link_latency_ms >= self.round_time_ms:
            raise ConfigError("net.link_latency_ms must be below net.round_time_ms")


@dataclass
class AdversaryConfig:
    """Who is dishonest and how they misbehave.

    ``validators`` pins the dishonest set explicitly; otherwise
    ``round(tau * M)`` validators are drawn at random. The replay injector is
    an outside attacker and can be combined with any validator behaviour.
    """

    tau: float = 0.0
    behavior: str = "invert"
    belief_policy: str = "extreme"
    validators: list[int] | None = None
    replay_count: int = 0
    replay_start_epoch: int = 50

    def __post_init__(self):
        check_unit_interval(self.tau, "adversary.tau")
        if self.behavior not in BEHAVIORS:
            raise ConfigError(f"adversary.behavior must be one of {BEHAVIORS}, got {self.behavior!r}")
        if self.belief_policy not in BELIEF_POLICIES:
            raise ConfigError(
                f"adversary.belief_policy must be one of {BELIEF_POLICIES}, got {self.belief_policy!r}"
            )
        if self.replay_count < 0 or self.replay_start_epoch < 0:
            raise ConfigError("adversary.replay_count and replay_start_epoch must be >= 0")
        if self.behavior == "replay-injector" and self.replay_count == 0:
            self.replay_count = 100

    @property
    def withholds(self):
        return self.behavior == "withhold"

    @property
    def inverts(self):
        return self.behavior in ("invert", "replay-injector")

    def pick_dishonest(self, n_validators, rng):
        if self.validators is not None:
            chosen = sorted(set(int(k) for k in self.validators))
            if chosen and (chosen[0] < 0 or chosen[-1] >= n_validators):
                raise ConfigError("adversary.validators contains an out-of-range index")
            return np.array(chosen, dtype=int)
        count = int(round(self.tau * n_validators))
        return np.sort(rng.choice(n_validators, size=count, replace=False)).astype(int)


@dataclass
class SimClock:
    now: float = 0.0

    def advance(self, dt):
        if dt < 0:
            raise ValueError("the clock only moves forward")
        self.now += dt
        return self.now

    def advance_to(self, t):
        if t > self.now:
            self.now = float(t)
        return self.now


@dataclass
class MessageBatch:
    """Messages of one kind sent on the same tick.

    ``subject`` is the transaction a message is about; ``aux`` carries the
    witness id for perceptions and is -1 otherwise.
    """

    kind: str
    sender: np.ndarray
    subject: np.ndarray
    payload: np.ndarray
    aux: np.ndarray | None = None
    send_time: float = 0.0
    seq: np.ndarray | None = None
    deliver_time: np.ndarray | None = None

    def __post_init__(self):
        self.sender = np.asarray(self.sender, dtype=int)
        self.subject = np.asarray(self.subject, dtype=int)
        self.payload = np.asarray(self.payload, dtype=float)
        n = self.sender.size
        self.aux = np.full(n, -1, dtype=int) if self.aux is None else np.asarray(self.aux, dtype=int)
        self.seq = np.arange(n) if self.seq is None else np.asarray(self.seq, dtype=int)
        if not (self.subject.size == self.payload.size == self.aux.size == self.seq.size == n):
            raise ValueError("message batch columns must have equal length")

    def __len__(self):
        return int(self.sender.size)

    def take(self, mask_or_idx):
        return MessageBatch(
            self.kind,
            self.sender[mask_or_idx],
            self.subject[mask_or_idx],
            self.payload[mask_or_idx],
            self.aux[mask_or_idx],
            self.send_time,
            self.seq[mask_or_idx],
            None if self.deliver_time is None else self.deliver_time[mask_or_idx],
        )

    @classmethod
    def empty(cls, kind, send_time=0.0):
        return cls(kind, np.empty(0, int), np.empty(0, int), np.empty(0), send_time=send_time)


def deliver(batch: MessageBatch, config: NetConfig, clock: SimClock):
    """Stamp delivery times and order the batch deterministically.

    Returns the ordered batch and the round deadline. The clock itself is
    moved by the round coordinator, not here.
    """
    order = np.lexsort((batch.seq, batch.sender))
    out = batch.take(order)
    out.deliver_time = np.full(len(out), batch.send_time + config.link_latency_ms)
    return out, clock.now + config.round_time_ms


def withhold_filter(batch: MessageBatch, dishonest_mask, config: AdversaryConfig):
    """Drop every message sent by a dishonest validator."""
    if not config.withholds or len(batch) == 0:
        return batch
    keep = ~np.asarray(dishonest_mask, dtype=bool)[batch.sender]
    return batch.take(keep)


def adversary_perceive(ledger: Ledger, validator, ell, j, round_=0) -> Perception:
    """A lying custodian reports the opposite of what it sees."""
    honest = honest_perceive(ledger, validator, ell, j, round_)
    return Perception(validator, ell, j, 1 - honest.verdict, round_)


def adversary_vote_and_belief(truth_valid, policy="extreme", rng=None):
    """Vote against the truth and broadcast the belief that hurts most.

    Under ``extreme`` a valid transaction gets belief 0 and an invalid one 1;
    ``random`` broadcasts a uniform draw instead.
    """
    vote = 1 - int(truth_valid)
    if policy == "random":
        if rng is None:
            raise ValueError("the random belief policy needs an rng")
        return vote, float(rng.random())
    return vote, float(1 - int(truth_valid))


class ReplayError(RuntimeError):
    pass


def replay_inject(ledger: Ledger, target_id, new_id, submit_time):
    """Re-submit a confirmed transaction under a fresh id.

    Its witnesses were spent by the original, so every conflict bit is set
    and the clone is invalid by construction.
    """
    if not ledger.is_confirmed(target_id):
        raise ReplayError(f"transaction {target_id} is not confirmed; nothing to replay")
    original = ledger[target_id]
    if original.genesis:
        raise ReplayError("genesis outputs cannot be replayed")
    spent = ledger.spent()
    bits = tuple(int(j in spent) for j in original.witness_ids)
    return Transaction(
        id=new_id,
        submitter=original.submitter,
        witness_ids=original.witness_ids,
        attributes=original.attributes,
        truth_valid=int(not any(bits)),
        conflict_bits=bits,
        value=original.value,
        fee=original.fee,
        submit_time=float(submit_time),
        replay_of=target_id,
    )
