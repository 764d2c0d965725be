"""Epoch and round orchestration.

Each epoch takes up to ``lambda = floor(M / (2f + 2))`` queued transactions,
deals the validators into one community per transaction, and runs rounds
until every community has a final decision. A round has four stages:

1. custodians send perceptions about the witness at position ``r`` of their
   private permutation, and community members exchange actual beliefs;
2. members update intermediate and actual beliefs and try a local decision;
3. members exchange votes; a strict majority of the community size fixes the
   final decision, and at ``r = |W|`` undecided members are forced to vote;
4. final decisions are broadcast and confirmed transactions are committed.

Reliabilities are settled and classifiers retrained at epoch boundaries.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import beliefs as bl
from .classifier import LogisticScorer, WeightVector, sigmoid, train_batch
from .config import RunConfig
from .ledger import Ledger, Transaction
from .reliability import PairVerdictBook, ReliabilityParams, settle_users, settle_validators
from .simnet import (
    MessageBatch,
    SimClock,
    adversary_vote_and_belief,
    deliver,
    replay_inject,
    withhold_filter,
)
from .validation import ConfigError, ProtocolViolation
from .workload import (
    SpendablePool,
    UserProfile,
    assign_user_types,
    pick_submitter,
    arrival_schedule,
    generate_transaction,
    sample_training_set,
)

log = logging.getLogger(__name__)

UNDECIDED = int(bl.Decision.UNDECIDED)


@dataclass
class EpochPlan:
    epoch_index: int
    batch: tuple[int, ...]
    communities: dict[int, np.ndarray]
    lam: int
    f: int
    max_rounds: int
    active: set[int]
    permutations: dict[int, np.ndarray] = field(default_factory=dict)
    idle: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    start_ms: float = 0.0


@dataclass
class ConsensusOutcome:
    tx_id: int
    final: int
    deciding_round: int
    tally: tuple[int, int]
    decided_by_force: bool
    latency_ms: float
    decided_ms: float
    submit_time: float
    queue_wait_ms: float
    epoch: int
    witness_size: int
    truth_valid: int


@dataclass
class ValidatorState:
    index: int
    honest: bool
    reliability: float
    weights: WeightVector
    decided_log: list = field(default_factory=list)


def community_count(n_validators, f):
    return n_validators // (2 * f + 2)


def assign_communities(n_validators, batch, f, rng, witness_sizes=None, epoch_index=0):
    """Deal a fresh random community to each batched transaction.

    Validators are shuffled and dealt round-robin into ``lambda`` groups so
    group sizes differ by at most one; a short batch uses only the first
    ``len(batch)`` groups and leaves the rest idle for the epoch. Every
    validator also draws a private permutation of each batched transaction's
    witness positions.
    """
    min_size = 2 * f + 2
    if n_validators < min_size:
        raise ConfigError(f"need at least 2f+2={min_size} validators, got {n_validators}")
    lam = community_count(n_validators, f)
    batch = tuple(batch)
    if len(batch) > lam:
        raise ValueError(f"batch of {len(batch)} exceeds lambda={lam}")
    order = rng.permutation(n_validators)
    groups = [np.sort(order[g::lam]) for g in range(lam)]
    communities = {tx: groups[i] for i, tx in enumerate(batch)}
    idle = np.sort(np.concatenate(groups[len(batch):])) if len(batch) < lam else np.empty(0, int)
    sizes = witness_sizes or {}
    permutations = {
        tx: np.argsort(rng.random((n_validators, sizes.get(tx, 1))), axis=1, kind="stable")
        for tx in batch
    }
    return EpochPlan(
        epoch_index=epoch_index,
        batch=batch,
        communities=communities,
        lam=lam,
        f=f,
        max_rounds=max(sizes.values()) if batch and sizes else 0,
        active=set(batch),
        permutations=permutations,
        idle=idle,
    )


def collective_decision(votes, community_size):
    """1 or 0 once either verdict holds a strict majority of the community."""
    votes = [int(v) for v in votes]
    half = community_size // 2
    accepts = sum(1 for v in votes if v == 1)
    rejects = sum(1 for v in votes if v == 0)
    if accepts > half:
        return 1
    if rejects > half:
        return 0
    return None


class _TxRound:
    """Per-transaction working state for one epoch."""

    def __init__(self, tx: Transaction, members, custody, eta1, eta2, start_belief,
                 liar_mask, silent_mask):
        self.tx = tx
        self.members = members
        n = members.size
        self.custody = custody  # (M, w) bool: validator stores witness i
        self.conflict = np.asarray(tx.conflict_bits, dtype=int)
        self.beta = bl.beta(tx.witness_size)
        self.eta1 = eta1
        self.eta2 = eta2
        self.psi = np.full(n, float(start_belief))
        self.p = np.full(n, float(start_belief))
        self.hard_zero = np.zeros(n, dtype=bool)
        self.decision = np.full(n, UNDECIDED, dtype=int)
        self.decision_round = np.zeros(n, dtype=int)
        self.liar = liar_mask
        self.silent = silent_mask
        self.outcome: ConsensusOutcome | None = None


class Simulation:
    """One seeded run of the protocol over a generated workload.

    Independent random streams drive the workload, community assignment,
    adversary selection, genesis state and bootstrap training, so changing
    one concern (for example switching withholding on) does not perturb the
    draws of the others.
    """

    def __init__(self, config: RunConfig, *, bootstrap_weights: WeightVector | None = None,
                 workload: list[Transaction] | None = None):
        self.config = config
        proto = config.protocol
        self.M, self.f = proto.M, proto.f
        self.lam = community_count(self.M, self.f)
        self.net = config.net
        self.adv = config.adversary
        self.rel_params = ReliabilityParams(proto.zeta1, proto.zeta2, proto.eq5_literal_xor)

        streams = np.random.SeedSequence(config.seed).spawn(7)
        (self.rng_workload, self.rng_assign, self.rng_adversary, self.rng_genesis,
         self.rng_bootstrap, self.rng_beliefs, self.rng_replay) = (
            np.random.default_rng(s) for s in streams
        )

        lo, hi = proto.validator_reliability_range
        self.validator_rho = self.rng_genesis.uniform(lo, hi, self.M)
        lo, hi = proto.user_reliability_range
        n_users = config.workload.n_users
        self.user_rho = self.rng_genesis.uniform(lo, hi, n_users)
        self.users = [UserProfile(s, float(self.user_rho[s])) for s in range(n_users)]

        dishonest = self.adv.pick_dishonest(self.M, self.rng_adversary)
        self.dishonest_mask = np.zeros(self.M, dtype=bool)
        self.dishonest_mask[dishonest] = True
        self.liar_mask = self.dishonest_mask & self.adv.inverts
        self.silent_mask = self.dishonest_mask & self.adv.withholds

        if bootstrap_weights is None:
            bootstrap_weights = bootstrap_classifier(config, self.rng_bootstrap)[0]
        self.bootstrap_weights = bootstrap_weights
        self.weights = [bootstrap_weights] * self.M
        self._weight_cols = self._stack_weights()

        self.ledger = Ledger()
        self.clock = SimClock()
        self.pool = SpendablePool()
        self._seed_genesis()

        wl = config.workload
        self.user_dishonest = assign_user_types(wl.n_users, wl.invalid_fraction, self.rng_workload)
        self._replay_source = workload
        if workload is not None:
            self.arrivals = [(tx.submit_time, tx.truth_valid) for tx in workload]
        else:
            self.arrivals = arrival_schedule(config.workload, self.rng_workload)
        self._next_arrival = 0
        self.queue: deque = deque()
        self._reserved: dict[int, tuple[int, ...]] = {}
        self.replays_injected = 0
        self._submitted_users: set[int] = set()

        self.epoch = 0
        self.outcomes: list[ConsensusOutcome] = []
        self.events: list[dict] = []
        self.validator_history = [self.validator_rho.copy()]
        self.user_history = [self.user_rho.copy()]
        self._window: dict[int, list[tuple[int, int]]] = {k: [] for k in range(self.M)}
        self._messages_sent = 0
        self._messages_withheld = 0
        self.horizon_ms = (
            None if config.run.horizon_minutes is None else config.run.horizon_minutes * 60_000.0
        )
        self.events.append({
            "type": "run",
            "seed": config.seed,
            "M": self.M,
            "f": self.f,
            "lambda": self.lam,
            "n_arrivals": len(self.arrivals),
            "dishonest": [int(k) for k in dishonest],
            "behavior": self.adv.behavior,
            "round_time_ms": self.net.round_time_ms,
            "settlement_ms": self.net.settlement_ms,
            "horizon_ms": self.horizon_ms,
        })

    # -- setup ---------------------------------------------------------

    def _seed_genesis(self):
        size = self.config.run.genesis_size
        if size is None:
            size = self.config.workload.n_transactions + 100
        community = self.M // self.lam
        rng = self.rng_genesis
        owners = rng.integers(0, self.config.workload.n_users, size)
        values = 1.0 / np.clip(rng.gamma(3.0, 1.0, size), 1e-6, 10.0)
        for j in range(size):
            tx = Transaction(
                id=j, submitter=int(owners[j]), witness_ids=(), attributes=None,
                truth_valid=1, conflict_bits=(), value=float(values[j]), fee=0.0,
                submit_time=0.0, genesis=True,
            )
            self.ledger.add(tx)
            custodians = rng.choice(self.M, size=community, replace=False)
            self.ledger.confirm(j, custodians.tolist(), epoch=0)
            self.pool.add(j)

    # -- queue ---------------------------------------------------------

    def _admit_arrivals(self):
        now = self.clock.now
        while self._next_arrival < len(self.arrivals) and self.arrivals[self._next_arrival][0] <= now:
            self.queue.append(("arrival", self._next_arrival))
            self._next_arrival += 1

    def _maybe_inject_replays(self):
        adv = self.adv
        if adv.replay_count <= self.replays_injected or self.epoch < adv.replay_start_epoch:
            return
        candidates = sorted(
            tx_id for tx_id in self.ledger.confirmed if not self.ledger[tx_id].genesis
        )
        if not candidates:
            return
        target = candidates[int(self.rng_replay.integers(len(candidates)))]
        self.queue.append(("replay", target, self.clock.now))
        self.replays_injected += 1

    def _materialize(self, item):
        tx_id = self.ledger.next_id()
        if item[0] == "replay":
            _, target, submit_time = item
            tx = replay_inject(self.ledger, target, tx_id, submit_time)
            self.events.append({"type": "attack", "kind": "replay", "tx": tx_id, "target": target,
                                "time_ms": submit_time})
        elif self._replay_source is not None:
            recorded = self._replay_source[item[1]]
            tx = Transaction(**{**recorded.__dict__, "id": tx_id})
        else:
            submit_time, validity = self.arrivals[item[1]]
            user = self.users[pick_submitter(validity, self.user_dishonest, self.rng_workload,
                                             self.config.workload.user_model)]
            if len(self.pool) == 0:
                raise ProtocolViolation("spendable pool exhausted; raise run.genesis_size")
            tx = generate_transaction(
                tx_id, validity, user, self.pool, self.rng_workload,
                submit_time=submit_time, ledger=self.ledger,
                user_reliability=self.user_rho, a5_source=self.config.workload.a5_source,
                first_submission=user.user_id not in self._submitted_users,
            )
            self._submitted_users.add(user.user_id)
            if tx.truth_valid:
                for j in tx.witness_ids:
                    self.pool.discard(j)
                self._reserved[tx.id] = tx.witness_ids
        self.ledger.add(tx)
        self.events.append({
            "type": "submit", "tx": tx.id, "submit_time": tx.submit_time,
            "truth": tx.truth_valid, "witness_size": tx.witness_size,
            "submitter": tx.submitter, "replay_of": tx.replay_of,
        })
        return tx

    # -- epoch ---------------------------------------------------------

    def finished(self):
        if self.horizon_ms is not None and self.clock.now >= self.horizon_ms:
            return True
        if self.config.run.max_epochs is not None and self.epoch >= self.config.run.max_epochs:
            return True
        pending_replays = self.adv.replay_count > self.replays_injected
        return not self.queue and self._next_arrival >= len(self.arrivals) and not pending_replays

    def run(self):
        while not self.finished():
            self.run_epoch()
        self._close()
        return self.outcomes

    def run_epoch(self):
        self.epoch += 1
        self._admit_arrivals()
        self._maybe_inject_replays()
        if not self.queue:
            if self._next_arrival < len(self.arrivals):
                self.clock.advance_to(self.arrivals[self._next_arrival][0])
                self._admit_arrivals()
            if not self.queue:
                return []
        start = self.clock.now
        batch_txs = [self._materialize(self.queue.popleft()) for _ in range(min(self.lam, len(self.queue)))]
        plan = assign_communities(
            self.M, [tx.id for tx in batch_txs], self.f, self.rng_assign,
            witness_sizes={tx.id: tx.witness_size for tx in batch_txs},
            epoch_index=self.epoch,
        )
        plan.start_ms = start
        states = {tx.id: self._open_tx(tx, plan) for tx in batch_txs}
        self.events.append({
            "type": "epoch", "epoch": self.epoch, "start_ms": start,
            "batch": list(plan.batch),
            "community_sizes": [int(plan.communities[t].size) for t in plan.batch],
            "max_rounds": plan.max_rounds,
        })
        book = PairVerdictBook()
        rounds_run = 0
        for r in range(1, plan.max_rounds + 1):
            self.run_round(plan, states, book, r)
            rounds_run = r
            if not plan.active:
                break
        if plan.active:
            raise ProtocolViolation(
                f"epoch {self.epoch}: transactions {sorted(plan.active)} undecided after "
                f"{plan.max_rounds} rounds"
            )
        outcomes = [states[t].outcome for t in plan.batch]
        self._commit(plan, states)
        self._settle(book, outcomes)
        self._retrain(plan, states)
        self.clock.advance(self.net.settlement_ms)
        self.outcomes.extend(outcomes)
        assert rounds_run <= plan.max_rounds
        return outcomes

    def _open_tx(self, tx: Transaction, plan: EpochPlan):
        members = plan.communities[tx.id]
        custody = np.zeros((self.M, tx.witness_size), dtype=bool)
        for i, j in enumerate(tx.witness_ids):
            holders = self.ledger.custodians.get(j)
            if holders:
                custody[list(holders), i] = True
        attrs = np.asarray(tx.attributes.as_tuple(), dtype=float)
        mean, scale, w, b = (col[members] for col in self._weight_cols)
        half = sigmoid(np.einsum("kd,kd->k", (attrs - mean) / scale, w) + b) / 2.0
        eta1 = self.config.protocol.mu1 - half
        eta2 = self.config.protocol.mu2 - half
        return _TxRound(
            tx, members, custody, eta1, eta2, self.user_rho[tx.submitter],
            self.liar_mask[members], self.silent_mask[members],
        )

    def _stack_weights(self):
        """Per-validator standardization and coefficients as (M, d) arrays."""
        return (
            np.array([wv.mean for wv in self.weights], dtype=float),
            np.array([wv.scale for wv in self.weights], dtype=float),
            np.array([wv.weights for wv in self.weights], dtype=float),
            np.array([wv.bias for wv in self.weights], dtype=float),
        )

    # -- round ---------------------------------------------------------

    def run_round(self, plan: EpochPlan, states, book: PairVerdictBook, r):
        t0 = self.clock.now
        round_end = t0 + self.net.round_time_ms
        M = self.M
        all_validators = np.arange(M)

        # Stage 1: perceptions from every custodian, for every batched transaction.
        perceptions = {}
        for tx_id in plan.batch:
            st = states[tx_id]
            if r > st.tx.witness_size:
                continue
            pos = plan.permutations[tx_id][:, r - 1]
            senders = np.flatnonzero(st.custody[all_validators, pos])
            wpos = pos[senders]
            verdict = 1 - st.conflict[wpos]
            verdict = np.where(self.liar_mask[senders], 1 - verdict, verdict)
            witness_ids = np.asarray(st.tx.witness_ids, dtype=int)[wpos]
            msgs = MessageBatch("perception", senders, np.full(senders.size, tx_id), verdict,
                                aux=witness_ids, send_time=t0)
            self._messages_sent += len(msgs)
            kept = withhold_filter(msgs, self.dishonest_mask, self.adv)
            self._messages_withheld += len(msgs) - len(kept)
            book.record_many(tx_id, kept.aux, kept.sender, kept.payload.astype(int))
            if tx_id in plan.active:
                perceptions[tx_id], _ = deliver(kept, self.net, self.clock)

        decided_now = []
        for tx_id in plan.batch:
            if tx_id not in plan.active:
                continue
            st = states[tx_id]
            self._stage2(st, plan, perceptions[tx_id], r, t0)
            final, tally, forced = self._stage3(st, r, t0)
            if final is not None:
                decided_now.append((tx_id, final, tally, forced))

        # Stage 4: broadcast final decisions; they take effect at the round deadline.
        if decided_now:
            ids = [d[0] for d in decided_now]
            finals = [d[1] for d in decided_now]
            deliver(MessageBatch("final", np.zeros(len(ids), int), ids, finals, send_time=t0),
                    self.net, self.clock)
        for tx_id, final, tally, forced in decided_now:
            st = states[tx_id]
            tx = st.tx
            epoch_start = plan.start_ms
            st.outcome = ConsensusOutcome(
                tx_id=tx_id, final=int(final), deciding_round=r, tally=tally,
                decided_by_force=forced, latency_ms=round_end - tx.submit_time,
                decided_ms=round_end, submit_time=tx.submit_time,
                queue_wait_ms=epoch_start - tx.submit_time, epoch=plan.epoch_index,
                witness_size=tx.witness_size, truth_valid=tx.truth_valid,
            )
            plan.active.discard(tx_id)
            self.events.append({
                "type": "decision", "epoch": plan.epoch_index, "round": r, "tx": tx_id,
                "accept": tally[0], "reject": tally[1], "final": int(final), "forced": forced,
                "submit_time": tx.submit_time, "queue_wait_ms": st.outcome.queue_wait_ms,
                "decided_ms": round_end, "latency_ms": st.outcome.latency_ms,
                "witness_size": tx.witness_size, "truth": tx.truth_valid,
                "community_size": int(st.members.size),
            })
        self.clock.advance(self.net.round_time_ms)

    def _stage2(self, st: _TxRound, plan: EpochPlan, msgs: MessageBatch, r, t0):
        members = st.members
        n = members.size
        f = plan.f

        # Intermediate belief: every member hears the same perceptions except its own.
        lv, li = bl.perception_log_factors(msgs.payload, self.validator_rho[msgs.sender], st.beta)
        total_v, total_i = lv.sum(), li.sum()
        own_v = np.zeros(n)
        own_i = np.zeros(n)
        counts = np.full(n, len(msgs))
        if len(msgs):
            where = {int(s): i for i, s in enumerate(msgs.sender)}
            for m, k in enumerate(members):
                i = where.get(int(k))
                if i is not None:
                    own_v[m], own_i[m] = lv[i], li[i]
                    counts[m] -= 1
        with np.errstate(invalid="ignore"):
            ll_v = total_v - own_v
            ll_i = total_i - own_i
        # -inf - -inf: the member's own impossible perception was the only one
        ll_v = np.where(np.isnan(ll_v), 0.0, ll_v)
        ll_i = np.where(np.isnan(ll_i), 0.0, ll_i)
        psi_new = np.where(counts > 0, bl.posterior_from_loglik(st.psi, ll_v, ll_i), st.psi)

        # Actual beliefs broadcast at the start of the round (previous-round values).
        broadcast = st.p.copy()
        liars = np.flatnonzero(st.liar)
        for m in liars:
            _, broadcast[m] = adversary_vote_and_belief(
                st.tx.truth_valid, self.adv.belief_policy, self.rng_beliefs
            )
        belief_msgs = MessageBatch("belief", members, np.full(n, st.tx.id), broadcast, send_time=t0)
        self._messages_sent += n
        kept = withhold_filter(belief_msgs, self.dishonest_mask, self.adv)
        self._messages_withheld += n - len(kept)
        kept, _ = deliver(kept, self.net, self.clock)
        heard = np.zeros(n, dtype=bool)
        index = {int(k): m for m, k in enumerate(members)}
        values = np.empty(n)
        for s, v in zip(kept.sender, kept.payload):
            heard[index[int(s)]] = True
            values[index[int(s)]] = v
        # Received matrix: row = receiver, columns = the other members. A belief
        # withheld past the deadline counts as the receiver's own previous value.
        received = np.where(heard[None, :], values[None, :], st.p[:, None])
        off_diag = ~np.eye(n, dtype=bool)
        received = received[off_diag].reshape(n, n - 1)
        floor = bl.trimmed_floor(received, f)
        p_new = np.minimum(np.minimum(floor, st.p), psi_new)

        # Hard zero: a member that stores its own r-th witness and sees the conflict.
        if r <= st.tx.witness_size:
            own_pos = plan.permutations[st.tx.id][members, r - 1]
            sees = st.custody[members, own_pos] & (st.conflict[own_pos] == 1)
            st.hard_zero |= sees & ~st.liar
        p_new = np.where(st.hard_zero, 0.0, p_new)

        st.psi = psi_new
        st.p = p_new

        undecided = st.decision == UNDECIDED
        honest_open = undecided & ~st.liar
        accept = honest_open & (p_new >= st.eta1)
        reject = honest_open & ~accept & (p_new <= st.eta2)
        st.decision[accept] = 1
        st.decision[reject] = 0
        st.decision_round[accept | reject] = r
        liar_open = undecided & st.liar
        if liar_open.any():
            st.decision[liar_open] = 1 - st.tx.truth_valid
            st.decision_round[liar_open] = r

    def _tally(self, st: _TxRound, t0):
        voters = np.flatnonzero(st.decision != UNDECIDED)
        msgs = MessageBatch("vote", st.members[voters], np.full(voters.size, st.tx.id),
                            st.decision[voters], send_time=t0)
        self._messages_sent += len(msgs)
        kept = withhold_filter(msgs, self.dishonest_mask, self.adv)
        self._messages_withheld += len(msgs) - len(kept)
        kept, _ = deliver(kept, self.net, self.clock)
        votes = kept.payload.astype(int)
        return collective_decision(votes, st.members.size), (int((votes == 1).sum()), int((votes == 0).sum()))

    def _stage3(self, st: _TxRound, r, t0):
        final, tally = self._tally(st, t0)
        if final is not None:
            return final, tally, False
        if r < st.tx.witness_size:
            return None, tally, False
        open_ = np.flatnonzero(st.decision == UNDECIDED)
        for m in open_:
            st.decision[m] = int(bl.forced_decision(st.p[m], st.eta1[m], st.eta2[m]))
            st.decision_round[m] = r
        final, tally = self._tally(st, t0)
        if final is None:
            # Withheld votes can leave no strict majority of the community even
            # after forcing; fall back to the plurality of votes received.
            final = int(tally[0] > tally[1])
        return final, tally, True

    # -- epoch boundary ------------------------------------------------

    def _commit(self, plan: EpochPlan, states):
        for tx_id in plan.batch:
            st = states[tx_id]
            tx = st.tx
            reserved = self._reserved.pop(tx_id, ())
            if st.outcome.final == 1:
                self.ledger.confirm(tx_id, st.members.tolist(), epoch=plan.epoch_index)
                for j in tx.witness_ids:
                    self.pool.discard(j)
                self.pool.add(tx_id)
            else:
                spent = self.ledger.spent()
                for j in reserved:
                    if j not in spent:
                        self.pool.add(j)

    def _settle(self, book: PairVerdictBook, outcomes):
        self.validator_rho = settle_validators(self.validator_rho, book, self.rel_params)
        by_user: dict[int, list[int]] = {}
        for o in outcomes:
            by_user.setdefault(self.ledger[o.tx_id].submitter, []).append(o.final)
        self.user_rho = settle_users(self.user_rho, by_user, self.rel_params)
        for s in by_user:
            self.users[s].reliability = float(self.user_rho[s])
            self.users[s].last_submit_round = self.epoch
        self.validator_history.append(self.validator_rho.copy())
        self.user_history.append(self.user_rho.copy())

    def _retrain(self, plan: EpochPlan, states):
        proto = self.config.protocol
        for tx_id in plan.batch:
            st = states[tx_id]
            for k in st.members:
                self._window[int(k)].append((tx_id, st.outcome.final))
        if self.epoch % proto.cadence:
            return
        boot = self.config.bootstrap
        jobs, problems = [], []
        for k in range(self.M):
            window = self._window[k]
            self._window[k] = []
            if not window or self.dishonest_mask[k]:
                continue  # dishonest thresholds are never consulted
            labels = [label for _, label in window]
            X = np.array([self.ledger[t].attributes.as_tuple() for t, _ in window])
            init = self.weights[k] if proto.retrain_warm_start else None
            prior = self.weights[k] if proto.retrain_anchor else None
            jobs.append(k)
            problems.append((X, labels, init, prior))
        fitted = train_batch(problems, reg=proto.retrain_reg, step_size=boot.step_size,
                             max_iter=proto.retrain_max_iter)
        for k, new in zip(jobs, fitted):
            if new is not None:
                self.weights[k] = new
        self._weight_cols = self._stack_weights()

    def _close(self):
        decided = {o.tx_id for o in self.outcomes}
        submitted = [e["tx"] for e in self.events if e["type"] == "submit"]
        undecided_materialized = [t for t in submitted if t not in decided]
        not_materialized = len(self.queue) + (len(self.arrivals) - self._next_arrival)
        window = self.horizon_ms if self.horizon_ms is not None else self.clock.now
        if self.adv.withholds:
            self.events.append({"type": "attack", "kind": "withhold",
                                "messages_withheld": self._messages_withheld})
        self.events.append({
            "type": "end", "epochs": self.epoch, "end_ms": self.clock.now, "window_ms": window,
            "decided": len(self.outcomes),
            "backlog": len(undecided_materialized) + not_materialized,
            "messages_sent": self._messages_sent,
            "replays_injected": self.replays_injected,
        })


def bootstrap_classifier(config: RunConfig, rng):
    """Fit the shared starting classifier and score it on a fresh heldout set.

    Returns ``(weights, heldout_accuracy)``; accuracy is ``None`` without a
    heldout set. A ``weights_file`` in the config skips training.
    """
    boot = config.bootstrap
    if boot.weights_file:
        import json
        from pathlib import Path

        rec = json.loads(Path(boot.weights_file).read_text(encoding="utf-8"))
        return WeightVector.from_record(rec), rec.get("heldout_accuracy")
    X, y = sample_training_set(boot.training_size, rng)
    model = LogisticScorer(reg=boot.reg, step_size=boot.step_size, max_iter=boot.max_iter,
                           mu1=config.protocol.mu1, mu2=config.protocol.mu2)
    model.fit(X, y)
    acc = None
    if boot.heldout_size:
        Xh, yh = sample_training_set(boot.heldout_size, rng)
        acc = float(model.score(Xh, yh))
    return model.weight_vector_, acc


def run_simulation(config: RunConfig, **kwargs):
    sim = Simulation(config, **kwargs)
    sim.run()
    return sim
