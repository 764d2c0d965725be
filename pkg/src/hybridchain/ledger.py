"""Transactions, witness sets and the pairwise conflict ground truth.

A transaction consumes an ordered witness set of earlier transactions. Each
(transaction, witness) pair carries an explicit conflict bit assigned when the
transaction is generated; a transaction is valid exactly when none of its
witness bits is set.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

ATTRIBUTE_NAMES = ("a1", "a2", "a3", "a4", "a5")
A3_CAP = 50
A1_CAP = 10.0


@dataclass(frozen=True)
class AttributeVector:
    """Five features scored by the validator classifiers.

    a1 is the inverse transferred value, a2 the fee, a3 the number of rounds
    since the submitter's previous transaction, a4 the inverse witness-set size
    and a5 the value-weighted reliability of the witness owners.
    """

    a1: float
    a2: float
    a3: int
    a4: float
    a5: float

    def __post_init__(self):
        if not 0 < self.a1 <= A1_CAP:
            raise ValueError(f"a1 out of range (0, {A1_CAP}]: {self.a1}")
        if not self.a2 > 0:
            raise ValueError(f"a2 must be positive: {self.a2}")
        if int(self.a3) != self.a3 or not 0 <= self.a3 <= A3_CAP:
            raise ValueError(f"a3 must be an integer in [0, {A3_CAP}]: {self.a3}")
        if not 0 < self.a4 <= 1:
            raise ValueError(f"a4 must lie in (0, 1]: {self.a4}")
        if not 0 < self.a5 <= 1:
            raise ValueError(f"a5 must lie in (0, 1]: {self.a5}")

    def as_tuple(self):
        return (self.a1, self.a2, float(self.a3), self.a4, self.a5)


@dataclass(frozen=True)
class Transaction:
    id: int
    submitter: int
    witness_ids: tuple[int, ...]
    attributes: AttributeVector | None
    truth_valid: int
    conflict_bits: tuple[int, ...]
    value: float
    fee: float
    submit_time: float
    genesis: bool = False
    replay_of: int | None = None

    def __post_init__(self):
        if len(self.witness_ids) != len(self.conflict_bits):
            raise ValueError("witness_ids and conflict_bits must have equal length")
        if self.genesis:
            return
        if not self.witness_ids:
            raise ValueError(f"transaction {self.id} has an empty witness set")
        if any(j >= self.id for j in self.witness_ids):
            raise ValueError(f"transaction {self.id} references a non-earlier witness")
        if len(set(self.witness_ids)) != len(self.witness_ids):
            raise ValueError(f"transaction {self.id} repeats a witness")
        if any(b not in (0, 1) for b in self.conflict_bits):
            raise ValueError("conflict bits must be 0 or 1")
        if self.truth_valid != int(not any(self.conflict_bits)):
            raise ValueError(
                f"transaction {self.id}: truth_valid disagrees with its conflict bits"
            )

    @property
    def witness_size(self):
        return len(self.witness_ids)

    def to_record(self):
        rec = asdict(self)
        rec["witness_ids"] = list(self.witness_ids)
        rec["conflict_bits"] = list(self.conflict_bits)
        if self.attributes is not None:
            rec["attributes"] = list(self.attributes.as_tuple())
            rec["attributes"][2] = int(self.attributes.a3)
        return rec

    @classmethod
    def from_record(cls, rec):
        attrs = rec.get("attributes")
        if attrs is not None:
            attrs = AttributeVector(*attrs)
        return cls(
            id=int(rec["id"]),
            submitter=int(rec["submitter"]),
            witness_ids=tuple(int(j) for j in rec["witness_ids"]),
            attributes=attrs,
            truth_valid=int(rec["truth_valid"]),
            conflict_bits=tuple(int(b) for b in rec["conflict_bits"]),
            value=float(rec["value"]),
            fee=float(rec["fee"]),
            submit_time=float(rec["submit_time"]),
            genesis=bool(rec.get("genesis", False)),
            replay_of=rec.get("replay_of"),
        )


@dataclass(frozen=True)
class Perception:
    """One validator's verdict on a (subject, witness) pair: 0 conflict, 1 clean."""

    source_validator: int
    subject: int
    witness: int
    verdict: int
    round: int


class NotCustodianError(LookupError):
    """A validator was asked to perceive a witness it does not store."""


@dataclass
class Ledger:
    """Transaction store plus confirmation state and witness custody.

    ``custodians[j]`` is the community that stored transaction ``j`` when it
    was confirmed. Mutation happens only between rounds.
    """

    transactions: dict[int, Transaction] = field(default_factory=dict)
    confirmed: dict[int, int] = field(default_factory=dict)
    custodians: dict[int, frozenset[int]] = field(default_factory=dict)
    _spent: set[int] = field(default_factory=set)
    _next_id: int = 0

    def next_id(self):
        return self._next_id

    def add(self, tx: Transaction):
        if tx.id in self.transactions:
            raise ValueError(f"duplicate transaction id {tx.id}")
        if tx.id < self._next_id:
            raise ValueError(f"transaction id {tx.id} is not increasing")
        for j in tx.witness_ids:
            if j not in self.transactions:
                raise LookupError(f"transaction {tx.id} references unknown witness {j}")
        self.transactions[tx.id] = tx
        self._next_id = tx.id + 1
        return tx

    def __getitem__(self, tx_id):
        try:
            return self.transactions[tx_id]
        except KeyError:
            raise LookupError(f"unknown transaction {tx_id}") from None

    def __contains__(self, tx_id):
        return tx_id in self.transactions

    def __len__(self):
        return len(self.transactions)

    def confirm(self, tx_id, custodians: Iterable[int], epoch=-1):
        tx = self[tx_id]
        self.confirmed[tx_id] = epoch
        self.custodians[tx_id] = frozenset(custodians)
        self._spent.update(tx.witness_ids)

    def is_confirmed(self, tx_id):
        return tx_id in self.confirmed

    def spent(self):
        return frozenset(self._spent)


def ground_truth_conflict(ledger: Ledger, ell, j):
    """Return 1 if transaction ``ell`` conflicts with its witness ``j``."""
    tx = ledger[ell]
    try:
        pos = tx.witness_ids.index(j)
    except ValueError:
        raise LookupError(f"{j} is not a witness of transaction {ell}") from None
    return tx.conflict_bits[pos]


def honest_perceive(ledger: Ledger, validator, ell, j, round_=0):
    custody = ledger.custodians.get(j, frozenset())
    if validator not in custody:
        raise NotCustodianError(f"validator {validator} does not store transaction {j}")
    verdict = 1 - ground_truth_conflict(ledger, ell, j)
    return Perception(validator, ell, j, verdict, round_)


def spent_set(ledger: Ledger):
    """Ids of every witness consumed by a confirmed transaction."""
    return ledger.spent()


def dump_transactions(transactions: Iterable[Transaction], path):
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for tx in transactions:
            fh.write(json.dumps(tx.to_record(), sort_keys=True) + "\n")
    return path


def load_transactions(path) -> Iterator[Transaction]:
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield Transaction.from_record(json.loads(line))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad transaction record ({exc})") from exc
