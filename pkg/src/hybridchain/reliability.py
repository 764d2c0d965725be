"""End-of-epoch reliability settlement with forgetting factors."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .validation import ConfigError


@dataclass(frozen=True)
class ReliabilityParams:
    zeta1: float = 0.98
    zeta2: float = 0.9
    literal_xor: bool = False

    def __post_init__(self):
        for name in ("zeta1", "zeta2"):
            z = getattr(self, name)
            if not 0.0 < z < 1.0:
                raise ConfigError(f"{name} must lie strictly between 0 and 1, got {z}")


def majority_perception(verdicts):
    """Strict-majority verdict of a non-empty list; ``None`` on a tie."""
    verdicts = list(verdicts)
    if not verdicts:
        raise ValueError("majority of an empty verdict list")
    ones = sum(1 for q in verdicts if q == 1)
    zeros = len(verdicts) - ones
    if ones > zeros:
        return 1
    if zeros > ones:
        return 0
    return None


@dataclass
class PairVerdictBook:
    """Perceptions sent during one epoch, grouped by (subject, witness)."""

    entries: dict[tuple[int, int], list[tuple[int, int]]] = field(
        default_factory=lambda: defaultdict(list)
    )

    def record(self, subject, witness, validator, verdict):
        self.entries[(subject, witness)].append((validator, verdict))

    def record_many(self, subject, witness_ids, validators, verdicts):
        for j, k, q in zip(witness_ids, validators, verdicts):
            self.entries[(subject, int(j))].append((int(k), int(q)))

    def majorities(self):
        return {pair: majority_perception(q for _, q in sent) for pair, sent in self.entries.items()}

    def sent_by(self):
        """validator -> list of (verdict, majority-or-None)."""
        majority = self.majorities()
        out = defaultdict(list)
        for pair, sent in self.entries.items():
            for k, q in sent:
                out[k].append((q, majority[pair]))
        return out


def agreement_fraction(sent, literal_xor=False):
    """Share of settled perceptions that match the pair majority.

    Pairs without a strict majority are ignored. Returns ``None`` when
    nothing is left to score. ``literal_xor`` scores disagreement instead.
    """
    scored = [(q, m) for q, m in sent if m is not None]
    if not scored:
        return None
    if literal_xor:
        return sum(q ^ m for q, m in scored) / len(scored)
    return sum(q == m for q, m in scored) / len(scored)


def update_validator_reliability(rho_prev, sent, params: ReliabilityParams = ReliabilityParams()):
    """Blend the previous reliability with this epoch's agreement rate.

    ``sent`` is the validator's ``(verdict, majority)`` list for the epoch.
    """
    frac = agreement_fraction(sent, params.literal_xor)
    if frac is None:
        return float(rho_prev)
    return params.zeta1 * rho_prev + (1.0 - params.zeta1) * frac


def update_user_reliability(rho_prev, outcomes, params: ReliabilityParams = ReliabilityParams()):
    outcomes = list(outcomes)
    if not outcomes:
        return float(rho_prev)
    return params.zeta2 * rho_prev + (1.0 - params.zeta2) * (sum(outcomes) / len(outcomes))


def settle_validators(rho, book: PairVerdictBook, params: ReliabilityParams = ReliabilityParams()):
    """Apply the validator update to every sender in ``book``; returns a new array."""
    new = np.array(rho, dtype=float, copy=True)
    for k, sent in book.sent_by().items():
        new[k] = update_validator_reliability(rho[k], sent, params)
    return new


def settle_users(rho, outcomes_by_user, params: ReliabilityParams = ReliabilityParams()):
    new = np.array(rho, dtype=float, copy=True)
    for s, outcomes in outcomes_by_user.items():
        new[s] = update_user_reliability(rho[s], outcomes, params)
    return new
