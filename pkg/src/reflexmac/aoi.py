"""Channel outcomes and age-of-information accounting.

Conventions used throughout the simulator:

* Slots are indexed from 1.
* A node's age delta is sampled at the START of each slot using the
  delivery timestamp sigma from before that slot, so a delivery in slot n
  yields delta = 1 at slot n+1 and the age floor is 1, never 0.
* sigma starts one slot before a node's first active slot (0 for nodes
  present from the beginning), so the first sampled delta is 1 even for
  nodes that join mid-run.
* Age sums accumulate in exact integer slots; division happens once at
  query time in double precision, so long runs cannot drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

NodeId = int


class OutcomeKind(Enum):
    IDLE = "idle"
    SUCCESS = "success"
    COLLISION = "collision"


@dataclass(frozen=True)
class SlotOutcome:
    """Resolution of one slot: idle, a single winner, or a collision set."""

    kind: OutcomeKind
    winner: NodeId | None = None
    transmitters: frozenset = frozenset()

    def __post_init__(self):
        if self.kind is OutcomeKind.IDLE:
            if self.winner is not None or self.transmitters:
                raise ValueError("idle outcome cannot carry transmitters")
        elif self.kind is OutcomeKind.SUCCESS:
            if self.winner is None:
                raise ValueError("success outcome needs a winner")
            object.__setattr__(self, "transmitters", frozenset((self.winner,)))
        elif self.kind is OutcomeKind.COLLISION:
            if len(self.transmitters) < 2:
                raise ValueError("collision needs at least two transmitters")
            if self.winner is not None:
                raise ValueError("collision has no winner")

    @staticmethod
    def idle() -> "SlotOutcome":
        return SlotOutcome(OutcomeKind.IDLE)

    @staticmethod
    def success(winner: NodeId) -> "SlotOutcome":
        return SlotOutcome(OutcomeKind.SUCCESS, winner=winner)

    @staticmethod
    def collision(transmitters: Iterable[NodeId]) -> "SlotOutcome":
        return SlotOutcome(OutcomeKind.COLLISION, transmitters=frozenset(transmitters))


class SlotState(Enum):
    """Per-node classification of one slot, five-way."""

    MY_SUCCESS = "my_success"
    MY_COLLISION = "my_collision"
    OTHER_SUCCESS = "other_success"
    OTHER_COLLISION = "other_collision"
    IDLE = "idle"


def classify_slot(node: NodeId, transmitted: bool, outcome: SlotOutcome) -> SlotState:
    """Classify one slot from one node's perspective.

    Raises ValueError when `transmitted` contradicts the outcome's
    transmitter membership.
    """
    if transmitted:
        if outcome.kind is OutcomeKind.SUCCESS and outcome.winner == node:
            return SlotState.MY_SUCCESS
        if outcome.kind is OutcomeKind.COLLISION and node in outcome.transmitters:
            return SlotState.MY_COLLISION
        raise ValueError(
            f"node {node} transmitted but is absent from outcome {outcome.kind.value}"
        )
    if node in outcome.transmitters:
        raise ValueError(f"node {node} did not transmit but appears in the outcome")
    if outcome.kind is OutcomeKind.SUCCESS:
        return SlotState.OTHER_SUCCESS
    if outcome.kind is OutcomeKind.COLLISION:
        return SlotState.OTHER_COLLISION
    return SlotState.IDLE


def instantaneous_aoi(slot: int, sigma: int) -> int:
    """Age at `slot` given the latest delivery timestamp `sigma`."""
    if sigma >= slot:
        raise ValueError(f"sigma {sigma} must precede slot {slot}")
    return slot - sigma


@dataclass
class AoiTracker:
    """Incremental per-node age accounting.

    `sigma` is the slot index of the latest delivered packet, `delta` the
    age sampled at the most recent slot, `sum_delta` the exact integer
    running sum and `slots_counted` the number of sampled slots.
    """

    sigma: int = 0
    delta: int = 0
    sum_delta: int = 0
    slots_counted: int = 0
    start_slot: int = 1

    @staticmethod
    def starting_at(first_slot: int) -> "AoiTracker":
        """Tracker for a node whose first active slot is `first_slot`."""
        return AoiTracker(sigma=first_slot - 1, start_slot=first_slot)

    def advance(self, slot: int, delivered: bool) -> None:
        """Sample the age at `slot`, then apply a delivery at slot end."""
        expected = self.start_slot + self.slots_counted
        if slot != expected:
            raise ValueError(f"out-of-order slot {slot}, expected {expected}")
        self.delta = slot - self.sigma
        self.sum_delta += self.delta
        self.slots_counted += 1
        if delivered:
            self.sigma = slot

    def average(self) -> float:
        if self.slots_counted < 1:
            raise ValueError("no samples")
        return self.sum_delta / self.slots_counted


def node_average_aoi(tracker: AoiTracker) -> float:
    return tracker.average()


@dataclass(frozen=True)
class SystemAoi:
    per_node: tuple
    sum: float
    mean: float


def system_aoi(trackers: Iterable[AoiTracker]) -> SystemAoi:
    """Aggregate node averages: `sum` adds them, `mean` divides by the count."""
    trackers = list(trackers)
    if not trackers:
        raise ValueError("no trackers")
    counts = {t.slots_counted for t in trackers}
    if len(counts) != 1:
        raise ValueError(f"mismatched slot counts: {sorted(counts)}")
    per_node = tuple(t.average() for t in trackers)
    total = math.fsum(per_node)  # exactly rounded, so permutation-invariant
    return SystemAoi(per_node=per_node, sum=total, mean=total / len(per_node))


def recompute_from_log(
    node: NodeId,
    decisions_log: Iterable[Mapping[NodeId, bool]],
    start_slot: int = 1,
) -> tuple[int, int]:
    """Brute-force (sum_delta, slots_counted) for one node from a decision log.

    Independent of AoiTracker: walks the log, derives each slot's outcome
    from the raw decisions and accumulates ages directly.
    """
    sigma = start_slot - 1
    total = 0
    n = 0
    for offset, decisions in enumerate(decisions_log):
        slot = start_slot + offset
        total += slot - sigma
        n += 1
        transmitters = [i for i, tx in decisions.items() if tx]
        if len(transmitters) == 1 and transmitters[0] == node:
            sigma = slot
    return total, n
