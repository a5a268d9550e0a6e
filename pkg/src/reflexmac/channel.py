"""Shared collision channel and the sequential slot loop.

The access point resolves all synchronized transmissions each slot and
broadcasts a feedback frame at the end of every slot (feedback period 1):
coarser feedback would leave the per-node five-way slot classification
undefined for the observation statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

from .aoi import (
    AoiTracker,
    NodeId,
    SlotOutcome,
    SlotState,
    classify_slot,
)


def resolve_slot(decisions: Mapping[NodeId, bool]) -> SlotOutcome:
    """Deterministic channel resolution: 0 transmitters -> idle,
    1 -> success, 2+ -> collision."""
    if not decisions:
        raise ValueError("no active nodes")
    transmitters = [nid for nid, tx in decisions.items() if tx]
    if not transmitters:
        return SlotOutcome.idle()
    if len(transmitters) == 1:
        return SlotOutcome.success(transmitters[0])
    return SlotOutcome.collision(transmitters)


@dataclass(frozen=True)
class FeedbackFrame:
    slot: int
    outcome: SlotOutcome
    per_node_aoi: dict
    per_node_state: dict


@dataclass(frozen=True)
class SlotLogRecord:
    slot: int
    decisions: dict
    outcome: SlotOutcome


class SimNode:
    """Base node: subclasses implement decide(); on_feedback is optional."""

    kind = "base"

    def __init__(self, node_id: NodeId):
        self.node_id = node_id

    def decide(self, slot: int) -> bool:
        raise NotImplementedError

    def on_feedback(self, frame: FeedbackFrame) -> None:
        pass


class Simulation:
    """Single-owner sequential slot loop over a set of nodes.

    Nodes are queried in ascending id order (the order cannot affect the
    outcome, see resolve_slot). Each node's tracker records a delivery
    exactly when that node's slot classified as MY_SUCCESS.
    """

    def __init__(self, slot_log_sink: Callable[[SlotLogRecord], None] | None = None):
        self.nodes: dict[NodeId, SimNode] = {}
        self.trackers: dict[NodeId, AoiTracker] = {}
        self.slot: int = 0
        self.slot_log_sink = slot_log_sink
        self._next_id: int = 0

    def add_node(self, node: SimNode) -> None:
        """Register a node; its first active slot is the next one."""
        nid = node.node_id
        if nid in self.trackers:
            raise ValueError(f"node id {nid} already used in this run")
        self.nodes[nid] = node
        self.trackers[nid] = AoiTracker.starting_at(self.slot + 1)
        self._next_id = max(self._next_id, nid + 1)

    def remove_node(self, node_id: NodeId) -> SimNode:
        # tracker entry is kept so the node's final averages stay queryable
        # and the id is never reused
        node = self.nodes.pop(node_id)
        return node

    def fresh_id(self) -> NodeId:
        return self._next_id

    def active_ids(self) -> list[NodeId]:
        return sorted(self.nodes)

    def step(self) -> tuple[FeedbackFrame, SlotLogRecord]:
        if not self.nodes:
            raise ValueError("no active nodes")
        slot = self.slot + 1
        decisions: dict[NodeId, bool] = {}
        for nid in sorted(self.nodes):
            try:
                decisions[nid] = bool(self.nodes[nid].decide(slot))
            except Exception as exc:
                raise RuntimeError(
                    f"decision callback failed for node {nid} at slot {slot}"
                ) from exc
        outcome = resolve_slot(decisions)
        per_node_state = {
            nid: classify_slot(nid, decisions[nid], outcome) for nid in decisions
        }
        per_node_aoi = {}
        for nid in decisions:
            tracker = self.trackers[nid]
            tracker.advance(slot, per_node_state[nid] is SlotState.MY_SUCCESS)
            per_node_aoi[nid] = tracker.delta
        frame = FeedbackFrame(
            slot=slot,
            outcome=outcome,
            per_node_aoi=per_node_aoi,
            per_node_state=per_node_state,
        )
        for nid in sorted(self.nodes):
            self.nodes[nid].on_feedback(frame)
        record = SlotLogRecord(slot=slot, decisions=decisions, outcome=outcome)
        if self.slot_log_sink is not None:
            self.slot_log_sink(record)
        self.slot = slot
        return frame, record

    def run(self, n_slots: int) -> None:
        for _ in range(n_slots):
            self.step()


def format_slot_log_record(record: SlotLogRecord, active_ids: list[NodeId]) -> str:
    """One line per slot: slot, decision bitmap (ascending id), outcome kind,
    winner or collision set."""
    bitmap = "".join("1" if record.decisions.get(nid) else "0" for nid in active_ids)
    out = record.outcome
    if out.kind.value == "success":
        detail = str(out.winner)
    elif out.kind.value == "collision":
        detail = "|".join(str(i) for i in sorted(out.transmitters))
    else:
        detail = ""
    return f"{record.slot},{bitmap},{out.kind.value},{detail}"
