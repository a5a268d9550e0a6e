"""Legacy node behaviors: scheduled TDMA, slotted ALOHA, and fixed-probability
baselines used by the oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SimNode


@dataclass(frozen=True)
class TdmaConfig:
    frame_len: int
    assigned: frozenset

    def __post_init__(self):
        if self.frame_len < 1:
            raise ValueError("frame_len must be >= 1")
        if not self.assigned:
            raise ValueError("assigned slot set must be non-empty")
        if not all(1 <= pos <= self.frame_len for pos in self.assigned):
            raise ValueError("assigned positions must lie in 1..frame_len")


@dataclass(frozen=True)
class AlohaConfig:
    q: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0, 1]")


@dataclass(frozen=True)
class FixedProbConfig:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")


def tdma_decide(cfg: TdmaConfig, slot: int) -> bool:
    """Transmit iff the in-frame position (1-based) is assigned."""
    if slot < 1:
        raise ValueError("slot indices start at 1")
    return ((slot - 1) % cfg.frame_len) + 1 in cfg.assigned


def aloha_decide(cfg: AlohaConfig, rng: np.random.Generator) -> bool:
    """Bernoulli(q) draw from the node-local stream."""
    return rng.random() < cfg.q


class TdmaNode(SimNode):
    kind = "tdma"

    def __init__(self, node_id: int, cfg: TdmaConfig):
        super().__init__(node_id)
        self.cfg = cfg

    def decide(self, slot: int) -> bool:
        return tdma_decide(self.cfg, slot)


class AlohaNode(SimNode):
    kind = "aloha"

    def __init__(self, node_id: int, cfg: AlohaConfig, rng: np.random.Generator):
        super().__init__(node_id)
        self.cfg = cfg
        self.rng = rng

    def decide(self, slot: int) -> bool:
        return aloha_decide(self.cfg, self.rng)


class FixedProbNode(SimNode):
    kind = "fixed"

    def __init__(self, node_id: int, cfg: FixedProbConfig, rng: np.random.Generator):
        super().__init__(node_id)
        self.cfg = cfg
        self.rng = rng

    def decide(self, slot: int) -> bool:
        return self.rng.random() < self.cfg.p
