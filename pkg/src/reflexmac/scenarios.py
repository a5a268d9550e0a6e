"""Scenario catalog and configuration files.

Built-in scenarios s1..s5 mix legacy ALOHA/TDMA nodes with one or two
reflexive nodes; `dynamic` exercises topology changes mid-run. Scenario
files are flat JSON documents mirroring ScenarioConfig.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .agent import PrioritySpec

DEFAULT_WINDOW_SLOTS = 200
DEFAULT_PERIODS_PER_CYCLE = 3
DEFAULT_TOTAL_SLOTS = 60_000
DYNAMIC_TOTAL_SLOTS = 12_000
DEFAULT_ALOHA_Q = 0.2
DEFAULT_TDMA_FRAME = 10
DEFAULT_TDMA_SLOTS = (3, 5)
DEFAULT_RMA_P0 = 0.30
DEFAULT_HP_P0 = 0.50
DEFAULT_LP_P0 = 0.30
DEFAULT_THETA_HP = 0.01
DEFAULT_THETA_LP = -0.01
DEFAULT_EPSILON_HALF_WIDTH = 0.005

PRIORITY_THRESHOLDS = {"s3": (4.0, 6.0), "s4": (6.0, 8.0), "s5": (10.0, 15.0)}


@dataclass
class NodeSpec:
    kind: str  # tdma | aloha | fixed | rma
    q: float | None = None
    p: float | None = None
    frame_len: int | None = None
    assigned: tuple | None = None
    p_initial: float | None = None
    priority: PrioritySpec | None = None

    def __post_init__(self):
        if self.kind not in ("tdma", "aloha", "fixed", "rma"):
            raise ValueError(f"unknown node kind: {self.kind}")
        if self.kind == "tdma" and (self.frame_len is None or not self.assigned):
            raise ValueError("tdma node needs frame_len and assigned slots")
        if self.kind == "aloha" and self.q is None:
            raise ValueError("aloha node needs q")
        if self.kind == "fixed" and self.p is None:
            raise ValueError("fixed node needs p")
        if self.assigned is not None:
            self.assigned = tuple(sorted(self.assigned))


def aloha_spec(q: float = DEFAULT_ALOHA_Q) -> NodeSpec:
    return NodeSpec(kind="aloha", q=q)


def tdma_spec(
    frame_len: int = DEFAULT_TDMA_FRAME, assigned: tuple = DEFAULT_TDMA_SLOTS
) -> NodeSpec:
    return NodeSpec(kind="tdma", frame_len=frame_len, assigned=tuple(assigned))


def fixed_spec(p: float) -> NodeSpec:
    return NodeSpec(kind="fixed", p=p)


def rma_spec(p_initial: float | None = None) -> NodeSpec:
    return NodeSpec(kind="rma", p_initial=p_initial)


@dataclass
class DynamicEvent:
    slot: int
    action: str  # add | remove
    node: NodeSpec | None = None  # for add
    kind: str | None = None  # for remove

    def __post_init__(self):
        if self.action not in ("add", "remove"):
            raise ValueError(f"unknown event action: {self.action}")
        if self.action == "add" and self.node is None:
            raise ValueError("add event needs a node spec")
        if self.action == "remove" and self.kind is None:
            raise ValueError("remove event needs a node kind")


@dataclass
class ScenarioConfig:
    name: str
    nodes: list = field(default_factory=list)
    n_slots_per_period: int = DEFAULT_WINDOW_SLOTS
    periods_per_cycle: int = DEFAULT_PERIODS_PER_CYCLE
    total_slots: int = DEFAULT_TOTAL_SLOTS
    seed: int = 1
    mode: str = "normal"  # normal | priority
    metric_scope: str = "system"  # system | node
    backend: str = "scripted"  # scripted | remote
    dynamic_events: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_slots_per_period < 1 or self.periods_per_cycle < 1:
            raise ValueError("period and cycle lengths must be >= 1")
        if self.mode not in ("normal", "priority"):
            raise ValueError(f"unknown mode: {self.mode}")
        if self.metric_scope not in ("system", "node"):
            raise ValueError(f"unknown metric scope: {self.metric_scope}")
        slots = [e.slot for e in self.dynamic_events]
        if slots != sorted(slots) or len(set(slots)) != len(slots):
            raise ValueError("dynamic event slots must be strictly increasing")

    def rma_indices(self) -> list[int]:
        return [i for i, spec in enumerate(self.nodes) if spec.kind == "rma"]


BUILTIN_NAMES = ("s1", "s2", "s3", "s4", "s5", "dynamic")


def builtin_scenario(name: str) -> ScenarioConfig:
    if name == "s1":
        return ScenarioConfig(
            name="s1",
            nodes=[aloha_spec(), tdma_spec(), rma_spec()],
            metric_scope="system",
        )
    if name == "s2":
        return ScenarioConfig(
            name="s2",
            nodes=[aloha_spec(), aloha_spec(), aloha_spec(), tdma_spec(), rma_spec()],
            metric_scope="system",
        )
    if name == "s3":
        return ScenarioConfig(
            name="s3",
            nodes=[rma_spec(), rma_spec()],
            metric_scope="node",
        )
    if name == "s4":
        return ScenarioConfig(
            name="s4",
            nodes=[aloha_spec(), tdma_spec(), rma_spec(), rma_spec()],
            metric_scope="node",
        )
    if name == "s5":
        return ScenarioConfig(
            name="s5",
            nodes=[
                aloha_spec(),
                aloha_spec(),
                aloha_spec(),
                tdma_spec(),
                rma_spec(),
                rma_spec(),
            ],
            metric_scope="node",
        )
    if name == "dynamic":
        return ScenarioConfig(
            name="dynamic",
            nodes=[aloha_spec(), aloha_spec(), rma_spec()],
            metric_scope="system",
            total_slots=DYNAMIC_TOTAL_SLOTS,
            dynamic_events=[
                DynamicEvent(slot=3000, action="remove", kind="aloha"),
                DynamicEvent(slot=6000, action="add", node=aloha_spec()),
                DynamicEvent(slot=6000, action="add", node=aloha_spec()),
                DynamicEvent(slot=9000, action="add", node=tdma_spec()),
            ],
        )
    raise ValueError(f"unknown scenario: {name}")


def apply_priority_defaults(
    cfg: ScenarioConfig, thresholds: tuple | None = None
) -> ScenarioConfig:
    """Assign high/low priority specs to a two-RMA scenario.

    The first RMA node becomes high priority, the second low priority;
    thresholds come from the per-scenario table unless given explicitly.
    """
    rma = cfg.rma_indices()
    if len(rma) != 2:
        raise ValueError(
            f"priority mode needs exactly 2 rma nodes, scenario has {len(rma)}"
        )
    if thresholds is None:
        thresholds = PRIORITY_THRESHOLDS.get(cfg.name)
    if thresholds is None:
        raise ValueError(f"no priority thresholds known for scenario {cfg.name!r}")
    th_hp, th_lp = thresholds
    hp = PrioritySpec(
        priority="High",
        p_initial=DEFAULT_HP_P0,
        theta=DEFAULT_THETA_HP,
        epsilon_half_width=DEFAULT_EPSILON_HALF_WIDTH,
        aoi_threshold=float(th_hp),
    )
    lp = PrioritySpec(
        priority="Low",
        p_initial=DEFAULT_LP_P0,
        theta=DEFAULT_THETA_LP,
        epsilon_half_width=DEFAULT_EPSILON_HALF_WIDTH,
        aoi_threshold=float(th_lp),
    )
    if not hp.p_initial > lp.p_initial:
        raise ValueError("high-priority initial probability must exceed low-priority")
    nodes = list(cfg.nodes)
    nodes[rma[0]] = replace(nodes[rma[0]], priority=hp, p_initial=hp.p_initial)
    nodes[rma[1]] = replace(nodes[rma[1]], priority=lp, p_initial=lp.p_initial)
    return replace(cfg, nodes=nodes, mode="priority")


# -- scenario files ----------------------------------------------------------


def _node_to_dict(spec: NodeSpec) -> dict:
    d = {"kind": spec.kind}
    for key in ("q", "p", "frame_len", "p_initial"):
        value = getattr(spec, key)
        if value is not None:
            d[key] = value
    if spec.assigned is not None:
        d["assigned"] = list(spec.assigned)
    if spec.priority is not None:
        d["priority"] = asdict(spec.priority)
    return d


def _node_from_dict(d: dict) -> NodeSpec:
    d = dict(d)
    if "assigned" in d:
        d["assigned"] = tuple(d["assigned"])
    if d.get("priority") is not None:
        d["priority"] = PrioritySpec(**d["priority"])
    return NodeSpec(**d)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "name": cfg.name,
        "nodes": [_node_to_dict(n) for n in cfg.nodes],
        "n_slots_per_period": cfg.n_slots_per_period,
        "periods_per_cycle": cfg.periods_per_cycle,
        "total_slots": cfg.total_slots,
        "seed": cfg.seed,
        "mode": cfg.mode,
        "metric_scope": cfg.metric_scope,
        "backend": cfg.backend,
        "dynamic_events": [
            {
                "slot": e.slot,
                "action": e.action,
                **({"node": _node_to_dict(e.node)} if e.node else {}),
                **({"kind": e.kind} if e.kind else {}),
            }
            for e in cfg.dynamic_events
        ],
    }


def scenario_from_dict(d: dict) -> ScenarioConfig:
    d = dict(d)
    d["nodes"] = [_node_from_dict(n) for n in d.get("nodes", [])]
    d["dynamic_events"] = [
        DynamicEvent(
            slot=e["slot"],
            action=e["action"],
            node=_node_from_dict(e["node"]) if "node" in e else None,
            kind=e.get("kind"),
        )
        for e in d.get("dynamic_events", [])
    ]
    return ScenarioConfig(**d)


def save_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(
        json.dumps(scenario_to_dict(cfg), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_scenario(path) -> ScenarioConfig:
    return scenario_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def resolve_scenario(name_or_path: str) -> ScenarioConfig:
    """Builtin name, else a path to a scenario file."""
    if name_or_path in BUILTIN_NAMES:
        return builtin_scenario(name_or_path)
    if Path(name_or_path).exists():
        return load_scenario(name_or_path)
    raise ValueError(f"unknown scenario or missing file: {name_or_path}")
