"""Run orchestration: build a simulation from a scenario config, drive the
slot loop with dynamic topology events, and write per-period CSV plus a
summary JSON. Runs under the scripted backend are bit-reproducible for a
given config and seed."""

from __future__ import annotations

import json
import subprocess
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .agent import Policy, RmaNode
from .backend import ScriptedBackend
from .channel import Simulation, format_slot_log_record
from .nodes import (
    AlohaConfig,
    AlohaNode,
    FixedProbConfig,
    FixedProbNode,
    TdmaConfig,
    TdmaNode,
)
from .rng import node_stream
from .scenarios import (
    DEFAULT_RMA_P0,
    NodeSpec,
    ScenarioConfig,
    scenario_to_dict,
)

CSV_HEADER = (
    "period,slot_end,node_id,p_executing,delta_p,window_mean_aoi,"
    "cnt_my_success,cnt_my_collision,cnt_other_success,cnt_other_collision,cnt_idle"
)

FINAL_WINDOW_FRACTION = 0.2


def build_node(spec: NodeSpec, node_id: int, seed: int, backend, cfg: ScenarioConfig,
               no_observe: bool = False, no_reflection: bool = False):
    if spec.kind == "aloha":
        return AlohaNode(node_id, AlohaConfig(q=spec.q), node_stream(seed, node_id))
    if spec.kind == "fixed":
        return FixedProbNode(node_id, FixedProbConfig(p=spec.p), node_stream(seed, node_id))
    if spec.kind == "tdma":
        return TdmaNode(node_id, TdmaConfig(spec.frame_len, frozenset(spec.assigned)))
    if spec.kind == "rma":
        p0 = spec.p_initial if spec.p_initial is not None else DEFAULT_RMA_P0
        return RmaNode(
            node_id,
            node_stream(seed, node_id),
            backend,
            policy=Policy(p_global=p0),
            window_slots=cfg.n_slots_per_period,
            periods_per_cycle=cfg.periods_per_cycle,
            metric_scope=cfg.metric_scope,
            priority=spec.priority,
            no_observe=no_observe,
            no_reflection=no_reflection,
        )
    raise ValueError(f"unknown node kind: {spec.kind}")


@dataclass
class RunSummary:
    scenario: str
    seed: int
    total_slots: int
    per_node: list
    system_sum: float
    system_mean: float
    final_window_system_mean: float
    final_window_slots: int
    policy_trajectory: list
    threshold_crossings: dict
    backend_failures: int
    node_count_trajectory: list
    reports_emitted: int
    reflections_emitted: int
    config: dict
    build_stamp: str

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "total_slots": self.total_slots,
            "per_node": self.per_node,
            "system_sum": self.system_sum,
            "system_mean": self.system_mean,
            "final_window_system_mean": self.final_window_system_mean,
            "final_window_slots": self.final_window_slots,
            "policy_trajectory": self.policy_trajectory,
            "threshold_crossings": self.threshold_crossings,
            "backend_failures": self.backend_failures,
            "node_count_trajectory": self.node_count_trajectory,
            "reports_emitted": self.reports_emitted,
            "reflections_emitted": self.reflections_emitted,
            "config": self.config,
            "build_stamp": self.build_stamp,
        }

    def primary_metric(self) -> float:
        """Headline number used by compare(): end-of-run system mean for
        system-scope runs, mean over the reflexive nodes' own averages for
        node-scope runs."""
        if self.config.get("metric_scope") == "node":
            values = [n["avg_aoi"] for n in self.per_node if n["kind"] == "rma"]
            return sum(values) / len(values)
        return self.system_mean


def build_stamp() -> str:
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
        )
        if described.returncode == 0:
            return f"reflexmac-{__version__}+g{described.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"reflexmac-{__version__}"


class _Metrics:
    """Streaming aggregates: whole-run and final-window means, threshold
    crossings, and the per-period CSV rows."""

    def __init__(self, cfg: ScenarioConfig, total_slots: int):
        self.cfg = cfg
        self.final_start = total_slots - int(total_slots * FINAL_WINDOW_FRACTION) + 1
        self.final_slots = 0
        self.final_sum = {}
        self.final_system_sum = 0.0
        self.csv_rows = []
        self.policy_trajectory = []
        self.crossings = {}
        self._rings = {}

    def watch_threshold(self, node_id: int, threshold: float, window: int):
        self._rings[node_id] = (deque(maxlen=window), threshold, window)

    def on_frame(self, frame):
        for nid, delta in frame.per_node_aoi.items():
            ring = self._rings.get(nid)
            if ring is not None and nid not in self.crossings:
                buf, threshold, window = ring
                buf.append(delta)
                if len(buf) == window and sum(buf) / window <= threshold:
                    self.crossings[nid] = frame.slot
        if frame.slot >= self.final_start:
            self.final_slots += 1
            mean = sum(frame.per_node_aoi.values()) / len(frame.per_node_aoi)
            self.final_system_sum += mean
            for nid, delta in frame.per_node_aoi.items():
                entry = self.final_sum.get(nid)
                if entry is None:
                    self.final_sum[nid] = [delta, 1]
                else:
                    entry[0] += delta
                    entry[1] += 1

    def on_report(self, node, report, delta_p):
        self.csv_rows.append(
            f"{report.period},{report.period * node.window_slots},{node.node_id},"
            f"{report.p_executing:.6f},{delta_p:.6f},{report.own_mean_aoi:.3f},"
            f"{report.state_counts['my_success']},{report.state_counts['my_collision']},"
            f"{report.state_counts['other_success']},{report.state_counts['other_collision']},"
            f"{report.state_counts['idle']}"
        )

    def on_cycle(self, node, cycle, p_global):
        self.policy_trajectory.append(
            {"cycle": cycle, "node_id": node.node_id, "p": round(p_global, 10)}
        )


def run(
    cfg: ScenarioConfig,
    out_dir=None,
    seed: int | None = None,
    total_slots: int | None = None,
    backend=None,
    no_observe: bool = False,
    no_reflection: bool = False,
    slot_log: bool = False,
) -> RunSummary:
    seed = cfg.seed if seed is None else seed
    total_slots = cfg.total_slots if total_slots is None else total_slots
    backend = backend if backend is not None else ScriptedBackend()

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    log_lines = [] if slot_log else None
    sim = Simulation()
    metrics = _Metrics(cfg, total_slots)
    rma_nodes = []
    for node_id, spec in enumerate(cfg.nodes):
        node = build_node(spec, node_id, seed, backend, cfg, no_observe, no_reflection)
        sim.add_node(node)
        if isinstance(node, RmaNode):
            rma_nodes.append(node)
            node.on_report = metrics.on_report
            node.on_cycle = metrics.on_cycle
            if node.priority is not None:
                metrics.watch_threshold(
                    node_id, node.priority.aoi_threshold, cfg.n_slots_per_period
                )

    node_kinds = {node_id: spec.kind for node_id, spec in enumerate(cfg.nodes)}
    node_counts = [(0, len(sim.nodes))]
    events = list(cfg.dynamic_events)
    event_idx = 0
    for slot in range(1, total_slots + 1):
        while event_idx < len(events) and events[event_idx].slot == slot:
            event = events[event_idx]
            event_idx += 1
            if event.action == "remove":
                victims = [
                    nid
                    for nid in sim.active_ids()
                    if node_kinds[nid] == event.kind
                ]
                if not victims:
                    raise ValueError(
                        f"no active {event.kind} node to remove at slot {slot}"
                    )
                sim.remove_node(victims[0])
            else:
                new_id = sim.fresh_id()
                node_kinds[new_id] = event.node.kind
                sim.add_node(
                    build_node(event.node, new_id, seed, backend, cfg,
                               no_observe, no_reflection)
                )
            node_counts.append((slot, len(sim.nodes)))
        frame, record = sim.step()
        metrics.on_frame(frame)
        if log_lines is not None:
            log_lines.append(format_slot_log_record(record, sorted(record.decisions)))

    per_node = []
    for nid in sorted(sim.trackers):
        tracker = sim.trackers[nid]
        active = nid in sim.nodes
        final_entry = metrics.final_sum.get(nid)
        per_node.append(
            {
                "node_id": nid,
                "kind": node_kinds[nid],
                "active_at_end": active,
                "avg_aoi": tracker.average(),
                "final_window_mean_aoi": (
                    final_entry[0] / final_entry[1] if final_entry else None
                ),
                "slots_counted": tracker.slots_counted,
            }
        )
    active_avgs = [
        sim.trackers[nid].average() for nid in sorted(sim.nodes)
    ]
    system_sum = sum(active_avgs)
    crossings = {}
    for node in rma_nodes:
        if node.priority is not None:
            crossings[str(node.node_id)] = metrics.crossings.get(node.node_id)

    summary = RunSummary(
        scenario=cfg.name,
        seed=seed,
        total_slots=total_slots,
        per_node=per_node,
        system_sum=system_sum,
        system_mean=system_sum / len(active_avgs),
        final_window_system_mean=metrics.final_system_sum / metrics.final_slots,
        final_window_slots=metrics.final_slots,
        policy_trajectory=metrics.policy_trajectory,
        threshold_crossings=crossings,
        backend_failures=sum(n.backend_failures for n in rma_nodes),
        node_count_trajectory=node_counts,
        reports_emitted=sum(n.reports_emitted for n in rma_nodes),
        reflections_emitted=sum(n.reflections_emitted for n in rma_nodes),
        config={
            **scenario_to_dict(cfg),
            "no_observe": no_observe,
            "no_reflection": no_reflection,
            "seed": seed,
            "total_slots": total_slots,
        },
        build_stamp=build_stamp(),
    )

    if out_path is not None:
        (out_path / "periods.csv").write_text(
            CSV_HEADER + "\n" + "".join(row + "\n" for row in metrics.csv_rows),
            encoding="utf-8",
        )
        (out_path / "summary.json").write_text(
            json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        if log_lines is not None:
            (out_path / "slots.log").write_text(
                "".join(line + "\n" for line in log_lines), encoding="utf-8"
            )
    return summary


def load_summary(path) -> RunSummary:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunSummary(**d)


def compare(summaries: list, labels: list | None = None) -> tuple[str, str]:
    """Percentage deltas of the headline metric against the first run.

    Returns (aligned text table, CSV text). Negative means the candidate
    improved on the baseline.
    """
    if len(summaries) < 2:
        raise ValueError("compare needs at least two runs")
    scopes = {s.config.get("metric_scope") for s in summaries}
    if len(scopes) != 1:
        raise ValueError(f"mismatched metric scopes: {sorted(scopes)}")
    if labels is None:
        labels = [f"{s.scenario}#{i}" for i, s in enumerate(summaries)]
    base = summaries[0].primary_metric()
    rows = []
    for label, summary in zip(labels, summaries):
        value = summary.primary_metric()
        pct = (value - base) / base * 100.0
        rows.append((label, value, pct))
    width = max(len(r[0]) for r in rows)
    text_lines = [f"{'run':<{width}}  {'final_aoi':>12}  {'vs_baseline':>12}"]
    csv_lines = ["run,final_aoi,pct_vs_baseline"]
    for label, value, pct in rows:
        text_lines.append(f"{label:<{width}}  {value:>12.4f}  {pct:>+11.1f}%")
        csv_lines.append(f"{label},{value:.6f},{pct:+.1f}")
    return "\n".join(text_lines), "\n".join(csv_lines)
