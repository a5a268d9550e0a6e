"""Dual-candidate reflection collection and dataset export.

At each reflection boundary the world state (trackers, memories, policies,
and the counter-based random streams) is snapshotted; the primary and an
alternate reflection candidate are each evaluated for one full cycle from
that snapshot under identical draws, and the candidate with the larger
age reduction is labeled high quality. The run then continues along the
primary branch. Exported files are newline-delimited JSON; training itself
happens in external frameworks.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .agent import RmaNode
from .backend import ScriptedBackend, load_template, render_prompt
from .channel import Simulation
from .runner import build_node
from .scenarios import ScenarioConfig


def compute_reward(aoi_before: float, aoi_after: float) -> float:
    """Age reduction achieved by a reflection: before minus after,
    positive when the age improved.

    The difference is rounded at 1e-12 to cancel binary representation
    noise; inputs are means of exact integer slot sums, so the rounded
    value is the exact decimal difference.
    """
    if not (aoi_before >= 0 and aoi_after >= 0):
        raise ValueError("ages must be finite and non-negative")
    return round(aoi_before - aoi_after, 12)


@dataclass(frozen=True)
class RewardSample:
    context: str
    reflection_text: str
    aoi_before: float
    aoi_after: float
    reward: float
    scope: str  # system | node
    label: str  # high_quality | low_quality

    def __post_init__(self):
        if self.reward != compute_reward(self.aoi_before, self.aoi_after):
            raise ValueError("reward must equal aoi_before - aoi_after")
        if self.scope not in ("system", "node"):
            raise ValueError("scope must be system or node")
        if self.label not in ("high_quality", "low_quality"):
            raise ValueError("bad label")


@dataclass(frozen=True)
class PreferencePair:
    prompt: str
    chosen: str
    rejected: str
    chosen_reward: float
    rejected_reward: float

    def __post_init__(self):
        if not self.chosen_reward > self.rejected_reward:
            raise ValueError("chosen candidate must strictly out-reward rejected")


class _AlternateBackend:
    """Delegates to the wrapped backend but requests the alternate
    reflection candidate at cycle boundaries."""

    def __init__(self, inner):
        self.inner = inner

    def observe(self, report, prev, priority=None):
        return self.inner.observe(report, prev, priority=priority)

    def reflect_decide(self, *args, **kwargs):
        kwargs["alternate"] = True
        return self.inner.reflect_decide(*args, **kwargs)


def _scope_value(frame, scope: str, node_id: int) -> float:
    if scope == "node":
        return float(frame.per_node_aoi[node_id])
    return sum(frame.per_node_aoi.values()) / len(frame.per_node_aoi)


def collect_dual_candidates(
    cfg: ScenarioConfig,
    n_collections: int,
    seed: int | None = None,
    backend=None,
) -> tuple[list, list]:
    """Run the scenario collecting one candidate pair per reflection cycle.

    Returns (reward samples, preference pairs). Ties break toward the
    primary candidate for labeling and are excluded from preference pairs.
    Requires a static scenario with at least one reflexive node; the first
    one is the collection target.
    """
    if cfg.dynamic_events:
        raise ValueError("dual-candidate collection requires a static scenario")
    if not cfg.rma_indices():
        raise ValueError("scenario has no rma node")
    seed = cfg.seed if seed is None else seed
    backend = backend if backend is not None else ScriptedBackend()

    sim = Simulation()
    target_id = cfg.rma_indices()[0]
    for node_id, spec in enumerate(cfg.nodes):
        sim.add_node(build_node(spec, node_id, seed, backend, cfg))
    target = sim.nodes[target_id]
    assert isinstance(target, RmaNode)

    cycle_len = cfg.n_slots_per_period * cfg.periods_per_cycle
    scope = cfg.metric_scope
    mode = "priority" if cfg.mode == "priority" else "normal"
    reflect_tpl = load_template("reflect", mode)

    samples: list[RewardSample] = []
    pairs: list[PreferencePair] = []
    pending = None  # (prompt, text_a, before, after_b, text_b)

    def finalize(after_a: float):
        prompt, text_a, before, after_b, text_b = pending
        reward_a = compute_reward(before, after_a)
        reward_b = compute_reward(before, after_b)
        a_high = reward_a >= reward_b  # tie goes to the primary candidate
        samples.append(
            RewardSample(prompt, text_a, before, after_a, reward_a, scope,
                         "high_quality" if a_high else "low_quality")
        )
        samples.append(
            RewardSample(prompt, text_b, before, after_b, reward_b, scope,
                         "low_quality" if a_high else "high_quality")
        )
        if reward_a != reward_b:
            chosen, rejected = (
                (text_a, text_b) if reward_a > reward_b else (text_b, text_a)
            )
            pairs.append(
                PreferencePair(
                    prompt,
                    chosen,
                    rejected,
                    max(reward_a, reward_b),
                    min(reward_a, reward_b),
                )
            )

    for window in range(1, n_collections + 2):
        window_sum = 0.0
        for _ in range(cycle_len - 1):
            frame, _ = sim.step()
            window_sum += _scope_value(frame, scope, target_id)
        collecting = window <= n_collections
        snap = copy.deepcopy(sim) if collecting else None
        frame, _ = sim.step()  # boundary slot: reflection fires here
        window_sum += _scope_value(frame, scope, target_id)
        window_mean = window_sum / cycle_len
        if pending is not None:
            finalize(window_mean)
            pending = None
        if collecting:
            text_a = target.memory.reflections[-1].text
            prompt = render_prompt(reflect_tpl, target.last_cycle_inputs)
            # counterfactual branch from the snapshot, identical draws
            sim_b = copy.deepcopy(snap)
            target_b = sim_b.nodes[target_id]
            target_b.backend = _AlternateBackend(target_b.backend)
            frame_b, _ = sim_b.step()  # replays the boundary slot
            text_b = target_b.memory.reflections[-1].text
            after_b_sum = 0.0
            for _ in range(cycle_len):
                frame_b, _ = sim_b.step()
                after_b_sum += _scope_value(frame_b, scope, target_id)
            pending = (prompt, text_a, window_mean, after_b_sum / cycle_len, text_b)
    return samples, pairs


def export_sft(samples: list, path) -> int:
    """Write high-quality samples as {"prompt", "completion"} lines."""
    path = Path(path)
    lines = []
    for sample in samples:
        if sample.label == "high_quality":
            lines.append(
                json.dumps(
                    {"prompt": sample.context, "completion": sample.reflection_text},
                    ensure_ascii=False,
                )
            )
    try:
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"failed writing SFT dataset to {path}: {exc}") from exc
    return len(lines)


def export_preferences(pairs: list, path) -> int:
    """Write preference pairs as {"prompt", "chosen", "rejected"} lines."""
    path = Path(path)
    lines = [
        json.dumps(
            {"prompt": p.prompt, "chosen": p.chosen, "rejected": p.rejected},
            ensure_ascii=False,
        )
        for p in pairs
    ]
    try:
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"failed writing preference dataset to {path}: {exc}") from exc
    return len(lines)
