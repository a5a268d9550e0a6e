"""Reasoning backends for the Observe/Reflect/Decide roles.

Two implementations share one interface: a deterministic scripted rule
engine, and a remote chat-completion client that renders the bundled
prompt templates and parses free-text replies.

Replies are parsed from prose, not constrained JSON. The single source of
truth for a new strategy is the last `Strategy output: [p=...]` marker;
it trumps any "increase/decrease by ..." phrase in the same reply.
"""

from __future__ import annotations

import math
import os
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import TYPE_CHECKING, Iterable

import requests

if TYPE_CHECKING:  # pragma: no cover
    from .agent import ObservationReport, Policy, PrioritySpec, StrategyRecord

PLACEHOLDERS = (
    "strategy_executing",
    "strategy_output",
    "aoi_current",
    "aoi_previous",
    "states_current",
    "states_previous",
    "long_term_memory",
    "aoi_delta",
    "last_reflection",
    "current_reflection",
    "strategy_memory",
)

STATE_LABELS = (
    ("my_success", "success"),
    ("my_collision", "collision"),
    ("other_success", "other nodes successful when not transmitting"),
    ("other_collision", "other nodes collided when not transmitting"),
    ("idle", "system idle"),
)


class ParseFailure(Exception):
    """Raised when a reply contains no strategy-output marker."""


class BackendUnavailable(Exception):
    """Raised when the remote endpoint cannot produce a usable reply."""


class PromptRenderError(Exception):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    role: str  # observe | reflect | decide
    mode: str  # normal | priority
    body: str


def load_template(role: str, mode: str = "normal") -> PromptTemplate:
    if role not in ("observe", "reflect", "decide"):
        raise ValueError(f"unknown prompt role: {role}")
    if mode not in ("normal", "priority"):
        raise ValueError(f"unknown prompt mode: {mode}")
    body = (
        resources.files("reflexmac.prompts")
        .joinpath(f"{role}.{mode}.txt")
        .read_text(encoding="utf-8")
    )
    return PromptTemplate(role=role, mode=mode, body=body)


def render_prompt(tpl: PromptTemplate, inputs: dict) -> str:
    """Byte-exact placeholder substitution, no escaping of values."""
    text = tpl.body
    for name in PLACEHOLDERS:
        token = "{" + name + "}"
        if token in text:
            if name not in inputs:
                raise PromptRenderError(f"missing placeholder: {name}")
            text = text.replace(token, str(inputs[name]))
    return text


_STRATEGY_RE = re.compile(
    r"Strategy output:\s*\[\s*\$?\s*p\s*=\s*([0-9]*\.?[0-9]+)\s*\$?\s*\]"
)
_ADJUST_RE = re.compile(
    r"(increase|decrease)\s+the\s+transmission\s+probability\s+by\s+\$?([0-9]*\.?[0-9]+)"
)


def parse_strategy_output(text: str) -> float:
    """Extract the last `Strategy output: [p=...]` value, tolerating $-math
    wrapping and whitespace."""
    matches = _STRATEGY_RE.findall(text)
    if not matches:
        raise ParseFailure("no strategy output marker found")
    return float(matches[-1])


def parse_adjustment(text: str) -> float:
    """Signed adjustment from the last increase/decrease phrase; 0 if absent."""
    matches = _ADJUST_RE.findall(text)
    if not matches:
        return 0.0
    verb, number = matches[-1]
    value = float(number)
    return value if verb == "increase" else -value


# ---------------------------------------------------------------------------
# Rendering helpers shared by the remote backend and the dataset exporter.
# Formats are frozen by golden tests.


def fmt_prob(p: float) -> str:
    return f"{p:.2f}"


def fmt_signed(x: float) -> str:
    return f"{x:.2f}"


def fmt_aoi_seq(seq: Iterable[float]) -> str:
    return "[" + ", ".join(f"{v:.2f}" for v in seq) + "]"


def fmt_states(counts: dict) -> str:
    parts = []
    for key, label in STATE_LABELS:
        parts.append(f"{label}: {counts.get(key, 0)}")
    return ", ".join(parts)


def fmt_long_term(reports) -> str:
    lines = []
    for rep in reports:
        lines.append(
            f"- window {rep.period}: p'={fmt_prob(rep.p_executing)}, "
            f"mean AoI={rep.window_mean_aoi:.2f}, states: {fmt_states(rep.state_counts)}"
        )
    return "\n" + "\n".join(lines) if lines else "none"


def fmt_strategies(records) -> str:
    if not records:
        return "none"
    lines = []
    for rec in records:
        tag = f", priority={rec.priority_tag}" if rec.priority_tag else ""
        lines.append(f"- p={fmt_prob(rec.p)} (aoi_delta={rec.aoi_delta:.2f}, cycle {rec.cycle}{tag})")
    return "\n" + "\n".join(lines)


def build_observe_inputs(report, prev) -> dict:
    return {
        "strategy_executing": fmt_prob(report.p_executing),
        "strategy_output": fmt_prob(report.p_cycle),
        "aoi_current": fmt_aoi_seq(report.aoi_seq),
        "aoi_previous": fmt_aoi_seq(prev.aoi_seq) if prev is not None else "none",
        "states_current": fmt_states(report.state_counts),
        "states_previous": fmt_states(prev.state_counts) if prev is not None else "none",
    }


def build_reflect_inputs(reports, policy, aoi_delta: float, last_reflection: str | None) -> dict:
    return {
        "long_term_memory": fmt_long_term(reports),
        "strategy_output": fmt_prob(policy.p_global),
        "aoi_delta": fmt_signed(aoi_delta),
        "last_reflection": last_reflection if last_reflection else "none",
    }


def build_decide_inputs(reflection_text: str, policy, strategies, aoi_delta: float) -> dict:
    return {
        "current_reflection": reflection_text,
        "strategy_output": fmt_prob(policy.p_global),
        "strategy_memory": fmt_strategies(strategies),
        "aoi_delta": fmt_signed(aoi_delta),
    }


# ---------------------------------------------------------------------------
# Advice types


@dataclass(frozen=True)
class ObserveAdvice:
    analysis_text: str
    delta_p: float


@dataclass(frozen=True)
class ReflectAdvice:
    reflection_text: str
    suggested_adjustment: float


@dataclass(frozen=True)
class DecideAdvice:
    decision_text: str
    new_p: float
    store_current: bool


# ---------------------------------------------------------------------------
# Scripted backend


def _quantize(x: float) -> float:
    """Round to the 0.01 grid, halves away from zero."""
    return math.copysign(math.floor(abs(x) * 100.0 + 0.5), x) / 100.0


def _collision_rate(report) -> float:
    return report.state_counts.get("my_collision", 0) / report.window_slots


def _idle_rate(report) -> float:
    return report.state_counts.get("idle", 0) / report.window_slots


OBSERVE_STEP = 0.02
REFLECT_STEP_IDLE = 0.03
REFLECT_STEP_BUSY = 0.02
COLLISION_HIGH = 0.15
COLLISION_LOW = 0.05
IDLE_HIGH = 0.30
HIGH_PRIORITY_CAP = 0.06


def scripted_observe(report, prev) -> "ObserveAdvice":
    """Deterministic window analysis.

    Rule table: collision rate above 15% backs off by 0.02; an idle rate
    above 30% with collisions under 5% speeds up by 0.02; otherwise hold.
    The first window has nothing to compare against and always holds.
    """
    if prev is None:
        return ObserveAdvice(
            "First observation window; no previous window to compare against, "
            "keep the strategy unchanged.",
            0.0,
        )
    cr = _collision_rate(report)
    ir = _idle_rate(report)
    if cr > COLLISION_HIGH:
        text = (
            f"Collision rate {cr:.1%} in the current window exceeds the contention "
            f"target; decrease the transmission probability by {OBSERVE_STEP:.2f} "
            f"to reduce collisions."
        )
        return ObserveAdvice(text, -OBSERVE_STEP)
    if ir > IDLE_HIGH and cr < COLLISION_LOW:
        text = (
            f"Idle rate {ir:.1%} with collision rate {cr:.1%} leaves the channel "
            f"underused; increase the transmission probability by {OBSERVE_STEP:.2f} "
            f"to better utilize channel opportunities."
        )
        return ObserveAdvice(text, OBSERVE_STEP)
    text = (
        f"Collision rate {cr:.1%} and idle rate {ir:.1%} are balanced; "
        f"keep the strategy unchanged."
    )
    return ObserveAdvice(text, 0.0)


def _priority_overlay(suggestion: float, priority: str | None) -> float:
    if priority == "High" and suggestion > 0:
        return min(_quantize(2.0 * suggestion), HIGH_PRIORITY_CAP)
    if priority == "Low" and suggestion != 0:
        return _quantize(suggestion / 2.0)
    return suggestion


def scripted_reflect_decide(
    reports,
    policy,
    aoi_delta: float,
    last_adjustment: float,
    priority: str | None = None,
    alternate: bool = False,
):
    """Cycle-level rule engine producing (ReflectAdvice, DecideAdvice).

    An improving cycle keeps pushing up: by 0.03 while the channel is
    idle-heavy, by 0.02 otherwise (a node's own age is monotone in its own
    transmission probability, so confirmed gains always argue for more).
    A worsening cycle reverts half of the last adjustment. High priority
    doubles positive suggestions (capped), low priority halves everything.
    The alternate variant (dual-candidate collection) emits a half-magnitude
    suggestion floored to the 0.01 grid.
    """
    mean_idle = sum(_idle_rate(r) for r in reports) / len(reports)
    improved = aoi_delta < 0
    worsened = aoi_delta > 0
    if improved:
        suggestion = REFLECT_STEP_IDLE if mean_idle > IDLE_HIGH else REFLECT_STEP_BUSY
    elif worsened:
        suggestion = -_quantize(last_adjustment / 2.0)
    else:
        suggestion = 0.0
    suggestion = _priority_overlay(suggestion, priority)
    if alternate:
        suggestion = math.copysign(
            math.floor(abs(suggestion) / 2.0 * 100.0) / 100.0, suggestion
        )
    new_p = min(max(policy.p_global + suggestion, policy.p_min), policy.p_max)
    store = improved

    role = {"High": "As a high-priority node, ", "Low": "As a low-priority node, "}.get(
        priority, ""
    )
    if suggestion > 0:
        plan = (
            f"{role}it is recommended to increase the transmission probability by "
            f"{abs(suggestion):.2f} to p={new_p:.2f}."
        )
    elif suggestion < 0:
        plan = (
            f"{role}it is recommended to decrease the transmission probability by "
            f"{abs(suggestion):.2f} to p={new_p:.2f}."
        )
    else:
        plan = f"{role}keep the strategy unchanged."
    if improved:
        verdict = (
            f"The cycle mean AoI improved (aoi_delta={aoi_delta:.2f}), confirming the "
            f"last adjustment; mean idle rate was {mean_idle:.1%}."
        )
    elif worsened:
        verdict = (
            f"The cycle mean AoI worsened (aoi_delta={aoi_delta:.2f}); the last "
            f"adjustment overshot."
        )
    else:
        verdict = f"The cycle mean AoI is unchanged (aoi_delta={aoi_delta:.2f})."
    reflect = ReflectAdvice(f"{verdict} {plan}", suggestion)

    memory_line = (
        f"\nMemory update: Store current strategy p={policy.p_global:.2f} in strategy memory base"
        if store
        else "\nMemory update: none"
    )
    decide = DecideAdvice(
        f"Adopting the Reflect module's suggestion: new strategy p={new_p:.2f}. "
        f"Strategy output: [p={new_p:.2f}]{memory_line}",
        new_p,
        store,
    )
    return reflect, decide


class ScriptedBackend:
    """Pure-function backend: same report stream, same advice stream."""

    name = "scripted"

    def observe(self, report, prev, priority: str | None = None) -> ObserveAdvice:
        return scripted_observe(report, prev)

    def reflect_decide(
        self,
        reports,
        policy,
        aoi_delta: float,
        last_adjustment: float,
        last_reflection: str | None = None,
        strategies=(),
        priority: str | None = None,
        alternate: bool = False,
    ):
        return scripted_reflect_decide(
            reports, policy, aoi_delta, last_adjustment, priority, alternate
        )


# ---------------------------------------------------------------------------
# Remote backend


@dataclass(frozen=True)
class RemoteConfig:
    endpoint_url: str
    model_name: str
    temperature: float = 0.0
    timeout: float = 30.0
    max_retries: int = 3
    api_key_env_var_name: str = "REFLEXMAC_API_KEY"
    backoff_base: float = 0.5
    alternate_temperature: float = 0.7


def remote_call(
    cfg: RemoteConfig,
    system_text: str,
    user_text: str,
    temperature: float | None = None,
) -> str:
    """POST one chat-completion request and return the first choice's text.

    Retries with exponential backoff; any terminal failure surfaces as
    BackendUnavailable so the agent can fall back to a no-op cycle.
    """
    messages = []
    if system_text:
        messages.append({"role": "system", "content": system_text})
    messages.append({"role": "user", "content": user_text})
    body = {
        "model": cfg.model_name,
        "messages": messages,
        "temperature": cfg.temperature if temperature is None else temperature,
    }
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(cfg.api_key_env_var_name, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    last_error = None
    for attempt in range(cfg.max_retries):
        try:
            resp = requests.post(
                cfg.endpoint_url, json=body, headers=headers, timeout=cfg.timeout
            )
            if resp.status_code // 100 == 2:
                try:
                    content = resp.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise BackendUnavailable(f"malformed reply: {exc}") from exc
                if not isinstance(content, str) or not content:
                    raise BackendUnavailable("empty completion content")
                return content
            last_error = f"HTTP {resp.status_code}"
        except BackendUnavailable:
            raise
        except requests.RequestException as exc:
            last_error = repr(exc)
        if attempt + 1 < cfg.max_retries:
            time.sleep(cfg.backoff_base * (2**attempt))
    raise BackendUnavailable(f"request failed after {cfg.max_retries} attempts: {last_error}")


class RemoteBackend:
    """Chat-completion backend rendering the bundled prompt templates."""

    name = "remote"

    def __init__(self, cfg: RemoteConfig, mode: str = "normal"):
        self.cfg = cfg
        self.mode = mode
        self.templates = {
            role: load_template(role, mode) for role in ("observe", "reflect", "decide")
        }

    def observe(self, report, prev, priority: str | None = None) -> ObserveAdvice:
        prompt = render_prompt(self.templates["observe"], build_observe_inputs(report, prev))
        reply = remote_call(self.cfg, "", prompt)
        return ObserveAdvice(reply, parse_adjustment(reply))

    def reflect_decide(
        self,
        reports,
        policy,
        aoi_delta: float,
        last_adjustment: float,
        last_reflection: str | None = None,
        strategies=(),
        priority: str | None = None,
        alternate: bool = False,
    ):
        temperature = self.cfg.alternate_temperature if alternate else None
        reflect_prompt = render_prompt(
            self.templates["reflect"],
            build_reflect_inputs(reports, policy, aoi_delta, last_reflection),
        )
        reflection = remote_call(self.cfg, "", reflect_prompt, temperature=temperature)
        reflect = ReflectAdvice(reflection, parse_adjustment(reflection))
        decide_prompt = render_prompt(
            self.templates["decide"],
            build_decide_inputs(reflection, policy, strategies, aoi_delta),
        )
        decision = remote_call(self.cfg, "", decide_prompt, temperature=temperature)
        new_p = parse_strategy_output(decision)  # ParseFailure keeps the old policy
        store = "store current strategy" in decision.lower()
        return reflect, DecideAdvice(decision, new_p, store)
