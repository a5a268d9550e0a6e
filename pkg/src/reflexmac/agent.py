"""The reflective agent node: per-slot execution, per-period observation,
per-cycle reflection and policy update, backed by four memory banks.

Temporal structure: the node transmits every slot under the current
effective probability; every N slots it aggregates window statistics and
asks the backend's observe role for a period-level perturbation; every O
periods it runs reflect and decide to move the global policy. Backend
failures degrade gracefully: a failed observe keeps a zero perturbation,
a failed cycle leaves the policy untouched, which makes the affected
cycle identical to the no-reflection ablation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .aoi import SlotState
from .backend import BackendUnavailable, ParseFailure
from .channel import FeedbackFrame, SimNode


def clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


@dataclass
class Policy:
    """Cycle-level global transmission probability and its update bounds."""

    p_global: float = 0.30
    beta: float = 1.0
    p_min: float = 0.01
    p_max: float = 0.99

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not self.p_min <= self.p_global <= self.p_max:
            raise ValueError("p_global outside [p_min, p_max]")


@dataclass(frozen=True)
class Perturbation:
    delta_p: float
    origin: str  # "observe" | "priority"
    valid_period: int


@dataclass(frozen=True)
class ObservationReport:
    """Window statistics feeding one observe invocation.

    `aoi_seq` and `window_mean_aoi` follow the scenario's metric scope
    (system mean per slot, or the node's own age); `own_mean_aoi` is always
    the node's own window mean and drives the scripted improvement signal.
    """

    period: int
    p_executing: float
    p_cycle: float
    aoi_seq: tuple
    state_counts: dict
    window_mean_aoi: float
    own_mean_aoi: float
    window_slots: int

    def __post_init__(self):
        if len(self.aoi_seq) != self.window_slots:
            raise ValueError("aoi_seq length must equal the window size")
        if sum(self.state_counts.values()) != self.window_slots:
            raise ValueError("state counts must sum to the window size")


@dataclass(frozen=True)
class ReflectionRecord:
    text: str
    aoi_improvement: float  # previous cycle mean minus current; positive = improved
    context: str
    cycle: int


@dataclass(frozen=True)
class StrategyRecord:
    p: float
    aoi_delta: float  # current minus previous cycle mean; negative = improved
    cycle: int
    priority_tag: str | None = None


class MemoryBank:
    """Short/long/reflection/strategy stores with bounded capacities."""

    def __init__(self, window_slots: int, periods_per_cycle: int, strategy_capacity: int = 10):
        self.window_slots = window_slots
        self.periods_per_cycle = periods_per_cycle
        self.strategy_capacity = strategy_capacity
        self.short: list[tuple[SlotState, bool]] = []
        self.long: list[ObservationReport] = []
        self.reflections: list[ReflectionRecord] = []
        self.strategies: list[StrategyRecord] = []

    def record_slot(self, state: SlotState, transmitted: bool) -> None:
        if len(self.short) >= self.window_slots:
            raise ValueError("short-term memory already holds a full window")
        self.short.append((state, transmitted))

    def add_strategy(self, record: StrategyRecord) -> None:
        if record.aoi_delta >= 0:
            raise ValueError("strategy memory only stores improving records")
        self.strategies.append(record)
        rank = {"High": 0, None: 1, "Low": 2}
        self.strategies.sort(key=lambda r: (r.aoi_delta, rank[r.priority_tag], r.cycle))
        del self.strategies[self.strategy_capacity :]


@dataclass(frozen=True)
class PrioritySpec:
    """Priority class parameters: initial probability, perturbation bias,
    exploration noise half-width, and the age threshold used for
    convergence reporting."""

    priority: str  # "High" | "Low"
    p_initial: float
    theta: float
    epsilon_half_width: float
    aoi_threshold: float

    def __post_init__(self):
        if self.priority not in ("High", "Low"):
            raise ValueError("priority must be High or Low")
        if self.priority == "High" and self.theta < 0:
            raise ValueError("High priority requires theta >= 0")
        if self.priority == "Low" and self.theta > 0:
            raise ValueError("Low priority requires theta <= 0")
        if self.epsilon_half_width < 0:
            raise ValueError("epsilon_half_width must be non-negative")


def priority_initial_policy(spec: PrioritySpec, **policy_kwargs) -> Policy:
    return Policy(p_global=spec.p_initial, **policy_kwargs)


def priority_perturbation(
    spec: PrioritySpec, rng: np.random.Generator, period: int = 0
) -> Perturbation:
    eps = rng.uniform(-spec.epsilon_half_width, spec.epsilon_half_width)
    return Perturbation(spec.theta + eps, "priority", period)


DELTA_MAX = 0.05


class RmaNode(SimNode):
    """Reflexive multiple-access node.

    metric_scope selects what the observation reports describe ("system":
    per-slot mean age over all nodes; "node": this node's own age). The
    cycle-level improvement signal always uses the node's own window means,
    since its own transmissions are the only lever it controls.
    """

    kind = "rma"

    def __init__(
        self,
        node_id: int,
        rng: np.random.Generator,
        backend,
        policy: Policy | None = None,
        window_slots: int = 200,
        periods_per_cycle: int = 3,
        metric_scope: str = "system",
        priority: PrioritySpec | None = None,
        delta_max: float = DELTA_MAX,
        strategy_capacity: int = 10,
        no_observe: bool = False,
        no_reflection: bool = False,
    ):
        super().__init__(node_id)
        if metric_scope not in ("system", "node"):
            raise ValueError("metric_scope must be system or node")
        self.rng = rng
        self.backend = backend
        self.policy = policy if policy is not None else Policy()
        self.window_slots = window_slots
        self.periods_per_cycle = periods_per_cycle
        self.metric_scope = metric_scope
        self.priority = priority
        self.delta_max = delta_max
        self.no_observe = no_observe
        self.no_reflection = no_reflection
        self.memory = MemoryBank(window_slots, periods_per_cycle, strategy_capacity)

        self.period_count = 0
        self.cycle_count = 0
        self.reports_emitted = 0
        self.reflections_emitted = 0
        self.backend_failures = 0
        self.perturbation = Perturbation(0.0, "observe", 0)
        self.prev_report: ObservationReport | None = None
        self.prev_cycle_mean: float | None = None
        self.last_adjustment = 0.0
        self.last_reflection_text: str | None = None
        self.last_cycle_inputs: dict | None = None

        self._pending_transmitted = False
        self._scope_buf: list[float] = []
        self._own_buf: list[int] = []
        self._eff_sum = 0.0
        self._window_delta_p = 0.0

        self.on_report: Callable[[RmaNode, ObservationReport, float], None] | None = None
        self.on_cycle: Callable[[RmaNode, int, float], None] | None = None

    # -- slot level ---------------------------------------------------------

    def effective_p(self) -> float:
        """Global policy plus the active perturbation, clamped to bounds."""
        if self.priority is not None:
            eps = self.rng.uniform(
                -self.priority.epsilon_half_width, self.priority.epsilon_half_width
            )
            dp = self.priority.theta + eps
        else:
            dp = self.perturbation.delta_p
        dp = clamp(dp, -self.delta_max, self.delta_max)
        return clamp(self.policy.p_global + dp, self.policy.p_min, self.policy.p_max)

    def decide(self, slot: int) -> bool:
        eff = self.effective_p()
        self._eff_sum += eff
        self._pending_transmitted = self.rng.random() < eff
        return self._pending_transmitted

    def on_feedback(self, frame: FeedbackFrame) -> None:
        state = frame.per_node_state[self.node_id]
        self.memory.record_slot(state, self._pending_transmitted)
        own = frame.per_node_aoi[self.node_id]
        self._own_buf.append(own)
        if self.metric_scope == "system":
            self._scope_buf.append(sum(frame.per_node_aoi.values()) / len(frame.per_node_aoi))
        else:
            self._scope_buf.append(float(own))
        if len(self.memory.short) == self.window_slots:
            self._close_period()
            if self.period_count % self.periods_per_cycle == 0:
                self._close_cycle()

    # -- period level -------------------------------------------------------

    def _build_report(self) -> ObservationReport:
        counts = {
            "my_success": 0,
            "my_collision": 0,
            "other_success": 0,
            "other_collision": 0,
            "idle": 0,
        }
        for state, _tx in self.memory.short:
            counts[state.value] += 1
        scope_mean = sum(self._scope_buf) / len(self._scope_buf)
        own_mean = sum(self._own_buf) / len(self._own_buf)
        return ObservationReport(
            period=self.period_count + 1,
            p_executing=self._eff_sum / self.window_slots,
            p_cycle=self.policy.p_global,
            aoi_seq=tuple(self._scope_buf),
            state_counts=counts,
            window_mean_aoi=scope_mean,
            own_mean_aoi=own_mean,
            window_slots=self.window_slots,
        )

    def _close_period(self) -> None:
        report = self._build_report()
        delta_p = 0.0
        if not self.no_observe:
            try:
                advice = self.backend.observe(
                    report,
                    self.prev_report,
                    priority=self.priority.priority if self.priority else None,
                )
                delta_p = clamp(advice.delta_p, -self.delta_max, self.delta_max)
            except BackendUnavailable:
                self.backend_failures += 1
                delta_p = 0.0
        self.period_count += 1
        self.reports_emitted += 1
        self.memory.long.append(report)
        if self.on_report is not None:
            self.on_report(self, report, self._window_delta_p)
        self.prev_report = report
        self.perturbation = Perturbation(delta_p, "observe", self.period_count + 1)
        self._window_delta_p = (
            self.priority.theta if self.priority is not None else delta_p
        )
        self.memory.short.clear()
        self._scope_buf.clear()
        self._own_buf.clear()
        self._eff_sum = 0.0

    # -- cycle level ---------------------------------------------------------

    def _close_cycle(self) -> None:
        from .backend import build_reflect_inputs  # local import avoids a cycle

        reports = list(self.memory.long)
        cycle_mean = sum(r.own_mean_aoi for r in reports) / len(reports)
        aoi_delta = 0.0 if self.prev_cycle_mean is None else cycle_mean - self.prev_cycle_mean
        context = fmt_cycle_context(reports)
        self.cycle_count += 1

        if self.no_reflection:
            self.prev_cycle_mean = cycle_mean
            self.memory.long.clear()
            return

        self.last_cycle_inputs = build_reflect_inputs(
            reports, self.policy, aoi_delta, self.last_reflection_text
        )
        tag = self.priority.priority if self.priority else None
        old_p = self.policy.p_global
        try:
            reflect, decision = self.backend.reflect_decide(
                reports,
                self.policy,
                aoi_delta,
                self.last_adjustment,
                last_reflection=self.last_reflection_text,
                strategies=tuple(self.memory.strategies),
                priority=tag,
            )
        except BackendUnavailable:
            self.backend_failures += 1
            self._finish_cycle(reports, cycle_mean, None, aoi_delta, context, "skipped")
            return
        except ParseFailure:
            self.backend_failures += 1
            self._finish_cycle(
                reports, cycle_mean, None, aoi_delta, context, "unparseable reply"
            )
            return

        suggested = decision.new_p - old_p
        new_p = clamp(
            old_p + self.policy.beta * suggested, self.policy.p_min, self.policy.p_max
        )
        self.policy = replace(self.policy, p_global=new_p)
        self.last_adjustment = new_p - old_p
        if decision.store_current and aoi_delta < 0:
            self.memory.add_strategy(
                StrategyRecord(old_p, aoi_delta, self.cycle_count, tag)
            )
        self._finish_cycle(
            reports, cycle_mean, reflect.reflection_text, aoi_delta, context, None
        )

    def _finish_cycle(self, reports, cycle_mean, text, aoi_delta, context, skip_reason):
        record = ReflectionRecord(
            text=text if text is not None else skip_reason,
            aoi_improvement=-aoi_delta,
            context=context,
            cycle=self.cycle_count,
        )
        self.memory.reflections.append(record)
        self.reflections_emitted += 1
        if text is not None:
            self.last_reflection_text = text
        self.prev_cycle_mean = cycle_mean
        self.memory.long.clear()
        if self.on_cycle is not None:
            self.on_cycle(self, self.cycle_count, self.policy.p_global)


def fmt_cycle_context(reports) -> str:
    """Serialized cycle summary retained inside each reflection record."""
    from .backend import fmt_long_term

    return fmt_long_term(reports)
