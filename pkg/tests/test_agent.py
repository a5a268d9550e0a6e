import pytest
from hypothesis import given
from hypothesis import strategies as st

from reflexmac.agent import (
    MemoryBank,
    Policy,
    PrioritySpec,
    RmaNode,
    StrategyRecord,
    clamp,
    priority_initial_policy,
    priority_perturbation,
)
from reflexmac.backend import DecideAdvice, ObserveAdvice, ReflectAdvice, ScriptedBackend
from reflexmac.backend import BackendUnavailable
from reflexmac.channel import Simulation
from reflexmac.nodes import AlohaConfig, AlohaNode
from reflexmac.rng import node_stream


def make_rma(node_id=0, seed=1, backend=None, n=5, o=2, **kwargs):
    return RmaNode(
        node_id,
        node_stream(seed, node_id),
        backend if backend is not None else ScriptedBackend(),
        window_slots=n,
        periods_per_cycle=o,
        **kwargs,
    )


def sim_with(*nodes):
    sim = Simulation()
    for node in nodes:
        sim.add_node(node)
    return sim


def aloha(node_id, q=0.2, seed=1):
    return AlohaNode(node_id, AlohaConfig(q), node_stream(seed, node_id))


# -- effective probability -----------------------------------------------------


def test_effective_probability_adds_perturbation():
    node = make_rma(policy=Policy(p_global=0.35))
    node.perturbation = node.perturbation.__class__(0.02, "observe", 1)
    assert node.effective_p() == pytest.approx(0.37)


def test_effective_probability_clamps_at_p_max():
    node = make_rma(policy=Policy(p_global=0.98))
    node.perturbation = node.perturbation.__class__(0.05, "observe", 1)
    assert node.effective_p() == pytest.approx(0.99)


def test_effective_probability_identity_without_perturbation():
    node = make_rma(policy=Policy(p_global=0.35))
    assert node.effective_p() == pytest.approx(0.35)


@given(st.floats(min_value=-10, max_value=10))
def test_effective_probability_always_within_bounds(delta):
    node = make_rma(policy=Policy(p_global=0.5))
    node.perturbation = node.perturbation.__class__(delta, "observe", 1)
    assert 0.01 <= node.effective_p() <= 0.99


# -- cadence -------------------------------------------------------------------


def test_period_and_cycle_cadence():
    node = make_rma(n=5, o=2)
    sim = sim_with(node, aloha(1))
    sim.run(100)
    assert node.reports_emitted == 20
    assert node.reflections_emitted == 10


def test_partial_window_emits_nothing():
    node = make_rma(n=5, o=2)
    sim = sim_with(node, aloha(1))
    sim.run(31)  # 6 full windows + 1 leftover slot
    assert node.reports_emitted == 6
    assert node.reflections_emitted == 3
    assert len(node.memory.short) == 1


def test_first_period_cold_start_keeps_zero_perturbation():
    node = make_rma(n=5, o=3)
    sim = sim_with(node, aloha(1))
    sim.run(5)
    assert node.perturbation.delta_p == 0.0
    assert node.reports_emitted == 1


def test_long_memory_capacity_and_clearing():
    node = make_rma(n=5, o=2)
    sim = sim_with(node, aloha(1))
    for _ in range(100):
        sim.step()
        assert len(node.memory.long) <= node.periods_per_cycle
    assert len(node.memory.short) <= node.window_slots


# -- cycle updates ---------------------------------------------------------------


class CannedBackend:
    """Fixed advice, for exercising the agent's bookkeeping."""

    def __init__(self, delta_p=0.0, suggestion=0.03, store=True):
        self.delta_p = delta_p
        self.suggestion = suggestion
        self.store = store

    def observe(self, report, prev, priority=None):
        return ObserveAdvice("canned", self.delta_p)

    def reflect_decide(self, reports, policy, aoi_delta, last_adjustment,
                       last_reflection=None, strategies=(), priority=None,
                       alternate=False):
        new_p = policy.p_global + self.suggestion
        return (
            ReflectAdvice("canned reflection", self.suggestion),
            DecideAdvice(f"Strategy output: [p={new_p:.2f}]", new_p, self.store),
        )


class FailingBackend(CannedBackend):
    def observe(self, report, prev, priority=None):
        raise BackendUnavailable("down")

    def reflect_decide(self, *args, **kwargs):
        raise BackendUnavailable("down")


def test_cycle_applies_suggestion_through_beta():
    node = make_rma(backend=CannedBackend(suggestion=0.03), policy=Policy(p_global=0.35))
    sim = sim_with(node, aloha(1))
    sim.run(10)  # one full cycle (n=5, o=2)
    assert node.policy.p_global == pytest.approx(0.38)
    assert node.last_adjustment == pytest.approx(0.03)


def test_strategy_stored_only_on_improvement():
    node = make_rma(backend=CannedBackend(suggestion=0.0), policy=Policy(p_global=0.35))
    sim = sim_with(node, aloha(1))
    sim.run(10)  # first cycle: aoi_delta == 0, nothing stored
    assert node.memory.strategies == []
    sim.run(10)  # second cycle: delta is noise, may store only if improved
    for record in node.memory.strategies:
        assert record.aoi_delta < 0


def test_backend_failure_freezes_policy_and_counts():
    node = make_rma(backend=FailingBackend(), policy=Policy(p_global=0.35))
    sim = sim_with(node, aloha(1))
    sim.run(20)
    assert node.policy.p_global == 0.35
    assert node.backend_failures == 2 + 4  # 2 cycles + 4 observe calls
    assert [r.text for r in node.memory.reflections] == ["skipped", "skipped"]


def test_backend_failure_equals_no_reflection_trajectory():
    def decisions(backend=None, **kwargs):
        node = make_rma(seed=9, backend=backend, **kwargs)
        other = aloha(1, seed=9)
        sim = sim_with(node, other)
        out = []
        for _ in range(60):
            _, record = sim.step()
            out.append(record.decisions[0])
        return out, node.policy.p_global

    failed, p_failed = decisions(backend=FailingBackend())
    ablated, p_ablated = decisions(backend=CannedBackend(), no_reflection=True, no_observe=True)
    assert failed == ablated
    assert p_failed == p_ablated


def test_no_reflection_keeps_periods_running():
    node = make_rma(no_reflection=True)
    sim = sim_with(node, aloha(1))
    sim.run(40)
    assert node.reports_emitted == 8
    assert node.reflections_emitted == 0
    assert node.policy.p_global == pytest.approx(0.30)


def test_no_observe_forces_zero_perturbation():
    node = make_rma(backend=CannedBackend(delta_p=0.02), no_observe=True)
    sim = sim_with(node, aloha(1))
    sim.run(25)
    assert node.perturbation.delta_p == 0.0


def test_observe_perturbation_applies_next_period():
    node = make_rma(backend=CannedBackend(delta_p=0.02), policy=Policy(p_global=0.30))
    sim = sim_with(node, aloha(1))
    sim.run(5)
    assert node.perturbation.delta_p == pytest.approx(0.02)
    assert node.effective_p() == pytest.approx(0.32)


# -- memory bank -----------------------------------------------------------------


def test_strategy_memory_rejects_non_improving():
    bank = MemoryBank(5, 2)
    with pytest.raises(ValueError):
        bank.add_strategy(StrategyRecord(0.4, 0.5, 1))


def test_strategy_memory_sorts_and_caps():
    bank = MemoryBank(5, 2, strategy_capacity=3)
    for i, delta in enumerate((-1.0, -3.0, -2.0, -0.5)):
        bank.add_strategy(StrategyRecord(0.3 + i * 0.01, delta, i))
    assert [r.aoi_delta for r in bank.strategies] == [-3.0, -2.0, -1.0]


def test_high_priority_outranks_low_at_equal_delta():
    bank = MemoryBank(5, 2)
    bank.add_strategy(StrategyRecord(0.3, -2.0, 1, "Low"))
    bank.add_strategy(StrategyRecord(0.5, -2.0, 2, "High"))
    assert [r.priority_tag for r in bank.strategies] == ["High", "Low"]


# -- priority --------------------------------------------------------------------


def hp_spec(theta=0.01, eps=0.005, threshold=4.0):
    return PrioritySpec("High", 0.5, theta, eps, threshold)


def lp_spec(theta=-0.01, eps=0.005, threshold=6.0):
    return PrioritySpec("Low", 0.3, theta, eps, threshold)


def test_priority_initial_policies():
    assert priority_initial_policy(hp_spec()).p_global == 0.5
    assert priority_initial_policy(lp_spec()).p_global == 0.3


def test_priority_spec_sign_constraints():
    with pytest.raises(ValueError):
        PrioritySpec("High", 0.5, -0.01, 0.005, 4.0)
    with pytest.raises(ValueError):
        PrioritySpec("Low", 0.3, 0.01, 0.005, 6.0)


def test_priority_perturbation_examples():
    rng = node_stream(1, 0)
    pert = priority_perturbation(hp_spec(eps=0.0), rng)
    assert pert.delta_p == pytest.approx(0.01)
    pert = priority_perturbation(lp_spec(eps=0.0), rng)
    assert pert.delta_p == pytest.approx(-0.01)


def test_priority_perturbation_noise_mean():
    rng = node_stream(5, 0)
    draws = [priority_perturbation(hp_spec(), rng).delta_p for _ in range(10_000)]
    assert abs(sum(draws) / len(draws) - 0.01) <= 0.001


def test_priority_ordering_with_zero_noise():
    hp = make_rma(0, priority=hp_spec(eps=0.0), policy=Policy(p_global=0.4))
    lp = make_rma(1, priority=lp_spec(eps=0.0), policy=Policy(p_global=0.4))
    assert hp.effective_p() >= lp.effective_p()


def test_priority_node_draws_fresh_noise_each_slot():
    node = make_rma(priority=hp_spec())
    values = {node.effective_p() for _ in range(20)}
    assert len(values) > 1


def test_clamp_helper():
    assert clamp(1.5, 0.0, 1.0) == 1.0
    assert clamp(-0.2, 0.0, 1.0) == 0.0
    assert clamp(0.4, 0.0, 1.0) == 0.4
