import pytest

from reflexmac.channel import Simulation
from reflexmac.nodes import (
    AlohaConfig,
    AlohaNode,
    TdmaConfig,
    TdmaNode,
    aloha_decide,
    tdma_decide,
)
from reflexmac.rng import node_stream


def test_tdma_decide_examples():
    cfg = TdmaConfig(10, frozenset({3, 5}))
    assert tdma_decide(cfg, 3) is True
    assert tdma_decide(cfg, 13) is True  # periodicity
    assert tdma_decide(cfg, 10) is False


def test_tdma_config_validation():
    with pytest.raises(ValueError):
        TdmaConfig(10, frozenset())
    with pytest.raises(ValueError):
        TdmaConfig(10, frozenset({11}))


def test_tdma_is_pure_function_of_slot():
    cfg = TdmaConfig(7, frozenset({1, 6}))
    first = [tdma_decide(cfg, s) for s in range(1, 200)]
    second = [tdma_decide(cfg, s) for s in range(1, 200)]
    assert first == second


def test_aloha_degenerate_probabilities():
    rng = node_stream(1, 0)
    assert not any(aloha_decide(AlohaConfig(0.0), rng) for _ in range(1000))
    assert all(aloha_decide(AlohaConfig(1.0), rng) for _ in range(1000))


def test_aloha_empirical_rate():
    rng = node_stream(123, 0)
    cfg = AlohaConfig(0.2)
    n = 100_000
    rate = sum(aloha_decide(cfg, rng) for _ in range(n)) / n
    assert abs(rate - 0.2) <= 0.005


def test_two_seeds_give_independent_streams():
    # chi-square on the 2x2 contingency table of paired draws
    n = 20_000
    q = 0.2
    rng_a = node_stream(42, 0)
    rng_b = node_stream(42, 1)
    counts = {(False, False): 0, (False, True): 0, (True, False): 0, (True, True): 0}
    for _ in range(n):
        counts[(rng_a.random() < q, rng_b.random() < q)] += 1
    pa = (counts[(True, False)] + counts[(True, True)]) / n
    pb = (counts[(False, True)] + counts[(True, True)]) / n
    chi2 = 0.0
    for xa in (False, True):
        for xb in (False, True):
            expected = n * (pa if xa else 1 - pa) * (pb if xb else 1 - pb)
            chi2 += (counts[(xa, xb)] - expected) ** 2 / expected
    assert chi2 < 6.63  # 1% critical value, 1 dof


def test_lone_tdma_average_age_matches_frame_arithmetic():
    # two assigned slots with gaps 2 and 8: steady-state mean age is
    # (2*3/2 + 8*9/2) / 10 = 3.9 per frame
    k = 2000
    total_slots = 3 + 10 * k  # transient ages 1,2,3 then k whole frame periods
    sim = Simulation()
    sim.add_node(TdmaNode(0, TdmaConfig(10, frozenset({3, 5}))))
    sim.run(total_slots)
    tracker = sim.trackers[0]
    assert tracker.sum_delta == 6 + 39 * k
    assert tracker.average() == pytest.approx(3.9, rel=2e-3)
