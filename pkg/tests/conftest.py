import json
from pathlib import Path

import pytest

from reflexmac.agent import ObservationReport, Policy, StrategyRecord

DATA_DIR = Path(__file__).parent / "data"


def reply(name: str) -> str:
    return (DATA_DIR / "replies" / f"{name}.txt").read_text(encoding="utf-8")


def make_report(
    period=1,
    p_executing=0.35,
    p_cycle=0.40,
    my_success=1,
    my_collision=1,
    other_success=1,
    other_collision=1,
    idle=1,
    mean_aoi=None,
    own_mean=None,
):
    """Small synthetic window whose aoi sequence is a ramp around mean_aoi."""
    n = my_success + my_collision + other_success + other_collision + idle
    if mean_aoi is None:
        mean_aoi = 3.25
    seq = tuple(mean_aoi + (i - (n - 1) / 2) * 0.1 for i in range(n))
    actual_mean = sum(seq) / n
    return ObservationReport(
        period=period,
        p_executing=p_executing,
        p_cycle=p_cycle,
        aoi_seq=seq,
        state_counts={
            "my_success": my_success,
            "my_collision": my_collision,
            "other_success": other_success,
            "other_collision": other_collision,
            "idle": idle,
        },
        window_mean_aoi=actual_mean,
        own_mean_aoi=actual_mean if own_mean is None else own_mean,
        window_slots=n,
    )


@pytest.fixture
def golden_dir():
    return DATA_DIR / "golden"


def golden_observe_inputs():
    from reflexmac.backend import build_observe_inputs

    current = make_report(period=2, p_executing=0.35, p_cycle=0.40, mean_aoi=3.25)
    previous = make_report(period=1, p_executing=0.40, p_cycle=0.40, mean_aoi=3.45)
    return build_observe_inputs(current, previous)


def golden_reflect_inputs():
    from reflexmac.backend import build_reflect_inputs

    reports = [
        make_report(period=1, p_executing=0.35, p_cycle=0.35, mean_aoi=45.3),
        make_report(period=2, p_executing=0.33, p_cycle=0.35, mean_aoi=44.9),
    ]
    policy = Policy(p_global=0.35)
    return build_reflect_inputs(
        reports,
        policy,
        -3.6,
        "It was recommended to reduce the transmission probability from 0.40 to 0.35.",
    )


def golden_decide_inputs():
    from reflexmac.backend import build_decide_inputs

    policy = Policy(p_global=0.35)
    strategies = (StrategyRecord(p=0.38, aoi_delta=-2.8, cycle=4, priority_tag=None),)
    reflection = (
        "It is recommended to increase the transmission probability by 0.03 to p=0.38."
    )
    return build_decide_inputs(reflection, policy, strategies, -2.8)


GOLDEN_INPUTS = {
    "observe": golden_observe_inputs,
    "reflect": golden_reflect_inputs,
    "decide": golden_decide_inputs,
}
