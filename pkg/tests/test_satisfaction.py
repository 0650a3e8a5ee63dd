from __future__ import annotations

from types import SimpleNamespace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from shopfloor.satisfaction import (
    CANONICAL_WEIGHTS, FinalizationError, SatisfactionLedger, Scale, SquareProgression, Transition,
    Uniform, WeightTable, apply_scenario, scenario_for, scenario_from_dict, scenario_to_dict,
)


def customer(refund: bool = False):
    return SimpleNamespace(id=0, satisfaction=0, finalized=False, refund_visit=refund)


def walk(*transitions, refund=False, weights=None):
    led = SatisfactionLedger(weights or WeightTable())
    c = customer(refund)
    for t in transitions:
        led.record_transition(c, t)
    led.finalize_customer(c)
    return c.satisfaction, led


def test_canonical_magnitudes_are_one_two_four():
    assert {abs(v) for v in CANONICAL_WEIGHTS.values()} <= {0, 1, 2, 4}


def test_immediate_help_scores_four():
    idx, _ = walk(Transition.HELP_SEEK, Transition.HELP_IMMEDIATE, Transition.HELP_COMPLETION)
    assert idx == 4


def test_waited_help_nets_zero():
    idx, _ = walk(Transition.HELP_SEEK, Transition.HELP_WAIT, Transition.HELP_SERVED_AFTER_WAIT,
                  Transition.HELP_COMPLETION)
    assert idx == 0


def test_help_abandon_then_leave_scores_minus_six():
    idx, led = walk(Transition.HELP_SEEK, Transition.HELP_WAIT, Transition.HELP_ABANDON,
                    Transition.LEAVE_WITHOUT_PURCHASE)
    assert idx == -6
    assert led.satisfied_count == 0


def test_immediate_purchase_scores_five():
    idx, led = walk(Transition.PAY_IMMEDIATE, Transition.PAY_COMPLETION)
    assert idx == 5 and led.satisfied_count == 1


def test_refund_partition():
    _, led = walk(Transition.REFUND_IMMEDIATE, Transition.REFUND_COMPLETION, refund=True)
    assert led.overall_satisfaction_refund == 3
    assert led.overall_satisfaction_shopping == 0
    assert led.overall_satisfaction == 3


def test_zero_index_is_not_satisfied():
    _, led = walk(Transition.HELP_SEEK, Transition.HELP_WAIT)
    assert led.satisfied_count == 0


def test_no_transitions_after_leaving():
    led = SatisfactionLedger()
    c = customer()
    led.finalize_customer(c)
    with pytest.raises(FinalizationError):
        led.record_transition(c, Transition.PAY_WAIT)
    with pytest.raises(FinalizationError):
        led.finalize_customer(c)


def test_unknown_transition_rejected():
    with pytest.raises(ValueError):
        SatisfactionLedger().record_transition(customer(), "pay.teleport")


def test_weight_table_fills_missing_entries():
    w = WeightTable({Transition.PAY_COMPLETION: 10})
    assert w[Transition.PAY_COMPLETION] == 10
    assert w[Transition.HELP_SEEK] == 2


def test_weight_table_rejects_fractions_and_unknown_keys():
    with pytest.raises(ValueError):
        WeightTable({Transition.PAY_WAIT: 0.5})
    with pytest.raises(ValueError):
        WeightTable.from_dict({"pay.nope": 1})


def test_weight_table_round_trip():
    w = apply_scenario(WeightTable(), Scale(10))
    assert WeightTable.from_dict(w.as_dict()) == w


def test_uniform_keeps_signs():
    w = apply_scenario(WeightTable(), Uniform(3))
    for t, v in CANONICAL_WEIGHTS.items():
        assert w[t] == (3 if v > 0 else -3 if v < 0 else 0)


def test_square_progression_levels():
    mags = lambda lvl: sorted({abs(v) for v in apply_scenario(WeightTable(), SquareProgression(lvl)).values.values()} - {0})
    assert mags(1) == [1, 2, 4]
    assert mags(2) == [1, 4, 16]
    assert mags(3) == [1, 16, 256]


def test_scenario_numbering():
    assert scenario_for(2, 2) == Scale(10)
    assert scenario_for(2, 3) == Scale(100)
    assert scenario_for(1, 3) == Uniform(3)
    assert scenario_for(3, 3) == SquareProgression(3)
    with pytest.raises(ValueError):
        scenario_for(4, 1)


@pytest.mark.parametrize("bad", [Uniform(0), Scale(-1), SquareProgression(0)])
def test_non_positive_scenarios_rejected(bad):
    with pytest.raises(ValueError):
        apply_scenario(WeightTable(), bad)


@pytest.mark.parametrize("s", [None, Uniform(2), Scale(10), SquareProgression(3)])
def test_scenario_dict_round_trip(s):
    assert scenario_from_dict(scenario_to_dict(s)) == s


_transitions = st.lists(st.sampled_from(list(Transition)), max_size=30)


@given(_transitions, st.integers(1, 1000))
def test_scale_is_linear(path, k):
    base, _ = walk(*path)
    scaled, _ = walk(*path, weights=apply_scenario(WeightTable(), Scale(k)))
    assert scaled == k * base


@given(st.lists(st.tuples(_transitions, st.booleans()), max_size=20))
def test_partitions_add_up(visits):
    led = SatisfactionLedger()
    for path, refund in visits:
        c = customer(refund)
        for t in path:
            led.record_transition(c, t)
        led.finalize_customer(c)
    assert led.overall_satisfaction == led.overall_satisfaction_shopping + led.overall_satisfaction_refund
    assert 0 <= led.satisfied_count <= len(visits)
