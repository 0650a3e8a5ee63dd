"""Service level index: signed weights on customer transitions.

Each customer carries a running integer index. Weights never feed back
into behaviour; they only observe transitions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping


class Transition(str, enum.Enum):
    HELP_SEEK = "help.seek"
    HELP_IMMEDIATE = "help.immediate_service"
    HELP_WAIT = "help.wait"
    HELP_SERVED_AFTER_WAIT = "help.served_after_wait"
    HELP_ABANDON = "help.abandon"
    HELP_COMPLETION = "help.completion"
    PAY_IMMEDIATE = "pay.immediate_service"
    PAY_WAIT = "pay.wait"
    PAY_SERVED_AFTER_WAIT = "pay.served_after_wait"
    PAY_ABANDON = "pay.abandon"
    PAY_COMPLETION = "pay.completion"
    REFUND_IMMEDIATE = "refund.immediate_service"
    REFUND_WAIT = "refund.wait"
    REFUND_SERVED_AFTER_WAIT = "refund.served_after_wait"
    REFUND_ABANDON = "refund.abandon"
    REFUND_COMPLETION = "refund.completion"
    REFUND_DENIED = "refund.denied"
    LEAVE_WITHOUT_PURCHASE = "leave_without_purchase"


CANONICAL_WEIGHTS: Mapping[Transition, int] = MappingProxyType({
    Transition.HELP_SEEK: 2,
    Transition.HELP_IMMEDIATE: 2,
    Transition.HELP_WAIT: -2,
    # waiting then being helped cancels the seek bonus: 2 - 2 = 0
    Transition.HELP_SERVED_AFTER_WAIT: 0,
    Transition.HELP_ABANDON: -4,
    Transition.HELP_COMPLETION: 0,
    Transition.PAY_IMMEDIATE: 1,
    Transition.PAY_WAIT: -1,
    Transition.PAY_SERVED_AFTER_WAIT: 1,
    Transition.PAY_ABANDON: -4,
    Transition.PAY_COMPLETION: 4,
    Transition.REFUND_IMMEDIATE: 1,
    Transition.REFUND_WAIT: -1,
    Transition.REFUND_SERVED_AFTER_WAIT: 1,
    Transition.REFUND_ABANDON: -4,
    Transition.REFUND_COMPLETION: 2,
    Transition.REFUND_DENIED: -2,
    Transition.LEAVE_WITHOUT_PURCHASE: -2,
})


@dataclass(frozen=True)
class WeightTable:
    """Integer weight per transition; missing entries fall back to the canonical table."""

    values: Mapping[Transition, int] = field(default_factory=lambda: dict(CANONICAL_WEIGHTS))

    def __post_init__(self) -> None:
        merged = dict(CANONICAL_WEIGHTS)
        for key, val in self.values.items():
            t = Transition(key)
            if isinstance(val, bool) or int(val) != val:
                raise ValueError(f"weight for {t.value} must be an integer, got {val!r}")
            merged[t] = int(val)
        object.__setattr__(self, "values", MappingProxyType(merged))

    def __getitem__(self, t: Transition) -> int:
        return self.values[t]

    def as_dict(self) -> dict[str, int]:
        return {t.value: v for t, v in self.values.items()}

    @classmethod
    def from_dict(cls, d: Mapping[str, int]) -> "WeightTable":
        unknown = set(d) - {t.value for t in Transition}
        if unknown:
            raise ValueError(f"unknown transition(s) in weight table: {sorted(unknown)}")
        return cls({Transition(k): v for k, v in d.items()})


# --- scenario transforms -------------------------------------------------

@dataclass(frozen=True)
class Uniform:
    value: int


@dataclass(frozen=True)
class Scale:
    factor: int


@dataclass(frozen=True)
class SquareProgression:
    level: int


Scenario = Uniform | Scale | SquareProgression


def _sign(v: int) -> int:
    return (v > 0) - (v < 0)


def apply_scenario(weights: WeightTable, scenario: Scenario) -> WeightTable:
    if isinstance(scenario, Uniform):
        if scenario.value <= 0:
            raise ValueError("uniform weight must be positive")
        return WeightTable({t: _sign(v) * scenario.value for t, v in weights.values.items()})
    if isinstance(scenario, Scale):
        if scenario.factor <= 0:
            raise ValueError("scale factor must be positive")
        return WeightTable({t: v * scenario.factor for t, v in weights.values.items()})
    if isinstance(scenario, SquareProgression):
        if scenario.level < 1:
            raise ValueError("square progression level starts at 1")
        power = 2 ** (scenario.level - 1)
        return WeightTable({t: _sign(v) * abs(v) ** power for t, v in weights.values.items()})
    raise TypeError(f"unknown scenario {scenario!r}")


SCENARIO_LEVELS = {1: (1, 2, 3), 2: (1, 10, 100), 3: (1, 2, 3)}


def scenario_for(number: int, level: int) -> Scenario:
    """Weight transform for experiment scenario 1-3 at level 1-3."""
    if number not in SCENARIO_LEVELS or level not in (1, 2, 3):
        raise ValueError(f"no scenario {number} level {level}")
    value = SCENARIO_LEVELS[number][level - 1]
    if number == 1:
        return Uniform(value)
    if number == 2:
        return Scale(value)
    return SquareProgression(value)


def scenario_to_dict(s: Scenario | None) -> dict | None:
    if s is None:
        return None
    if isinstance(s, Uniform):
        return {"kind": "uniform", "value": s.value}
    if isinstance(s, Scale):
        return {"kind": "scale", "value": s.factor}
    return {"kind": "square", "value": s.level}


def scenario_from_dict(d: Mapping | None) -> Scenario | None:
    if d is None:
        return None
    kind, value = d.get("kind"), d.get("value")
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValueError(f"weight_scenario.value must be an integer, got {value!r}")
    if kind == "uniform":
        return Uniform(value)
    if kind == "scale":
        return Scale(value)
    if kind == "square":
        return SquareProgression(value)
    raise ValueError(f"weight_scenario.kind must be uniform|scale|square, got {kind!r}")


# --- ledger --------------------------------------------------------------

class FinalizationError(RuntimeError):
    pass


@dataclass
class SatisfactionLedger:
    """Per-customer running indices plus department-level totals."""

    weights: WeightTable = field(default_factory=WeightTable)
    satisfied_count: int = 0
    overall_satisfaction: int = 0
    overall_satisfaction_shopping: int = 0
    overall_satisfaction_refund: int = 0

    def __post_init__(self) -> None:
        self._w = {t: v for t, v in self.weights.values.items()}

    def record_transition(self, customer, transition: Transition) -> None:
        if customer.finalized:
            raise FinalizationError(f"customer {customer.id} already left")
        try:
            customer.satisfaction += self._w[transition]
        except KeyError:
            raise ValueError(f"unknown transition {transition!r}") from None

    def finalize_customer(self, customer) -> None:
        if customer.finalized:
            raise FinalizationError(f"customer {customer.id} finalized twice")
        customer.finalized = True
        idx = customer.satisfaction
        if idx > 0:
            self.satisfied_count += 1
        self.overall_satisfaction += idx
        if customer.refund_visit:
            self.overall_satisfaction_refund += idx
        else:
            self.overall_satisfaction_shopping += idx
