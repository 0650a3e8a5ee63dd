from __future__ import annotations

import io

import pytest

from shopfloor.config import Config, default_config
from shopfloor.domain import DepartmentModel
from shopfloor.engine import RngStream


class ScriptedRng(RngStream):
    """Arrivals at fixed gaps, then none; other draws come from the seeded stream.

    Pair it with 0/1 probabilities and degenerate triangles to make a run
    fully deterministic.
    """

    def __init__(self, gaps, seed: int = 0) -> None:
        super().__init__(seed)
        self.gaps = list(gaps)

    def exponential(self, rate_per_hour: float) -> float:
        return self.gaps.pop(0) if self.gaps else 1e12


def fixed(x: float) -> list[float]:
    return [x, x, x]


def scripted_config(**overrides) -> Config:
    """One open day, certain outcomes, constant durations."""
    base = {
        "run.weeks": 1, "run.days_per_week": 1,
        "staffing.cashiers": 1, "staffing.normals": 1, "staffing.experts": 0,
        "department.p_need_help": 1.0, "department.p_buy_after_browse": 0.0,
        "department.p_buy_after_help": 0.0, "department.p_buy_without_help": 0.0,
        "department.p_refund_visit": 0.0, "department.p_shop_after_refund": 0.0,
        "department.p_escalate": 0.0,
        "department.browse": fixed(5.0), "department.help_duration": fixed(10.0),
        "department.pay_duration": fixed(2.0), "department.refund_duration": fixed(3.0),
        "department.authorization_duration": fixed(4.0),
        "department.help_patience": fixed(30.0), "department.pay_patience": fixed(30.0),
        "department.refund_patience": fixed(30.0),
    }
    base.update(overrides)
    return default_config().with_overrides(base)


def run_scripted(cfg: Config, gaps, weights=None, check: bool = True):
    buf = io.StringIO()
    model = DepartmentModel(cfg, ScriptedRng(gaps), weights=weights, trace=buf, check_invariants=check)
    model.run()
    return model, buf.getvalue().splitlines()


def sat_kinds(lines, customer: str) -> list[str]:
    return [ln.split("\t")[1][4:] for ln in lines if ln.endswith("\t" + customer) and "\tsat." in ln]


@pytest.fixture
def short_config() -> Config:
    return default_config().with_overrides({"run.weeks": 1})


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
