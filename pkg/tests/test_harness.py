from __future__ import annotations

import json
import math
from dataclasses import replace

import pytest

from shopfloor import harness
from shopfloor.config import default_config
from shopfloor.engine import derive_seed
from shopfloor.harness import (
    ExperimentPlan, Factor, IncompleteGridError, ReplicationError, analyze, export_csv,
    preset_practice, preset_staffing_validation, preset_weight_sensitivity, read_csv, run_once,
    run_replications,
)
from shopfloor.metrics import RunMetrics
from shopfloor.satisfaction import Scale, SquareProgression, Transition

TINY = {"run.weeks": 1, "run.days_per_week": 1}


def tiny_plan(levels=(1, 2, 3), reps=3, seed=5, **kw) -> ExperimentPlan:
    base = default_config().with_overrides(TINY)
    return ExperimentPlan("tiny", base, (Factor.sweep("cashiers", "staffing.cashiers", levels),),
                          reps, seed, **kw)


def shrink(plan: ExperimentPlan, reps: int = 2) -> ExperimentPlan:
    return replace(plan, base=plan.base.with_overrides(TINY), replications=reps)


def test_counting():
    rs = run_replications(tiny_plan(levels=(1, 2, 3, 4, 5), reps=2))
    assert len(rs) == 10
    assert rs.labels == [f"cashiers={c}" for c in range(1, 6)]


def test_determinism():
    a = run_replications(tiny_plan(levels=(2,), reps=2))
    b = run_replications(tiny_plan(levels=(2,), reps=2))
    assert a.records == b.records


def test_seeds_follow_condition_and_rep():
    rs = run_replications(tiny_plan())
    for (c, r), rec in rs.records.items():
        assert rec.seed == derive_seed(5, c, r)
        assert rec.metrics == run_once(tiny_plan().conditions()[c].config, rec.seed)


def test_execution_order_does_not_matter():
    plan = tiny_plan()
    forward = run_replications(plan)
    cells = sorted(forward.records, reverse=True)
    backward = run_replications(plan, order=cells)
    assert forward.records == backward.records


def test_parallel_matches_serial():
    plan = tiny_plan(reps=2)
    assert run_replications(plan, jobs=2).records == run_replications(plan).records


def test_failure_names_the_cell(monkeypatch):
    real = harness.run_once

    def flaky(cfg, seed, **kw):
        if seed == derive_seed(5, 1, 2):
            raise RuntimeError("boom")
        return real(cfg, seed, **kw)

    monkeypatch.setattr(harness, "run_once", flaky)
    with pytest.raises(ReplicationError) as err:
        run_replications(tiny_plan())
    assert (err.value.condition, err.value.rep) == (1, 2)


def test_plan_validation():
    with pytest.raises(ValueError):
        tiny_plan(reps=0)
    with pytest.raises(ValueError):
        tiny_plan(levels=(1, 1))
    with pytest.raises(ValueError):
        tiny_plan(dependent_variables=("happiness",))


# --- presets -------------------------------------------------------------

def test_staffing_preset():
    plan = preset_staffing_validation("atv")
    conds = plan.conditions()
    assert [dict(c.levels)["cashiers"] for c in conds] == [1, 2, 3, 4, 5]
    assert all(c.config.staffing.total == 10 for c in conds)
    assert all(c.config.staffing.experts == 1 for c in conds)
    assert plan.replications == 20 and plan.base.run.weeks == 10
    assert harness.stats.bonferroni(0.05, len(plan.dependent_variables)) == pytest.approx(0.0167, abs=5e-5)


def test_staffing_preset_for_both_departments():
    plan = preset_staffing_validation("both")
    assert [f.name for f in plan.factors] == ["department", "cashiers"]
    names = {c.config.department.name for c in plan.conditions()}
    assert names == {"atv", "ww"}
    with pytest.raises(ValueError):
        preset_staffing_validation("toys")


def test_weight_preset_transforms():
    plan = preset_weight_sensitivity(2)
    conds = {c.label: c.config for c in plan.conditions()}
    cfg = conds["department=atv;level=2"]
    assert cfg.run.weight_scenario == Scale(10)
    assert cfg.effective_weights()[Transition.PAY_COMPLETION] == 40
    s3 = {c.label: c.config for c in preset_weight_sensitivity(3).conditions()}["department=ww;level=3"]
    assert s3.run.weight_scenario == SquareProgression(3)
    assert sorted({abs(v) for v in s3.effective_weights().values.values()} - {0}) == [1, 16, 256]
    assert (cfg.staffing.cashiers, cfg.staffing.normals, cfg.staffing.experts) == (3, 6, 1)


def test_weight_preset_switches_refunds_off():
    rs = run_replications(shrink(preset_weight_sensitivity(1, level=2, department="atv"), 1))
    assert all(r.metrics.refund_customers == 0 for r in rs.ordered())


@pytest.mark.parametrize("kind,factor,values", [
    ("task_empowerment", "p_task_empowerment", [0.0, 0.25, 0.5, 0.75, 1.0]),
    ("empowerment_to_learn", "p_learn", [0.0, 0.25, 0.5, 0.75, 1.0]),
    ("employee_development", "threshold_fraction", [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]),
])
def test_practice_presets(kind, factor, values):
    plan = preset_practice(kind)
    conds = plan.conditions()
    assert [getattr(c.config.practice, factor) for c in conds] == values
    for c in conds:
        st = c.config.staffing
        assert (st.cashiers, st.normals, st.experts) == (3, 7, 2) and st.total == 12
        assert c.config.department.name == "atv" and c.config.department.arrival_rate == 70
    assert plan.replications >= 20
    if kind == "employee_development":
        assert all(c.config.practice.promotion_enabled and c.config.practice.p_learn == 1.0 for c in conds)
    if len(plan.dependent_variables) == 5:
        assert harness.stats.bonferroni(0.05, 5) == pytest.approx(0.01)


def test_unknown_preset():
    with pytest.raises(ValueError):
        harness.preset("staffing-ish")
    with pytest.raises(ValueError):
        preset_practice("micromanagement")


# --- CSV -----------------------------------------------------------------

def test_csv_layout_and_determinism(tmp_path):
    rs = run_replications(tiny_plan(levels=(1, 2, 3, 4, 5), reps=20))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    export_csv(rs, a)
    export_csv(rs, b)
    raw = a.read_bytes()
    assert raw == b.read_bytes()
    assert raw.count(b"\r\n") == 101
    header = raw.split(b"\r\n")[0].decode().split(",")
    assert header[:3] == ["condition", "rep", "seed"]
    assert header[3:] == RunMetrics.field_names()


def test_csv_round_trip(tmp_path):
    rs = run_replications(tiny_plan())
    path = export_csv(rs, tmp_path / "r.csv")
    back = read_csv(path)
    assert back.labels == rs.labels and back.factor_names == rs.factor_names
    for key, rec in rs.records.items():
        got = back.records[key]
        assert got.seed == rec.seed
        for name in RunMetrics.field_names():
            x, y = getattr(rec.metrics, name), getattr(got.metrics, name)
            if isinstance(x, float):
                assert y == pytest.approx(x, rel=5e-6)
            else:
                assert y == x


def test_csv_without_sidecar(tmp_path):
    rs = run_replications(tiny_plan())
    path = export_csv(rs, tmp_path / "r.csv", metadata=False)
    back = read_csv(path)
    assert back.factor_names == ("cashiers",)
    assert len(back) == len(rs)


def test_empty_cells_for_undefined_values(tmp_path):
    plan = ExperimentPlan("no-experts", default_config().with_overrides({**TINY, "staffing.experts": 0}),
                          (), 2, 1)
    path = export_csv(run_replications(plan), tmp_path / "r.csv")
    back = read_csv(path)
    assert all(r.metrics.utilization_expert is None for r in back.ordered())


def test_incomplete_sets_rejected(tmp_path):
    rs = run_replications(tiny_plan())
    del rs.records[(1, 1)]
    with pytest.raises(IncompleteGridError):
        export_csv(rs, tmp_path / "r.csv")
    with pytest.raises(IncompleteGridError):
        analyze(rs)


def test_export_io_error_names_path(tmp_path):
    rs = run_replications(tiny_plan(levels=(1,), reps=1))
    target = tmp_path / "missing" / "r.csv"
    with pytest.raises(OSError, match="missing"):
        export_csv(rs, target)


def test_metadata_contents():
    rs = run_replications(tiny_plan())
    md = rs.metadata
    assert md["rng"] == "numpy.PCG64"
    assert md["base_seed"] == 5 and md["replications"] == 3
    assert set(md["config_digest"]) == set(rs.labels)
    assert md["base_config"]["run"]["weeks"] == 1


# --- analysis ------------------------------------------------------------

def test_analysis_one_way():
    rs = run_replications(tiny_plan(levels=(1, 3), reps=6))
    rep = analyze(rs)
    assert rep["bonferroni_alpha"] == pytest.approx(0.05 / 3)
    tx = rep["variables"]["transactions"]
    assert tx["design"] == "one-way"
    assert set(tx["ks"]) == set(rs.labels)
    assert tx["anova"]["between"]["df"] == 1
    assert len(tx["tukey"]["pairs"]) == 1
    json.dumps(rep)


def test_analysis_single_condition_skips_anova():
    rs = run_replications(tiny_plan(levels=(2,), reps=5))
    v = analyze(rs)["variables"]["transactions"]
    assert "anova" not in v and "single condition" in v["note"]


def test_analysis_two_way():
    base = default_config().with_overrides(TINY)
    plan = ExperimentPlan("two", base, (
        Factor("department", (("atv", {"department": "atv"}), ("ww", {"department": "ww"}))),
        Factor.sweep("cashiers", "staffing.cashiers", (2, 3)),
    ), 3, 2)
    rep = analyze(run_replications(plan), ["transactions"])
    v = rep["variables"]["transactions"]
    assert v["design"] == "two-way"
    assert set(v["anova"]) >= {"department", "cashiers", "department:cashiers", "within"}
    assert set(v["tukey"]) == {"department", "cashiers"}
    assert rep["bonferroni_alpha"] == 0.05


def test_analysis_errors_stay_per_variable():
    plan = ExperimentPlan("no-experts", default_config().with_overrides({**TINY, "staffing.experts": 0}),
                          (Factor.sweep("cashiers", "staffing.cashiers", (1, 2)),), 3, 1)
    rep = analyze(run_replications(plan), ["utilization_expert", "transactions"])
    assert "error" in rep["variables"]["utilization_expert"]
    assert "anova" in rep["variables"]["transactions"]


def test_analysis_json_is_finite_safe():
    assert harness._clean({"a": math.inf, "b": [math.nan]}) == {"a": "inf", "b": ["nan"]}
