"""Replication runner, preset experiments, CSV export and the analysis pipeline."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Any, Callable, Iterable, Mapping, Sequence

from . import __version__, stats
from .config import Config, ConfigError, builtin_profiles, config_from_dict, config_to_dict, default_config
from .domain import DepartmentModel
from .engine import RNG_NAME, RngStream, derive_seed
from .metrics import FLOAT_FIELDS, RunMetrics, snapshot
from .satisfaction import WeightTable

DEPARTMENT_KEY = "department"  # override key that swaps the whole profile


class ReplicationError(RuntimeError):
    def __init__(self, condition: int, rep: int, cause: BaseException | str) -> None:
        super().__init__(f"replication failed at condition {condition}, rep {rep}: {cause}")
        self.condition = condition
        self.rep = rep


class IncompleteGridError(ValueError):
    pass


# --- plans ---------------------------------------------------------------

@dataclass(frozen=True)
class Factor:
    """A swept variable: each level is (value, config overrides)."""

    name: str
    levels: tuple[tuple[Any, Mapping[str, Any]], ...]

    def __post_init__(self) -> None:
        values = [v for v, _ in self.levels]
        if not values:
            raise ValueError(f"factor {self.name} has no levels")
        if len(set(map(str, values))) != len(values):
            raise ValueError(f"factor {self.name} has repeated levels")

    @classmethod
    def sweep(cls, name: str, key: str, values: Iterable[Any]) -> "Factor":
        return cls(name, tuple((v, {key: v}) for v in values))


@dataclass(frozen=True)
class Condition:
    index: int
    levels: tuple[tuple[str, Any], ...]
    config: Config

    @property
    def label(self) -> str:
        return condition_label(self.levels)


def condition_label(levels: Sequence[tuple[str, Any]]) -> str:
    if not levels:
        return "base"
    return ";".join(f"{n}={_fmt_level(v)}" for n, v in levels)


def parse_label(label: str) -> tuple[tuple[str, str], ...]:
    if label == "base":
        return ()
    return tuple(tuple(part.split("=", 1)) for part in label.split(";"))  # type: ignore[misc]


def _fmt_level(v: Any) -> str:
    return format(v, "g") if isinstance(v, float) else str(v)


def apply_overrides(cfg: Config, overrides: Mapping[str, Any]) -> Config:
    ov = dict(overrides)
    dept = ov.pop(DEPARTMENT_KEY, None)
    if dept is not None:
        profiles = builtin_profiles()
        if dept not in profiles:
            raise ConfigError("department", f"unknown profile {dept!r}")
        cfg = replace(cfg, department=profiles[dept])
    return cfg.with_overrides(ov) if ov else cfg


@dataclass(frozen=True)
class ExperimentPlan:
    name: str
    base: Config
    factors: tuple[Factor, ...] = ()
    replications: int = 20
    base_seed: int = 20090101
    dependent_variables: tuple[str, ...] = ("transactions", "satisfied_count", "overall_satisfaction")

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise ValueError("factor names must be distinct")
        unknown = set(self.dependent_variables) - set(RunMetrics.field_names())
        if unknown:
            raise ValueError(f"unknown dependent variable(s): {sorted(unknown)}")

    def conditions(self) -> list[Condition]:
        out = []
        grid = itertools.product(*(f.levels for f in self.factors))
        for c, combo in enumerate(grid):
            cfg = self.base
            for _, ov in combo:
                cfg = apply_overrides(cfg, ov)
            levels = tuple((f.name, v) for f, (v, _) in zip(self.factors, combo))
            out.append(Condition(c, levels, cfg.validate()))
        return out

    def with_replications(self, n: int) -> "ExperimentPlan":
        return replace(self, replications=n)

    def with_seed(self, seed: int) -> "ExperimentPlan":
        return replace(self, base_seed=seed)


# --- running -------------------------------------------------------------

def run_once(config: Config, seed: int, trace: IO[str] | None = None,
             weights: WeightTable | None = None, check: bool = False) -> RunMetrics:
    model = DepartmentModel(config, RngStream(seed), weights=weights, trace=trace, check_invariants=check)
    return snapshot(model.run())


def _run_task(task: tuple[dict, int, int, int]) -> tuple[int, int, dict]:
    cfg_dict, seed, c, r = task
    return c, r, run_once(config_from_dict(cfg_dict), seed).as_dict()


@dataclass(frozen=True)
class Record:
    condition: int
    label: str
    rep: int
    seed: int
    metrics: RunMetrics


@dataclass
class ReplicationSet:
    plan_name: str
    factor_names: tuple[str, ...]
    labels: list[str]
    replications: int
    records: dict[tuple[int, int], Record] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    def check_complete(self) -> None:
        missing = [(c, r) for c in range(len(self.labels)) for r in range(self.replications)
                   if (c, r) not in self.records]
        if missing:
            raise IncompleteGridError(f"{len(missing)} missing cell(s), first {missing[0]}")

    def ordered(self) -> list[Record]:
        return [self.records[k] for k in sorted(self.records)]

    def values(self, dv: str) -> dict[str, list]:
        out: dict[str, list] = {lbl: [] for lbl in self.labels}
        for rec in self.ordered():
            out[rec.label].append(getattr(rec.metrics, dv))
        return out

    def __len__(self) -> int:
        return len(self.records)


def run_replications(plan: ExperimentPlan, jobs: int = 1,
                     order: Iterable[tuple[int, int]] | None = None,
                     progress: Callable[[int, int], None] | None = None) -> ReplicationSet:
    """Run every (condition, rep) cell with its own stream ``(base_seed, c, r)``."""
    conds = plan.conditions()
    cells = list(order) if order is not None else [
        (c, r) for c in range(len(conds)) for r in range(plan.replications)]
    rs = ReplicationSet(
        plan.name, tuple(f.name for f in plan.factors), [c.label for c in conds], plan.replications,
        metadata=plan_metadata(plan, conds),
    )
    total = len(cells)

    def store(c: int, r: int, m: RunMetrics) -> None:
        seed = derive_seed(plan.base_seed, c, r)
        rs.records[(c, r)] = Record(c, conds[c].label, r, seed, m)
        if progress is not None:
            progress(len(rs.records), total)

    if jobs <= 1:
        for c, r in cells:
            try:
                store(c, r, run_once(conds[c].config, derive_seed(plan.base_seed, c, r)))
            except Exception as exc:
                raise ReplicationError(c, r, exc) from exc
        return rs

    dicts = [config_to_dict(cond.config) for cond in conds]
    tasks = [(dicts[c], derive_seed(plan.base_seed, c, r), c, r) for c, r in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = {pool.submit(_run_task, t): (t[2], t[3]) for t in tasks}
        for fut, (c, r) in futures.items():
            try:
                _, _, md = fut.result()
            except Exception as exc:
                for f in futures:
                    f.cancel()
                raise ReplicationError(c, r, exc) from exc
            store(c, r, RunMetrics(**md))
    return rs


def plan_metadata(plan: ExperimentPlan, conds: Sequence[Condition] | None = None) -> dict[str, Any]:
    conds = conds if conds is not None else plan.conditions()
    return {
        "plan": plan.name,
        "version": __version__,
        "rng": RNG_NAME,
        "base_seed": plan.base_seed,
        "replications": plan.replications,
        "factors": {f.name: [v for v, _ in f.levels] for f in plan.factors},
        "dependent_variables": list(plan.dependent_variables),
        "config_digest": {c.label: c.config.digest() for c in conds},
        "base_config": config_to_dict(plan.base),
    }


# --- presets -------------------------------------------------------------

DV_STAFFING = ("transactions", "satisfied_count", "overall_satisfaction")
DV_WEIGHTS = ("overall_satisfaction",)
DV_TASK = ("transactions", "overall_satisfaction_shopping", "overall_satisfaction_refund")
DV_LEARN = ("mean_normal_knowledge", "utilization_normal", "utilization_expert",
            "transactions", "overall_satisfaction")

PRACTICE_KINDS = ("task_empowerment", "empowerment_to_learn", "employee_development")
PRESETS = ("staffing", "weights") + PRACTICE_KINDS


def _department_factor(names: Sequence[str]) -> Factor:
    return Factor("department", tuple((n, {DEPARTMENT_KEY: n}) for n in names))


def _depts(department: str | None) -> list[str]:
    if department in (None, "both"):
        return ["atv", "ww"]
    if department not in builtin_profiles():
        raise ValueError(f"department must be atv, ww or both, got {department!r}")
    return [department]


def preset_staffing_validation(department: str = "atv", replications: int = 20,
                               base_seed: int = 20090101, total_staff: int = 10) -> ExperimentPlan:
    """Cashiers 1..5 with one expert and the remainder normals."""
    cashier = Factor("cashiers", tuple(
        (c, {"staffing.cashiers": c, "staffing.normals": total_staff - c - 1, "staffing.experts": 1})
        for c in range(1, 6)))
    depts = _depts(department)
    factors = (cashier,) if len(depts) == 1 else (_department_factor(depts), cashier)
    return ExperimentPlan(f"staffing-{department}", default_config(depts[0]), factors,
                          replications, base_seed, DV_STAFFING)


def preset_weight_sensitivity(scenario: int, level: int | None = None, department: str | None = None,
                              replications: int = 20, base_seed: int = 20090101) -> ExperimentPlan:
    """Department x weight level for one scenario; staffing (3, 6, 1), no refund loop."""
    from .satisfaction import SCENARIO_LEVELS, scenario_for, scenario_to_dict

    if scenario not in SCENARIO_LEVELS:
        raise ValueError("scenario must be 1, 2 or 3")
    levels = [level] if level is not None else [1, 2, 3]
    lvl = Factor("level", tuple(
        (lv, {"run.weight_scenario": scenario_to_dict(scenario_for(scenario, lv))}) for lv in levels))
    depts = _depts(department)
    base = default_config(depts[0]).with_overrides({
        "staffing.cashiers": 3, "staffing.normals": 6, "staffing.experts": 1,
        "practice.refund_loop_enabled": False,
    })
    factors = (_department_factor(depts), lvl) if len(depts) > 1 else (lvl,)
    return ExperimentPlan(f"weights-s{scenario}", base, factors, replications, base_seed, DV_WEIGHTS)


def preset_practice(kind: str, replications: int = 20, base_seed: int = 20090101) -> ExperimentPlan:
    """One of the three management-practice experiments on the A&TV profile."""
    base = default_config("atv").with_overrides({
        "staffing.cashiers": 3, "staffing.normals": 7, "staffing.experts": 2,
        "department.arrival_rate": 70.0,
    })
    grid = (0.0, 0.25, 0.5, 0.75, 1.0)
    if kind == "task_empowerment":
        return ExperimentPlan(kind, base, (Factor.sweep("empowerment", "practice.p_task_empowerment", grid),),
                              replications, base_seed, DV_TASK)
    if kind == "empowerment_to_learn":
        return ExperimentPlan(kind, base, (Factor.sweep("p_learn", "practice.p_learn", grid),),
                              replications, base_seed, DV_LEARN)
    if kind == "employee_development":
        base = base.with_overrides({"practice.p_learn": 1.0, "practice.promotion_enabled": True})
        thresholds = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
        return ExperimentPlan(kind, base, (Factor.sweep("threshold", "practice.threshold_fraction", thresholds),),
                              replications, base_seed, DV_LEARN)
    raise ValueError(f"practice kind must be one of {PRACTICE_KINDS}, got {kind!r}")


def preset(name: str, *, department: str = "atv", scenario: int = 2, level: int | None = None,
           replications: int = 20, base_seed: int = 20090101) -> ExperimentPlan:
    if name == "staffing":
        return preset_staffing_validation(department, replications, base_seed)
    if name == "weights":
        dept = None if department == "both" else department
        return preset_weight_sensitivity(scenario, level, dept, replications, base_seed)
    if name in PRACTICE_KINDS:
        return preset_practice(name, replications, base_seed)
    raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")


# --- CSV -----------------------------------------------------------------

CSV_COLUMNS = ["condition", "rep", "seed"] + RunMetrics.field_names()


def _render(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".6g")
    return str(v)


def export_csv(rs: ReplicationSet, path: str | Path, metadata: bool = True) -> Path:
    """Write one row per (condition, rep); a ``.meta.json`` sidecar holds provenance."""
    rs.check_complete()
    path = Path(path)
    buf = io.StringIO(newline="")
    w = csv.writer(buf)  # RFC 4180: CRLF rows, minimal quoting
    w.writerow(CSV_COLUMNS)
    for rec in rs.ordered():
        m = rec.metrics.as_dict()
        w.writerow([rec.label, rec.rep, rec.seed] + [_render(m[k]) for k in RunMetrics.field_names()])
    try:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())
        if metadata:
            meta = dict(rs.metadata, labels=rs.labels, factor_names=list(rs.factor_names))
            Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def _parse(name: str, text: str) -> Any:
    if text == "":
        return None
    return float(text) if name in FLOAT_FIELDS else int(text)


def read_csv(path: str | Path) -> ReplicationSet:
    path = Path(path)
    meta_path = Path(str(path) + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise IncompleteGridError(f"{path}: no rows")
    missing = set(CSV_COLUMNS) - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
    labels = meta.get("labels") or list(dict.fromkeys(r["condition"] for r in rows))
    index = {lbl: i for i, lbl in enumerate(labels)}
    reps = max(int(r["rep"]) for r in rows) + 1
    factor_names = tuple(meta.get("factor_names") or [n for n, _ in parse_label(labels[0])])
    rs = ReplicationSet(meta.get("plan", path.stem), factor_names, labels,
                        int(meta.get("replications", reps)), metadata=meta)
    for row in rows:
        c, r = index[row["condition"]], int(row["rep"])
        m = RunMetrics(**{k: _parse(k, row[k]) for k in RunMetrics.field_names()})
        rs.records[(c, r)] = Record(c, row["condition"], r, int(row["seed"]), m)
    rs.check_complete()
    return rs


# --- analysis ------------------------------------------------------------

def _clean(obj: Any) -> Any:
    """Make floats JSON-safe (inf/nan become strings)."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _tukey_dict(t: stats.TukeyResult) -> dict:
    return {
        "alpha": t.alpha, "k": t.k, "df": t.df, "q_critical": t.q_critical,
        "pairs": [vars(p) for p in t.pairs],
    }


def _analyze_dv(rs: ReplicationSet, dv: str, alpha_post: float) -> dict:
    groups = rs.values(dv)
    if any(v is None for g in groups.values() for v in g):
        raise stats.StatsError(f"{dv} is undefined in some runs")
    out: dict[str, Any] = {"descriptives": {}, "ks": {}}
    for lbl, g in groups.items():
        mean, sd = stats.describe(g) if len(g) > 1 else (g[0], math.nan)
        out["descriptives"][lbl] = {"n": len(g), "mean": mean, "sd": sd}
        try:
            d, p = stats.ks_normality(g)
            out["ks"][lbl] = {"D": d, "p": p}
        except stats.StatsError as exc:
            out["ks"][lbl] = {"error": str(exc)}
    if len(groups) < 2:
        out["note"] = "single condition: ANOVA and post-hoc tests skipped"
        return out
    try:
        out["levene"] = vars(stats.levene(groups))
    except stats.StatsError as exc:
        out["levene"] = {"error": str(exc)}

    if len(rs.factor_names) == 2:
        cells = {}
        for lbl, g in groups.items():
            levels = dict(parse_label(lbl))
            cells[(levels[rs.factor_names[0]], levels[rs.factor_names[1]])] = g
        res = stats.anova_twoway(cells, names=rs.factor_names)  # type: ignore[arg-type]
        out["design"] = "two-way"
        out["anova"] = res.as_dict()
        out["tukey"] = {}
        for i, name in enumerate(rs.factor_names):
            marg: dict[str, list] = {}
            for key, g in cells.items():
                marg.setdefault(key[i], []).extend(g)
            out["tukey"][name] = _tukey_dict(stats.tukey_hsd(
                marg, alpha_post, ms_within=res.within.ms, df_within=res.within.df))
    else:
        res = stats.anova_oneway(groups)
        out["design"] = "one-way"
        out["anova"] = res.as_dict()
        out["tukey"] = _tukey_dict(stats.tukey_hsd(groups, alpha_post))
    return out


def analyze(rs: ReplicationSet, dependent_variables: Sequence[str] | None = None,
            alpha: float = 0.05) -> dict:
    """Normality, Levene, ANOVA and Bonferroni-corrected Tukey for each variable."""
    rs.check_complete()
    dvs = list(dependent_variables or rs.metadata.get("dependent_variables") or DV_STAFFING)
    alpha_post = stats.bonferroni(alpha, len(dvs))
    report: dict[str, Any] = {
        "plan": rs.plan_name,
        "factors": list(rs.factor_names),
        "conditions": list(rs.labels),
        "replications": rs.replications,
        "alpha": alpha,
        "bonferroni_alpha": alpha_post,
        "variables": {},
    }
    for dv in dvs:
        try:
            report["variables"][dv] = _analyze_dv(rs, dv, alpha_post)
        except (stats.StatsError, ValueError, KeyError) as exc:
            report["variables"][dv] = {"error": str(exc)}
    return _clean(report)
