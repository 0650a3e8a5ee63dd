"""Department profiles, staffing, practices and run control.

Configuration files are JSON. Every field has a default; each default is
tagged ``paper`` when it comes from the published study and ``default``
when it is a calibration choice of this package.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .satisfaction import Scenario, WeightTable, scenario_from_dict, scenario_to_dict

Triple = tuple[float, float, float]

TRIPLE_FIELDS = (
    "browse", "help_duration", "pay_duration", "refund_duration",
    "authorization_duration", "pay_patience", "help_patience", "refund_patience",
)
PROB_FIELDS = (
    "p_need_help", "p_buy_after_browse", "p_buy_after_help", "p_buy_without_help",
    "p_refund_visit", "p_shop_after_refund", "p_escalate",
)


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path of the offending field."""

    def __init__(self, key: str, constraint: str) -> None:
        super().__init__(f"{key}: {constraint}")
        self.key = key
        self.constraint = constraint


@dataclass(frozen=True)
class DepartmentProfile:
    name: str
    arrival_rate: float
    p_need_help: float
    p_buy_after_browse: float
    p_buy_after_help: float
    p_buy_without_help: float
    p_refund_visit: float
    p_shop_after_refund: float
    p_escalate: float
    browse: Triple
    help_duration: Triple
    pay_duration: Triple
    refund_duration: Triple
    authorization_duration: Triple
    pay_patience: Triple
    help_patience: Triple
    refund_patience: Triple

    def validate(self, prefix: str = "department") -> None:
        if not (isinstance(self.arrival_rate, (int, float)) and self.arrival_rate > 0):
            raise ConfigError(f"{prefix}.arrival_rate", "must be > 0")
        for name in PROB_FIELDS:
            _check_prob(f"{prefix}.{name}", getattr(self, name))
        for name in TRIPLE_FIELDS:
            t = getattr(self, name)
            if len(t) != 3 or not all(_is_number(v) for v in t):
                raise ConfigError(f"{prefix}.{name}", "must be [min, mode, max]")
            if not (0 <= t[0] <= t[1] <= t[2]):
                raise ConfigError(f"{prefix}.{name}", "must satisfy 0 <= min <= mode <= max")


@dataclass(frozen=True)
class StaffingPlan:
    cashiers: int = 3
    normals: int = 6
    experts: int = 1

    @property
    def total(self) -> int:
        return self.cashiers + self.normals + self.experts

    def validate(self, prefix: str = "staffing") -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"{prefix}.{f.name}", "must be an integer >= 0")
        if self.cashiers < 1:
            raise ConfigError(f"{prefix}.cashiers", "at least one cashier is required")


@dataclass(frozen=True)
class PracticeConfig:
    p_task_empowerment: float = 0.0
    cashier_approval: float = 0.80
    expert_approval: float = 0.70
    p_learn: float = 0.0
    promotion_enabled: bool = False
    threshold_fraction: float = 1.0
    k_max: int = 70
    refund_loop_enabled: bool = True

    def validate(self, prefix: str = "practice") -> None:
        for name in ("p_task_empowerment", "cashier_approval", "expert_approval",
                     "p_learn", "threshold_fraction"):
            _check_prob(f"{prefix}.{name}", getattr(self, name))
        if not isinstance(self.k_max, int) or isinstance(self.k_max, bool) or self.k_max < 1:
            raise ConfigError(f"{prefix}.k_max", "must be an integer >= 1")
        for name in ("promotion_enabled", "refund_loop_enabled"):
            if not isinstance(getattr(self, name), bool):
                raise ConfigError(f"{prefix}.{name}", "must be true or false")

    @property
    def promotion_points(self) -> int:
        """Knowledge points at which a normal becomes an expert (>= 1)."""
        return max(1, math.ceil(self.threshold_fraction * self.k_max))


@dataclass(frozen=True)
class RunControl:
    weeks: int = 10
    open_hours_per_day: float = 10
    days_per_week: int = 7
    replications: int = 20
    base_seed: int = 20090101
    weight_scenario: Scenario | None = None

    def validate(self, prefix: str = "run") -> None:
        for name, lo in (("weeks", 1), ("replications", 1), ("days_per_week", 1)):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < lo:
                raise ConfigError(f"{prefix}.{name}", f"must be an integer >= {lo}")
        if self.days_per_week > 7:
            raise ConfigError(f"{prefix}.days_per_week", "must be <= 7")
        if not _is_number(self.open_hours_per_day) or not 0 < self.open_hours_per_day <= 24:
            raise ConfigError(f"{prefix}.open_hours_per_day", "must be in (0, 24]")
        if not isinstance(self.base_seed, int) or isinstance(self.base_seed, bool) or self.base_seed < 0:
            raise ConfigError(f"{prefix}.base_seed", "must be a non-negative integer")

    @property
    def schedule(self) -> "Schedule":
        return Schedule(self.weeks, self.days_per_week, self.open_hours_per_day * 60.0)


@dataclass(frozen=True)
class Schedule:
    """Opening calendar: each open day runs from its midnight for ``open_minutes``."""

    weeks: int
    days_per_week: int
    open_minutes: float

    @property
    def end_time(self) -> float:
        return self.weeks * 7 * 1440.0

    @property
    def total_open_minutes(self) -> float:
        return self.weeks * self.days_per_week * self.open_minutes

    def open_days(self):
        for d in range(self.weeks * 7):
            if d % 7 < self.days_per_week:
                yield d

    def open_overlap(self, start: float, end: float) -> float:
        """Minutes of [start, end) that fall inside opening hours."""
        if end <= start:
            return 0.0
        total = 0.0
        d0 = int(start // 1440.0)
        d1 = int(end // 1440.0)
        for d in range(d0, d1 + 1):
            if d % 7 >= self.days_per_week or d >= self.weeks * 7:
                continue
            lo = max(start, d * 1440.0)
            hi = min(end, d * 1440.0 + self.open_minutes)
            if hi > lo:
                total += hi - lo
        return total


@dataclass(frozen=True)
class Config:
    department: DepartmentProfile
    staffing: StaffingPlan = field(default_factory=StaffingPlan)
    practice: PracticeConfig = field(default_factory=PracticeConfig)
    run: RunControl = field(default_factory=RunControl)
    weights: WeightTable = field(default_factory=WeightTable)

    def validate(self) -> "Config":
        self.department.validate()
        self.staffing.validate()
        self.practice.validate()
        self.run.validate()
        return self

    def effective_weights(self) -> WeightTable:
        from .satisfaction import apply_scenario

        if self.run.weight_scenario is None:
            return self.weights
        return apply_scenario(self.weights, self.run.weight_scenario)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Config":
        d = config_to_dict(self)
        d.pop("provenance", None)
        for key, value in overrides.items():
            _set_dotted(d, key, value)
        return config_from_dict(d)

    def digest(self) -> str:
        d = config_to_dict(self)
        d.pop("provenance", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --- built-in profiles ---------------------------------------------------

# A&TV published sample values; the rest are package defaults.
_ATV_PAPER = {
    "arrival_rate", "p_need_help", "p_buy_after_browse", "p_buy_after_help",
    "browse", "help_duration", "pay_patience",
}

ATV = DepartmentProfile(
    name="atv",
    arrival_rate=70.0,
    p_need_help=0.38,
    p_buy_after_browse=0.37,
    p_buy_after_help=0.56,
    p_buy_without_help=0.20,
    p_refund_visit=0.05,
    p_shop_after_refund=0.30,
    p_escalate=0.048,
    browse=(1.0, 7.0, 15.0),
    help_duration=(3.0, 15.0, 30.0),
    pay_duration=(1.0, 3.0, 6.0),
    refund_duration=(2.0, 5.0, 10.0),
    authorization_duration=(1.0, 3.0, 7.0),
    pay_patience=(5.0, 12.0, 20.0),
    help_patience=(3.0, 8.0, 15.0),
    refund_patience=(5.0, 12.0, 20.0),
)

# Placeholder: only the qualitative contrasts with A&TV are meaningful.
WW = DepartmentProfile(
    name="ww",
    arrival_rate=110.0,
    p_need_help=0.20,
    p_buy_after_browse=0.50,
    p_buy_after_help=0.70,
    p_buy_without_help=0.30,
    p_refund_visit=0.05,
    p_shop_after_refund=0.30,
    p_escalate=0.02,
    browse=(1.0, 5.0, 12.0),
    help_duration=(2.0, 6.0, 12.0),
    pay_duration=(1.0, 2.0, 4.0),
    refund_duration=(2.0, 4.0, 8.0),
    authorization_duration=(1.0, 2.0, 5.0),
    pay_patience=(5.0, 12.0, 20.0),
    help_patience=(3.0, 8.0, 15.0),
    refund_patience=(5.0, 12.0, 20.0),
)


def builtin_profiles() -> dict[str, DepartmentProfile]:
    return {"atv": ATV, "ww": WW}


_PAPER_PRACTICE = {"cashier_approval", "expert_approval"}
_PAPER_RUN = {"weeks", "replications"}


def provenance(cfg: Config, explicit: set[str] = frozenset()) -> dict[str, str]:
    """Source tag per dotted key: ``paper``, ``default`` or ``config``."""
    out: dict[str, str] = {}
    base = builtin_profiles().get(cfg.department.name)
    for f in fields(DepartmentProfile):
        if f.name == "name":
            continue
        key = f"department.{f.name}"
        if key in explicit:
            out[key] = "config"
        elif base is ATV and f.name in _ATV_PAPER and getattr(cfg.department, f.name) == getattr(ATV, f.name):
            out[key] = "paper"
        else:
            out[key] = "default"
    for section, paper in (("staffing", set()), ("practice", _PAPER_PRACTICE), ("run", _PAPER_RUN)):
        for f in fields(getattr(cfg, section)):
            key = f"{section}.{f.name}"
            out[key] = "config" if key in explicit else ("paper" if f.name in paper else "default")
    return out


# --- (de)serialization ---------------------------------------------------

def config_to_dict(cfg: Config, explicit: set[str] = frozenset()) -> dict[str, Any]:
    dept = asdict(cfg.department)
    for name in TRIPLE_FIELDS:
        dept[name] = list(dept[name])
    run = asdict(cfg.run)
    run["weight_scenario"] = scenario_to_dict(cfg.run.weight_scenario)
    return {
        "department": dept,
        "staffing": asdict(cfg.staffing),
        "practice": asdict(cfg.practice),
        "run": run,
        "weights": cfg.weights.as_dict(),
        "provenance": provenance(cfg, explicit),
    }


_SECTIONS = ("department", "staffing", "practice", "run", "weights", "provenance")


def config_from_dict(d: Mapping[str, Any]) -> Config:
    if not isinstance(d, Mapping):
        raise ConfigError("<root>", "must be a JSON object")
    unknown = set(d) - set(_SECTIONS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level key")

    dept_in = dict(d.get("department") or {})
    base_name = dept_in.pop("base", dept_in.get("name", "atv"))
    profiles = builtin_profiles()
    if base_name not in profiles:
        raise ConfigError("department.base", f"must be one of {sorted(profiles)}")
    dept = _build(DepartmentProfile, asdict(profiles[base_name]), dept_in, "department")
    dept = replace(dept, **{n: tuple(float(x) for x in getattr(dept, n)) for n in TRIPLE_FIELDS
                            if _triple_like(getattr(dept, n))})
    staffing = _build(StaffingPlan, asdict(StaffingPlan()), d.get("staffing") or {}, "staffing")
    practice = _build(PracticeConfig, asdict(PracticeConfig()), d.get("practice") or {}, "practice")

    run_in = dict(d.get("run") or {})
    try:
        scen = scenario_from_dict(run_in.pop("weight_scenario", None))
    except ValueError as exc:
        raise ConfigError("run.weight_scenario", str(exc)) from None
    run_defaults = asdict(RunControl())
    run_defaults.pop("weight_scenario")
    run = _build(RunControl, run_defaults, run_in, "run")
    run = replace(run, weight_scenario=scen)

    try:
        weights = WeightTable.from_dict(d.get("weights") or {})
    except ValueError as exc:
        raise ConfigError("weights", str(exc)) from None
    return Config(dept, staffing, practice, run, weights).validate()


def explicit_keys(d: Mapping[str, Any]) -> set[str]:
    out = set()
    for section in ("department", "staffing", "practice", "run"):
        for key in (d.get(section) or {}):
            if key not in ("base", "name"):
                out.add(f"{section}.{key}")
    return out


def load_config(path: str | Path) -> Config:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path}: malformed JSON ({exc})") from None
    return config_from_dict(raw)


def dump_config(cfg: Config, path: str | Path | None = None, explicit: set[str] = frozenset()) -> str:
    text = json.dumps(config_to_dict(cfg, explicit), indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def default_config(department: str = "atv") -> Config:
    return Config(builtin_profiles()[department])


# --- helpers -------------------------------------------------------------

def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _triple_like(v: Any) -> bool:
    return isinstance(v, (list, tuple)) and len(v) == 3 and all(_is_number(x) for x in v)


def _check_prob(key: str, v: Any) -> None:
    if not _is_number(v) or not 0.0 <= v <= 1.0:
        raise ConfigError(key, f"must be a probability in [0, 1], got {v!r}")


def _build(cls, defaults: dict, given: Mapping[str, Any], prefix: str):
    names = {f.name for f in fields(cls)}
    for key in given:
        if key not in names:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
    merged = copy.deepcopy(defaults)
    merged.update(given)
    for key, value in merged.items():
        if key in TRIPLE_FIELDS and cls is DepartmentProfile and not _triple_like(value):
            raise ConfigError(f"{prefix}.{key}", "must be [min, mode, max]")
    obj = cls(**merged)
    obj.validate(prefix)
    return obj


def _set_dotted(d: dict, key: str, value: Any) -> None:
    parts = key.split(".")
    if len(parts) != 2 or parts[0] not in _SECTIONS[:5]:
        raise ConfigError(key, "override keys look like section.field")
    section, name = parts
    if section == "run" and name == "weight_scenario":
        d["run"]["weight_scenario"] = value
        return
    d.setdefault(section, {})[name] = value
