"""Per-run KPIs and their recomputation from an event trace."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Iterable

from .config import Config, Schedule
from .domain import HELP_EXPERT, HELP_NORMAL, PAY, REFUND, DepartmentModel, Role
from .satisfaction import Transition, WeightTable


@dataclass(frozen=True)
class RunMetrics:
    arrivals: int
    departures: int
    in_store: int
    transactions: int
    satisfied_count: int
    overall_satisfaction: int
    overall_satisfaction_shopping: int
    overall_satisfaction_refund: int
    utilization_cashier: float | None
    utilization_normal: float | None
    utilization_expert: float | None
    mean_normal_knowledge: float | None
    abandon_help: int
    abandon_expert: int
    abandon_pay: int
    abandon_refund: int
    refund_customers: int
    refunds_granted: int
    refunds_denied: int
    escalations: int
    shadowed: int
    promotions: int

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


FLOAT_FIELDS = {"utilization_cashier", "utilization_normal", "utilization_expert", "mean_normal_knowledge"}


def utilization(busy_minutes: float, member_minutes: float) -> float:
    """Busy share of the minutes a group was on the floor while open."""
    if member_minutes <= 0:
        raise ValueError("group has no open minutes")
    return busy_minutes / member_minutes


@dataclass
class _StaffRecord:
    initial_role: Role
    role: Role
    knowledge: int
    promoted_at: float | None
    open_busy: dict


def _staff_kpis(staff: list[_StaffRecord], schedule: Schedule) -> tuple:
    open_total = schedule.total_open_minutes
    end = schedule.end_time
    busy = {r: 0.0 for r in Role}
    member = {r: 0.0 for r in Role}
    for s in staff:
        for r in Role:
            busy[r] += s.open_busy[r]
        if s.promoted_at is None:
            member[s.role] += open_total
        else:
            member[s.initial_role] += schedule.open_overlap(0.0, s.promoted_at)
            member[s.role] += schedule.open_overlap(s.promoted_at, end)

    def util(role: Role) -> float | None:
        return utilization(busy[role], member[role]) if member[role] > 0 else None

    remaining = [s for s in staff if s.role is Role.NORMAL]
    had_normals = any(s.initial_role is Role.NORMAL for s in staff)
    u_normal = util(Role.NORMAL)
    if had_normals and not remaining:
        # group emptied by promotion: reported as zero
        u_normal = 0.0
    if remaining:
        knowledge = sum(s.knowledge for s in remaining) / len(remaining)
    else:
        knowledge = 0.0 if had_normals else None
    return util(Role.CASHIER), u_normal, util(Role.EXPERT), knowledge


def snapshot(model: DepartmentModel) -> RunMetrics:
    staff = [
        _StaffRecord(
            Role.NORMAL if s.promoted_at is not None else s.role,
            s.role, s.knowledge, s.promoted_at, dict(s.open_busy),
        )
        for s in model.staff
    ]
    uc, un, ue, kn = _staff_kpis(staff, model.schedule)
    led = model.ledger
    ab = model.abandonments
    return RunMetrics(
        arrivals=model.arrivals,
        departures=model.departures,
        in_store=len(model.customers),
        transactions=model.transactions,
        satisfied_count=led.satisfied_count,
        overall_satisfaction=led.overall_satisfaction,
        overall_satisfaction_shopping=led.overall_satisfaction_shopping,
        overall_satisfaction_refund=led.overall_satisfaction_refund,
        utilization_cashier=uc,
        utilization_normal=un,
        utilization_expert=ue,
        mean_normal_knowledge=kn,
        abandon_help=ab[HELP_NORMAL],
        abandon_expert=ab[HELP_EXPERT],
        abandon_pay=ab[PAY],
        abandon_refund=ab[REFUND],
        refund_customers=model.refund_customers,
        refunds_granted=model.refunds_granted,
        refunds_denied=model.refunds_denied,
        escalations=model.escalations,
        shadowed=model.shadowed,
        promotions=model.promotions,
    )


def replay_trace(lines: Iterable[str], config: Config, weights: WeightTable | None = None) -> RunMetrics:
    """Recompute every KPI from trace lines alone (plus the initial roster)."""
    schedule = config.run.schedule
    w = (weights or config.effective_weights()).values
    by_name = {t.value: v for t, v in w.items()}
    st = config.staffing
    roles = [Role.CASHIER] * st.cashiers + [Role.NORMAL] * st.normals + [Role.EXPERT] * st.experts
    staff = [_StaffRecord(r, r, 0, None, {x: 0.0 for x in Role}) for r in roles]
    since: dict[int, float] = {}

    counts = dict.fromkeys(
        ("arrivals", "departures", "transactions", "refund_customers", "refunds_granted",
         "refunds_denied", "escalations", "shadowed", "promotions", "satisfied"), 0)
    abandon = {HELP_NORMAL: 0, HELP_EXPERT: 0, PAY: 0, REFUND: 0}
    index: dict[str, int] = {}
    refund_visit: dict[str, bool] = {}
    overall = shopping = refund = 0

    for line in lines:
        t_s, kind, agent = line.rstrip("\n").split("\t")
        if kind.startswith("sat."):
            name = kind[4:]
            index[agent] += by_name[name]
            if name == Transition.REFUND_COMPLETION.value:
                counts["refunds_granted"] += 1
            elif name == Transition.REFUND_DENIED.value:
                counts["refunds_denied"] += 1
        elif kind.startswith("arrive."):
            counts["arrivals"] += 1
            index[agent] = 0
            refund_visit[agent] = kind == "arrive.refund"
            counts["refund_customers"] += refund_visit[agent]
        elif kind == "depart":
            counts["departures"] += 1
            v = index.pop(agent)
            counts["satisfied"] += v > 0
            overall += v
            if refund_visit.pop(agent):
                refund += v
            else:
                shopping += v
        elif kind == "transaction":
            counts["transactions"] += 1
        elif kind == "staff.busy":
            since[int(agent[1:])] = float(t_s)
        elif kind == "staff.free":
            sid = int(agent[1:])
            s = staff[sid]
            s.open_busy[s.role] += schedule.open_overlap(since.pop(sid), float(t_s))
        elif kind == "staff.learn":
            staff[int(agent[1:])].knowledge += 1
        elif kind == "staff.promote":
            s = staff[int(agent[1:])]
            s.role = Role.EXPERT
            s.promoted_at = float(t_s)
            counts["promotions"] += 1
        elif kind == "staff.shadow":
            counts["shadowed"] += 1
        elif kind == "escalate":
            counts["escalations"] += 1
        elif kind.startswith("abandon."):
            abandon[kind[8:]] += 1

    uc, un, ue, kn = _staff_kpis(staff, schedule)
    return RunMetrics(
        arrivals=counts["arrivals"],
        departures=counts["departures"],
        in_store=counts["arrivals"] - counts["departures"],
        transactions=counts["transactions"],
        satisfied_count=counts["satisfied"],
        overall_satisfaction=overall,
        overall_satisfaction_shopping=shopping,
        overall_satisfaction_refund=refund,
        utilization_cashier=uc,
        utilization_normal=un,
        utilization_expert=ue,
        mean_normal_knowledge=kn,
        abandon_help=abandon[HELP_NORMAL],
        abandon_expert=abandon[HELP_EXPERT],
        abandon_pay=abandon[PAY],
        abandon_refund=abandon[REFUND],
        refund_customers=counts["refund_customers"],
        refunds_granted=counts["refunds_granted"],
        refunds_denied=counts["refunds_denied"],
        escalations=counts["escalations"],
        shadowed=counts["shadowed"],
        promotions=counts["promotions"],
    )
