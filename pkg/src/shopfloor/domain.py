"""Customer and staff agents of one retail department.

Customers are active; staff only react. A customer moves through up to
three service blocks (help, pay, refund). In each block they try to get
served at once and otherwise queue until served or out of patience.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import IO

from .config import Config
from .engine import Event, EventQueue, RngStream
from .satisfaction import SatisfactionLedger, Transition, WeightTable


class Goal(enum.Enum):
    PURCHASE = "purchase"
    REFUND = "refund"


class State(enum.Enum):
    CONTEMPLATING = "contemplating"
    BROWSING = "browsing"
    SEEKING_HELP = "seeking_help"
    WAITING_HELP_NORMAL = "waiting_help_normal"
    WAITING_HELP_EXPERT = "waiting_help_expert"
    RECEIVING_HELP = "receiving_help"
    QUEUING_TO_PAY = "queuing_to_pay"
    PAYING = "paying"
    QUEUING_REFUND = "queuing_refund"
    PROCESSING_REFUND = "processing_refund"
    AWAITING_AUTHORIZATION = "awaiting_authorization"
    LEFT = "left"


class Role(enum.Enum):
    CASHIER = "cashier"
    NORMAL = "normal"
    EXPERT = "expert"


# queue names
HELP_NORMAL = "help_normal"
HELP_EXPERT = "help_expert"
PAY = "pay"
REFUND = "refund"

# service kinds
SVC_HELP = 0          # first-line help by a normal or an expert
SVC_EXPERT_HELP = 1   # escalated help, expert only
SVC_PAY = 2
SVC_REFUND = 3
SVC_AUTH = 4          # expert authorizing a refund the cashier is holding

# event kinds
EV_OPEN, EV_CLOSE, EV_ARRIVAL, EV_BROWSE_END, EV_PATIENCE, EV_SERVICE_END = range(6)
EVENT_NAMES = ("open", "close", "arrival", "browse_end", "patience", "service_end")
SERVICE_NAMES = ("help", "expert_help", "pay", "refund", "authorization")

_QUEUE_STATE = {
    HELP_NORMAL: State.WAITING_HELP_NORMAL,
    HELP_EXPERT: State.WAITING_HELP_EXPERT,
    PAY: State.QUEUING_TO_PAY,
    REFUND: State.QUEUING_REFUND,
}


@dataclass(eq=False)
class Customer:
    id: int
    goal: Goal
    entered_at: float
    refund_visit: bool = False
    state: State = State.CONTEMPLATING
    has_item: bool = False
    purchased: bool = False
    satisfaction: int = 0
    finalized: bool = False
    patience_deadline: float | None = None
    queue: str | None = None
    queued_at: float = 0.0
    generation: int = 0
    server: "StaffMember | None" = None
    learner: "StaffMember | None" = None
    holder: "StaffMember | None" = None   # cashier held during authorization
    auth_request: bool = False


@dataclass(eq=False)
class StaffMember:
    id: int
    role: Role
    knowledge: int = 0
    busy: bool = False
    busy_since: float = 0.0
    busy_minutes: float = 0.0
    customer: Customer | None = None
    service: int = -1
    promoted_at: float | None = None
    free_since: float = 0.0
    # busy minutes inside opening hours, split by the role held at the time
    open_busy: dict = field(default_factory=lambda: {Role.CASHIER: 0.0, Role.NORMAL: 0.0, Role.EXPERT: 0.0})
    intervals: list | None = None


class LogicError(RuntimeError):
    """Internal inconsistency in the agent logic."""


class DepartmentModel:
    """One replication: agents, queues, event loop and counters."""

    def __init__(
        self,
        config: Config,
        rng: RngStream,
        weights: WeightTable | None = None,
        trace: IO[str] | None = None,
        check_invariants: bool = False,
    ) -> None:
        self.config = config
        self.dept = config.department
        self.practice = config.practice
        self.schedule = config.run.schedule
        self.rng = rng
        self.events = EventQueue()
        self.ledger = SatisfactionLedger(weights if weights is not None else config.effective_weights())
        self.trace = trace
        self.check = check_invariants

        st = config.staffing
        roles = [Role.CASHIER] * st.cashiers + [Role.NORMAL] * st.normals + [Role.EXPERT] * st.experts
        self.staff = [StaffMember(i, r) for i, r in enumerate(roles)]
        if check_invariants:
            for s in self.staff:
                s.intervals = []
        self.cashiers = [s for s in self.staff if s.role is Role.CASHIER]
        self.normals = [s for s in self.staff if s.role is Role.NORMAL]
        self.experts = [s for s in self.staff if s.role is Role.EXPERT]

        self.queues: dict[str, deque] = {q: deque() for q in (HELP_NORMAL, HELP_EXPERT, PAY, REFUND)}
        self.customers: dict[int, Customer] = {}   # in store
        self.is_open = False
        self.close_time = 0.0
        self.next_customer_id = 0

        self.arrivals = 0
        self.departures = 0
        self.transactions = 0
        self.refund_customers = 0
        self.refunds_granted = 0
        self.refunds_denied = 0
        self.escalations = 0
        self.shadowed = 0
        self.promotions = 0
        self.abandonments = {HELP_NORMAL: 0, HELP_EXPERT: 0, PAY: 0, REFUND: 0}
        self._last_event_time = 0.0

        p = self.practice
        self._promotion_points = p.promotion_points if p.promotion_enabled else None
        self._handlers = (
            self._on_open, self._on_close, self._on_arrival,
            self._on_browse_end, self._on_patience, self._on_service_end,
        )
        for d in self.schedule.open_days():
            self.events.schedule(d * 1440.0, EV_OPEN, d)

    # --- driving ---------------------------------------------------------

    @property
    def now(self) -> float:
        return self.events.now

    def run(self, t_end: float | None = None) -> "DepartmentModel":
        self.events.run_until(self.schedule.end_time if t_end is None else t_end, self._dispatch)
        return self

    def _dispatch(self, ev: Event) -> None:
        if self.trace is not None:
            kind = EVENT_NAMES[ev.kind]
            if ev.kind == EV_SERVICE_END:
                kind = f"service_end.{SERVICE_NAMES[self.staff[ev.target].service]}"
            self._log(kind, self._agent_label(ev))
        if self.check and ev.fire_time < self._last_event_time:
            raise LogicError("event processed out of order")
        self._last_event_time = ev.fire_time
        self._handlers[ev.kind](ev)
        if self.check:
            self.check_invariants()

    def _agent_label(self, ev: Event) -> str:
        if ev.kind in (EV_BROWSE_END, EV_PATIENCE):
            return f"c{ev.target}"
        if ev.kind == EV_SERVICE_END:
            return f"s{ev.target}"
        if ev.kind == EV_ARRIVAL:
            return f"c{self.next_customer_id}"
        return "dept"

    def _log(self, kind: str, agent: str) -> None:
        self.trace.write(f"{self.events.now!r}\t{kind}\t{agent}\n")

    def _record(self, c: Customer, t: Transition) -> None:
        self.ledger.record_transition(c, t)
        if self.trace is not None:
            self._log(f"sat.{t.value}", f"c{c.id}")

    # --- calendar --------------------------------------------------------

    def _on_open(self, ev: Event) -> None:
        self.is_open = True
        self.close_time = ev.fire_time + self.schedule.open_minutes
        self.events.schedule(self.close_time, EV_CLOSE, ev.target)
        self._schedule_arrival(ev.fire_time)

    def _on_close(self, ev: Event) -> None:
        # customers already inside finish normally
        self.is_open = False

    def _schedule_arrival(self, now: float) -> None:
        t = now + self.rng.exponential(self.dept.arrival_rate)
        if t < self.close_time:
            self.events.schedule(t, EV_ARRIVAL)

    # --- customers -------------------------------------------------------

    def _on_arrival(self, ev: Event) -> None:
        if not self.is_open:
            raise LogicError("arrival outside opening hours")
        rng = self.rng
        refund = self.practice.refund_loop_enabled and rng.bernoulli(self.dept.p_refund_visit)
        c = Customer(self.next_customer_id, Goal.REFUND if refund else Goal.PURCHASE,
                     ev.fire_time, refund_visit=refund)
        self.next_customer_id += 1
        self.customers[c.id] = c
        self.arrivals += 1
        if self.trace is not None:
            self._log("arrive.refund" if refund else "arrive.purchase", f"c{c.id}")
        if refund:
            self.refund_customers += 1
            self._enter_refund(c)
        else:
            self._start_browsing(c)
        self._schedule_arrival(ev.fire_time)

    def _start_browsing(self, c: Customer) -> None:
        c.state = State.BROWSING
        self.events.schedule(self.now + self.rng.triangular(*self.dept.browse), EV_BROWSE_END, c.id)

    def _on_browse_end(self, ev: Event) -> None:
        c = self.customers[ev.target]
        if c.state is not State.BROWSING:
            raise LogicError(f"browse end for customer {c.id} in {c.state}")
        rng, d = self.rng, self.dept
        if rng.bernoulli(d.p_need_help):
            c.state = State.SEEKING_HELP
            self._record(c, Transition.HELP_SEEK)
            self._enter_help(c)
        elif rng.bernoulli(d.p_buy_after_browse):
            c.has_item = True
            self._enter_pay(c)
        else:
            self._leave(c)

    def _enter_help(self, c: Customer) -> None:
        staff = self._idle_helper()
        if staff is not None:
            self._record(c, Transition.HELP_IMMEDIATE)
            self._start_service(staff, c, SVC_HELP)
        else:
            self._record(c, Transition.HELP_WAIT)
            self._enqueue(c, HELP_NORMAL, self.dept.help_patience)

    def _idle_helper(self) -> StaffMember | None:
        """Longest-idle expert if any (while no expert work waits), else longest-idle normal."""
        if not self.queues[HELP_EXPERT] or self._dequeue(HELP_EXPERT) is None:
            best = _longest_idle(self.experts)
            if best is not None:
                return best
        return _longest_idle(self.normals)

    def _enter_expert_queue(self, c: Customer) -> None:
        """Escalated help: idle expert now, otherwise wait in the expert queue."""
        expert = _first_idle(self.experts)
        if expert is not None:
            self._start_service(expert, c, SVC_EXPERT_HELP)
        else:
            self._record(c, Transition.HELP_WAIT)
            self._enqueue(c, HELP_EXPERT, self.dept.help_patience)

    def _enter_pay(self, c: Customer) -> None:
        if not c.has_item:
            raise LogicError(f"customer {c.id} queuing to pay without an item")
        cashier = _first_idle(self.cashiers)
        if cashier is not None:
            self._record(c, Transition.PAY_IMMEDIATE)
            self._start_service(cashier, c, SVC_PAY)
        else:
            self._record(c, Transition.PAY_WAIT)
            self._enqueue(c, PAY, self.dept.pay_patience)

    def _enter_refund(self, c: Customer) -> None:
        cashier = _first_idle(self.cashiers)
        if cashier is not None:
            self._record(c, Transition.REFUND_IMMEDIATE)
            self._start_service(cashier, c, SVC_REFUND)
        else:
            self._record(c, Transition.REFUND_WAIT)
            self._enqueue(c, REFUND, self.dept.refund_patience)

    def _enqueue(self, c: Customer, queue: str, patience) -> None:
        if c.queue is not None:
            raise LogicError(f"customer {c.id} already in queue {c.queue}")
        c.queue = queue
        c.queued_at = self.now
        c.state = _QUEUE_STATE[queue]
        c.generation += 1
        c.patience_deadline = self.now + self.rng.triangular(*patience)
        self.queues[queue].append((c, c.generation))
        self.events.schedule(c.patience_deadline, EV_PATIENCE, c.id, c.generation)

    def _dequeue(self, queue: str) -> Customer | None:
        q = self.queues[queue]
        while q:
            c, gen = q[0]
            if c.queue == queue and c.generation == gen:
                return c
            q.popleft()
        return None

    def _take(self, c: Customer) -> None:
        q = self.queues[c.queue]
        q.popleft()
        c.queue = None
        c.patience_deadline = None
        c.generation += 1

    def _on_patience(self, ev: Event) -> None:
        c = self.customers.get(ev.target)
        if c is None or c.queue is None or c.generation != ev.data:
            return  # stale: already served
        queue = c.queue
        c.queue = None
        c.patience_deadline = None
        c.generation += 1
        block = REFUND if c.auth_request else queue
        self.abandonments[block] += 1
        if self.trace is not None:
            self._log(f"abandon.{block}", f"c{c.id}")
        if queue == PAY:
            self._record(c, Transition.PAY_ABANDON)
            self._leave(c)
        elif queue == REFUND:
            self._record(c, Transition.REFUND_ABANDON)
            self._leave(c)
        elif c.auth_request:
            c.auth_request = False
            cashier, c.holder = c.holder, None
            self._record(c, Transition.REFUND_ABANDON)
            self._release(cashier)
            self._leave(c)
        else:
            if c.learner is not None:
                learner, c.learner = c.learner, None
                self._release(learner)
            self._record(c, Transition.HELP_ABANDON)
            self._after_help(c, self.dept.p_buy_without_help)

    def _after_help(self, c: Customer, p_buy: float) -> None:
        if self.rng.bernoulli(p_buy):
            c.has_item = True
            self._enter_pay(c)
        else:
            self._leave(c)

    def _leave(self, c: Customer) -> None:
        if c.goal is Goal.PURCHASE and not c.purchased:
            self._record(c, Transition.LEAVE_WITHOUT_PURCHASE)
        c.state = State.LEFT
        self.ledger.finalize_customer(c)
        del self.customers[c.id]
        self.departures += 1
        if self.trace is not None:
            self._log("depart", f"c{c.id}")

    # --- staff -----------------------------------------------------------

    def _start_service(self, staff: StaffMember, c: Customer, service: int) -> None:
        if staff.busy:
            raise LogicError(f"staff {staff.id} is busy")
        if not _suitable(staff.role, service):
            raise LogicError(f"{staff.role.value} cannot perform {SERVICE_NAMES[service]}")
        d = self.dept
        if service == SVC_HELP or service == SVC_EXPERT_HELP:
            duration = d.help_duration
            c.state = State.RECEIVING_HELP
        elif service == SVC_PAY:
            duration = d.pay_duration
            c.state = State.PAYING
        elif service == SVC_REFUND:
            duration = d.refund_duration
            c.state = State.PROCESSING_REFUND
        else:
            duration = d.authorization_duration
            c.state = State.PROCESSING_REFUND
        self._engage(staff)
        staff.customer = c
        staff.service = service
        c.server = staff
        self.events.schedule(self.now + self.rng.triangular(*duration), EV_SERVICE_END, staff.id)

    def _engage(self, staff: StaffMember) -> None:
        staff.busy = True
        staff.busy_since = self.now
        if self.trace is not None:
            self._log("staff.busy", f"s{staff.id}")

    def _release(self, staff: StaffMember, dispatch: bool = True) -> None:
        """Close the busy interval and look for the next customer."""
        now = self.now
        staff.busy_minutes += now - staff.busy_since
        staff.open_busy[staff.role] += self.schedule.open_overlap(staff.busy_since, now)
        if staff.intervals is not None:
            staff.intervals.append((staff.busy_since, now))
        staff.busy = False
        staff.free_since = now
        staff.customer = None
        staff.service = -1
        if self.trace is not None:
            self._log("staff.free", f"s{staff.id}")
        if dispatch:
            self._dispatch_staff(staff)

    def _dispatch_staff(self, staff: StaffMember) -> None:
        role = staff.role
        if role is Role.CASHIER:
            a, b = self._dequeue(PAY), self._dequeue(REFUND)
            if a is not None and (b is None or a.queued_at <= b.queued_at):
                self._take(a)
                self._record(a, Transition.PAY_SERVED_AFTER_WAIT)
                self._start_service(staff, a, SVC_PAY)
            elif b is not None:
                self._take(b)
                self._record(b, Transition.REFUND_SERVED_AFTER_WAIT)
                self._start_service(staff, b, SVC_REFUND)
            return
        if role is Role.EXPERT:
            c = self._dequeue(HELP_EXPERT)
            if c is not None:
                self._take(c)
                if c.auth_request:
                    c.auth_request = False
                    self._record(c, Transition.REFUND_SERVED_AFTER_WAIT)
                    self._start_service(staff, c, SVC_AUTH)
                else:
                    self._record(c, Transition.HELP_SERVED_AFTER_WAIT)
                    self._start_service(staff, c, SVC_EXPERT_HELP)
                return
            if self.normals:
                return
        c = self._dequeue(HELP_NORMAL)
        if c is not None:
            self._take(c)
            self._record(c, Transition.HELP_SERVED_AFTER_WAIT)
            self._start_service(staff, c, SVC_HELP)

    def _on_service_end(self, ev: Event) -> None:
        staff = self.staff[ev.target]
        c = staff.customer
        service = staff.service
        c.server = None
        if service == SVC_HELP:
            self._help_completion(staff, c)
        elif service == SVC_EXPERT_HELP:
            self._release(staff)
            if c.learner is not None:
                learner, c.learner = c.learner, None
                self._release(learner, dispatch=False)
                self._learn(learner)
                self._dispatch_staff(learner)
            self._record(c, Transition.HELP_COMPLETION)
            self._after_help(c, self.dept.p_buy_after_help)
        elif service == SVC_PAY:
            self.transactions += 1
            c.purchased = True
            if self.trace is not None:
                self._log("transaction", f"c{c.id}")
            self._record(c, Transition.PAY_COMPLETION)
            self._release(staff)
            self._leave(c)
        elif service == SVC_REFUND:
            self._refund_processing(staff, c)
        else:
            approved = self.rng.bernoulli(self.practice.expert_approval)
            cashier, c.holder = c.holder, None
            self._release(staff)
            self._release(cashier)
            self._finish_refund(c, approved)

    def _help_completion(self, staff: StaffMember, c: Customer) -> None:
        rng = self.rng
        if staff.role is Role.NORMAL and rng.bernoulli(self.dept.p_escalate):
            self.escalations += 1
            if self.trace is not None:
                self._log("escalate", f"c{c.id}")
            if rng.bernoulli(self.practice.p_learn):
                # the normal stays with the customer until the expert is done
                staff.customer = c
                staff.service = -1
                c.learner = staff
                self.shadowed += 1
                if self.trace is not None:
                    self._log("staff.shadow", f"s{staff.id}")
            else:
                self._release(staff)
            self._enter_expert_queue(c)
            return
        self._release(staff)
        self._record(c, Transition.HELP_COMPLETION)
        self._after_help(c, self.dept.p_buy_after_help)

    def _learn(self, staff: StaffMember) -> None:
        staff.knowledge += 1
        if self.trace is not None:
            self._log("staff.learn", f"s{staff.id}")
        self._promotion_check(staff)

    def _promotion_check(self, staff: StaffMember) -> None:
        pts = self._promotion_points
        if pts is None or staff.role is not Role.NORMAL or staff.knowledge < pts:
            return
        staff.role = Role.EXPERT
        staff.promoted_at = self.now
        self.normals.remove(staff)
        self.experts.append(staff)
        self.experts.sort(key=lambda s: s.id)
        self.promotions += 1
        if self.trace is not None:
            self._log("staff.promote", f"s{staff.id}")

    def _refund_processing(self, cashier: StaffMember, c: Customer) -> None:
        rng, p = self.rng, self.practice
        if rng.bernoulli(p.p_task_empowerment):
            approved = rng.bernoulli(p.cashier_approval)
            self._release(cashier)
            self._finish_refund(c, approved)
            return
        # referral: the cashier keeps the customer until an expert authorizes
        c.holder = cashier
        cashier.service = -1
        if self.trace is not None:
            self._log("refund.referral", f"c{c.id}")
        expert = _first_idle(self.experts)
        if expert is not None:
            self._start_service(expert, c, SVC_AUTH)
        else:
            c.auth_request = True
            self._record(c, Transition.REFUND_WAIT)
            self._enqueue(c, HELP_EXPERT, self.dept.refund_patience)
            c.state = State.AWAITING_AUTHORIZATION

    def _finish_refund(self, c: Customer, approved: bool) -> None:
        if approved:
            self.refunds_granted += 1
            self._record(c, Transition.REFUND_COMPLETION)
            if self.rng.bernoulli(self.dept.p_shop_after_refund):
                c.goal = Goal.PURCHASE
                self._start_browsing(c)
                return
        else:
            self.refunds_denied += 1
            self._record(c, Transition.REFUND_DENIED)
        self._leave(c)

    # --- auditing --------------------------------------------------------

    def check_invariants(self) -> None:
        now = self.now
        if self.arrivals != self.departures + len(self.customers):
            raise LogicError("conservation violated")
        placed: dict[int, str] = {}
        for c in self.customers.values():
            if c.queue is not None:
                placed[c.id] = c.queue
                if c.patience_deadline is None:
                    raise LogicError(f"queued customer {c.id} without deadline")
            elif c.patience_deadline is not None:
                raise LogicError(f"customer {c.id} has a deadline outside a queue")
            if c.state is State.QUEUING_TO_PAY and not c.has_item:
                raise LogicError(f"customer {c.id} queuing to pay without an item")
        for s in self.staff:
            if s.busy_minutes > now + 1e-9:
                raise LogicError(f"staff {s.id} busier than elapsed time")
            if s.service >= 0:
                c = s.customer
                if c is None or c.server is not s:
                    raise LogicError(f"staff {s.id} service/customer mismatch")
                if c.id in placed:
                    raise LogicError(f"customer {c.id} both queued and served")
                if not _suitable(s.role, s.service):
                    raise LogicError(f"staff {s.id} role unsuitable")
                placed[c.id] = f"s{s.id}"
            if s.intervals:
                prev_end = -1.0
                for a, b in s.intervals:
                    if a < prev_end or b < a:
                        raise LogicError(f"staff {s.id} overlapping busy intervals")
                    prev_end = b
        servers = [s.customer.id for s in self.staff if s.service >= 0]
        if len(servers) != len(set(servers)):
            raise LogicError("customer served by two staff")


def _longest_idle(group: list[StaffMember]) -> StaffMember | None:
    best = None
    for s in group:
        if not s.busy and (best is None or s.free_since < best.free_since):
            best = s
    return best


def _first_idle(group: list[StaffMember]) -> StaffMember | None:
    for s in group:
        if not s.busy:
            return s
    return None


def _suitable(role: Role, service: int) -> bool:
    if service == SVC_PAY or service == SVC_REFUND:
        return role is Role.CASHIER
    if service == SVC_HELP:
        return role is not Role.CASHIER
    return role is Role.EXPERT
