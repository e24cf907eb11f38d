"""Offline solvers for the windowed problem and the full-horizon NUM problem.

Two departure conventions exist for NUM feasibility:

* ``"realized"`` (default): packets that actually leave, min(b, Q + a). Total
  admissions <= total departures is then the same as ending with empty queues.
* ``"literal"``: min(b, Q(t)), backlog at the start of the slot only.

Window problems always use offered service b.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .adversaries import FixedSequence
from .core import Action, NetworkEvent, NetworkSpec, realize
from .engine import Trace, queue_update, run

REALIZED = "realized"
LITERAL = "literal"
_EPS = 1e-9


class OracleError(RuntimeError):
    pass


class BudgetExceeded(OracleError):
    pass


@dataclass(frozen=True)
class WindowProblem:
    events: Tuple[NetworkEvent, ...]
    slack: int
    spec: NetworkSpec

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if self.slack < 0:
            raise ValueError("slack must be non-negative")
        if not self.events:
            raise ValueError("window must contain at least one slot")


@dataclass
class OracleSolution:
    actions: List[Action]
    total_utility: float
    per_queue_slack: Tuple[int, ...]
    method: str = ""
    meta: Dict[str, object] = field(default_factory=dict)


def admission_levels(spec: NetworkSpec, arrival: int) -> List[int]:
    g = spec.admission_granularity
    levels = list(range(0, arrival + 1, g))
    if levels[-1] != arrival:
        levels.append(arrival)
    return levels


def slot_actions(spec: NetworkSpec, event: NetworkEvent) -> List[Action]:
    """Candidate actions of one slot in lexicographic (admission, schedule) order.

    Serving a zero-rate queue offers the same service as idling and is left out.
    """
    schedules = [None] + [i for i, s in enumerate(event.rates) if s > 0]
    per_queue = [admission_levels(spec, x) for x in event.arrivals]
    return [Action(adm, q) for adm in itertools.product(*per_queue) for q in schedules]


def _slot_table(spec, event):
    out = []
    for act in slot_actions(spec, event):
        real = realize(spec, event, act)
        out.append((act, real.a, real.b, spec.utility_of(real.a)))
    return out


def _finish(spec, events, actions, slack, method, **meta) -> OracleSolution:
    n = spec.n_queues
    sum_a = [0] * n
    sum_b = [0] * n
    total = 0.0
    for e, act in zip(events, actions):
        real = realize(spec, e, act)
        total += spec.utility_of(real.a)
        for i in range(n):
            sum_a[i] += real.a[i]
            sum_b[i] += real.b[i]
    per_queue = tuple(sum_b[i] + slack - sum_a[i] for i in range(n))
    return OracleSolution(list(actions), total, per_queue, method, dict(meta))


# ---------------------------------------------------------------- windows

def solve_window(p: WindowProblem, method: str = "grouped", max_evaluations: int = 2_000_000) -> OracleSolution:
    """Maximize window utility subject to sum(a_i) <= sum(b_i) + slack per queue."""
    if method == "grouped":
        return _solve_window_grouped(p, max_evaluations)
    if method == "enumerate":
        return _solve_window_enumerate(p, max_evaluations)
    raise ValueError(f"unknown window method {method!r}")


def _solve_window_enumerate(p: WindowProblem, max_evaluations: int) -> OracleSolution:
    spec, n = p.spec, p.spec.n_queues
    tables = [_slot_table(spec, e) for e in p.events]
    size = math.prod(len(t) for t in tables)
    if size > max_evaluations:
        raise BudgetExceeded(
            f"window enumeration needs {size} evaluations (cap {max_evaluations}); "
            "use a coarser admission_granularity or the grouped solver")
    best_u, best = -math.inf, None
    for combo in itertools.product(*tables):
        net = [p.slack] * n
        u = 0.0
        for _, a, b, ut in combo:
            u += ut
            for i in range(n):
                net[i] += b[i] - a[i]
        if min(net) < 0:
            continue
        if u > best_u + _EPS:
            best_u, best = u, combo
    return _finish(spec, p.events, [c[0] for c in best], p.slack, "enumerate")


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for k in range(total + 1):
        for rest in _compositions(total - k, parts - 1):
            yield (k,) + rest


def _spread(count: int, total_extra: int, j: int) -> int:
    # 1 if occurrence j receives one of `total_extra` extras, evenly spaced
    return ((j + 1) * total_extra) // count - (j * total_extra) // count


def _solve_window_grouped(p: WindowProblem, max_ops: int) -> OracleSolution:
    """Exact solver that works on event types instead of individual slots.

    The schedule only matters through how many occurrences of each event type
    serve each queue. Given the resulting capacities, admissions decouple per
    queue into a separable concave allocation solved greedily in units of the
    admission granularity. Capacities are explored with a Pareto table keyed by
    the first N-1 capacities.
    """
    spec, events, slack = p.spec, p.events, p.slack
    n, g = spec.n_queues, spec.admission_granularity
    U = spec.utility.per_queue

    groups: Dict[NetworkEvent, List[int]] = {}
    for tau, e in enumerate(events):
        groups.setdefault(e, []).append(tau)
    types = list(groups.items())
    for e, _ in types:
        if any(x % g for x in e.arrivals):
            raise OracleError(f"arrivals {e.arrivals} are not multiples of granularity {g}")

    # marginal gains of each admission unit, best first
    gains: List[List[Tuple[float, int]]] = []
    cum: List[np.ndarray] = []
    for i in range(n):
        gi = []
        top = max(e.arrivals[i] // g for e, _ in types)
        for lev in range(1, top + 1):
            step = U(lev * g) - U((lev - 1) * g)
            for k, (e, slots) in enumerate(types):
                if e.arrivals[i] // g >= lev:
                    gi.extend([(step, k)] * len(slots))
        gi.sort(key=lambda x: -x[0])
        gains.append(gi)
        cum.append(np.concatenate([[0.0], np.cumsum([x[0] for x in gi])]))
    need = [sum(e.arrivals[i] * len(s) for e, s in types) for i in range(n)]

    layer: Dict[Tuple[int, ...], int] = {(0,) * (n - 1): 0}
    backs = []
    ops = 0
    for e, slots in types:
        pos = [i for i in range(n) if e.rates[i] > 0]
        comps = list(_compositions(len(slots), len(pos))) if pos else [()]
        ops += len(layer) * len(comps)
        if ops > max_ops:
            raise BudgetExceeded(
                f"grouped window solver exceeded {max_ops} operations; "
                "use a coarser admission_granularity or a shorter window")
        new: Dict[Tuple[int, ...], int] = {}
        back = {}
        for key, val in layer.items():
            for comp in comps:
                cap = list(key) + [val]
                for j, i in enumerate(pos):
                    cap[i] = min(cap[i] + comp[j] * e.rates[i], need[i])
                nk, nv = tuple(cap[:-1]), cap[-1]
                if nk not in new or nv > new[nk]:
                    new[nk] = nv
                    back[nk] = (key, comp)
        backs.append((pos, back))
        layer = new

    def budget(i, c):
        return min(len(gains[i]), (c + slack) // g)

    best_val, best_key = -math.inf, None
    for key, val in layer.items():
        caps = key + (val,)
        v = sum(cum[i][budget(i, caps[i])] for i in range(n))
        if v > best_val + _EPS:
            best_val, best_key = v, key

    comps_by_type = [None] * len(types)
    key = best_key
    final_caps = best_key + (layer[best_key],)
    for k in reversed(range(len(types))):
        pos, back = backs[k]
        key, comp = back[key]
        comps_by_type[k] = (pos, comp)

    units = [[0] * n for _ in types]
    for i in range(n):
        for _, k in gains[i][:budget(i, final_caps[i])]:
            units[k][i] += 1

    actions: List[Optional[Action]] = [None] * len(events)
    for k, (e, slots) in enumerate(types):
        pos, comp = comps_by_type[k]
        cnt = len(slots)
        given = [0] * len(pos)
        for j, tau in enumerate(slots):
            served = None
            if pos:
                # smooth round robin over the per-queue counts
                m = max(range(len(pos)), key=lambda x: (comp[x] * (j + 1) - cnt * given[x], -x))
                given[m] += 1
                served = pos[m]
            adm = []
            for i in range(n):
                base, extra = divmod(units[k][i], cnt)
                adm.append((base + _spread(cnt, extra, j)) * g)
            actions[tau] = Action(tuple(adm), served)
    sol = _finish(spec, events, actions, slack, "grouped")
    assert min(sol.per_queue_slack) >= 0
    return sol


# ---------------------------------------------------------------- NUM

def solve_num(events: Sequence[NetworkEvent], spec: NetworkSpec, mode: str = "auto",
              departures: str = REALIZED, max_horizon: int = 8) -> OracleSolution:
    """Offline optimum of the full-horizon NUM problem.

    ``exact`` runs a dynamic program over (slot, queues, deficit) that visits
    every action sequence up to memoisation; among utility maximizers it keeps
    the smallest peak total queue, then the lexicographically first sequence.
    ``analytic`` solves instances whose nonzero arrivals and rates all equal one
    quantum (the built-in adversary constructions) as a bipartite matching.
    """
    events = list(events)
    if departures not in (REALIZED, LITERAL):
        raise ValueError(f"unknown departure convention {departures!r}")
    if mode == "exact":
        return _solve_num_exact(events, spec, departures, max_horizon)
    if mode == "analytic":
        return _solve_num_matching(events, spec, departures)
    if mode != "auto":
        raise ValueError(f"unknown mode {mode!r}")
    try:
        return _solve_num_matching(events, spec, departures)
    except OracleError as first:
        if len(events) <= max_horizon:
            return _solve_num_exact(events, spec, departures, max_horizon)
        raise OracleError(
            f"no exact oracle for this {len(events)}-slot sequence: {first}; exhaustive mode "
            f"is limited to T <= {max_horizon}") from first


def _solve_num_exact(events, spec, departures, max_horizon) -> OracleSolution:
    T = len(events)
    if T > max_horizon:
        raise BudgetExceeded(f"exact NUM enumeration is capped at T <= {max_horizon}, got {T}")
    tables = [_slot_table(spec, e) for e in events]
    literal = departures == LITERAL

    @lru_cache(maxsize=None)
    def best(t, Q, D):
        here = sum(Q)
        if t == T:
            return (0.0, here, -1) if all(d <= 0 for d in D) else (-math.inf, here, -1)
        result = (-math.inf, here, -1)
        for k, (_, a, b, u) in enumerate(tables[t]):
            q_next, b_lit = queue_update(Q, a, b)
            dep = b_lit if literal else tuple(q + x - y for q, x, y in zip(Q, a, q_next))
            d_next = tuple(d + x - y for d, x, y in zip(D, a, dep))
            su, sp, _ = best(t + 1, q_next, d_next)
            if su == -math.inf:
                continue
            cand_u, cand_p = u + su, max(here, sp)
            if (cand_u > result[0] + _EPS
                    or (abs(cand_u - result[0]) <= _EPS and cand_p < result[1])):
                result = (cand_u, cand_p, k)
        return result

    n = spec.n_queues
    Q = D = (0,) * n
    actions = []
    for t in range(T):
        _, _, k = best(t, Q, D)
        act, a, b, _ = tables[t][k]
        actions.append(act)
        q_next, b_lit = queue_update(Q, a, b)
        dep = b_lit if literal else tuple(q + x - y for q, x, y in zip(Q, a, q_next))
        D = tuple(d + x - y for d, x, y in zip(D, a, dep))
        Q = q_next
    best.cache_clear()
    return _num_solution(events, spec, actions, departures, "exact")


def _solve_num_matching(events, spec, departures) -> OracleSolution:
    if departures != REALIZED:
        raise OracleError("the matching oracle assumes realized departures")
    n, g, T = spec.n_queues, spec.admission_granularity, len(events)
    if n > 2:
        raise OracleError("the matching oracle handles at most two queues")
    if not any(x for e in events for x in e.arrivals):
        return _num_solution(events, spec, [spec.null_action()] * T, departures, "matching")
    quanta = {x for e in events for x in e.arrivals + e.rates if x > 0}
    if len(quanta) > 1:
        raise OracleError(f"events use several nonzero levels {sorted(quanta)}; no quantum structure")
    (q,) = quanta
    if q % g:
        raise OracleError(f"quantum {q} is not a multiple of granularity {g}")

    # Backward sweep: every server seen so far lies at or after the current
    # slot, so it can serve any unit still to be placed. Dedicated servers go
    # first; the most recently pushed one is the earliest in time.
    dedicated: List[List[int]] = [[] for _ in range(n)]
    flexible: List[int] = []
    served: List[Optional[int]] = [None] * T
    admitted = [[0] * n for _ in range(T)]
    dropped = 0
    for tau in reversed(range(T)):
        e = events[tau]
        pos = [i for i in range(n) if e.rates[i] > 0]
        if len(pos) == 1:
            dedicated[pos[0]].append(tau)
        elif len(pos) > 1:
            flexible.append(tau)
        for i in range(n):
            if e.arrivals[i] == 0:
                continue
            if dedicated[i]:
                s = dedicated[i].pop()
            elif flexible:
                s = flexible.pop()
            else:
                dropped += 1
                continue
            served[s] = i
            admitted[tau][i] = q
    if dropped and g != q:
        raise OracleError(
            f"matching drops {dropped} units at granularity {g} < quantum {q}; optimality not certified")
    actions = [Action(tuple(admitted[t]), served[t]) for t in range(T)]
    return _num_solution(events, spec, actions, departures, "matching", dropped_units=dropped)


def _num_solution(events, spec, actions, departures, method, **meta) -> OracleSolution:
    trace = simulate(spec, events, actions)
    residual = check_feasibility(trace, departures)
    return OracleSolution(list(actions), trace.total_utility, residual, method,
                          dict(meta, departures=departures, peak=int(trace.total_queue().max())))


# ---------------------------------------------------------------- audits

class _Replay:
    def __init__(self, actions):
        self.actions = list(actions)

    def reset(self, spec, horizon):
        if len(self.actions) < horizon:
            raise ValueError("not enough actions to replay")

    def decide(self, t, event, queues):
        return self.actions[t]

    def observe(self, record):
        pass

    def finish(self):
        pass


def simulate(spec: NetworkSpec, events: Sequence[NetworkEvent], actions: Sequence[Action]) -> Trace:
    """Run a fixed action sequence against a fixed event sequence."""
    return run(spec, FixedSequence(events), _Replay(actions), len(events))


def check_feasibility(trace: Trace, departures: str = REALIZED) -> Tuple[int, ...]:
    """Per-queue total departures minus total admissions (>= 0 means feasible)."""
    dep = trace.arrays("departed" if departures == REALIZED else "b_actual").sum(axis=0)
    adm = trace.arrays("a").sum(axis=0)
    return tuple(int(x) for x in dep - adm)


def compute_vstar(events: Sequence[NetworkEvent], solution: OracleSolution, spec: NetworkSpec,
                  departures: str = REALIZED) -> int:
    """Peak total queue along the oracle's sample path."""
    trace = simulate(spec, events, solution.actions)
    residual = check_feasibility(trace, departures)
    if min(residual) < 0:
        raise OracleError(f"solution is infeasible for NUM (residuals {residual})")
    return int(trace.total_queue().max())
