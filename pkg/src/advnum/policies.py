"""Causal control policies.

Every policy implements ``reset(spec, horizon)``, ``decide(t, event, queues)``,
``observe(record)`` (end of slot) and ``finish()`` (end of run). A policy sees
only the current event and queue vector plus whatever it stored itself.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Sequence, Tuple

from .core import THROUGHPUT, Action, FeasibilityError, NetworkEvent, NetworkSpec, check_action
from .oracle import OracleSolution, WindowProblem, solve_window


def max_weight(Q: Sequence[int], event: NetworkEvent) -> Optional[int]:
    """Queue maximizing Q_i * S_i; lowest index on ties.

    With all weights zero the lowest-index queue with a positive rate is served.
    """
    weights = [q * s for q, s in zip(Q, event.rates)]
    top = max(weights)
    if top > 0:
        return weights.index(top)
    for i, s in enumerate(event.rates):
        if s > 0:
            return i
    return None


@dataclass(frozen=True)
class DppConfig:
    v: float

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("V must be non-negative")


def _dpp_admission(spec: NetworkSpec, v: float, q: int, cap: int) -> int:
    U = spec.utility.per_queue
    if q == 0:
        return cap
    if spec.utility.kind == THROUGHPUT:
        return cap if v >= q else 0
    # stationary point of v*log(1+a) - q*a
    x = min(max(v / q - 1.0, 0.0), float(cap))
    lo, hi = math.floor(x), math.ceil(x)
    if lo == hi:
        return lo
    f_lo = v * U(lo) - q * lo
    f_hi = v * U(hi) - q * hi
    return hi if f_hi >= f_lo else lo


def dpp_decide(Q: Sequence[int], event: NetworkEvent, cfg: DppConfig, spec: NetworkSpec) -> Action:
    """Drift-plus-penalty: admission control plus MaxWeight scheduling."""
    admitted = tuple(_dpp_admission(spec, cfg.v, q, cap) for q, cap in zip(Q, event.arrivals))
    return Action(admitted, max_weight(Q, event))


class Policy:
    name = "policy"

    def reset(self, spec: NetworkSpec, horizon: int) -> None:
        self.spec = spec
        self.horizon = horizon

    def decide(self, t: int, event: NetworkEvent, queues: Tuple[int, ...]) -> Action:
        raise NotImplementedError

    def observe(self, record) -> None:
        pass

    def finish(self) -> None:
        pass


class DriftPlusPenalty(Policy):
    name = "dpp"

    def __init__(self, v: float):
        self.cfg = DppConfig(v)

    def decide(self, t, event, queues):
        return dpp_decide(queues, event, self.cfg, self.spec)


def admit_all_baseline(event: NetworkEvent, Q: Optional[Sequence[int]] = None) -> Action:
    Q = Q if Q is not None else (0,) * event.n
    return Action(event.arrivals, max_weight(Q, event))


def null_baseline(event: NetworkEvent) -> Action:
    return Action.null(event.n)


class AdmitAll(Policy):
    name = "admit_all"

    def decide(self, t, event, queues):
        return admit_all_baseline(event, queues)


class NullPolicy(Policy):
    name = "null"

    def decide(self, t, event, queues):
        return null_baseline(event)


# ---------------------------------------------------------------- tracking

@dataclass
class TrackingState:
    w: int
    slack: int = 0
    action_queues: Dict[NetworkEvent, Deque[Action]] = field(default_factory=dict)
    window_buffer: List[Tuple[int, NetworkEvent]] = field(default_factory=list)
    solutions: List[Tuple[int, OracleSolution]] = field(default_factory=list)
    buffer_counts: Dict[NetworkEvent, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.w < 1:
            raise ValueError("window must be >= 1")
        if self.slack < 0:
            raise ValueError("slack must be non-negative")

    def outstanding(self, event: NetworkEvent) -> int:
        """Queued actions for `event` plus its occurrences in the unsolved window."""
        return len(self.action_queues.get(event, ())) + self.buffer_counts.get(event, 0)

    def push(self, t: int, event: NetworkEvent) -> None:
        self.window_buffer.append((t, event))
        self.buffer_counts[event] = self.buffer_counts.get(event, 0) + 1

    def clear_buffer(self) -> None:
        self.window_buffer = []
        self.buffer_counts = {}


class TrackingError(RuntimeError):
    pass


def tracking_decide(state: TrackingState, event: NetworkEvent, spec: Optional[NetworkSpec] = None) -> Action:
    """Pop the head of the event's action queue, or take the null action."""
    queue = state.action_queues.get(event)
    if not queue:
        return Action.null(event.n)
    action = queue.popleft()
    if spec is not None:
        try:
            check_action(spec, event, action)
        except FeasibilityError as exc:
            raise TrackingError(f"queued action {action} infeasible for {event}: {exc}") from exc
    return action


def tracking_end_of_window(state: TrackingState, window_events: Sequence[Tuple[int, NetworkEvent]],
                           spec: NetworkSpec, method: str = "grouped") -> TrackingState:
    """Solve the finished window and append each slot's action to its event's queue."""
    events = [e for _, e in window_events]
    sol = solve_window(WindowProblem(tuple(events), state.slack, spec), method=method)
    for (_, e), act in zip(window_events, sol.actions):
        state.action_queues.setdefault(e, deque()).append(act)
    state.solutions.append((window_events[0][0], sol))
    return state


class Tracking(Policy):
    """Replays per-window optimal actions whenever the same event recurs."""

    name = "tracking"

    def __init__(self, w: int, slack: int = 0, method: str = "grouped"):
        self.w = w
        self.slack = slack
        self.method = method
        self.max_outstanding = 0

    def _window_size(self, spec, horizon) -> int:
        return self.w

    def reset(self, spec, horizon):
        super().reset(spec, horizon)
        self.state = TrackingState(self._window_size(spec, horizon), self.slack)
        self.max_outstanding = 0

    @property
    def window(self) -> int:
        return self.state.w

    def decide(self, t, event, queues):
        return tracking_decide(self.state, event, self.spec)

    def observe(self, record):
        st = self.state
        st.push(record.t, record.event)
        if record.t % st.w == st.w - 1:
            self._close_window()
        self.max_outstanding = max(self.max_outstanding, self.state.outstanding(record.event))

    def _close_window(self):
        st = self.state
        tracking_end_of_window(st, st.window_buffer, self.spec, self.method)
        st.clear_buffer()

    def finish(self):
        # a truncated last window is solved so every slot has an oracle action
        if self.state.window_buffer:
            self._close_window()

    def oracle_actions(self) -> List[Action]:
        """Per-slot window-optimal actions, aligned with the run's slots."""
        out: List[Action] = []
        for _, sol in self.state.solutions:
            out.extend(sol.actions)
        return out

    def oracle_utility(self) -> float:
        return sum(sol.total_utility for _, sol in self.state.solutions)


def vt_window(horizon: int, vt: int) -> int:
    """ceil(sqrt(T * V_T)), at least 1."""
    prod = int(horizon) * int(vt)
    if prod <= 0:
        return 1
    return max(1, math.isqrt(prod - 1) + 1)


class TrackingVT(Tracking):
    """Tracking with burst slack V_T and window ceil(sqrt(T * V_T))."""

    name = "tracking_vt"

    def __init__(self, vt: int, method: str = "grouped"):
        super().__init__(w=1, slack=vt, method=method)
        self.vt = vt

    def _window_size(self, spec, horizon):
        return vt_window(horizon, self.vt)
