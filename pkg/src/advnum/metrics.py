"""Regret, window-constraint checks, peak queues and the debt-queue ledger."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .core import Action, NetworkEvent, NetworkSpec, realize
from .engine import Trace


def utility_regret(oracle_utility: float, trace: Trace) -> float:
    return oracle_utility - trace.total_utility


def check_w_constrained(trace: Trace, W: int, stride: int = 1) -> Tuple[bool, Optional[Tuple[int, int]]]:
    """Check sum(a) <= sum(b) over W-slot windows, using offered service.

    Windows start at every multiple of `stride`; stride=W checks only the
    frame-aligned windows a W-periodic construction is built around.
    Returns (ok, first violation as (queue, window start)).
    """
    T = len(trace.records)
    if W < 1 or W > T:
        raise ValueError(f"window {W} outside [1, {T}]")
    net = (trace.arrays("b") - trace.arrays("a")).astype(np.int64)
    csum = np.vstack([np.zeros((1, net.shape[1]), dtype=np.int64), np.cumsum(net, axis=0)])
    windows = csum[W:] - csum[:-W]          # row t = window starting at t
    if stride < 1:
        raise ValueError("stride must be >= 1")
    mask = np.zeros(len(windows), dtype=bool)
    mask[::stride] = True
    windows = np.where(mask[:, None], windows, 0)
    bad = np.argwhere(windows < 0)
    if bad.size == 0:
        return True, None
    t, i = bad[0]
    return False, (int(i), int(t))


def potential(Q: Sequence[float]) -> float:
    return 0.5 * float(sum(q * q for q in Q))


@dataclass
class DebtLedger:
    """Resource and utility debt owed by a policy to a reference action sequence,
    kept separately for every event type."""

    q_debt: Dict[Tuple[int, NetworkEvent], float] = field(default_factory=dict)
    u_debt: Dict[NetworkEvent, float] = field(default_factory=dict)
    max_q: float = 0.0
    max_u: float = 0.0

    def update(self, event: NetworkEvent, oracle_a, oracle_b, oracle_u: float,
               a, b, u: float) -> None:
        for i in range(len(a)):
            key = (i, event)
            val = self.q_debt.get(key, 0.0) + (oracle_b[i] - oracle_a[i]) - (b[i] - a[i])
            self.q_debt[key] = val
            self.max_q = max(self.max_q, val)
        val = self.u_debt.get(event, 0.0) + oracle_u - u
        self.u_debt[event] = val
        self.max_u = max(self.max_u, val)

    @property
    def total_u(self) -> float:
        return sum(self.u_debt.values())


def debt_update(ledger: DebtLedger, spec: NetworkSpec, event: NetworkEvent,
                oracle_action: Action, policy_action: Action) -> DebtLedger:
    star = realize(spec, event, oracle_action)
    mine = realize(spec, event, policy_action)
    ledger.update(event, star.a, star.b, spec.utility_of(star.a),
                  mine.a, mine.b, spec.utility_of(mine.a))
    return ledger


def replay_debt(trace: Trace, oracle_actions: Sequence[Action]) -> DebtLedger:
    """Drive a ledger slot by slot through a finished trace."""
    if len(oracle_actions) != len(trace.records):
        raise ValueError("oracle actions must align with the trace's slots")
    ledger = DebtLedger()
    for rec, star in zip(trace.records, oracle_actions):
        debt_update(ledger, trace.spec, rec.event, star, rec.action)
    return ledger


@dataclass
class RunSummary:
    regret: float
    total_queue_T: int
    peak_queue: int
    peak_time: int
    total_utility: float
    oracle_utility: float
    potential_final: float

    def as_row(self) -> dict:
        return asdict(self)


def summarize(trace: Trace, oracle_solution) -> RunSummary:
    totals = trace.total_queue()
    peak_time = int(np.argmax(totals))      # earliest on ties
    oracle_u = float(oracle_solution.total_utility)
    return RunSummary(
        regret=utility_regret(oracle_u, trace),
        total_queue_T=int(totals[-1]),
        peak_queue=int(totals[peak_time]),
        peak_time=peak_time,
        total_utility=trace.total_utility,
        oracle_utility=oracle_u,
        potential_final=potential(trace.final_queues),
    )
