"""Slotted-time simulation loop and trace records."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .adversaries import AdversaryObservation
from .core import Action, FeasibilityError, NetworkEvent, NetworkSpec, realize


class SimulationError(RuntimeError):
    def __init__(self, slot: int, message: str):
        super().__init__(f"slot {slot}: {message}")
        self.slot = slot


def queue_update(Q: Sequence[int], a: Sequence[int], b: Sequence[int]) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """Q_next = [Q + a - b]^+ and the departure count b_actual = min(b, Q).

    b_actual is computed against the backlog at the start of the slot, so it can
    differ from the decrement the clamp rule applies when arrivals are served in
    the same slot. Both are kept.
    """
    if not (len(Q) == len(a) == len(b)):
        raise ValueError("vectors must have equal length")
    q_next = tuple(max(q + x - y, 0) for q, x, y in zip(Q, a, b))
    b_actual = tuple(min(y, q) for q, y in zip(Q, b))
    return q_next, b_actual


@dataclass(frozen=True)
class SlotRecord:
    t: int
    event: NetworkEvent
    action: Action
    a: Tuple[int, ...]
    b: Tuple[int, ...]
    b_actual: Tuple[int, ...]
    queues_before: Tuple[int, ...]
    queues_after: Tuple[int, ...]
    utility: float

    @property
    def departed(self) -> Tuple[int, ...]:
        """Packets that actually left each queue: min(b, Q + a)."""
        return tuple(q + x - q2 for q, x, q2 in zip(self.queues_before, self.a, self.queues_after))


@dataclass
class Trace:
    spec: NetworkSpec
    horizon: int
    records: List[SlotRecord]

    @property
    def events(self) -> List[NetworkEvent]:
        return [r.event for r in self.records]

    @property
    def actions(self) -> List[Action]:
        return [r.action for r in self.records]

    @property
    def final_queues(self) -> Tuple[int, ...]:
        if not self.records:
            return (0,) * self.spec.n_queues
        return self.records[-1].queues_after

    @property
    def total_utility(self) -> float:
        return sum(r.utility for r in self.records)

    def queue_matrix(self) -> np.ndarray:
        """(T+1, N) array of Q(0)..Q(T)."""
        rows = [self.records[0].queues_before] if self.records else [(0,) * self.spec.n_queues]
        rows += [r.queues_after for r in self.records]
        return np.asarray(rows, dtype=np.int64)

    def total_queue(self) -> np.ndarray:
        return self.queue_matrix().sum(axis=1)

    def arrays(self, name: str) -> np.ndarray:
        """(T, N) array of a per-slot vector field: a, b, b_actual or departed."""
        return np.asarray([getattr(r, name) for r in self.records], dtype=np.int64).reshape(
            len(self.records), self.spec.n_queues)


def run(spec: NetworkSpec, adversary, policy, horizon: int, seed: int = 0) -> Trace:
    """Play `policy` against `adversary` for `horizon` slots starting from Q(0) = 0."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    n = spec.n_queues
    adversary.reset(spec, horizon, seed)
    policy.reset(spec, horizon)

    queues = (0,) * n
    cleared = [0] * n
    records: List[SlotRecord] = []
    for t in range(horizon):
        event = adversary.next_event(AdversaryObservation(t, queues, tuple(cleared)))
        event.validate(spec)
        action = policy.decide(t, event, queues)
        try:
            real = realize(spec, event, action)
        except FeasibilityError as exc:
            raise SimulationError(t, f"infeasible action {action}: {exc}") from exc
        q_next, b_actual = queue_update(queues, real.a, real.b)
        rec = SlotRecord(t, event, action, real.a, real.b, b_actual, queues, q_next,
                         spec.utility_of(real.a))
        records.append(rec)
        for i, d in enumerate(rec.departed):
            cleared[i] += d
        queues = q_next
        policy.observe(rec)
    policy.finish()
    return Trace(spec, horizon, records)
