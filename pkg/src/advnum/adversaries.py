"""Network-event generators.

Adversaries are stateful for one run: the engine calls ``reset`` once and then
``next_event`` every slot with the policy's current queues and cumulative
departures.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

from .core import ConfigurationError, NetworkEvent, NetworkSpec


@dataclass(frozen=True)
class AdversaryObservation:
    t: int
    queues: Tuple[int, ...]
    cleared: Tuple[int, ...]


class Adversary:
    def reset(self, spec: NetworkSpec, horizon: int, seed: int = 0) -> None:
        self.spec = spec
        self.horizon = horizon

    def next_event(self, obs: AdversaryObservation) -> NetworkEvent:
        raise NotImplementedError


def _require_two_users(spec: NetworkSpec, name: str) -> None:
    if spec.n_queues != 2:
        raise ConfigurationError(f"{name} is a 2-user construction, got N={spec.n_queues}")


class AdaptiveWindowAdversary(Adversary):
    """Frames of W slots: a burst phase, then starve whichever user is longer."""

    def __init__(self, window: int, rate: int = 10, seed: Optional[int] = None):
        if window < 2:
            raise ConfigurationError(f"window must be >= 2, got {window}")
        self.window = window
        self.rate = rate
        self.seed = seed
        self.burst = math.ceil(window / 2)

    def reset(self, spec, horizon, seed=0):
        super().reset(spec, horizon, seed)
        _require_two_users(spec, "adaptive_w_adversary")
        if self.rate > spec.max_arrival:
            raise ConfigurationError(f"rate {self.rate} exceeds A={spec.max_arrival}")
        self._rng = random.Random(self.seed if self.seed is not None else seed)

    def next_event(self, obs):
        r = self.rate
        if obs.t % self.window < self.burst:
            return NetworkEvent((r, r), (r, r))
        q1, q2 = obs.queues
        if q1 == q2:
            longer = self._rng.randrange(2)
        else:
            longer = 0 if q1 > q2 else 1
        rates = [r, r]
        rates[longer] = 0
        return NetworkEvent((0, 0), tuple(rates))


class PhaseSplitAdversary(Adversary):
    """Both users get `level` arrivals and rates until `split`; afterwards the
    user that cleared fewer packets is shut off and the other is drained."""

    def __init__(self, split: int, level: int = 2, seed: Optional[int] = None):
        self.split = split
        self.level = level
        self.seed = seed
        self.starved: Optional[int] = None

    def reset(self, spec, horizon, seed=0):
        super().reset(spec, horizon, seed)
        _require_two_users(spec, type(self).__name__)
        if self.level > spec.max_arrival:
            raise ConfigurationError(f"level {self.level} exceeds A={spec.max_arrival}")
        self.starved = None

    def next_event(self, obs):
        c = self.level
        if obs.t < self.split:
            return NetworkEvent((c, c), (c, c))
        if self.starved is None:
            # argmin of cleared packets, lowest index on ties
            self.starved = min(range(2), key=lambda i: (obs.cleared[i], i))
        rates = [c, c]
        rates[self.starved] = 0
        return NetworkEvent((0, 0), tuple(rates))


class FixedSequence(Adversary):
    def __init__(self, events: Sequence[NetworkEvent]):
        self.events = list(events)

    def reset(self, spec, horizon, seed=0):
        super().reset(spec, horizon, seed)
        if len(self.events) < horizon:
            raise ConfigurationError(
                f"event sequence has {len(self.events)} slots, run needs {horizon}")

    def next_event(self, obs):
        if obs.t >= len(self.events):
            raise IndexError(f"event sequence exhausted at slot {obs.t}")
        return self.events[obs.t]


def adaptive_w_adversary(W: int, rate: int = 10, seed: Optional[int] = None) -> AdaptiveWindowAdversary:
    return AdaptiveWindowAdversary(W, rate, seed)


def unconstrained_adversary(T: int, seed: Optional[int] = None, level: int = 2) -> PhaseSplitAdversary:
    if T % 2:
        raise ConfigurationError(f"horizon must be even, got {T}")
    return PhaseSplitAdversary(T // 2, level, seed)


def w_lowerbound_adversary(W: int, T: int, seed: Optional[int] = None, level: int = 2) -> PhaseSplitAdversary:
    if W % 2:
        raise ConfigurationError(f"window must be even, got {W}")
    if W > T:
        raise ConfigurationError(f"window {W} exceeds horizon {T}")
    return PhaseSplitAdversary(W // 2, level, seed)


def fixed_sequence(events: Iterable[NetworkEvent]) -> FixedSequence:
    return FixedSequence(list(events))


def load_events(path) -> List[NetworkEvent]:
    """Read an event file: one ``A_1,...,A_N;S_1,...,S_N`` line per slot."""
    events = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            events.append(NetworkEvent.parse(line))
    return events


def dump_events(events: Iterable[NetworkEvent], path) -> None:
    Path(path).write_text("".join(e.format() + "\n" for e in events), encoding="utf-8")
