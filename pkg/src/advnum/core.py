"""Domain types: network events, actions, utilities and the network spec."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

THROUGHPUT = "throughput"
PROPORTIONAL_FAIRNESS = "proportional_fairness"
UTILITY_KINDS = (THROUGHPUT, PROPORTIONAL_FAIRNESS)

SINGLE_HOP = "single_hop"


class ConfigurationError(ValueError):
    pass


class FeasibilityError(ValueError):
    pass


def _int_tuple(values: Iterable[int], name: str) -> Tuple[int, ...]:
    out = []
    for v in values:
        iv = int(v)
        if iv != v:
            raise ValueError(f"{name} must be integers, got {v!r}")
        out.append(iv)
    return tuple(out)


@dataclass(frozen=True)
class UtilitySpec:
    kind: str = PROPORTIONAL_FAIRNESS

    def __post_init__(self):
        if self.kind not in UTILITY_KINDS:
            raise ConfigurationError(f"unknown utility kind {self.kind!r}")

    def per_queue(self, x: float) -> float:
        if x < 0:
            raise ValueError(f"admitted amount must be non-negative, got {x}")
        if self.kind == THROUGHPUT:
            return float(x)
        return math.log1p(x)

    def bounds(self, n_queues: int, max_arrival: int) -> Tuple[float, float]:
        """(u_min, u_max): admitting nothing vs admitting A everywhere."""
        return 0.0, evaluate_utility(self, (max_arrival,) * n_queues)

    def min_subderivative(self, max_arrival: int) -> float:
        # slope of U_i at the right end of [0, A]
        if self.kind == THROUGHPUT:
            return 1.0
        return 1.0 / (1.0 + max_arrival)


def evaluate_utility(spec: UtilitySpec, admitted: Sequence[float]) -> float:
    """Sum of per-queue utilities of the admitted vector."""
    total = 0.0
    for x in admitted:
        total += spec.per_queue(x)
    return total


@dataclass(frozen=True)
class NetworkSpec:
    n_queues: int
    max_arrival: int
    max_service: int
    utility: UtilitySpec = field(default_factory=UtilitySpec)
    admission_granularity: int = 1
    schedule_rule: str = SINGLE_HOP

    def __post_init__(self):
        if self.n_queues < 1:
            raise ConfigurationError("n_queues must be >= 1")
        if self.max_arrival < 0 or self.max_service < 0:
            raise ConfigurationError("arrival and service bounds must be non-negative")
        if self.max_service < self.max_arrival:
            raise ConfigurationError(
                f"max_service ({self.max_service}) must be >= max_arrival ({self.max_arrival})")
        g = self.admission_granularity
        if g < 1:
            raise ConfigurationError("admission_granularity must be a positive integer")
        if self.max_arrival % g:
            raise ConfigurationError(
                f"admission_granularity {g} does not divide max_arrival {self.max_arrival}")
        if self.schedule_rule != SINGLE_HOP:
            raise ConfigurationError(f"unsupported schedule rule {self.schedule_rule!r}")

    @property
    def u_min(self) -> float:
        return self.utility.bounds(self.n_queues, self.max_arrival)[0]

    @property
    def u_max(self) -> float:
        return self.utility.bounds(self.n_queues, self.max_arrival)[1]

    def utility_of(self, admitted: Sequence[float]) -> float:
        return evaluate_utility(self.utility, admitted)

    def null_action(self) -> "Action":
        return Action((0,) * self.n_queues, None)


@dataclass(frozen=True)
class NetworkEvent:
    """Exogenous arrivals A(t) and channel rates S(t) of one slot."""

    arrivals: Tuple[int, ...]
    rates: Tuple[int, ...]

    def __post_init__(self):
        arrivals = _int_tuple(self.arrivals, "arrivals")
        rates = _int_tuple(self.rates, "rates")
        if len(arrivals) != len(rates):
            raise ValueError("arrivals and rates must have the same length")
        if any(v < 0 for v in arrivals + rates):
            raise ValueError("arrivals and rates must be non-negative")
        object.__setattr__(self, "arrivals", arrivals)
        object.__setattr__(self, "rates", rates)

    @property
    def n(self) -> int:
        return len(self.arrivals)

    def validate(self, spec: NetworkSpec) -> None:
        if self.n != spec.n_queues:
            raise ConfigurationError(
                f"event has {self.n} queues, network has {spec.n_queues}")
        if max(self.arrivals) > spec.max_arrival:
            raise ConfigurationError(f"arrivals {self.arrivals} exceed A={spec.max_arrival}")
        if max(self.rates) > spec.max_service:
            raise ConfigurationError(f"rates {self.rates} exceed B={spec.max_service}")

    def format(self) -> str:
        return ",".join(map(str, self.arrivals)) + ";" + ",".join(map(str, self.rates))

    @classmethod
    def parse(cls, text: str) -> "NetworkEvent":
        try:
            left, right = text.strip().split(";")
            return cls(tuple(int(x) for x in left.split(",")),
                       tuple(int(x) for x in right.split(",")))
        except ValueError as exc:
            raise ValueError(f"malformed event line {text!r}") from exc

    def __str__(self):
        return self.format()


@dataclass(frozen=True)
class Action:
    """Admission vector plus the (optional) single queue scheduled this slot."""

    admitted: Tuple[int, ...]
    served_queue: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "admitted", _int_tuple(self.admitted, "admitted"))

    @classmethod
    def null(cls, n: int) -> "Action":
        return cls((0,) * n, None)

    @property
    def is_null(self) -> bool:
        return self.served_queue is None and not any(self.admitted)


@dataclass(frozen=True)
class Realization:
    a: Tuple[int, ...]
    b: Tuple[int, ...]
    b_actual: Optional[Tuple[int, ...]] = None


def check_action(spec: NetworkSpec, event: NetworkEvent, action: Action) -> None:
    """Raise FeasibilityError naming the violated constraint."""
    if len(action.admitted) != event.n:
        raise FeasibilityError(
            f"admission vector has length {len(action.admitted)}, expected {event.n}")
    for i, (x, cap) in enumerate(zip(action.admitted, event.arrivals)):
        if x < 0:
            raise FeasibilityError(f"admission bound: admitted[{i}]={x} < 0")
        if x > cap:
            raise FeasibilityError(f"admission bound: admitted[{i}]={x} > arrivals[{i}]={cap}")
    q = action.served_queue
    if q is not None and not (0 <= q < event.n):
        raise FeasibilityError(f"schedule rule: served queue {q} out of range")


def realize(spec: NetworkSpec, event: NetworkEvent, action: Action) -> Realization:
    check_action(spec, event, action)
    b = [0] * event.n
    if action.served_queue is not None:
        b[action.served_queue] = min(event.rates[action.served_queue], spec.max_service)
    return Realization(a=action.admitted, b=tuple(b))
