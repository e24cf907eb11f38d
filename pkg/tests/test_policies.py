import itertools
import math
from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from advnum.adversaries import adaptive_w_adversary, fixed_sequence
from advnum.core import Action, NetworkEvent, NetworkSpec, UtilitySpec
from advnum.engine import run
from advnum.metrics import replay_debt
from advnum.policies import (AdmitAll, DppConfig, DriftPlusPenalty, NullPolicy, Tracking,
                             TrackingError, TrackingState, TrackingVT, admit_all_baseline,
                             dpp_decide, max_weight, null_baseline, tracking_decide,
                             tracking_end_of_window, vt_window)

TP = UtilitySpec("throughput")
PF = UtilitySpec("proportional_fairness")


def test_max_weight_rules():
    assert max_weight((5, 3), NetworkEvent((0, 0), (10, 10))) == 0
    assert max_weight((3, 3), NetworkEvent((0, 0), (10, 10))) == 0      # tie: lowest index
    assert max_weight((0, 0), NetworkEvent((0, 0), (0, 4))) == 1       # all-zero weights
    assert max_weight((7, 0), NetworkEvent((0, 0), (0, 0))) is None


def test_dpp_examples():
    spec = NetworkSpec(2, 10, 10, TP)
    act = dpp_decide((5, 3), NetworkEvent((2, 2), (10, 10)), DppConfig(10), spec)
    assert act == Action((2, 2), 0)
    act = dpp_decide((5, 12), NetworkEvent((2, 2), (10, 10)), DppConfig(10), spec)
    assert act.admitted == (2, 0)
    # V == Q admits
    assert dpp_decide((10, 0), NetworkEvent((2, 2), (1, 1)), DppConfig(10), spec).admitted == (2, 2)
    pf = NetworkSpec(2, 10, 10, PF)
    assert dpp_decide((0, 0), NetworkEvent((10, 7), (10, 10)), DppConfig(1), pf).admitted == (10, 7)
    assert dpp_decide((11, 0), NetworkEvent((10, 10), (10, 10)), DppConfig(11), pf).admitted[0] == 0


def test_dpp_config_rejects_negative_v():
    with pytest.raises(ValueError):
        DppConfig(-1)


def dpp_objective(spec, Q, event, action, v):
    b = [0] * event.n
    if action.served_queue is not None:
        b[action.served_queue] = min(event.rates[action.served_queue], spec.max_service)
    return sum(q * (y - x) for q, x, y in zip(Q, action.admitted, b)) + v * spec.utility_of(action.admitted)


@settings(max_examples=300, deadline=None)
@given(st.sampled_from([TP, PF]), st.integers(1, 3), st.data())
def test_dpp_equals_exhaustive_argmax(util, n, data):
    A = data.draw(st.integers(0, 6))
    spec = NetworkSpec(n, A, A + 2, util)
    Q = tuple(data.draw(st.integers(0, 40)) for _ in range(n))
    ev = NetworkEvent(tuple(data.draw(st.integers(0, A)) for _ in range(n)),
                      tuple(data.draw(st.integers(0, A + 2)) for _ in range(n)))
    v = data.draw(st.floats(0, 200, allow_nan=False))
    got = dpp_objective(spec, Q, ev, dpp_decide(Q, ev, DppConfig(v), spec), v)
    best = max(dpp_objective(spec, Q, ev, Action(adm, s), v)
               for adm in itertools.product(*[range(x + 1) for x in ev.arrivals])
               for s in [None, *range(n)])
    assert got == pytest.approx(best, rel=1e-12, abs=1e-9)


def test_baselines():
    ev = NetworkEvent((2, 2), (2, 2))
    assert admit_all_baseline(ev).admitted == (2, 2)
    assert null_baseline(ev) == Action((0, 0), None)
    for util in (TP, PF):
        spec = NetworkSpec(2, 2, 2, util)
        tr = run(spec, fixed_sequence([ev] * 4), NullPolicy(), 4)
        assert all(r.utility == 0 for r in tr.records)
        tr = run(spec, fixed_sequence([ev] * 4), AdmitAll(), 4)
        assert all(r.a == (2, 2) for r in tr.records)


def test_tracking_decide_pops_head_or_null():
    ev = NetworkEvent((1, 1), (1, 1))
    a1, a2 = Action((1, 0), 0), Action((0, 1), 1)
    st_ = TrackingState(4, action_queues={ev: deque([a1, a2])})
    assert tracking_decide(st_, ev) == a1
    assert list(st_.action_queues[ev]) == [a2]
    other = NetworkEvent((0, 0), (1, 1))
    assert tracking_decide(st_, other).is_null


def test_tracking_decide_consistency_error():
    spec = NetworkSpec(2, 2, 2)
    ev = NetworkEvent((1, 1), (1, 1))
    st_ = TrackingState(2, action_queues={ev: deque([Action((2, 0), None)])})
    with pytest.raises(TrackingError):
        tracking_decide(st_, ev, spec)


def test_end_of_window_keys_by_event():
    spec = NetworkSpec(1, 1, 1, TP)
    ev = NetworkEvent((1,), (1,))
    st_ = tracking_end_of_window(TrackingState(3), [(0, ev), (1, ev), (2, ev)], spec)
    assert len(st_.action_queues[ev]) == 3
    assert st_.solutions[0][0] == 0


def test_first_window_is_all_null():
    spec = NetworkSpec(2, 10, 10, PF, admission_granularity=10)
    tr = run(spec, adaptive_w_adversary(8), Tracking(8), 40, seed=3)
    assert all(r.action.is_null for r in tr.records[:8])
    assert any(not r.action.is_null for r in tr.records[8:])


def test_partial_window_is_solved_at_finish():
    spec = NetworkSpec(2, 10, 10, PF, admission_granularity=10)
    pol = Tracking(8)
    run(spec, adaptive_w_adversary(8), pol, 21, seed=0)
    assert len(pol.oracle_actions()) == 21
    assert [s for s, _ in pol.state.solutions] == [0, 8, 16]


def test_vt_window():
    assert vt_window(100, 4) == 20
    assert vt_window(10, 3) == 6
    assert vt_window(5, 0) == 1
    pol = TrackingVT(4)
    run(NetworkSpec(1, 1, 1), fixed_sequence([NetworkEvent((1,), (1,))] * 100), pol, 100)
    assert pol.window == 20 and pol.state.slack == 4


def test_total_action_queue_can_exceed_w():
    # one event fills the first window, a different one the second: after
    # the second window closes both queues hold W replays each
    spec = NetworkSpec(1, 1, 1, TP)
    e1, e2 = NetworkEvent((1,), (1,)), NetworkEvent((0,), (1,))
    W = 3
    pol = Tracking(W)
    run(spec, fixed_sequence([e1] * W + [e2] * W), pol, 2 * W)
    sizes = {e: len(q) for e, q in pol.state.action_queues.items()}
    assert sum(sizes.values()) == 2 * W
    assert pol.max_outstanding <= W


events = st.builds(NetworkEvent, st.tuples(st.integers(0, 2), st.integers(0, 2)),
                   st.tuples(st.integers(0, 2), st.integers(0, 2)))


@settings(max_examples=80, deadline=None)
@given(st.lists(events, min_size=2, max_size=40), st.integers(1, 6), st.sampled_from([TP, PF]))
def test_tracking_debt_bounds_and_identity(evs, W, util):
    spec = NetworkSpec(2, 2, 2, util)
    pol = Tracking(W)
    tr = run(spec, fixed_sequence(evs), pol, len(evs))
    assert pol.max_outstanding <= W
    ledger = replay_debt(tr, pol.oracle_actions())
    assert ledger.max_q <= W * spec.max_service
    assert ledger.max_u <= W * spec.u_max + 1e-9
    regret = pol.oracle_utility() - tr.total_utility
    assert regret == pytest.approx(ledger.total_u, rel=1e-9, abs=1e-9)


def test_dpp_and_tracking_runs_are_deterministic():
    spec = NetworkSpec(2, 10, 10, PF, admission_granularity=10)
    for mk in (lambda: DriftPlusPenalty(50.0), lambda: Tracking(10)):
        a = run(spec, adaptive_w_adversary(10), mk(), 200, seed=9)
        b = run(spec, adaptive_w_adversary(10), mk(), 200, seed=9)
        assert a.records == b.records
