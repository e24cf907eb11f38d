import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from advnum.adversaries import fixed_sequence, unconstrained_adversary, w_lowerbound_adversary
from advnum.core import Action, NetworkEvent, NetworkSpec, UtilitySpec
from advnum.engine import run
from advnum.metrics import (DebtLedger, check_w_constrained, debt_update, potential, replay_debt,
                            summarize, utility_regret)
from advnum.oracle import OracleSolution, simulate, solve_num
from advnum.policies import AdmitAll, NullPolicy, Tracking

TP = UtilitySpec("throughput")


def test_regret_examples():
    spec = NetworkSpec(2, 2, 2, TP)
    tr = run(spec, fixed_sequence([NetworkEvent((2, 2), (2, 2))] * 2), AdmitAll(), 2)
    assert utility_regret(8.0, tr) == 0
    tr = run(spec, w_lowerbound_adversary(4, 8), NullPolicy(), 8)
    assert utility_regret(solve_num(tr.events, spec).total_utility, tr) == 8


def test_w_constraint_examples():
    spec = NetworkSpec(1, 2, 2, TP)
    evs = [NetworkEvent((1,), (2,))] * 3 + [NetworkEvent((2,), (0,))] * 3
    tr = simulate(spec, evs, [Action((1,), 0)] * 3 + [Action((2,), None)] * 3)
    # net offered service per slot: +1, +1, +1, -2, -2, -2
    assert check_w_constrained(tr, 3) == (False, (0, 2))
    assert check_w_constrained(tr, 3, stride=3) == (False, (0, 3))
    assert check_w_constrained(tr, 2) == (False, (0, 2))
    assert check_w_constrained(tr, 6) == (False, (0, 0))     # a single window
    ok = simulate(spec, evs[:3], [Action((1,), 0)] * 3)
    assert check_w_constrained(ok, 3) == (True, None)
    with pytest.raises(ValueError):
        check_w_constrained(tr, 7)


def test_potential():
    assert potential((0, 0)) == 0
    assert potential((3, 4)) == 12.5


@given(st.lists(st.integers(0, 10**6), min_size=1, max_size=6))
def test_potential_lower_bound(Q):
    # phi >= S^2 / 2N  <=>  N * sum(q^2) >= S^2, exact on integers
    assert len(Q) * sum(q * q for q in Q) >= sum(Q) ** 2
    assert potential(Q) >= sum(Q) ** 2 / (2 * len(Q)) * (1 - 1e-12)


def test_ledger_only_touches_current_event():
    spec = NetworkSpec(1, 1, 1, TP)
    e1, e2 = NetworkEvent((1,), (1,)), NetworkEvent((0,), (1,))
    led = DebtLedger()
    debt_update(led, spec, e1, Action((1,), 0), Action((0,), None))
    snapshot = dict(led.q_debt), dict(led.u_debt)
    debt_update(led, spec, e2, Action((0,), 0), Action((0,), 0))
    assert led.u_debt[e1] == snapshot[1][e1] == 1
    assert led.q_debt[(0, e1)] == snapshot[0][(0, e1)] == 0
    assert led.u_debt[e2] == 0


def test_ledger_frame_one_accumulates_oracle_utility():
    spec = NetworkSpec(1, 1, 1, UtilitySpec("proportional_fairness"))
    ev = NetworkEvent((1,), (1,))
    W = 4
    pol = Tracking(W)
    tr = run(spec, fixed_sequence([ev] * W), pol, W)
    led = replay_debt(tr, pol.oracle_actions())
    assert led.u_debt[ev] == pytest.approx(W * math.log(2))


def test_identical_actions_leave_ledger_at_zero():
    spec = NetworkSpec(2, 2, 2, TP)
    tr = run(spec, unconstrained_adversary(8), AdmitAll(), 8)
    led = replay_debt(tr, tr.actions)
    assert led.max_q == 0 and led.max_u == 0 and led.total_u == 0


def test_summary_all_zero():
    spec = NetworkSpec(2, 2, 2, TP)
    evs = [NetworkEvent((0, 0), (1, 1))] * 5
    tr = run(spec, fixed_sequence(evs), NullPolicy(), 5)
    s = summarize(tr, OracleSolution([Action.null(2)] * 5, 0.0, (0, 0)))
    assert s.as_row() == dict(regret=0, total_queue_T=0, peak_queue=0, peak_time=0,
                              total_utility=0, oracle_utility=0, potential_final=0)


def test_summary_fields_cross_checked():
    spec = NetworkSpec(2, 2, 2, TP)
    T = 12
    tr = run(spec, unconstrained_adversary(T), AdmitAll(), T)
    sol = solve_num(tr.events, spec)
    s = summarize(tr, sol)
    assert s.regret == utility_regret(sol.total_utility, tr)
    totals = [sum(r.queues_after) for r in tr.records]
    assert s.peak_queue == max(totals) >= s.total_queue_T
    assert s.peak_time == 1 + totals.index(max(totals))
    # phase 1: 4 packets arrive per slot and at most 2 leave
    assert s.peak_queue >= T // 2 * 2
    assert s.potential_final == potential(tr.final_queues)
