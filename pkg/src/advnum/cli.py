"""Command-line experiment runner: single runs, horizon sweeps, tradeoff curves
and the episodic V_T search."""
from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence

from .adversaries import (adaptive_w_adversary, dump_events, fixed_sequence, load_events,
                          unconstrained_adversary, w_lowerbound_adversary)
from .core import UTILITY_KINDS, ConfigurationError, NetworkSpec, UtilitySpec
from .engine import Trace, run
from .metrics import RunSummary, potential, replay_debt, summarize
from .oracle import OracleError, compute_vstar, solve_num
from .policies import AdmitAll, DriftPlusPenalty, NullPolicy, Tracking, TrackingVT

ADVERSARIES = ("adaptive_w", "unconstrained", "w_lowerbound")
POLICIES = ("dpp", "tracking", "tracking_vt", "admit_all", "null")
SWEEP_COLUMNS = ["T", "W", "V", "policy", "regret", "total_queue_T", "peak_queue",
                 "regret_per_T", "queue_per_T"]


# ---------------------------------------------------------------- scaling rules

def parse_w_rule(rule: str):
    if rule == "sqrt":
        return lambda T: max(1, math.isqrt(T - 1) + 1)
    if rule == "linear":
        return lambda T: T
    if rule.startswith("const:"):
        k = int(rule[6:])
        if k < 1:
            raise ConfigurationError("const window must be >= 1")
        return lambda T: k
    raise ConfigurationError(f"unknown W rule {rule!r} (sqrt, linear, const:k)")


def parse_v_rule(rule: str):
    if rule.startswith("pow:"):
        p = Fraction(rule[4:])
        return lambda T: float(T) ** float(p)
    if rule.startswith("const:"):
        k = float(rule[6:])
        return lambda T: k
    raise ConfigurationError(f"unknown V rule {rule!r} (pow:p/q, const:k)")


def _int_list(text: str) -> List[int]:
    return [int(float(x)) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


# ---------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    horizon: int = 1000
    adversary: str = "adaptive_w"
    adversary_window: Optional[int] = None
    rate: Optional[int] = None
    policy: str = "tracking"
    dpp_v: Optional[float] = None
    tracking_w: Optional[int] = None
    vt: Optional[int] = None
    utility: str = "proportional_fairness"
    seed: int = 0
    out: Optional[str] = None
    events_out: Optional[str] = None
    jobs: int = 1
    sweep_horizons: List[int] = field(default_factory=list)
    w_rule: str = "sqrt"
    v_rule: str = "pow:3/4"
    tradeoff_v: List[float] = field(default_factory=list)
    check_invariants: bool = False
    vt_search_episode: Optional[int] = None
    exact_cap: int = 8

    def validate(self) -> None:
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if self.policy not in POLICIES:
            raise ConfigurationError(f"unknown policy {self.policy!r}")
        if self.utility not in UTILITY_KINDS:
            raise ConfigurationError(f"unknown utility {self.utility!r}")
        if self.adversary not in ADVERSARIES and not self.adversary.startswith("replay:"):
            raise ConfigurationError(f"unknown adversary {self.adversary!r}")
        if self.policy == "tracking_vt" and self.vt is None and self.vt_search_episode is None:
            raise ConfigurationError("policy tracking_vt needs --vt")
        if self.sweep_horizons:
            hs = self.sweep_horizons
            if len(hs) < 2:
                raise ConfigurationError("a sweep needs at least two horizons")
            if any(b <= a for a, b in zip(hs, hs[1:])):
                raise ConfigurationError("sweep horizons must be strictly increasing")
        if self.jobs < 1:
            raise ConfigurationError("--jobs must be >= 1")
        parse_w_rule(self.w_rule)
        parse_v_rule(self.v_rule)

    def window(self) -> int:
        if self.adversary_window is not None:
            return self.adversary_window
        return parse_w_rule(self.w_rule)(self.horizon)

    def level(self) -> int:
        if self.rate is not None:
            return self.rate
        return 10 if self.adversary == "adaptive_w" else 2


def build_events_and_spec(cfg: ExperimentConfig):
    """Network spec plus an adversary object for the configured scenario."""
    util = UtilitySpec(cfg.utility)
    if cfg.adversary.startswith("replay:"):
        events = load_events(cfg.adversary[len("replay:"):])
        if len(events) < cfg.horizon:
            raise ConfigurationError(
                f"replay file has {len(events)} slots, horizon is {cfg.horizon}")
        n = events[0].n
        top_a = max(max(e.arrivals) for e in events)
        top_b = max(max(max(e.rates) for e in events), top_a)
        return NetworkSpec(n, top_a, top_b, util), fixed_sequence(events)
    lvl = cfg.level()
    # admissions in whole quanta: the matching oracle is exact at this granularity
    spec = NetworkSpec(2, lvl, lvl, util, admission_granularity=lvl)
    if cfg.adversary == "adaptive_w":
        return spec, adaptive_w_adversary(cfg.window(), lvl)
    if cfg.adversary == "unconstrained":
        return spec, unconstrained_adversary(cfg.horizon, level=lvl)
    return spec, w_lowerbound_adversary(cfg.window(), cfg.horizon, level=lvl)


def build_policy(cfg: ExperimentConfig):
    T = cfg.horizon
    if cfg.policy == "dpp":
        v = cfg.dpp_v if cfg.dpp_v is not None else parse_v_rule(cfg.v_rule)(T)
        return DriftPlusPenalty(v)
    if cfg.policy == "tracking":
        return Tracking(cfg.tracking_w if cfg.tracking_w is not None else cfg.window())
    if cfg.policy == "tracking_vt":
        return TrackingVT(cfg.vt)
    if cfg.policy == "admit_all":
        return AdmitAll()
    return NullPolicy()


# ---------------------------------------------------------------- single run

@dataclass
class RunResult:
    config: ExperimentConfig
    summary: RunSummary
    trace: Trace
    invariant_failures: List[str]
    policy_param: float = float("nan")
    window: int = 0


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def slot_header(n: int) -> List[str]:
    cols = ["t"]
    for name in ("A", "S", "a"):
        cols += [f"{name}_{i + 1}" for i in range(n)]
    cols.append("served_queue")
    cols += [f"b_actual_{i + 1}" for i in range(n)]
    cols += [f"Q_{i + 1}" for i in range(n)]
    return cols + ["slot_utility", "cum_utility", "total_queue", "potential"]


def write_slot_csv(trace: Trace, path) -> None:
    """Per-slot CSV; served_queue is 1-based and -1 means idle."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(slot_header(trace.spec.n_queues))
        cum = 0.0
        for r in trace.records:
            cum += r.utility
            served = -1 if r.action.served_queue is None else r.action.served_queue + 1
            row = [r.t, *r.event.arrivals, *r.event.rates, *r.a, served, *r.b_actual,
                   *r.queues_after, float(r.utility), cum, sum(r.queues_after),
                   potential(r.queues_after)]
            w.writerow([_fmt(x) for x in row])


def write_rows(rows: Sequence[dict], columns: Sequence[str], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _invariants(trace: Trace, policy) -> List[str]:
    bad = []
    for r in trace.records:
        if min(r.queues_after) < 0:
            bad.append(f"slot {r.t}: negative queue")
        dep = r.departed
        if any(d < 0 or d > b for d, b in zip(dep, r.b)):
            bad.append(f"slot {r.t}: departures outside [0, b]")
    if isinstance(policy, Tracking):
        spec, W = trace.spec, policy.window
        ledger = replay_debt(trace, policy.oracle_actions())
        if ledger.max_q > W * spec.max_service:
            bad.append(f"resource debt {ledger.max_q} exceeds W*B = {W * spec.max_service}")
        if ledger.max_u > W * spec.u_max + 1e-9:
            bad.append(f"utility debt {ledger.max_u} exceeds W*U_max = {W * spec.u_max}")
        regret_w = policy.oracle_utility() - trace.total_utility
        if abs(regret_w - ledger.total_u) > 1e-9 * max(1.0, abs(regret_w)):
            bad.append(f"window regret {regret_w} differs from total utility debt {ledger.total_u}")
    return bad


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    cfg.validate()
    spec, adversary = build_events_and_spec(cfg)
    policy = build_policy(cfg)
    trace = run(spec, adversary, policy, cfg.horizon, seed=cfg.seed)
    oracle = solve_num(trace.events, spec, max_horizon=cfg.exact_cap)
    summary = summarize(trace, oracle)
    fails = _invariants(trace, policy) if cfg.check_invariants else []
    if cfg.out:
        write_slot_csv(trace, cfg.out)
        stem = Path(cfg.out)
        write_rows([summary.as_row()], list(summary.as_row()),
                   stem.with_name(stem.stem + "_summary.csv"))
    if cfg.events_out:
        dump_events(trace.events, cfg.events_out)
    param = float("nan")
    if isinstance(policy, DriftPlusPenalty):
        param = policy.cfg.v
    elif isinstance(policy, TrackingVT):
        param = float(policy.vt)
    win = policy.window if isinstance(policy, Tracking) else cfg.window()
    return RunResult(cfg, summary, trace, fails, param, win)


# ---------------------------------------------------------------- sweeps

def _sweep_point(cfg: ExperimentConfig) -> dict:
    res = run_experiment(cfg)
    s, T = res.summary, cfg.horizon
    return {"T": T, "W": cfg.window(), "V": res.policy_param, "policy": cfg.policy,
            "regret": s.regret, "total_queue_T": s.total_queue_T, "peak_queue": s.peak_queue,
            "regret_per_T": s.regret / T, "queue_per_T": s.total_queue_T / T,
            "_failures": res.invariant_failures}


def sweep_configs(cfg: ExperimentConfig) -> List[ExperimentConfig]:
    base = replace(cfg, out=None, events_out=None)
    if cfg.tradeoff_v:
        return [replace(base, policy="dpp", dpp_v=v, sweep_horizons=[]) for v in cfg.tradeoff_v]
    return [replace(base, horizon=T, sweep_horizons=[]) for T in cfg.sweep_horizons]


def sweep(cfg: ExperimentConfig) -> List[dict]:
    """Run every point; rows come back in input order whatever the completion order."""
    cfgs = sweep_configs(cfg)
    if cfg.jobs == 1:
        return [_sweep_point(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(_sweep_point, cfgs))


def vt_search(cfg: ExperimentConfig, episode: int) -> List[dict]:
    """Binary search for V_T across consecutive episodes of the horizon.

    Each episode runs Tracking with the midpoint guess, then measures the
    oracle's peak queue on that episode's events and halves the range.
    """
    if episode < 1 or episode > cfg.horizon:
        raise ConfigurationError("episode length must lie in [1, horizon]")
    ep_cfg = replace(cfg, horizon=episode)
    ep_cfg.validate()
    spec, _ = build_events_and_spec(ep_cfg)
    lo, hi = 0, spec.n_queues * spec.max_service * episode
    rows = []
    for k in range(cfg.horizon // episode):
        if lo >= hi:
            break
        mid = (lo + hi) // 2
        _, adversary = build_events_and_spec(ep_cfg)
        trace = run(spec, adversary, TrackingVT(mid), episode, seed=cfg.seed + k)
        vstar = compute_vstar(trace.events, solve_num(trace.events, spec, max_horizon=cfg.exact_cap), spec)
        if vstar <= mid:
            hi = mid
        else:
            lo = mid + 1
        rows.append({"episode": k, "guess": mid, "vstar": vstar, "lo": lo, "hi": hi})
    return rows


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="advnum", description=__doc__)
    p.add_argument("--horizon", type=int, required=True, help="number of slots T")
    p.add_argument("--adversary", default="adaptive_w",
                   help="adaptive_w | unconstrained | w_lowerbound | replay:PATH")
    p.add_argument("--adversary-window", type=int, help="adversary frame length W")
    p.add_argument("--rate", type=int, help="arrival/rate level (default 10 adaptive, 2 otherwise)")
    p.add_argument("--policy", default="tracking", choices=POLICIES)
    p.add_argument("--dpp-v", type=float, help="DPP tradeoff parameter V")
    p.add_argument("--tracking-w", type=int, help="Tracking window (default: adversary window)")
    p.add_argument("--vt", type=int, help="slack V_T for tracking_vt")
    p.add_argument("--utility", default="proportional_fairness", choices=UTILITY_KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="per-slot CSV (single run) or table CSV (sweep)")
    p.add_argument("--events-out", help="write the realized event sequence for replay")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--sweep-horizons", type=_int_list, default=[], help="comma list, e.g. 1e3,1e4")
    p.add_argument("--w-rule", default="sqrt", help="sqrt | linear | const:k")
    p.add_argument("--v-rule", default="pow:3/4", help="pow:p/q | const:k")
    p.add_argument("--tradeoff-v", type=_float_list, default=[], help="comma list of DPP V values")
    p.add_argument("--vt-search", type=int, metavar="EPISODE",
                   help="binary-search V_T over episodes of this length")
    p.add_argument("--check-invariants", action="store_true")
    return p


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        horizon=ns.horizon, adversary=ns.adversary, adversary_window=ns.adversary_window,
        rate=ns.rate, policy=ns.policy, dpp_v=ns.dpp_v, tracking_w=ns.tracking_w, vt=ns.vt,
        utility=ns.utility, seed=ns.seed, out=ns.out, events_out=ns.events_out, jobs=ns.jobs,
        sweep_horizons=ns.sweep_horizons, w_rule=ns.w_rule, v_rule=ns.v_rule,
        tradeoff_v=ns.tradeoff_v, check_invariants=ns.check_invariants,
        vt_search_episode=ns.vt_search)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    cfg = config_from_args(ns)
    try:
        cfg.validate()
        if cfg.vt_search_episode is not None:
            rows = vt_search(cfg, cfg.vt_search_episode)
            cols = ["episode", "guess", "vstar", "lo", "hi"]
            if cfg.out:
                write_rows(rows, cols, cfg.out)
            for r in rows:
                print(" ".join(f"{c}={_fmt(r[c])}" for c in cols))
            return 0
        if cfg.sweep_horizons or cfg.tradeoff_v:
            rows = sweep(cfg)
            if cfg.out:
                write_rows(rows, SWEEP_COLUMNS, cfg.out)
            failures = [f for r in rows for f in r["_failures"]]
            for r in rows:
                print(" ".join(f"{c}={_fmt(r[c])}" for c in SWEEP_COLUMNS))
        else:
            res = run_experiment(cfg)
            failures = res.invariant_failures
            for k, v in res.summary.as_row().items():
                print(f"{k:16s} {_fmt(v)}")
    except (ConfigurationError, OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for f in failures:
        print(f"invariant violated: {f}", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
