"""Slotted-time network utility maximization against adaptive adversaries."""
from .core import (Action, ConfigurationError, FeasibilityError, NetworkEvent, NetworkSpec,
                   PROPORTIONAL_FAIRNESS, THROUGHPUT, UtilitySpec, check_action, realize)
from .engine import SimulationError, Trace, queue_update, run
from .adversaries import (adaptive_w_adversary, fixed_sequence, load_events, dump_events,
                          unconstrained_adversary, w_lowerbound_adversary)
from .oracle import (OracleError, WindowProblem, check_feasibility, compute_vstar, solve_num,
                     solve_window)
from .policies import AdmitAll, DriftPlusPenalty, NullPolicy, Tracking, TrackingVT, max_weight
from .metrics import DebtLedger, RunSummary, check_w_constrained, potential, summarize, utility_regret

__version__ = "0.1.0"
