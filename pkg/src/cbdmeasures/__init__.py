"""Contextuality measures for systems of binary random variables.

Systems are described by contents, contexts and per-context joint pmfs.
The measures CNT1, CNT2 (with its level hierarchy), CNT3 and the contextual
fraction CNTF are computed by linear programming over couplings.
"""

from .errors import (CapExceeded, CbdError, ContentNotInContext, DomainError, InvalidSystem, NotCyclic,
                     ShapeError, SolverFailure, TooLarge)
from .generators import (SystemShape, make_cyclic, make_hypercyclic, parity_bunch, parity_system,
                         product_system, random_system)
from .harness import SweepRecord, WitnessPair, find_witnesses, read_csv, sweep_parity, sweep_random, write_csv
from .lpmodel import LinearProgram, OutcomeIndexer, index_outcomes
from .measures import (MeasureReport, all_measures, cnt1, cnt2, cnt2_at_level, cnt3, cntf, contextual_level,
                       cyclic_delta, is_contextual)
from .solver import SolveResult, solve, solve_exact
from .system import ContextSpec, System, load_system, save_system, validate_system

__version__ = "0.1.0"
