"""Minimum-error discrimination of two depolarized qubit states from N copies
using adaptive local measurements."""
from .core import (
    DiscriminationProblem,
    ImpossibleEvidenceError,
    Outcome,
    bayes_update,
    canonicalize_angle,
    helstrom_angle,
    outcome_probability,
    single_copy_error,
)
from .evaluator import coalesced_cost, collective_cost, exact_cost, scheme_cost, symmetric_eigenvalues
from .optimizer import PolicyTable, build_table, read_table_csv, write_table_csv
from .schemes import SchemeKind, SchemeSpec, angle_for, decide
from .simulator import BatchStats, run_batch, run_trial

__version__ = "0.1.0"
