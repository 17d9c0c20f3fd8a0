"""Shared fixtures-by-function: reference problem and cached policy tables."""
import math

from qdisc import DiscriminationProblem, build_table

THETA = math.radians(15.0)
NOISE_LEVELS = (0.0, 0.02, 0.1, 0.3, 0.6)

# filled by test_acceptance.py, one (label, passed, detail) per criterion
ACCEPTANCE_LINES = []

_tables = {}


def problem(nu=0.0, q_plus=0.5):
    return DiscriminationProblem(THETA, q_plus, nu)


def reference_table(nu, horizon=10, grid_size=2501):
    """Session cache: the N=10 tables are shared by several test modules."""
    key = (nu, horizon, grid_size)
    if key not in _tables:
        _tables[key] = build_table(problem(nu), horizon, grid_size)
    return _tables[key]
