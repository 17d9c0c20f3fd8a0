"""Exact error probabilities by outcome-tree enumeration, and the collective benchmark.

Local policies are Markovian in the belief, so the error probability of any of
them is a finite sum over outcome strings; no sampling is needed. Each tree
node carries the two joint weights q_+ Pr(path|+) and q_- Pr(path|-); a leaf
costs the smaller of the two. Nodes at the same depth with equal beliefs are
merged, which collapses the locally-optimal tree to a handful of nodes.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit, resolve_backend
from .schemes import COLLECTIVE, SchemeKind, SchemeSpec, angle_for, cost_collective_pure

# nodes whose beliefs agree this closely are merged
COALESCE_TOL = 1e-12
MAX_COLLECTIVE_COPIES = 12


@dataclass(frozen=True)
class EvaluationResult:
    scheme: str
    horizon: int
    cost: float
    leaf_count: int


@dataclass(frozen=True)
class CollectiveBenchmark:
    horizon: int
    cost: float


def _coalesce(w_plus, w_minus, tol=COALESCE_TOL):
    total = w_plus + w_minus
    keep = total > 0.0
    w_plus, w_minus, total = w_plus[keep], w_minus[keep], total[keep]
    belief = w_plus / total
    order = np.argsort(belief, kind="stable")
    belief, w_plus, w_minus = belief[order], w_plus[order], w_minus[order]
    starts = np.concatenate(([True], np.diff(belief) > tol))
    group = np.cumsum(starts) - 1
    n_groups = int(group[-1]) + 1 if group.size else 0
    return (np.bincount(group, weights=w_plus, minlength=n_groups),
            np.bincount(group, weights=w_minus, minlength=n_groups))


def outcome_tree(prob, spec):
    """Yield ``(depth, w_plus, w_minus)`` for depths 0..N of the coalesced tree."""
    w_plus = np.array([prob.q_plus])
    w_minus = np.array([prob.q_minus])
    yield 0, w_plus, w_minus
    k = prob.contrast
    for n in range(1, spec.horizon + 1):
        belief = w_plus / (w_plus + w_minus)
        phi = np.broadcast_to(np.asarray(angle_for(spec, prob, n, belief), dtype=float), belief.shape)
        a = 0.5 * (1.0 + k * np.cos(2.0 * (phi - prob.theta)))
        b = 0.5 * (1.0 + k * np.cos(2.0 * (phi + prob.theta)))
        w_plus, w_minus = _coalesce(
            np.concatenate((w_plus * a, w_plus * (1.0 - a))),
            np.concatenate((w_minus * b, w_minus * (1.0 - b))),
        )
        yield n, w_plus, w_minus


def exact_cost(prob, spec, horizon=None):
    """Exact Bayes error of ``spec`` followed by the optimal final guess.

    Ties (posterior exactly 1/2) cost 1/2 of their reach probability, which is
    what min(w_plus, w_minus) gives.
    """
    if horizon is not None and horizon != spec.horizon:
        raise ValueError(f"horizon {horizon} does not match the scheme's {spec.horizon}")
    for _, w_plus, w_minus in outcome_tree(prob, spec):
        pass
    cost = math.fsum(np.minimum(w_plus, w_minus))
    return EvaluationResult(spec.kind.value, spec.horizon, cost, int(w_plus.size))


def coalesced_cost(prob, spec, horizon=None):
    """``exact_cost`` for fixed-angle schemes, tracking outcome counts only."""
    if not spec.kind.fixed_angle:
        raise ValueError(f"{spec.kind.value} uses belief-dependent angles; use exact_cost")
    if horizon is not None and horizon != spec.horizon:
        raise ValueError(f"horizon {horizon} does not match the scheme's {spec.horizon}")
    phi = angle_for(spec, prob, 1, prob.q_plus)
    k = prob.contrast
    a = 0.5 * (1.0 + k * math.cos(2.0 * (phi - prob.theta)))
    b = 0.5 * (1.0 + k * math.cos(2.0 * (phi + prob.theta)))
    # index = number of PLUS outcomes so far
    w_plus = np.array([prob.q_plus])
    w_minus = np.array([prob.q_minus])
    for _ in range(spec.horizon):
        w_plus = np.concatenate((w_plus * (1.0 - a), [0.0])) + np.concatenate(([0.0], w_plus * a))
        w_minus = np.concatenate((w_minus * (1.0 - b), [0.0])) + np.concatenate(([0.0], w_minus * b))
    cost = math.fsum(np.minimum(w_plus, w_minus))
    return EvaluationResult(spec.kind.value, spec.horizon, cost, int(w_plus.size))


def scheme_cost(prob, spec):
    """Cheapest exact route for the scheme."""
    if spec.kind.fixed_angle:
        return coalesced_cost(prob, spec)
    return exact_cost(prob, spec)


# -- collective benchmark --------------------------------------------------

def density_matrix(prob, true_state):
    """2x2 real density matrix in the {|x>, |y>} basis."""
    x, z = prob.bloch(true_state)
    return 0.5 * np.array([[1.0 + z, x], [x, 1.0 - z]])


def collective_operator(prob, horizon):
    """q_+ rho_+^(x)N - q_- rho_-^(x)N as a dense real symmetric matrix."""
    rho_p = density_matrix(prob, +1)
    rho_m = density_matrix(prob, -1)
    big_p = np.array([[prob.q_plus]])
    big_m = np.array([[prob.q_minus]])
    for _ in range(horizon):
        big_p = np.kron(big_p, rho_p)
        big_m = np.kron(big_m, rho_m)
    return big_p - big_m


def collective_cost(prob, horizon, solver="lapack"):
    """Error of the joint N-copy Helstrom measurement, 1/2 (1 - ||Delta||_1).

    ``solver`` picks the eigenvalue routine for nu > 0: LAPACK's symmetric
    solver or the package's own Jacobi iteration.
    """
    if int(horizon) != horizon or not 1 <= horizon <= MAX_COLLECTIVE_COPIES:
        raise ValueError(f"collective benchmark supports 1 <= N <= {MAX_COLLECTIVE_COPIES}, got {horizon}")
    if prob.nu == 0.0:
        return CollectiveBenchmark(horizon, cost_collective_pure(prob, horizon))
    delta = collective_operator(prob, horizon)
    if solver == "lapack":
        eig = np.linalg.eigvalsh(delta)
    elif solver == "jacobi":
        eig = symmetric_eigenvalues(delta)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    return CollectiveBenchmark(horizon, 0.5 * (1.0 - math.fsum(np.abs(eig))))


# -- Jacobi eigensolver ----------------------------------------------------

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def _rotation(app, aqq, apq):
    tau = (aqq - app) / (2.0 * apq)
    t = (1.0 if tau >= 0.0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
    c = 1.0 / math.sqrt(1.0 + t * t)
    return c, t * c


@njit
def _jacobi_nb(a, tol, max_sweeps):
    n = a.shape[0]
    fro = math.sqrt(np.sum(a * a))
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += 2.0 * a[i, j] * a[i, j]
        if math.sqrt(off) <= tol * fro:
            return np.diag(a).copy(), sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if tau >= 0.0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
    return np.diag(a).copy(), -1


def _jacobi_np(a, tol, max_sweeps):
    n = a.shape[0]
    fro = math.sqrt(float(np.sum(a * a)))
    iu = np.triu_indices(n, 1)
    for sweep in range(max_sweeps):
        if math.sqrt(2.0 * float(np.sum(a[iu] ** 2))) <= tol * fro:
            return np.diag(a).copy(), sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                c, s = _rotation(a[p, p], a[q, q], a[p, q])
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
    return np.diag(a).copy(), -1


def symmetric_eigenvalues(matrix, backend=None, tol=JACOBI_TOL):
    """All eigenvalues of a real symmetric matrix by cyclic Jacobi rotations, ascending."""
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and float(np.max(np.abs(a - a.T))) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    if a.shape[0] == 0:
        return np.empty(0)
    a = 0.5 * (a + a.T)
    if resolve_backend(backend) == "numba":
        eig, sweeps = _jacobi_nb(a, tol, JACOBI_MAX_SWEEPS)
    else:
        eig, sweeps = _jacobi_np(a, tol, JACOBI_MAX_SWEEPS)
    if sweeps < 0:
        raise RuntimeError(f"Jacobi iteration did not converge in {JACOBI_MAX_SWEEPS} sweeps")
    return np.sort(eig)


# -- results CSV -----------------------------------------------------------

RESULTS_HEADER = ("scheme", "N", "theta_deg", "q_plus", "nu", "cost")


@dataclass(frozen=True)
class ResultRow:
    scheme: str
    N: int
    theta_deg: float
    q_plus: float
    nu: float
    cost: float

    def fields(self):
        return [self.scheme, str(self.N), _fmt(self.theta_deg), _fmt(self.q_plus),
                _fmt(self.nu), _fmt(self.cost)]


def _fmt(x):
    return format(float(x), ".17g")


def write_results_csv(rows, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(RESULTS_HEADER)
    for row in rows:
        writer.writerow(row.fields())


def evaluate_schemes(prob, n_values, schemes, table=None, grid_size=None, backend=None):
    """Exact costs for every (scheme, N); the policy table is built once at max N.

    Returns a list of ``ResultRow`` ordered by scheme, then N.
    """
    from .optimizer import DEFAULT_GRID, build_table

    n_values = sorted(set(int(n) for n in n_values))
    if SchemeKind.GLOBALLY_OPTIMAL.value in schemes and table is None:
        table = build_table(prob, n_values[-1], grid_size or DEFAULT_GRID, backend=backend)
    rows = []
    for name in schemes:
        for n in n_values:
            if name == COLLECTIVE:
                cost = collective_cost(prob, n).cost
            elif name == SchemeKind.GLOBALLY_OPTIMAL.value:
                cost = exact_cost(prob, SchemeSpec.globally_optimal(table.truncated(n))).cost
            else:
                cost = scheme_cost(prob, SchemeSpec(SchemeKind(name), n)).cost
            rows.append(ResultRow(name, n, prob.theta_deg, prob.q_plus, prob.nu, cost))
    return rows
