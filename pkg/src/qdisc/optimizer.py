"""Backward-induction construction of the globally-optimal local policy.

The value function R_n(P) is the expected final error after n copies have been
measured, given belief P, when the remaining copies are measured optimally.
It lives on a uniform belief grid and is linearly interpolated between grid
points. Row N is min(P, 1 - P); each earlier row minimizes, over the basis
angle, the outcome-averaged value of the next row at the Bayes posteriors.

The per-row angle search is the hot loop: a dense periodic scan over
[0, pi/2) followed by golden-section refinement of the two best scan minima,
then a closed-form polish (the objective is a pure sinusoid in 2*phi while
both posteriors stay inside fixed interpolation cells). It is implemented once as a numba kernel and once in vectorized numpy.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._accel import njit, resolve_backend
from .core import HALF_PI, helstrom_angle, single_copy_error

DEFAULT_GRID = 2501
DEFAULT_SCAN = 1801
ANGLE_TOL = 1e-10
# scan minima this close to the best one are refined too (covers the
# O(h^2) discretization error of the scan at 1801 points)
CANDIDATE_WINDOW = 1e-6
# refined minima this close in value count as ties; the smaller angle wins
TIE_TOL = 1e-13
# a scan whose spread is below this is flat: every angle ties, so angle 0 wins
FLAT_TOL = 1e-14

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def uniform_grid(size):
    if size < 3:
        raise ValueError(f"grid size must be >= 3, got {size}")
    return np.linspace(0.0, 1.0, size)


@dataclass(frozen=True)
class ValueRow:
    beliefs: np.ndarray
    costs: np.ndarray

    def __call__(self, p):
        out = interp_uniform(self.costs, p)
        return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class PolicyTable:
    """N x G table of basis angles; row n-1 holds the angle for copy n.

    ``values`` (when retained) has N+1 rows: values[n] is R_n on the grid, so
    values[0] evaluated at the prior is the scheme's error probability and
    values[N] is min(p, 1-p).
    """

    horizon: int
    grid: np.ndarray
    angles: np.ndarray
    values: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.angles.shape != (self.horizon, self.grid.size):
            raise ValueError(
                f"angles shape {self.angles.shape} != ({self.horizon}, {self.grid.size})"
            )
        if self.values is not None and self.values.shape != (self.horizon + 1, self.grid.size):
            raise ValueError(f"values shape {self.values.shape} is inconsistent with the horizon")

    def angle(self, n, p):
        """Linearly interpolated angle for copy ``n`` (1-based) at belief ``p``."""
        if not 1 <= n <= self.horizon:
            raise ValueError(f"copy index {n} outside 1..{self.horizon}")
        return interpolate_angle(self, n, p)

    def value_row(self, n):
        if self.values is None:
            raise ValueError("table was built without value rows")
        return ValueRow(self.grid, self.values[n])

    def cost(self, q_plus):
        """R_0 at the prior: the error probability of the whole N-copy policy."""
        return self.value_row(0)(q_plus)

    def truncated(self, horizon):
        """Policy for the last ``horizon`` copies, i.e. the optimal table for that horizon."""
        if not 1 <= horizon <= self.horizon:
            raise ValueError(f"horizon {horizon} outside 1..{self.horizon}")
        skip = self.horizon - horizon
        values = None if self.values is None else self.values[skip:]
        return PolicyTable(horizon, self.grid, self.angles[skip:], values)


# -- interpolation ---------------------------------------------------------

def interp_uniform(costs, q):
    """Piecewise-linear interpolation of ``costs`` sampled on linspace(0, 1, G)."""
    costs = np.asarray(costs, dtype=float)
    q = np.asarray(q, dtype=float)
    g = costs.shape[-1]
    x = q * (g - 1)
    i = np.clip(np.floor(x).astype(np.int64), 0, g - 2)
    t = x - i
    return (1.0 - t) * costs[i] + t * costs[i + 1]


def interpolate_angle(table, n, p):
    out = interp_uniform(table.angles[n - 1], p)
    return out if np.ndim(out) else float(out)


@njit
def _interp_nb(costs, q):
    g = costs.shape[0]
    x = q * (g - 1)
    i = int(math.floor(x))
    if i < 0:
        i = 0
    elif i > g - 2:
        i = g - 2
    t = x - i
    return (1.0 - t) * costs[i] + t * costs[i + 1]


# -- objective -------------------------------------------------------------

def terminal_values(grid):
    grid = np.asarray(grid, dtype=float)
    return ValueRow(grid, np.minimum(grid, 1.0 - grid))


def _plus_likelihoods(theta, contrast, phi):
    a = 0.5 * (1.0 + contrast * np.cos(2.0 * (phi - theta)))
    b = 0.5 * (1.0 + contrast * np.cos(2.0 * (phi + theta)))
    return a, b


def _residual_np(p, a, b, costs):
    m_plus = p * a + (1.0 - p) * b
    m_minus = p * (1.0 - a) + (1.0 - p) * (1.0 - b)
    with np.errstate(divide="ignore", invalid="ignore"):
        post_plus = np.clip(np.where(m_plus > 0.0, p * a / m_plus, 0.0), 0.0, 1.0)
        post_minus = np.clip(np.where(m_minus > 0.0, p * (1.0 - a) / m_minus, 0.0), 0.0, 1.0)
    return (np.where(m_plus > 0.0, m_plus * interp_uniform(costs, post_plus), 0.0)
            + np.where(m_minus > 0.0, m_minus * interp_uniform(costs, post_minus), 0.0))


@njit
def _residual_nb(p, a, b, costs):
    m_plus = p * a + (1.0 - p) * b
    m_minus = p * (1.0 - a) + (1.0 - p) * (1.0 - b)
    r = 0.0
    if m_plus > 0.0:
        q = min(max(p * a / m_plus, 0.0), 1.0)
        r += m_plus * _interp_nb(costs, q)
    if m_minus > 0.0:
        q = min(max(p * (1.0 - a) / m_minus, 0.0), 1.0)
        r += m_minus * _interp_nb(costs, q)
    return r


def expected_residual(prob, next_values, p, phi):
    """Outcome-averaged next-row value after measuring at ``phi`` from belief ``p``."""
    a, b = _plus_likelihoods(prob.theta, prob.contrast, np.asarray(phi, dtype=float))
    out = _residual_np(np.asarray(p, dtype=float), a, b, next_values.costs)
    return out if np.ndim(out) else float(out)


# -- numba row kernel ------------------------------------------------------

@njit
def _angle_objective_nb(p, phi, theta, contrast, costs):
    a = 0.5 * (1.0 + contrast * math.cos(2.0 * (phi - theta)))
    b = 0.5 * (1.0 + contrast * math.cos(2.0 * (phi + theta)))
    return _residual_nb(p, a, b, costs)


@njit
def _canon_nb(phi):
    half_pi = 0.5 * math.pi
    r = phi - half_pi * math.floor(phi / half_pi)
    if r >= half_pi or r < 0.0:
        r = 0.0
    return r


@njit
def _golden_nb(p, lo, hi, theta, contrast, costs, tol):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    fc = _angle_objective_nb(p, c, theta, contrast, costs)
    fd = _angle_objective_nb(p, d, theta, contrast, costs)
    while hi - lo > tol:
        if fc <= fd:
            hi = d
            d = c
            fd = fc
            c = hi - inv_phi * (hi - lo)
            fc = _angle_objective_nb(p, c, theta, contrast, costs)
        else:
            lo = c
            c = d
            fc = fd
            d = lo + inv_phi * (hi - lo)
            fd = _angle_objective_nb(p, d, theta, contrast, costs)
    if fc <= fd:
        return c, fc
    return d, fd


@njit
def _cell_nb(q, g):
    i = int(math.floor(q * (g - 1)))
    if i < 0:
        i = 0
    elif i > g - 2:
        i = g - 2
    return i


@njit
def _polish_nb(p, phi0, f0, theta, contrast, costs):
    # Inside one pair of interpolation cells the objective is exactly
    # A + B cos 2phi + C sin 2phi, so its minimizer is closed-form.
    g = costs.shape[0]
    a = 0.5 * (1.0 + contrast * math.cos(2.0 * (phi0 - theta)))
    b = 0.5 * (1.0 + contrast * math.cos(2.0 * (phi0 + theta)))
    m_plus = p * a + (1.0 - p) * b
    m_minus = p * (1.0 - a) + (1.0 - p) * (1.0 - b)
    if m_plus <= 0.0 or m_minus <= 0.0:
        return phi0, f0, False
    ip = _cell_nb(min(max(p * a / m_plus, 0.0), 1.0), g)
    im = _cell_nb(min(max(p * (1.0 - a) / m_minus, 0.0), 1.0), g)
    slope_p = costs[ip + 1] - costs[ip]
    slope_m = costs[im + 1] - costs[im]
    d_alpha = (costs[ip] - slope_p * ip) - (costs[im] - slope_m * im)
    d_beta = (slope_p - slope_m) * (g - 1)
    cb = 0.5 * contrast * math.cos(2.0 * theta) * (d_alpha + p * d_beta)
    sc = 0.5 * contrast * math.sin(2.0 * theta) * (d_alpha * (2.0 * p - 1.0) + p * d_beta)
    if cb == 0.0 and sc == 0.0:
        return phi0, f0, False
    phi = 0.5 * math.atan2(-sc, -cb)
    phi += math.pi * round((phi0 - phi) / math.pi)
    a = 0.5 * (1.0 + contrast * math.cos(2.0 * (phi - theta)))
    b = 0.5 * (1.0 + contrast * math.cos(2.0 * (phi + theta)))
    m_plus = p * a + (1.0 - p) * b
    m_minus = p * (1.0 - a) + (1.0 - p) * (1.0 - b)
    if m_plus <= 0.0 or m_minus <= 0.0:
        return phi0, f0, False
    if _cell_nb(min(max(p * a / m_plus, 0.0), 1.0), g) != ip:
        return phi0, f0, False
    if _cell_nb(min(max(p * (1.0 - a) / m_minus, 0.0), 1.0), g) != im:
        return phi0, f0, False
    return phi, _residual_nb(p, a, b, costs), True


@njit
def _optimize_row_nb(grid, costs, theta, contrast, n_scan, tol, window, tie_tol, flat_tol):
    g = grid.shape[0]
    h = 0.5 * math.pi / n_scan
    a_scan = np.empty(n_scan)
    b_scan = np.empty(n_scan)
    for j in range(n_scan):
        phi = j * h
        a_scan[j] = 0.5 * (1.0 + contrast * math.cos(2.0 * (phi - theta)))
        b_scan[j] = 0.5 * (1.0 + contrast * math.cos(2.0 * (phi + theta)))
    out_phi = np.empty(g)
    out_val = np.empty(g)
    scan = np.empty(n_scan)
    for i in range(g):
        p = grid[i]
        for j in range(n_scan):
            scan[j] = _residual_nb(p, a_scan[j], b_scan[j], costs)
        if scan.max() - scan.min() <= flat_tol:
            out_phi[i] = 0.0
            out_val[i] = scan.min()
            continue
        best1 = -1
        best2 = -1
        for j in range(n_scan):
            left = scan[j - 1] if j > 0 else scan[n_scan - 1]
            right = scan[j + 1] if j < n_scan - 1 else scan[0]
            if scan[j] <= left and scan[j] <= right:
                if best1 < 0 or scan[j] < scan[best1]:
                    best2 = best1
                    best1 = j
                elif best2 < 0 or scan[j] < scan[best2]:
                    best2 = j
        sel_phi = 0.0
        sel_val = np.inf
        for c in range(2):
            j = best1 if c == 0 else best2
            if j < 0:
                continue
            if c == 1 and scan[j] > scan[best1] + window:
                continue
            phi_r, val_r = _golden_nb(p, (j - 1) * h, (j + 1) * h, theta, contrast, costs, tol)
            phi_r, val_r, exact = _polish_nb(p, phi_r, val_r, theta, contrast, costs)
            # an exact piece minimizer beats any scan point; fp noise in the
            # comparison would otherwise leak scan-grid angles into the table
            if exact or val_r < scan[j]:
                phi_c = _canon_nb(phi_r)
                val_c = val_r
            else:
                phi_c = j * h
                val_c = scan[j]
            if c == 0:
                sel_phi = phi_c
                sel_val = val_c
            elif val_c < sel_val - tie_tol:
                sel_phi = phi_c
                sel_val = val_c
            elif val_c <= sel_val + tie_tol and phi_c < sel_phi:
                sel_phi = phi_c
                sel_val = min(val_c, sel_val)
        out_phi[i] = sel_phi
        out_val[i] = sel_val
    return out_phi, out_val


# -- numpy row kernel ------------------------------------------------------

def _golden_np(p, lo, hi, theta, contrast, costs, tol):
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc = _residual_np(p, *_plus_likelihoods(theta, contrast, c), costs)
    fd = _residual_np(p, *_plus_likelihoods(theta, contrast, d), costs)
    # every bracket starts at the same width, so a fixed step count works
    steps = max(0, int(math.ceil(math.log(tol / float(np.max(hi - lo))) / math.log(_INV_PHI))))
    for _ in range(steps):
        left = fc <= fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        new_c = hi - _INV_PHI * (hi - lo)
        new_d = lo + _INV_PHI * (hi - lo)
        probe = np.where(left, new_c, new_d)
        fp = _residual_np(p, *_plus_likelihoods(theta, contrast, probe), costs)
        c, d, fc, fd = (
            np.where(left, new_c, d),
            np.where(left, c, new_d),
            np.where(left, fp, fd),
            np.where(left, fc, fp),
        )
    left = fc <= fd
    return np.where(left, c, d), np.where(left, fc, fd)


def _cell_np(q, g):
    return np.clip(np.floor(q * (g - 1)).astype(np.int64), 0, g - 2)


def _posterior_cells(p, phi, theta, contrast, g):
    a, b = _plus_likelihoods(theta, contrast, phi)
    m_plus = p * a + (1.0 - p) * b
    m_minus = p * (1.0 - a) + (1.0 - p) * (1.0 - b)
    ok = (m_plus > 0.0) & (m_minus > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ip = _cell_np(np.clip(np.where(ok, p * a / m_plus, 0.0), 0.0, 1.0), g)
        im = _cell_np(np.clip(np.where(ok, p * (1.0 - a) / m_minus, 0.0), 0.0, 1.0), g)
    return ok, ip, im


def _polish_np(p, phi0, f0, theta, contrast, costs):
    g = costs.shape[0]
    ok, ip, im = _posterior_cells(p, phi0, theta, contrast, g)
    slope_p = costs[ip + 1] - costs[ip]
    slope_m = costs[im + 1] - costs[im]
    d_alpha = (costs[ip] - slope_p * ip) - (costs[im] - slope_m * im)
    d_beta = (slope_p - slope_m) * (g - 1)
    cb = 0.5 * contrast * math.cos(2.0 * theta) * (d_alpha + p * d_beta)
    sc = 0.5 * contrast * math.sin(2.0 * theta) * (d_alpha * (2.0 * p - 1.0) + p * d_beta)
    ok &= (cb != 0.0) | (sc != 0.0)
    phi = 0.5 * np.arctan2(-sc, -cb)
    phi = phi + math.pi * np.round((phi0 - phi) / math.pi)
    ok2, ip2, im2 = _posterior_cells(p, phi, theta, contrast, g)
    ok &= ok2 & (ip2 == ip) & (im2 == im)
    f = _residual_np(p, *_plus_likelihoods(theta, contrast, phi), costs)
    return np.where(ok, phi, phi0), np.where(ok, f, f0), ok


def _optimize_row_np(grid, costs, theta, contrast, n_scan, tol, window, tie_tol, flat_tol,
                     chunk=128):
    h = HALF_PI / n_scan
    phis = np.arange(n_scan) * h
    a_scan, b_scan = _plus_likelihoods(theta, contrast, phis)
    out_phi = np.empty(grid.size)
    out_val = np.empty(grid.size)
    for start in range(0, grid.size, chunk):
        p = grid[start:start + chunk, None]
        scan = _residual_np(p, a_scan[None, :], b_scan[None, :], costs)
        is_min = (scan <= np.roll(scan, 1, axis=1)) & (scan <= np.roll(scan, -1, axis=1))
        masked = np.where(is_min, scan, np.inf)
        order = np.argsort(masked, axis=1, kind="stable")[:, :2]
        rows = np.arange(scan.shape[0])
        j1, j2 = order[:, 0], order[:, 1]
        s1, s2 = masked[rows, j1], masked[rows, j2]
        pc = p[:, 0]

        def refine(j, s):
            phi_r, val_r = _golden_np(pc, (j - 1) * h, (j + 1) * h, theta, contrast, costs, tol)
            phi_r, val_r, exact = _polish_np(pc, phi_r, val_r, theta, contrast, costs)
            better = exact | (val_r < s)
            canon = np.mod(phi_r, HALF_PI)
            canon = np.where((canon >= HALF_PI) | (canon < 0.0), 0.0, canon)
            return np.where(better, canon, j * h), np.where(better, val_r, s)

        phi1, val1 = refine(j1, s1)
        phi2, val2 = refine(j2, s2)
        use2 = np.isfinite(s2) & (s2 <= s1 + window)
        strictly = val2 < val1 - tie_tol
        tied = (val2 <= val1 + tie_tol) & (phi2 < phi1)
        take2 = use2 & (strictly | tied)
        flat = scan.max(axis=1) - scan.min(axis=1) <= flat_tol
        out_phi[start:start + chunk] = np.where(flat, 0.0, np.where(take2, phi2, phi1))
        out_val[start:start + chunk] = np.where(
            flat, scan.min(axis=1),
            np.where(take2, np.where(strictly, val2, np.minimum(val1, val2)), val1),
        )
    return out_phi, out_val


def _optimize_row(prob, grid, costs, n_scan=DEFAULT_SCAN, backend=None):
    args = (np.ascontiguousarray(grid, dtype=float), np.ascontiguousarray(costs, dtype=float),
            float(prob.theta), float(prob.contrast), int(n_scan), ANGLE_TOL,
            CANDIDATE_WINDOW, TIE_TOL, FLAT_TOL)
    if resolve_backend(backend) == "numba":
        return _optimize_row_nb(*args)
    return _optimize_row_np(*args)


def optimize_angle(prob, next_values, p, n_scan=DEFAULT_SCAN, backend=None):
    """Minimizing angle and minimum of ``expected_residual`` at belief ``p``."""
    phi, val = _optimize_row(prob, np.array([float(p)]), next_values.costs, n_scan, backend)
    return float(phi[0]), float(val[0])


def build_table(prob, horizon, grid_size=DEFAULT_GRID, n_scan=DEFAULT_SCAN, backend=None):
    """Globally-optimal policy table for ``horizon`` copies, value rows retained.

    The table depends on theta and nu only; the prior enters through
    ``table.cost(prob.q_plus)``.
    """
    if int(horizon) != horizon or horizon < 1:
        raise ValueError(f"horizon must be a positive integer, got {horizon!r}")
    grid = uniform_grid(grid_size)
    angles = np.empty((horizon, grid.size))
    values = np.empty((horizon + 1, grid.size))
    values[horizon] = terminal_values(grid).costs
    # the last copy always gets the single-copy Helstrom measurement
    angles[horizon - 1] = helstrom_angle(prob, grid)
    values[horizon - 1] = single_copy_error(prob, grid)
    for row in range(horizon - 2, -1, -1):
        angles[row], values[row] = _optimize_row(prob, grid, values[row + 1], n_scan, backend)
    # certainty is absorbing; keep the endpoints pinned exactly
    values[:, 0] = 0.0
    values[:, -1] = 0.0
    return PolicyTable(horizon, grid, angles, values)


# -- CSV -------------------------------------------------------------------

TABLE_HEADER = ("n", "p", "phi_rad", "residual_cost")


def _fmt(x):
    return format(float(x), ".17g")


def write_table_csv(table, dest):
    """Write ``n,p,phi_rad[,residual_cost]``; residual_cost for row n is R_{n-1}."""
    own = isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__")
    fh = open(dest, "w", newline="") if own else dest
    try:
        writer = csv.writer(fh, lineterminator="\n")
        with_values = table.values is not None
        writer.writerow(TABLE_HEADER if with_values else TABLE_HEADER[:3])
        for n in range(1, table.horizon + 1):
            for j, p in enumerate(table.grid):
                row = [str(n), _fmt(p), _fmt(table.angles[n - 1, j])]
                if with_values:
                    row.append(_fmt(table.values[n - 1, j]))
                writer.writerow(row)
    finally:
        if own:
            fh.close()


def table_to_csv(table):
    buf = io.StringIO()
    write_table_csv(table, buf)
    return buf.getvalue()


def read_table_csv(src):
    own = isinstance(src, (str, bytes)) or hasattr(src, "__fspath__")
    fh = open(src, newline="") if own else src
    try:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header not in (TABLE_HEADER, TABLE_HEADER[:3]):
            raise ValueError(f"unexpected policy table header {header!r}")
        with_values = len(header) == 4
        rows = {}
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ValueError(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                n = int(rec[0])
                nums = [float(x) for x in rec[1:]]
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
            rows.setdefault(n, []).append(nums)
    finally:
        if own:
            fh.close()
    if not rows or sorted(rows) != list(range(1, len(rows) + 1)):
        raise ValueError("policy table rows must cover n = 1..N")
    horizon = len(rows)
    data = [np.array(rows[n]) for n in range(1, horizon + 1)]
    grid = data[0][:, 0]
    for block in data[1:]:
        if block.shape != data[0].shape or not np.array_equal(block[:, 0], grid):
            raise ValueError("every table row must use the same belief grid")
    angles = np.stack([block[:, 1] for block in data])
    values = None
    if with_values:
        values = np.empty((horizon + 1, grid.size))
        for n in range(horizon):
            values[n] = data[n][:, 2]
        values[horizon] = np.minimum(grid, 1.0 - grid)
    return PolicyTable(horizon, grid, angles, values)
