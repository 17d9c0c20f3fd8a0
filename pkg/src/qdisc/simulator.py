"""Seeded Monte Carlo of the adaptive discrimination loop.

Each trial draws the prepared state, then for every copy: asks the scheme for
a nominal angle at the current belief, passes it through the depolarizing
flip subroutine, clicks according to the *pure* state at the flipped angle,
and hands the processor the click in the nominal labeling. The processor's
Bayes update only ever sees the nominal angle and the nu-aware model.

Randomness: trial ``i`` consumes a fixed block of uniforms from a Philox
counter stream keyed by the seed, starting at counter block ``i * K / 4``.
A batch is therefore the same whatever chunking or backend runs it.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit, resolve_backend
from .core import HALF_PI, Outcome, canonicalize_angle
from .schemes import Decision, SchemeKind

_SCHEME_CODES = {
    SchemeKind.UNBIASED: 0,
    SchemeKind.FULLY_BIASED: 1,
    SchemeKind.LOCALLY_OPTIMAL: 2,
    SchemeKind.GLOBALLY_OPTIMAL: 3,
}

IDENTITY, BIT_FLIP, PHASE_FLIP, BIT_PHASE_FLIP = range(4)


@dataclass(frozen=True)
class TrialRecord:
    true_state: int
    outcomes: tuple
    final_belief: float
    decision: Decision
    correct: bool


@dataclass(frozen=True)
class BatchStats:
    trials: int
    errors: int

    @property
    def error_rate(self):
        return self.errors / self.trials

    @property
    def std_err(self):
        r = self.error_rate
        return math.sqrt(r * (1.0 - r) / self.trials)


def flip_branch(nu, draw):
    """Which flip the draw selects; thresholds in order identity, bit, phase, bit-phase."""
    if draw < 1.0 - 0.75 * nu:
        return IDENTITY
    if draw < 1.0 - 0.5 * nu:
        return BIT_FLIP
    if draw < 1.0 - 0.25 * nu:
        return PHASE_FLIP
    return BIT_PHASE_FLIP


def apply_noise_flip(phi, nu, draw):
    """Flipped, canonicalized angle and its outcome-label swap flag."""
    branch = flip_branch(nu, draw)
    if branch == IDENTITY:
        raw = phi
    elif branch == BIT_FLIP:
        raw = HALF_PI - phi
    elif branch == PHASE_FLIP:
        raw = -phi
    else:
        raw = HALF_PI + phi
    return canonicalize_angle(raw)


def draws_per_trial(horizon):
    # state, (flip, click) per copy, tie coin; padded to whole Philox blocks
    k = 2 * horizon + 2
    return k + (-k) % 4


def trial_draws(seed, start, count, horizon):
    """Uniform draws for trials ``start .. start + count - 1``, one row per trial."""
    k = draws_per_trial(horizon)
    bitgen = np.random.Philox(key=int(seed) & ((1 << 128) - 1))
    bitgen.advance(start * (k // 4))
    return np.random.Generator(bitgen).random((count, k))


# -- kernels ---------------------------------------------------------------

@njit
def _interp_row(row, q):
    g = row.shape[0]
    x = q * (g - 1)
    i = int(math.floor(x))
    if i < 0:
        i = 0
    elif i > g - 2:
        i = g - 2
    t = x - i
    return (1.0 - t) * row[i] + t * row[i + 1]


@njit
def _trials_nb(draws, code, theta, q_plus, nu, fixed_phi, table, horizon):
    t_count = draws.shape[0]
    half_pi = 0.5 * math.pi
    k = 1.0 - nu
    cot2 = 1.0 / math.tan(2.0 * theta)
    true_state = np.empty(t_count, np.int8)
    outcomes = np.empty((t_count, horizon), np.int8)
    belief = np.empty(t_count)
    guess = np.empty(t_count, np.int8)
    tie = np.zeros(t_count, np.bool_)
    for t in range(t_count):
        sign = 1 if draws[t, 0] < q_plus else -1
        p = q_plus
        for n in range(horizon):
            if code == 0 or code == 1:
                phi = fixed_phi
            elif code == 2:
                phi = 0.5 * (half_pi - math.atan((2.0 * p - 1.0) * cot2))
            else:
                phi = _interp_row(table[n], p)
            u = draws[t, 1 + 2 * n]
            if u < 1.0 - 0.75 * nu:
                raw = phi
            elif u < 1.0 - 0.5 * nu:
                raw = half_pi - phi
            elif u < 1.0 - 0.25 * nu:
                raw = -phi
            else:
                raw = half_pi + phi
            r = raw - math.pi * math.floor(raw / math.pi)
            swap = False
            if r >= half_pi:
                r -= half_pi
                swap = True
            click_plus = draws[t, 2 + 2 * n] < 0.5 * (1.0 + math.cos(2.0 * (r - sign * theta)))
            plus = click_plus != swap
            outcomes[t, n] = 0 if plus else 1
            a = 0.5 * (1.0 + k * math.cos(2.0 * (phi - theta)))
            b = 0.5 * (1.0 + k * math.cos(2.0 * (phi + theta)))
            if not plus:
                a = 1.0 - a
                b = 1.0 - b
            m = a * p + b * (1.0 - p)
            if m > 0.0:
                p = min(max(a * p / m, 0.0), 1.0)
        true_state[t] = sign
        belief[t] = p
        if p > 0.5:
            guess[t] = 1
        elif p < 0.5:
            guess[t] = -1
        else:
            tie[t] = True
            guess[t] = 1 if draws[t, 2 * horizon + 1] < 0.5 else -1
    return true_state, outcomes, belief, guess, tie


def _trials_np(draws, code, theta, q_plus, nu, fixed_phi, table, horizon):
    t_count = draws.shape[0]
    k = 1.0 - nu
    sign = np.where(draws[:, 0] < q_plus, 1, -1).astype(np.int8)
    p = np.full(t_count, q_plus)
    outcomes = np.empty((t_count, horizon), np.int8)
    for n in range(horizon):
        if code in (0, 1):
            phi = np.full(t_count, fixed_phi)
        elif code == 2:
            phi = 0.5 * (HALF_PI - np.arctan((2.0 * p - 1.0) / math.tan(2.0 * theta)))
        else:
            g = table.shape[1]
            x = p * (g - 1)
            i = np.clip(np.floor(x).astype(np.int64), 0, g - 2)
            frac = x - i
            phi = (1.0 - frac) * table[n, i] + frac * table[n, i + 1]
        u = draws[:, 1 + 2 * n]
        raw = np.select(
            [u < 1.0 - 0.75 * nu, u < 1.0 - 0.5 * nu, u < 1.0 - 0.25 * nu],
            [phi, HALF_PI - phi, -phi],
            HALF_PI + phi,
        )
        r = raw - math.pi * np.floor(raw / math.pi)
        swap = r >= HALF_PI
        r = np.where(swap, r - HALF_PI, r)
        click_plus = draws[:, 2 + 2 * n] < 0.5 * (1.0 + np.cos(2.0 * (r - sign * theta)))
        plus = click_plus != swap
        outcomes[:, n] = np.where(plus, 0, 1)
        a = 0.5 * (1.0 + k * np.cos(2.0 * (phi - theta)))
        b = 0.5 * (1.0 + k * np.cos(2.0 * (phi + theta)))
        a = np.where(plus, a, 1.0 - a)
        b = np.where(plus, b, 1.0 - b)
        m = a * p + b * (1.0 - p)
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(m > 0.0, np.clip(a * p / np.where(m > 0.0, m, 1.0), 0.0, 1.0), p)
    tie = p == 0.5
    coin = np.where(draws[:, 2 * horizon + 1] < 0.5, 1, -1)
    guess = np.where(p > 0.5, 1, np.where(p < 0.5, -1, coin)).astype(np.int8)
    return sign, outcomes, p, guess, tie


def _kernel_args(prob, spec, horizon):
    if horizon != spec.horizon:
        raise ValueError(f"horizon {horizon} does not match the scheme's {spec.horizon}")
    code = _SCHEME_CODES[spec.kind]
    if spec.kind is SchemeKind.UNBIASED:
        from .core import helstrom_angle
        fixed = helstrom_angle(prob, prob.q_plus)
    else:
        fixed = prob.theta
    if spec.kind is SchemeKind.GLOBALLY_OPTIMAL:
        table = np.ascontiguousarray(spec.table.angles, dtype=float)
    else:
        table = np.zeros((1, 2))
    return code, float(prob.theta), float(prob.q_plus), float(prob.nu), float(fixed), table, int(horizon)


def simulate_trials(prob, spec, draws, backend=None):
    """Run one trial per row of ``draws``; returns per-trial arrays."""
    args = _kernel_args(prob, spec, spec.horizon)
    draws = np.ascontiguousarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[1] < 2 * spec.horizon + 2:
        raise ValueError(f"need {2 * spec.horizon + 2} draws per trial, got shape {draws.shape}")
    if resolve_backend(backend) == "numba":
        return _trials_nb(draws, *args)
    return _trials_np(draws, *args)


def run_trial(prob, spec, horizon, stream, backend=None):
    """One discrimination; ``stream`` is a ``numpy.random.Generator``."""
    draws = stream.random((1, draws_per_trial(horizon)))
    if horizon != spec.horizon:
        raise ValueError(f"horizon {horizon} does not match the scheme's {spec.horizon}")
    sign, outcomes, belief, guess, tie = simulate_trials(prob, spec, draws, backend)
    decision = Decision(int(guess[0]), bool(tie[0]))
    return TrialRecord(
        true_state=int(sign[0]),
        outcomes=tuple(Outcome(int(o)) for o in outcomes[0]),
        final_belief=float(belief[0]),
        decision=decision,
        correct=decision.guess == int(sign[0]),
    )


def run_batch(prob, spec, horizon, trials, seed, backend=None, chunk=50_000):
    if int(trials) != trials or trials < 1:
        raise ValueError(f"trials must be a positive integer, got {trials!r}")
    errors = 0
    for start in range(0, trials, chunk):
        count = min(chunk, trials - start)
        draws = trial_draws(seed, start, count, horizon)
        sign, _, _, guess, _ = simulate_trials(prob, spec, draws, backend)
        errors += int(np.count_nonzero(sign != guess))
    return BatchStats(int(trials), errors)


def flip_channel_frequency(prob, true_state, phi, copies, seed):
    """Empirical Pr(PLUS) at nominal ``phi`` after the flip subroutine.

    Used to check that flips plus pure-state clicks reproduce the depolarized
    outcome distribution.
    """
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    flip_u = rng.random(copies)
    click_u = rng.random(copies)
    sign = 1 if true_state in (1, "+") else -1
    nu = prob.nu
    raw = np.select(
        [flip_u < 1.0 - 0.75 * nu, flip_u < 1.0 - 0.5 * nu, flip_u < 1.0 - 0.25 * nu],
        [phi, HALF_PI - phi, -phi],
        HALF_PI + phi,
    )
    r = raw - math.pi * np.floor(raw / math.pi)
    swap = r >= HALF_PI
    r = np.where(swap, r - HALF_PI, r)
    click_plus = click_u < 0.5 * (1.0 + np.cos(2.0 * (r - sign * prob.theta)))
    return float(np.count_nonzero(click_plus != swap)) / copies


# -- CSV -------------------------------------------------------------------

BATCH_HEADER = ("scheme", "N", "theta_deg", "q_plus", "nu", "trials", "errors",
                "error_rate", "std_err", "seed")


def _fmt(x):
    return format(float(x), ".17g")


def batch_row(scheme, horizon, prob, stats, seed):
    return [scheme, str(horizon), _fmt(prob.theta_deg), _fmt(prob.q_plus), _fmt(prob.nu),
            str(stats.trials), str(stats.errors), _fmt(stats.error_rate), _fmt(stats.std_err),
            str(seed)]


def write_batch_csv(rows, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(BATCH_HEADER)
    writer.writerows(rows)
