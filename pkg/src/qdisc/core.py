"""Two-hypothesis qubit discrimination: states, outcome model, Bayes updates.

The hypotheses are the (possibly depolarized) states

    rho_pm = (1 + (1 - nu) (Z cos 2theta +/- X sin 2theta)) / 2

and every measurement is projective in the real basis {|phi>, |phi - pi/2>}
with |phi> = cos(phi)|x> + sin(phi)|y>. All algebra is done on Bloch vectors
in the X-Z plane; nothing here builds a density matrix.

Beliefs and angles are plain floats (or numpy arrays of them). Functions that
are cheap to vectorize accept arrays.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

HALF_PI = 0.5 * math.pi


class ImpossibleEvidenceError(ValueError):
    """Bayes update requested for an outcome of zero marginal probability."""


class Outcome(enum.IntEnum):
    """Click on |phi> (PLUS) or on |phi - pi/2> (MINUS)."""

    PLUS = 0
    MINUS = 1


@dataclass(frozen=True)
class DiscriminationProblem:
    """The triple (theta, q_plus, nu).

    theta is in radians with 0 < theta < pi/4; the pure states are
    cos(theta)|x> +/- sin(theta)|y>, so their overlap is cos(2 theta).
    """

    theta: float
    q_plus: float = 0.5
    nu: float = 0.0

    def __post_init__(self):
        for name in ("theta", "q_plus", "nu"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if not 0.0 < self.theta < 0.25 * math.pi:
            raise ValueError(f"theta must lie in (0, pi/4), got {self.theta!r}")
        if not 0.5 <= self.q_plus <= 1.0:
            raise ValueError(f"q_plus must lie in [0.5, 1], got {self.q_plus!r}")
        if not 0.0 <= self.nu <= 1.0:
            raise ValueError(f"nu must lie in [0, 1], got {self.nu!r}")

    @classmethod
    def from_degrees(cls, theta_deg, q_plus=0.5, nu=0.0):
        return cls(math.radians(theta_deg), q_plus, nu)

    @property
    def q_minus(self):
        return 1.0 - self.q_plus

    @property
    def overlap(self):
        return math.cos(2.0 * self.theta)

    @property
    def contrast(self):
        """Bloch-vector shrink factor 1 - nu."""
        return 1.0 - self.nu

    @property
    def theta_deg(self):
        # undo the degree -> radian round trip so CSVs show 15, not 14.999999999999998
        return round(math.degrees(self.theta), 12)

    def bloch(self, true_state):
        """(x, z) Bloch components of rho_+ (true_state=+1) or rho_- (-1)."""
        sign = _sign(true_state)
        k = self.contrast
        return (sign * k * math.sin(2.0 * self.theta), k * math.cos(2.0 * self.theta))

    def pure(self):
        return DiscriminationProblem(self.theta, self.q_plus, 0.0)


def _sign(true_state):
    if true_state in (1, "+"):
        return 1
    if true_state in (-1, "-"):
        return -1
    raise ValueError(f"true_state must be +1 or -1, got {true_state!r}")


def canonicalize_angle(raw):
    """Reduce a basis angle to [0, pi/2).

    Returns ``(phi, swap)``: the basis {raw, raw - pi/2} is the basis
    {phi, phi - pi/2} with its two outcome labels exchanged iff ``swap``.
    """
    raw = float(raw)
    if not math.isfinite(raw):
        raise ValueError(f"angle must be finite, got {raw!r}")
    # projectors are invariant under phi -> phi + pi
    r = math.fmod(raw, math.pi)
    if r < 0.0:
        r += math.pi
    if r >= math.pi:  # fmod rounding at the boundary
        r = 0.0
    if r >= HALF_PI:
        phi = r - HALF_PI
        if phi >= HALF_PI:
            phi = 0.0
        return phi, True
    return r, False


def plus_probability(prob, true_state, phi):
    """Pr(PLUS | true_state, phi) = (1 + (1 - nu) cos 2(phi -/+ theta)) / 2."""
    sign = _sign(true_state)
    return 0.5 * (1.0 + prob.contrast * np.cos(2.0 * (np.asarray(phi, dtype=float) - sign * prob.theta)))


def outcome_probability(prob, true_state, phi, d):
    p_plus = plus_probability(prob, true_state, phi)
    if Outcome(d) is Outcome.PLUS:
        out = p_plus
    else:
        out = 1.0 - p_plus
    return out if np.ndim(out) else float(out)


def marginal_probability(prob, p, phi, d):
    """Pr(d | belief p, phi) averaged over the two hypotheses."""
    return outcome_probability(prob, +1, phi, d) * p + outcome_probability(prob, -1, phi, d) * (1.0 - p)


def bayes_update(prob, p, phi, d):
    """Posterior belief in psi_+ after observing ``d`` at angle ``phi``."""
    like_plus = outcome_probability(prob, +1, phi, d)
    marginal = like_plus * p + outcome_probability(prob, -1, phi, d) * (1.0 - p)
    if np.any(np.asarray(marginal) <= 0.0):
        raise ImpossibleEvidenceError(
            f"outcome {Outcome(d).name} has zero probability at belief {p!r}, angle {phi!r}"
        )
    post = np.clip(like_plus * p / marginal, 0.0, 1.0)
    return post if np.ndim(post) else float(post)


def helstrom_angle(prob, p):
    """Single-copy Helstrom basis angle for prior ``p`` on psi_+.

    Uses arccot with range (0, pi), so the angle runs continuously from
    pi/2 - theta at p=0 through pi/4 at p=1/2 to theta at p=1. Depolarizing
    noise leaves it unchanged.
    """
    x = (2.0 * np.asarray(p, dtype=float) - 1.0) / math.tan(2.0 * prob.theta)
    out = 0.5 * (HALF_PI - np.arctan(x))
    return out if np.ndim(out) else float(out)


def single_copy_error(prob, p):
    """Helstrom bound for one copy at prior ``p``.

    Half of (1 - ||p rho_+ - (1-p) rho_-||_1), with the 2x2 trace norm taken
    from the Bloch form: the difference operator has eigenvalues
    a +/- b, a = (2p-1)/2, b = (1-nu)/2 |(sin 2theta, (2p-1) cos 2theta)|.
    """
    p = np.asarray(p, dtype=float)
    bias = 2.0 * p - 1.0
    s2 = math.sin(2.0 * prob.theta)
    c2 = math.cos(2.0 * prob.theta)
    b = prob.contrast * np.sqrt(s2 * s2 + (bias * c2) ** 2)
    out = 0.5 * (1.0 - np.maximum(np.abs(bias), b))
    return out if np.ndim(out) else float(out)


def one_copy_decision_error(prob, p, phi):
    """Bayes-decision error of one measurement at ``phi`` from prior ``p``.

    sum_d min(p Pr(d|+), (1-p) Pr(d|-)); the measurement-based definition that
    ``single_copy_error`` must agree with at the Helstrom angle.
    """
    total = 0.0
    for d in Outcome:
        total = total + np.minimum(
            p * outcome_probability(prob, +1, phi, d),
            (1.0 - p) * outcome_probability(prob, -1, phi, d),
        )
    return total
