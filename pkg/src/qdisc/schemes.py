"""The four local measurement policies and their noiseless closed-form costs."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from .core import helstrom_angle, single_copy_error


class SchemeKind(str, enum.Enum):
    UNBIASED = "unbiased"
    FULLY_BIASED = "fully-biased"
    LOCALLY_OPTIMAL = "locally-optimal"
    GLOBALLY_OPTIMAL = "globally-optimal"

    @property
    def fixed_angle(self):
        return self in (SchemeKind.UNBIASED, SchemeKind.FULLY_BIASED)


LOCAL_SCHEMES = tuple(k.value for k in SchemeKind)
COLLECTIVE = "collective"
ALL_SCHEMES = LOCAL_SCHEMES + (COLLECTIVE,)


@dataclass(frozen=True)
class SchemeSpec:
    """A local policy for ``horizon`` copies.

    Only GLOBALLY_OPTIMAL carries a table, and its row count must equal the
    horizon.
    """

    kind: SchemeKind
    horizon: int
    table: Optional[object] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon!r}")
        if self.kind is SchemeKind.GLOBALLY_OPTIMAL:
            if self.table is None:
                raise ValueError("globally-optimal scheme requires a policy table")
            if self.table.horizon != self.horizon:
                raise ValueError(
                    f"table has {self.table.horizon} rows but the horizon is {self.horizon}"
                )
        elif self.table is not None:
            raise ValueError(f"{self.kind.value} scheme takes no table")

    @classmethod
    def globally_optimal(cls, table):
        return cls(SchemeKind.GLOBALLY_OPTIMAL, table.horizon, table)


@dataclass(frozen=True)
class Decision:
    guess: int
    was_tie: bool


def angle_for(spec, prob, n, p):
    """Canonical measurement angle the scheme prescribes for copy ``n`` at belief ``p``."""
    if not 1 <= n <= spec.horizon:
        raise ValueError(f"copy index {n} outside 1..{spec.horizon}")
    kind = spec.kind
    if kind is SchemeKind.UNBIASED:
        return helstrom_angle(prob, prob.q_plus)
    if kind is SchemeKind.FULLY_BIASED:
        return prob.theta
    if kind is SchemeKind.LOCALLY_OPTIMAL:
        return helstrom_angle(prob, p)
    if spec.table is None:
        raise ValueError("globally-optimal scheme requires a policy table")
    return spec.table.angle(n, p)


def decide(p_final):
    """Guess the likelier hypothesis; an exact 1/2 is flagged as a tie (guess +)."""
    if p_final > 0.5:
        return Decision(+1, False)
    if p_final < 0.5:
        return Decision(-1, False)
    return Decision(+1, True)


def _require_pure(prob, what):
    if prob.nu != 0.0:
        raise ValueError(f"{what} closed form holds only for nu = 0 (got nu={prob.nu})")


def cost_unbiased_closed(prob, n):
    """Majority-vote binomial tail over the single-copy Helstrom error.

    Even ``n`` returns the value for ``n - 1``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n % 2 == 0:
        n -= 1
    e = single_copy_error(prob, prob.q_plus)
    return math.fsum(
        math.comb(n, m) * e**m * (1.0 - e) ** (n - m) for m in range(n // 2 + 1, n + 1)
    )


def cost_fully_biased_pure(prob, n):
    """q_+ c^(2n), unanimity vote on pure states."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _require_pure(prob, "fully-biased")
    return prob.q_plus * prob.overlap ** (2 * n)


def cost_local_pure(prob, n):
    """(1 - sqrt(1 - 4 q_+ q_- c^(2n))) / 2.

    Also the collective n-copy Helstrom cost for pure states.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    _require_pure(prob, "locally-optimal")
    return 0.5 * (1.0 - math.sqrt(1.0 - 4.0 * prob.q_plus * prob.q_minus * prob.overlap ** (2 * n)))


cost_collective_pure = cost_local_pure
