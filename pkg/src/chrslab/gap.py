"""Result record shared by every inequality check."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

# Bounds larger than this are trivially true for trace distances and are
# reported as inapplicable rather than as passes.
TRACE_DISTANCE_MAX = 2.0


@dataclass(frozen=True)
class GapReport:
    """Two sides of a distance inequality.

    ``passed`` is the raw inequality ``lhs_distance <= bound_value + 3*mc_error``.
    ``applicable`` is False when the bound's preconditions fail or the bound is
    vacuous (above 2); such reports must not be counted as passes.
    """

    lhs_distance: float
    bound_value: float
    bound_id: str
    mode: str = "exact"
    mc_error: float | None = None
    applicable: bool = True
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        err = self.mc_error or 0.0
        return bool(self.lhs_distance <= self.bound_value + 3.0 * err)

    @property
    def counts_as_pass(self) -> bool:
        return self.applicable and self.passed

    @property
    def margin(self) -> float:
        return float(self.bound_value - self.lhs_distance)

    def to_dict(self) -> dict:
        return {
            "lhs_distance": self.lhs_distance,
            "bound_value": self.bound_value,
            "bound_id": self.bound_id,
            "pass": self.passed,
            "mode": self.mode,
            "mc_error": self.mc_error,
            "applicable": self.applicable,
            "details": dict(self.details),
        }


def make_report(lhs, bound, bound_id, *, mode="exact", mc_error=None,
                preconditions=True, details=None) -> GapReport:
    lhs = float(lhs)
    bound = float(bound)
    applicable = bool(preconditions) and bound <= TRACE_DISTANCE_MAX
    return GapReport(
        lhs_distance=lhs,
        bound_value=bound,
        bound_id=bound_id,
        mode=mode,
        mc_error=None if mc_error is None else float(mc_error),
        applicable=applicable,
        details=dict(details or {}),
    )
