"""Memory-efficiency metric: lambda-weighted relative accuracy/memory change."""

from __future__ import annotations

from dataclasses import dataclass

GOAL_CONSISTENT = "goal_consistent"
PAPER_LITERAL = "paper_literal"
SIGN_MODES = (GOAL_CONSISTENT, PAPER_LITERAL)


class DegenerateBase(Exception):
    """A base quantity is zero, so relative change is undefined."""


@dataclass(frozen=True)
class MetricInputs:
    accuracy: float
    peak_intermediate: float
    param_bytes: float
    base_accuracy: float
    base_peak: float
    base_params: float
    lam: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")


def efficiency(inputs: MetricInputs, sign_mode: str = GOAL_CONSISTENT) -> float:
    """Score a candidate against the previous round's base network.

    goal_consistent (default) rewards memory reductions:
        y = lam * da/a_base - (1 - lam) * (dr/r_base + dp/p_base)
    paper_literal keeps the literal plus sign on the memory term.
    """
    if sign_mode not in SIGN_MODES:
        raise ValueError(f"sign_mode must be one of {SIGN_MODES}, got {sign_mode!r}")
    if inputs.base_accuracy <= 0 or inputs.base_peak <= 0 or inputs.base_params <= 0:
        raise DegenerateBase(
            f"base quantities must be positive: a={inputs.base_accuracy}, "
            f"r={inputs.base_peak}, p={inputs.base_params}"
        )
    acc_term = (inputs.accuracy - inputs.base_accuracy) / inputs.base_accuracy
    mem_term = (inputs.peak_intermediate - inputs.base_peak) / inputs.base_peak + (
        inputs.param_bytes - inputs.base_params
    ) / inputs.base_params
    if sign_mode == GOAL_CONSISTENT:
        mem_term = -mem_term
    return inputs.lam * acc_term + (1.0 - inputs.lam) * mem_term
