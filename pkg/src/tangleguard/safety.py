"""Risk scoring, real-time action screening, concurrency control, discounting.

The scalar topological risk of a state is

    TR = alpha1 * max_jk |Lk_jk| + alpha2 * tanh(|Br| / c1) + alpha3 * 1_entangled

and every intervention in this module is a staged response to that number:
pass below theta_safe, scale velocities in the mid band, and replace the
action with a conservative retraction (plus a replanning request) at or above
theta_high.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "RiskCoeffs",
    "ScreeningOutcome",
    "risk_score",
    "screen_action",
    "velocity_scale",
    "concurrency_budget",
    "adaptive_discount",
]


@dataclass(frozen=True)
class RiskCoeffs:
    """Risk-score weights plus the screening and replay-classification thresholds."""

    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 5.00
    c1: float = 10.0
    theta_safe: float = 0.3
    theta_high: float = 1.0
    tau_low: float = 0.2
    tau_high: float = 0.8
    tau_safe: float = 0.5

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ValueError("risk weights must be non-negative")
        if not self.c1 > 0:
            raise ValueError("c1 must be positive")
        if not self.theta_safe < self.theta_high:
            raise ValueError("need theta_safe < theta_high")
        if not self.tau_low < self.tau_high:
            raise ValueError("need tau_low < tau_high")


def risk_score(max_abs_lk: float, braid_length: int, entangled: bool,
               coeffs: RiskCoeffs) -> float:
    """Topological risk of a state from its three entanglement scales."""
    return (
        coeffs.alpha1 * max_abs_lk
        + coeffs.alpha2 * math.tanh(braid_length / coeffs.c1)
        + coeffs.alpha3 * (1.0 if entangled else 0.0)
    )


@dataclass(frozen=True)
class ScreeningOutcome:
    """Result of screening one candidate action."""

    action: object
    decision: str  # "pass" | "scaled" | "conservative"
    risk: float
    replan_requested: bool
    diagnostic: str | None = None


def velocity_scale(risk: float, coeffs: RiskCoeffs) -> float:
    """Linear slow-down ramp over the mid-risk band, clamped to [0.1, 1]."""
    f = (coeffs.theta_high - risk) / (coeffs.theta_high - coeffs.theta_safe)
    return min(1.0, max(0.1, f))


def screen_action(state, candidate_action, coeffs: RiskCoeffs, *,
                  risk_fn, conservative_fn) -> ScreeningOutcome:
    """Screen a candidate action by its one-step-lookahead risk.

    risk_fn(state, action) must return the risk of the kinematically previewed
    next state; conservative_fn(state) must build the retraction action (zero
    target velocity, curvature-relaxing pull toward the rest pose). Actions
    must expose .scaled(factor) returning a velocity-scaled copy.

    Staging: r < theta_safe passes unchanged; theta_safe <= r < theta_high
    scales velocities by velocity_scale(r); r >= theta_high emits the
    conservative action with replan_requested. A scaled action whose own
    lookahead risk still reaches theta_high is escalated to conservative, so
    no emitted action ever carries lookahead risk >= theta_high without a
    replanning request. Non-finite risk is treated as the worst case.
    """
    r = float(risk_fn(state, candidate_action))
    if not math.isfinite(r):
        return ScreeningOutcome(conservative_fn(state), "conservative", r, True,
                                diagnostic="non-finite lookahead risk")
    if r < coeffs.theta_safe:
        return ScreeningOutcome(candidate_action, "pass", r, False)
    if r < coeffs.theta_high:
        scaled = candidate_action.scaled(velocity_scale(r, coeffs))
        r2 = float(risk_fn(state, scaled))
        if math.isfinite(r2) and r2 < coeffs.theta_high:
            return ScreeningOutcome(scaled, "scaled", r2, False)
        return ScreeningOutcome(conservative_fn(state), "conservative", r2, True,
                                diagnostic=None if math.isfinite(r2) else "non-finite lookahead risk")
    return ScreeningOutcome(conservative_fn(state), "conservative", r, True)


def concurrency_budget(braid_length: int, n_min: int, n_max: int, alpha: float) -> int:
    """Number of simultaneously active arms: max(N_min, floor(N_max / (1 + alpha |Br|)))."""
    if not 1 <= n_min <= n_max:
        raise ValueError("need 1 <= n_min <= n_max")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    return max(n_min, int(n_max / (1.0 + alpha * braid_length)))


def adaptive_discount(risk: float) -> float:
    """Risk-sensitive discount gamma = 0.99 - 0.1 * tanh(TR / 0.5), in (0.89, 0.99]."""
    return 0.99 - 0.1 * math.tanh(risk / 0.5)
