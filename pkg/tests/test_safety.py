"""Risk scoring, action screening, concurrency reduction, adaptive discount."""

import math
from dataclasses import dataclass, replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tangleguard.safety import (
    RiskCoeffs,
    ScreeningOutcome,
    adaptive_discount,
    concurrency_budget,
    risk_score,
    screen_action,
    velocity_scale,
)


@dataclass(frozen=True)
class StubAction:
    velocity: float = 1.0

    def scaled(self, factor):
        return StubAction(self.velocity * factor)


CONSERVATIVE = StubAction(0.0)


def screen_with_risks(first, second=None, coeffs=None):
    """Screen a stub action whose lookahead risk is scripted per call."""
    risks = iter([first] + ([second] if second is not None else []))
    return screen_action(
        state=None,
        candidate_action=StubAction(),
        coeffs=coeffs or RiskCoeffs(),
        risk_fn=lambda s, a: next(risks),
        conservative_fn=lambda s: CONSERVATIVE,
    )


class TestRiskScore:
    def test_all_terms_at_their_table_weights(self):
        c = RiskCoeffs()
        assert risk_score(0.0, 0, False, c) == 0.0
        assert risk_score(1.0, 0, False, c) == pytest.approx(1.0)
        assert risk_score(0.0, 10, False, c) == pytest.approx(math.tanh(1.0))
        assert risk_score(0.0, 0, True, c) == pytest.approx(5.0)
        assert risk_score(0.5, 20, True, c) == pytest.approx(
            0.5 + math.tanh(2.0) + 5.0
        )

    def test_custom_weights_apply(self):
        c = RiskCoeffs(alpha1=2.0, alpha2=0.5, alpha3=1.0, c1=4.0)
        assert risk_score(1.0, 4, True, c) == pytest.approx(
            2.0 + 0.5 * math.tanh(1.0) + 1.0
        )

    def test_braid_term_saturates(self):
        c = RiskCoeffs()
        assert risk_score(0.0, 10_000, False, c) == pytest.approx(1.0, abs=1e-9)

    @given(
        lk=st.floats(0, 3, allow_nan=False),
        br=st.integers(0, 200),
        tangled=st.booleans(),
    )
    def test_monotone_in_every_argument(self, lk, br, tangled):
        c = RiskCoeffs()
        base = risk_score(lk, br, tangled, c)
        assert risk_score(lk + 0.5, br, tangled, c) > base
        # non-strict: the tanh term saturates in double precision
        assert risk_score(lk, br + 1, tangled, c) >= base
        assert risk_score(lk, br, True, c) >= base

    def test_coefficient_validation(self):
        with pytest.raises(ValueError):
            RiskCoeffs(alpha1=-0.1)
        with pytest.raises(ValueError):
            RiskCoeffs(c1=0.0)
        with pytest.raises(ValueError):
            RiskCoeffs(theta_safe=1.0, theta_high=1.0)
        with pytest.raises(ValueError):
            RiskCoeffs(tau_low=0.8, tau_high=0.2)


class TestVelocityScale:
    def test_full_speed_at_the_safe_threshold(self):
        assert velocity_scale(0.3, RiskCoeffs()) == pytest.approx(1.0)

    def test_floor_at_the_high_threshold(self):
        assert velocity_scale(1.0, RiskCoeffs()) == pytest.approx(0.1)

    def test_linear_in_between(self):
        assert velocity_scale(0.65, RiskCoeffs()) == pytest.approx(0.5)

    def test_clamped_outside_the_band(self):
        c = RiskCoeffs()
        assert velocity_scale(0.0, c) == 1.0
        assert velocity_scale(5.0, c) == pytest.approx(0.1)

    @given(r=st.floats(-1, 3, allow_nan=False))
    def test_always_within_the_clamp(self, r):
        assert 0.1 <= velocity_scale(r, RiskCoeffs()) <= 1.0


class TestScreenAction:
    def test_low_risk_passes_unchanged(self):
        out = screen_with_risks(0.1)
        assert out.decision == "pass"
        assert out.action == StubAction(1.0)
        assert not out.replan_requested
        assert out.risk == 0.1

    def test_mid_risk_scales_velocities(self):
        out = screen_with_risks(0.65, 0.4)
        assert out.decision == "scaled"
        assert out.action.velocity == pytest.approx(0.5)
        assert not out.replan_requested

    def test_safe_threshold_boundary_scales_at_full_factor(self):
        # r exactly at theta_safe enters the scaled stage with factor 1
        out = screen_with_risks(0.3, 0.2)
        assert out.decision == "scaled"
        assert out.action.velocity == pytest.approx(1.0)

    def test_high_risk_goes_conservative_and_requests_replanning(self):
        out = screen_with_risks(1.0)
        assert out.decision == "conservative"
        assert out.action is CONSERVATIVE
        assert out.replan_requested

    def test_scaled_action_still_hot_escalates(self):
        # slowing down does not help here, so the screen must not emit it
        out = screen_with_risks(0.65, 1.2)
        assert out.decision == "conservative"
        assert out.action is CONSERVATIVE
        assert out.replan_requested

    def test_non_finite_risk_is_worst_case_with_diagnostic(self):
        for bad in (math.nan, math.inf):
            out = screen_with_risks(bad)
            assert out.decision == "conservative"
            assert out.replan_requested
            assert out.diagnostic == "non-finite lookahead risk"

    def test_non_finite_rescreen_also_escalates(self):
        out = screen_with_risks(0.65, math.nan)
        assert out.decision == "conservative"
        assert out.replan_requested
        assert out.diagnostic == "non-finite lookahead risk"

    def test_scaling_preserves_direction(self):
        out = screen_with_risks(0.8, 0.3)
        assert out.decision == "scaled"
        assert 0 < out.action.velocity < 1.0

    @given(r=st.floats(0, 3, allow_nan=False), r2=st.floats(0, 3, allow_nan=False))
    def test_never_emits_hot_action_without_replan_request(self, r, r2):
        out = screen_with_risks(r, r2)
        if out.risk >= RiskCoeffs().theta_high:
            assert out.replan_requested
            assert out.decision == "conservative"


class TestConcurrencyBudget:
    def test_long_braid_drops_to_the_floor(self):
        assert concurrency_budget(4, n_min=2, n_max=10, alpha=1.0) == 2

    def test_moderate_braid_halves_the_pool(self):
        assert concurrency_budget(4, n_min=2, n_max=10, alpha=0.25) == 5

    def test_trivial_braid_keeps_everything_active(self):
        assert concurrency_budget(0, n_min=2, n_max=10, alpha=1.0) == 10

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            concurrency_budget(0, n_min=0, n_max=10, alpha=1.0)
        with pytest.raises(ValueError):
            concurrency_budget(0, n_min=5, n_max=4, alpha=1.0)
        with pytest.raises(ValueError):
            concurrency_budget(0, n_min=1, n_max=4, alpha=-0.5)

    @given(
        br=st.integers(0, 100),
        n_min=st.integers(1, 5),
        extra=st.integers(0, 10),
        alpha=st.floats(0, 2, allow_nan=False),
    )
    def test_bounded_and_antitone_in_braid_length(self, br, n_min, extra, alpha):
        n_max = n_min + extra
        n = concurrency_budget(br, n_min=n_min, n_max=n_max, alpha=alpha)
        assert n_min <= n <= n_max
        assert n >= concurrency_budget(br + 1, n_min=n_min, n_max=n_max, alpha=alpha)


class TestAdaptiveDiscount:
    def test_calm_state_uses_the_far_sighted_end(self):
        assert adaptive_discount(0.0) == pytest.approx(0.99)

    def test_midpoint_value(self):
        assert adaptive_discount(0.5) == pytest.approx(0.99 - 0.1 * math.tanh(1.0))

    def test_extreme_risk_approaches_the_floor(self):
        assert adaptive_discount(1e9) == pytest.approx(0.89, abs=1e-12)

    @given(r=st.floats(0, 100, allow_nan=False))
    def test_range(self, r):
        # the open lower end closes once tanh saturates in double precision
        assert 0.89 <= adaptive_discount(r) <= 0.99

    @given(r=st.floats(0, 5, allow_nan=False))
    def test_strictly_decreasing_before_saturation(self, r):
        assert adaptive_discount(r + 0.1) < adaptive_discount(r)

    @given(
        a=st.floats(0, 20, allow_nan=False),
        b=st.floats(0, 20, allow_nan=False),
    )
    def test_lipschitz_bound_on_risk_sensitivity(self, a, b):
        # documented sensitivity bound: |dgamma| <= 0.4 |dTR|
        assert abs(adaptive_discount(a) - adaptive_discount(b)) <= 0.4 * abs(a - b) + 1e-12
