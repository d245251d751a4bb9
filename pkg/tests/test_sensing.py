import logging

import numpy as np
import pytest

from src.errors import DegeneratePermittivityError, InputValidationError, OutOfCalibrationError
from src.sensing import (BareReference, DriftScenario, NotchPairObservation, branch_fdrs, differential_fdr,
                         differential_value, drift_cancellation_report, fdr_closed_form, fdr_point, fit_power_law,
                         forward_spacing, frequency_slope, invert_permittivity, normalized_sensitivity,
                         permittivity_frequency, proposed_sensitivity, sensitivity_table)
from tests.conftest import MUT_EPS

THETA = 1.813031e-22
WATER = NotchPairObservation(1.688e9, 3.445e9, label="water_25c", eps_ref=78.3)


class TestSingleBranch:

    def test_fdr_point(self):
        assert fdr_point(12.09e9, 8.65e9, 1.0, 5.0) == pytest.approx(860e6, rel=1e-12)

    def test_fdr_point_is_symmetric(self):
        assert fdr_point(8.65e9, 12.09e9, 5.0, 1.0) == pytest.approx(fdr_point(12.09e9, 8.65e9, 1.0, 5.0))

    def test_no_shift_no_fdr(self):
        assert fdr_point(12.09e9, 12.09e9, 1.0, 5.0) == 0.0

    def test_equal_permittivities(self):
        with pytest.raises(DegeneratePermittivityError):
            fdr_point(12.09e9, 8.65e9, 5.0, 5.0)

    def test_normalized_sensitivity(self):
        assert normalized_sensitivity(0.0, 12.09e9) == 0.0
        assert normalized_sensitivity(12.09e9 / 100, 12.09e9) == pytest.approx(1.0)
        assert normalized_sensitivity(860e6, 12.09e9) == pytest.approx(7.113, abs=5e-3)
        with pytest.raises(InputValidationError):
            normalized_sensitivity(1.0, 0.0)


class TestClosedForm:

    def test_slope_matches_finite_difference(self):
        eps = np.geomspace(2, 80, 50)
        h = 1e-4 * eps
        numeric = (permittivity_frequency(THETA, eps + h) - permittivity_frequency(THETA, eps - h)) / (2 * h)
        np.testing.assert_allclose(frequency_slope(THETA, eps), numeric, rtol=1e-6)

    def test_closed_form_is_twice_the_slope(self):
        eps = np.geomspace(2, 80, 50)
        np.testing.assert_allclose(fdr_closed_form(THETA, eps), 2 * np.abs(frequency_slope(THETA, eps)), rtol=1e-12)

    def test_fdr_falls_with_permittivity(self):
        fdr = fdr_closed_form(THETA, np.geomspace(2, 80, 50))
        assert np.all(np.diff(fdr) < 0)
        assert fdr_closed_form(THETA, 20.0) / fdr_closed_form(THETA, 10.0) == pytest.approx(2 ** -1.5)

    def test_bare_frequency_from_theta(self):
        assert permittivity_frequency(THETA, 1.0) == pytest.approx(11.82e9, rel=1e-6)


class TestDifferential:

    def test_water_example(self, published_bare):
        d_p, fdr_p = differential_fdr(WATER, published_bare, 78.3)
        assert d_p == pytest.approx(3.373e9, abs=1e3)
        assert fdr_p == pytest.approx(43.636e6, abs=0.1e6)
        assert proposed_sensitivity(fdr_p, published_bare.delta_f_b) == pytest.approx(0.8506, abs=5e-3)

    def test_soil_example(self, published_bare):
        soil = NotchPairObservation(8.65e9, 11.25e9)
        d_p, fdr_p = differential_fdr(soil, published_bare, 5.0)
        assert d_p == pytest.approx(2.53e9, rel=1e-9)
        assert fdr_p == pytest.approx(632.5e6, rel=1e-9)
        assert proposed_sensitivity(fdr_p, published_bare.delta_f_b) == pytest.approx(12.33, abs=5e-3)

    def test_bare_observation_has_no_spacing_change(self, published_bare):
        d_p, fdr_p = differential_fdr(NotchPairObservation(12.09e9, 17.22e9), published_bare, 5.0)
        assert d_p == 0.0 and fdr_p == 0.0

    def test_mut_must_differ_from_bare(self, published_bare):
        with pytest.raises(DegeneratePermittivityError):
            differential_fdr(WATER, published_bare, 1.0)

    def test_branches_add_up_to_differential(self, published_bare):
        branch = branch_fdrs(WATER, published_bare, 78.3)
        _, fdr_p = differential_fdr(WATER, published_bare, 78.3)
        assert branch.fdr_u == pytest.approx(134.57e6, abs=0.1e6)
        assert branch.fdr_d == pytest.approx(178.20e6, abs=0.1e6)
        assert branch.fdr_d - branch.fdr_u == pytest.approx(fdr_p, rel=1e-9)
        assert branch.s_u == pytest.approx(100 * branch.fdr_u / 12.09e9)

    def test_common_shift_keeps_the_difference(self):
        shifted = DriftScenario(8e6).apply(WATER)
        assert differential_value(shifted) == differential_value(WATER)
        assert differential_value(NotchPairObservation(2e9, 2e9)) == 0.0

    def test_proposed_sensitivity_scales_inversely(self):
        assert proposed_sensitivity(1e6, 2e9) == pytest.approx(proposed_sensitivity(1e6, 1e9) / 2)
        assert proposed_sensitivity(0.0, 1e9) == 0.0
        with pytest.raises(InputValidationError):
            proposed_sensitivity(1e6, 0.0)


class TestObservations:

    def test_order_is_enforced(self):
        with pytest.raises(InputValidationError):
            NotchPairObservation(3e9, 2e9)

    def test_bare_reference_needs_ordered_notches(self):
        with pytest.raises(InputValidationError):
            BareReference(17.22e9, 12.09e9)
        assert BareReference(12.09e9, 17.22e9).delta_f_b == pytest.approx(5.13e9)

    def test_sensitivity_table(self, published_bare):
        soil = NotchPairObservation(8.65e9, 11.25e9, label="soil", eps_ref=5.0)
        bare = NotchPairObservation(12.09e9, 17.22e9, label="bare", eps_ref=1.0)
        table = sensitivity_table([WATER, bare, soil], published_bare)
        assert list(table["label"]) == ["soil", "water_25c"]
        np.testing.assert_allclose(table["fdr_p_hz"], [632.5e6, 43.636e6], rtol=1e-4)
        np.testing.assert_allclose(table["fdr_d_hz"] - table["fdr_u_hz"], table["fdr_p_hz"], rtol=1e-9)


class TestDriftCancellation:

    def test_common_mode_drift_cancels(self):
        report = drift_cancellation_report([WATER, DriftScenario(8e6).apply(WATER)])
        assert report.spread == 0.0
        assert report.passed
        assert report.common_mode == pytest.approx(8e6)

    def test_differential_drift_is_reported(self):
        skewed = NotchPairObservation(WATER.f_u + 2e6, WATER.f_d)
        report = drift_cancellation_report([WATER, skewed])
        assert report.spread == pytest.approx(2e6, abs=1e-3)
        assert not report.passed

    def test_random_common_mode_drift(self):
        rng = np.random.default_rng(11)
        series = [DriftScenario(k).apply(WATER) for k in rng.uniform(-50e6, 50e6, 1000)]
        report = drift_cancellation_report(series)
        assert report.spread <= 1e-9 * differential_value(WATER)
        assert report.passed
        assert list(report.table.columns) == ["label", "timestamp", "f_u_hz", "f_d_hz", "diff_hz", "common_mode_hz"]

    def test_needs_two_observations(self):
        with pytest.raises(InputValidationError):
            drift_cancellation_report([WATER])


class TestPowerLawFit:

    def test_exact_fdr_samples(self):
        points = [(e, 3.09 * e ** -0.9926) for e in MUT_EPS]
        curve = fit_power_law(points)
        assert curve.a == pytest.approx(3.09, rel=1e-6)
        assert curve.b == pytest.approx(-0.9926, rel=1e-6)
        assert curve.r2 >= 1 - 1e-12
        assert curve.domain == (5.0, 78.3)

    def test_exact_sensitivity_samples(self):
        points = [(e, 46.62 * e ** -0.92) for e in MUT_EPS]
        curve = fit_power_law(points, quantity="s_p", units="%")
        assert curve.a == pytest.approx(46.62, rel=1e-6)
        assert curve.b == pytest.approx(-0.92, rel=1e-6)

    def test_constant_data(self):
        curve = fit_power_law([(e, 7.0) for e in MUT_EPS])
        assert curve.a == pytest.approx(7.0, rel=1e-9)
        assert curve.b == pytest.approx(0.0, abs=1e-9)

    def test_noisy_samples_still_fit(self):
        rng = np.random.default_rng(2024)
        eps = np.array(MUT_EPS, dtype=float)
        y = 3.09 * eps ** -0.9926 * (1 + rng.uniform(-0.01, 0.01, eps.size))
        assert fit_power_law(np.column_stack([eps, y])).r2 >= 0.999

    def test_rising_fdr_is_flagged(self, caplog):
        with caplog.at_level(logging.WARNING, logger="src.sensing"):
            fit_power_law([(e, 2.0 * e ** 0.5) for e in MUT_EPS])
        assert "not negative" in caplog.text

    def test_needs_pairs(self):
        with pytest.raises(InputValidationError):
            fit_power_law([1.0, 2.0, 3.0])


class TestInversion:

    def test_forward_spacing(self, fdr_curve):
        assert forward_spacing(fdr_curve, 16.0) == pytest.approx(2.956e9, rel=1e-3)

    def test_inverts_forward_model(self, fdr_curve):
        assert invert_permittivity(forward_spacing(fdr_curve, 16.0), fdr_curve) == pytest.approx(16.0, abs=0.01)
        for eps in np.linspace(5, 80, 20):
            assert invert_permittivity(forward_spacing(fdr_curve, eps), fdr_curve) == pytest.approx(eps, rel=1e-6)

    def test_zero_spacing_change_is_bare(self, fdr_curve):
        assert invert_permittivity(0.0, fdr_curve) == 1.0

    def test_above_range(self, fdr_curve):
        with pytest.raises(OutOfCalibrationError) as err:
            invert_permittivity(3.3e9, fdr_curve)
        assert err.value.nearest_bound == 80.0

    def test_below_range(self, fdr_curve):
        with pytest.raises(OutOfCalibrationError) as err:
            invert_permittivity(1e9, fdr_curve)
        assert err.value.nearest_bound == 5.0

    def test_negative_spacing(self, fdr_curve):
        with pytest.raises(InputValidationError):
            invert_permittivity(-1.0, fdr_curve)
