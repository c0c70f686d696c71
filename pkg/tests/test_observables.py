import math
from dataclasses import replace

import numpy as np
import pytest

from oclaser.model.params import derive_coeffs, with_pump_ratio, threshold_pump_rate
from oclaser.model.fock import FockGrid, PhotonDistribution
from oclaser.model.steady import SteadyControls, SteadyResult, solve_steady
from oclaser.model.observables import (
    mandel_q, g2_zero, thermal_distribution, poisson_distribution, analytic_weak_pump,
    effective_temperature, analytic_strong_pump, analytic_nbar, analytic_mandel_q,
    decay_constant, linewidth, linewidth_reduced, freq_shift, petermann, threshold_curve, make_report
)
from oclaser.utils.errors import NotApplicableError
from oclaser.utils.helpers import LaserPipeline
from oclaser.utils.validate import FREQUENCY_PARAMS, PETERMANN_PARAMS, GAMMA12_GRID


def test_poisson_statistics():
    dist = poisson_distribution(10.0, 120)
    assert mandel_q(dist) == pytest.approx(0.0, abs=1e-9)
    assert g2_zero(dist) == pytest.approx(1.0, abs=1e-9)


def test_thermal_statistics():
    dist = thermal_distribution(3.0, 400)
    assert dist.mean == pytest.approx(3.0, rel=1e-9)
    assert mandel_q(dist) == pytest.approx(3.0, rel=1e-6)
    assert g2_zero(dist) == pytest.approx(2.0, rel=1e-6)


def test_fock_state_is_sub_poissonian():
    dist = PhotonDistribution(np.eye(6)[4])
    assert mandel_q(dist) == pytest.approx(-1.0)
    assert g2_zero(dist) == pytest.approx(0.75)


def test_vacuum_has_no_mandel_q():
    with pytest.raises(NotApplicableError):
        mandel_q(PhotonDistribution(np.eye(4)[0]))


def test_weak_pump_law(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 0.5))
    dist = analytic_weak_pump(coeffs, 200)
    assert dist.probabilities[1] / dist.probabilities[0] == pytest.approx(0.5)
    assert dist.mean == pytest.approx(1.0, rel=1e-9)
    x, ratio = effective_temperature(coeffs)
    assert x == pytest.approx(0.5)
    assert ratio == pytest.approx(math.log(2.0))
    assert analytic_mandel_q(coeffs) == pytest.approx(1.0)


def test_weak_pump_law_refused_above_threshold(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    with pytest.raises(NotApplicableError):
        analytic_weak_pump(coeffs, 10)
    with pytest.raises(NotApplicableError):
        effective_temperature(coeffs)


def test_strong_pump_law(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    assert analytic_nbar(coeffs) == pytest.approx(337.84, rel=1e-4)
    dist = analytic_strong_pump(coeffs, 1200)
    assert dist.mean == pytest.approx(analytic_nbar(coeffs), rel=0.01)
    assert analytic_mandel_q(coeffs) == pytest.approx(1.0)
    with pytest.raises(NotApplicableError):
        analytic_strong_pump(coeffs.without_saturation(), 100)
    with pytest.raises(NotApplicableError):
        analytic_nbar(coeffs.without_saturation())


def test_analytic_nbar_below_threshold(reference_params):
    with pytest.raises(NotApplicableError):
        analytic_nbar(derive_coeffs(with_pump_ratio(reference_params, 0.5)))
    with pytest.raises(NotApplicableError):
        analytic_mandel_q(derive_coeffs(with_pump_ratio(reference_params, 1.0)))


def test_decay_constant_of_populations_vanishes(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    assert decay_constant(coeffs, 338.0, 1.0, 0, 0) == 0


def test_decay_constant_beta_offset(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    mu = decay_constant(coeffs, 338.0, 2.0, 0, 1)
    assert mu.real == pytest.approx(coeffs.C2 / 16.0)
    assert mu.imag == 0.0


def test_decay_constant_grows_with_offset(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    mu1 = decay_constant(coeffs, 338.0, 0.0, 1, 0)
    mu2 = decay_constant(coeffs, 338.0, 0.0, 2, 0)
    assert mu2.real > 3.5 * mu1.real
    assert mu1.imag < 0


def test_decay_constant_needs_photons(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    with pytest.raises(NotApplicableError):
        decay_constant(coeffs, 0.0, 0.0, 1, 0)


def test_unsaturated_linewidth(linewidth_params):
    coeffs = derive_coeffs(with_pump_ratio(linewidth_params, 2.0)).without_saturation()
    nbar = 1000.0
    exact = (coeffs.A / (nbar + 1.0) + coeffs.C1 / nbar) / 4.0
    assert linewidth(coeffs, nbar) == pytest.approx(exact, rel=1e-12)
    assert linewidth_reduced(coeffs, nbar) == pytest.approx(exact, rel=1.0 / nbar)


def test_linewidth_narrows_with_pump(reference_params):
    widths = []
    for ratio in np.linspace(1.25, 5.0, 8):
        coeffs = derive_coeffs(with_pump_ratio(reference_params, ratio))
        nbar = solve_steady(coeffs, controls=SteadyControls(beta_mode="auto")).nbar_alpha
        widths.append(linewidth(coeffs, nbar))
    assert np.all(np.diff(widths) < 0), widths


def test_freq_shift_is_pulling(reference_params, linewidth_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    assert freq_shift(coeffs, 338.0) == pytest.approx(decay_constant(coeffs, 338.0, 0.0, 1, 0).imag)
    assert freq_shift(coeffs, 338.0) < 0
    assert freq_shift(derive_coeffs(with_pump_ratio(linewidth_params, 2.0)), 1000.0) == 0.0


def test_frequency_scenario_shift():
    coeffs = derive_coeffs(with_pump_ratio(FREQUENCY_PARAMS, 2.0))
    nbar = analytic_nbar(coeffs)
    assert freq_shift(coeffs, nbar) == pytest.approx(-17.5, rel=0.05)


def test_petermann_without_cross_damping(reference_params):
    params = replace(reference_params, gamma12=0.0)
    pump = 4.0 * threshold_pump_rate(params)
    assert petermann(params, pump) == 1.0
    assert petermann(params, pump, "asymptotic") == pytest.approx(1.0)


def test_petermann_grows_with_cross_damping(reference_params):
    pump = 4.0 * threshold_pump_rate(replace(reference_params, gamma12=max(GAMMA12_GRID)))
    controls = SteadyControls(beta_mode="auto")
    k = [petermann(replace(reference_params, gamma12=g), pump, controls=controls) for g in GAMMA12_GRID]
    assert k[0] == 1.0
    assert np.all(np.diff(k) > 0)


def test_petermann_analytic_mean_close_to_numeric(reference_params):
    params = replace(reference_params, gamma12=4.0)
    pump = 4.0 * threshold_pump_rate(params)
    controls = SteadyControls(beta_mode="auto")
    numeric = petermann(params, pump, controls=controls)
    analytic = petermann(params, pump, controls=controls, use_analytic_nbar=True)
    assert analytic == pytest.approx(numeric, rel=0.1)


def test_petermann_below_threshold(reference_params):
    with pytest.raises(NotApplicableError):
        petermann(reference_params, 0.5 * threshold_pump_rate(reference_params))


def test_petermann_unknown_mode(reference_params):
    with pytest.raises(ValueError):
        petermann(reference_params, 4.0 * threshold_pump_rate(reference_params), mode="exact")


@pytest.mark.slow
def test_petermann_asymptotic_limit():
    pump = 1056.0 / (2.0 * PETERMANN_PARAMS.g_squared)
    numeric = petermann(PETERMANN_PARAMS, pump, controls=SteadyControls(beta_mode="auto"))
    asymptotic = petermann(PETERMANN_PARAMS, pump, "asymptotic")
    assert asymptotic == pytest.approx(3.896, rel=1e-3)
    assert numeric == pytest.approx(asymptotic, rel=0.05)


def test_threshold_curve_is_affine(reference_params):
    curve = threshold_curve(reference_params, GAMMA12_GRID)
    assert list(curve.columns) == ["gamma12", "threshold_rate"]
    slopes = np.diff(curve["threshold_rate"]) / np.diff(curve["gamma12"])
    np.testing.assert_allclose(slopes, slopes[0], rtol=1e-9)
    assert slopes[0] > 0
    assert curve["threshold_rate"][3] == pytest.approx(threshold_pump_rate(replace(reference_params, gamma12=8.0)))


def _result(coeffs) -> SteadyResult:
    sol = solve_steady(coeffs, controls=SteadyControls(beta_mode="auto"))
    return SteadyResult(
        p_alpha=sol.p_alpha, p_beta=sol.p_beta, nbar_alpha=sol.nbar_alpha, nbar_beta=sol.nbar_beta,
        grid=sol.grid, solver="recurrence", iterations=sol.iterations
    )


def test_report_above_threshold(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    report = make_report(coeffs, _result(coeffs), petermann_K=1.5)
    assert report.pump_ratio == pytest.approx(2.0)
    assert report.threshold_rate == pytest.approx(14243.96, rel=5e-5)
    assert report.nbar_alpha == pytest.approx(report.analytic_nbar, rel=0.02)
    assert report.g2_alpha == pytest.approx(report.mandel_q_alpha / report.nbar_alpha + 1.0)
    assert report.linewidth_2D == pytest.approx(linewidth(coeffs, report.nbar_alpha))
    assert report.freq_shift < 0
    assert report.petermann_K == 1.5
    row = report.to_row()
    assert row["solver"] == "recurrence"
    assert row["C3"] == pytest.approx(coeffs.C3)


def test_report_below_threshold(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 0.5))
    report = make_report(coeffs, _result(coeffs))
    assert math.isnan(report.linewidth_2D)
    assert math.isnan(report.freq_shift)
    assert math.isnan(report.analytic_nbar)
    assert math.isnan(report.petermann_K)
    assert report.analytic_mandel_q == pytest.approx(1.0)


def test_report_of_vacuum(reference_params):
    coeffs = derive_coeffs(reference_params)
    report = make_report(coeffs, _result(coeffs))
    assert report.nbar_alpha == 0.0
    assert math.isnan(report.mandel_q_alpha)
    assert math.isnan(report.g2_alpha)


@pytest.mark.slow
def test_fitted_linewidth(linewidth_params):
    fit = LaserPipeline(with_pump_ratio(linewidth_params, 1.1), with_petermann=False).run_linewidth()
    assert fit.nbar_alpha == pytest.approx(1000.0, rel=0.05)
    assert fit.fitted_linewidth == pytest.approx(fit.linewidth_2D, rel=0.10)
    assert fit.fitted_frequency == pytest.approx(0.0, abs=1e-3 * fit.fitted_rate)


@pytest.mark.slow
def test_fitted_frequency():
    fit = LaserPipeline(with_pump_ratio(FREQUENCY_PARAMS, 2.0), with_petermann=False).run_linewidth()
    assert fit.fitted_frequency == pytest.approx(fit.freq_shift, rel=0.10)


def test_pipeline_references(reference_params):
    pipeline = LaserPipeline(with_pump_ratio(reference_params, 2.0), grid=FockGrid(700, 60), with_petermann=False)
    report, result = pipeline.run()
    refs = pipeline.references(result.p_alpha)
    assert set(refs) == {"thermal", "poisson"}
    assert refs["poisson"].mean == pytest.approx(result.nbar_alpha, rel=1e-6)
    assert result.p_alpha.total_variation(refs["poisson"]) < result.p_alpha.total_variation(refs["thermal"])
    assert math.isnan(report.petermann_K)
