import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from oclaser.model.params import (
    LaserParams, derive_coeffs, validate_params, composite_transform, threshold_pump_rate,
    with_pump_ratio, scale_coupling, damping_discrepancy
)
from oclaser.model.fock import FockGrid
from oclaser.model.superop import rotate_loss_to_composite
from oclaser.model.dynamics import build_diag_generator
from oclaser.model.steady import SteadyControls, solve_steady
from oclaser.utils.errors import ParameterError, PhysicsWarning

positive = st.floats(min_value=1e-3, max_value=10.0, allow_nan=False, allow_infinity=False)
# the parameter fixtures are frozen, so reusing them across examples is safe
fixture_ok = settings(suppress_health_check=[HealthCheck.function_scoped_fixture])


def test_reference_damping_coefficients(reference_params):
    c = derive_coeffs(reference_params)
    assert c.C1 == pytest.approx(21.0811, abs=5e-5)
    assert c.C2 == pytest.approx(0.9189, abs=5e-5)
    assert c.C3 == pytest.approx(4.0405, abs=5e-5)


def test_reference_gain_coefficients(reference_params):
    c = derive_coeffs(replace(reference_params, pump_rate=100.0))
    assert c.A == pytest.approx(1.48, rel=1e-12)
    assert c.B == pytest.approx(0.043808, rel=1e-12)
    assert c.g == pytest.approx(0.0860233, abs=1e-7)


def test_symmetric_reduction():
    c = derive_coeffs(LaserParams(g1=0.1, g2=0.1, delta=0.0, gamma11=3.0, gamma22=3.0, gamma12=0.0))
    assert c.C1 == pytest.approx(6.0)
    assert c.C2 == pytest.approx(6.0)
    assert c.C3 == 0.0


def test_equal_couplings_cancel_cross_coefficient():
    c = derive_coeffs(LaserParams(g1=0.2, g2=0.2, delta=1.0, gamma11=4.0, gamma22=4.0, gamma12=2.5))
    assert c.C3 == pytest.approx(0.0, abs=1e-15)


def test_zero_pump_gives_zero_gain(reference_params):
    c = derive_coeffs(reference_params)
    assert c.A == 0.0 and c.B == 0.0
    assert c.b_over_a == 0.0


@pytest.mark.parametrize("field, value", [("g1", 0.0), ("g2", -0.1), ("gamma11", 0.0), ("pump_rate", -1.0)])
def test_invalid_params_rejected(reference_params, field, value):
    with pytest.raises(ParameterError, match=field):
        validate_params(replace(reference_params, **{field: value}))


def test_unphysical_damping_warns(reference_params):
    with pytest.warns(PhysicsWarning, match="C2"):
        validate_params(replace(reference_params, gamma12=16.0))


def test_reference_params_accepted_with_psd_warning(reference_params):
    with pytest.warns(PhysicsWarning, match="semidefinite"):
        assert validate_params(reference_params) == reference_params


def test_reference_transform(reference_params):
    o = composite_transform(reference_params).matrix
    np.testing.assert_allclose(o, [[0.5812, 0.8137], [0.8137, -0.5812]], atol=5e-5)


def test_symmetric_transform():
    o = composite_transform(LaserParams(g1=0.3, g2=0.3, delta=0.0, gamma11=1.0, gamma22=1.0, gamma12=0.0)).matrix
    s = 1.0 / math.sqrt(2.0)
    np.testing.assert_allclose(o, [[s, s], [s, -s]], atol=1e-15)


@given(g1=positive, g2=positive)
def test_transform_is_orthogonal(g1, g2):
    o = composite_transform(LaserParams(g1=g1, g2=g2, delta=0.0, gamma11=1.0, gamma22=1.0, gamma12=0.0)).matrix
    np.testing.assert_allclose(o @ o.T, np.eye(2), atol=1e-12)


def test_reference_threshold(reference_params):
    assert threshold_pump_rate(reference_params) == pytest.approx(14243.96, abs=5e-3)


def test_symmetric_threshold():
    params = LaserParams(g1=0.1, g2=0.1, delta=0.0, gamma11=3.0, gamma22=3.0, gamma12=0.0)
    assert threshold_pump_rate(params) == pytest.approx(3.0 / params.g_squared)


def test_threshold_grows_with_cross_damping(reference_params):
    assert threshold_pump_rate(replace(reference_params, gamma12=4.0)) > threshold_pump_rate(replace(reference_params, gamma12=0.0))


@fixture_ok
@given(ratio=st.floats(min_value=0.0, max_value=50.0), g12=st.floats(min_value=-2.0, max_value=5.0))
def test_pump_ratio_round_trip(reference_params, ratio, g12):
    params = with_pump_ratio(replace(reference_params, gamma12=g12), ratio)
    assert derive_coeffs(params).pump_ratio == pytest.approx(ratio, rel=1e-12, abs=1e-15)


@fixture_ok
@given(scale=st.floats(min_value=0.1, max_value=10.0))
def test_damping_is_homogeneous_in_couplings(reference_params, scale):
    a = derive_coeffs(reference_params)
    b = derive_coeffs(replace(reference_params, g1=scale * reference_params.g1, g2=scale * reference_params.g2))
    assert (b.C1, b.C2, b.C3) == pytest.approx((a.C1, a.C2, a.C3), rel=1e-12, abs=1e-12)


def test_scale_coupling_keeps_ratio(reference_params):
    scaled = scale_coupling(reference_params, 0.1)
    assert scaled.g_squared == pytest.approx(0.1)
    assert scaled.g2 / scaled.g1 == pytest.approx(reference_params.g2 / reference_params.g1)


def test_rotated_damping_diagonal_matches(reference_params):
    c_aa, c_bb, _ = rotate_loss_to_composite(reference_params)
    c = derive_coeffs(reference_params)
    assert 2.0 * c_aa == pytest.approx(c.C1, abs=1e-12)
    assert 2.0 * c_bb == pytest.approx(c.C2, abs=1e-12)


def test_rotated_cross_damping_differs_from_printed(reference_params):
    rotated, printed = damping_discrepancy(reference_params)
    assert rotated == pytest.approx(4.5135, abs=5e-5)
    assert printed == pytest.approx(4.0405, abs=5e-5)


@given(g1=positive, g2=positive, g11=positive, g22=positive, g12=st.floats(min_value=-10.0, max_value=10.0))
def test_damping_trace_is_invariant(g1, g2, g11, g22, g12):
    c = derive_coeffs(LaserParams(g1=g1, g2=g2, delta=0.0, gamma11=g11, gamma22=g22, gamma12=g12))
    assert c.C1 + c.C2 == pytest.approx(2.0 * (g11 + g22), rel=1e-12, abs=1e-12)


def _scale_rates(params: LaserParams, s: float) -> LaserParams:
    return replace(
        params, gamma11=s * params.gamma11, gamma22=s * params.gamma22, gamma12=s * params.gamma12,
        pump_rate=s * params.pump_rate, delta=s * params.delta
    )


@fixture_ok
@given(scale=st.floats(min_value=0.25, max_value=4.0))
def test_coefficients_are_homogeneous_in_rates(reference_params, scale):
    base = with_pump_ratio(reference_params, 2.0)
    a, b = derive_coeffs(base), derive_coeffs(_scale_rates(base, scale))
    expected = tuple(scale * v for v in (a.A, a.B, a.C1, a.C2, a.C3))
    assert (b.A, b.B, b.C1, b.C2, b.C3) == pytest.approx(expected, rel=1e-12)
    assert b.delta_bar / scale == pytest.approx(a.delta_bar, rel=1e-12)


@settings(fixture_ok, max_examples=10, deadline=None)
@given(scale=st.floats(min_value=0.25, max_value=4.0))
def test_generator_and_steady_state_scale_with_rates(reference_params, scale):
    # the atomic width is not scaled, so only the resonant cavity is homogeneous
    base = with_pump_ratio(replace(scale_coupling(reference_params, 0.1), delta=0.0), 1.5)
    scaled = _scale_rates(base, scale)

    grid = FockGrid(20, 4)
    g_base = build_diag_generator(grid, derive_coeffs(base)).matrix.toarray()
    g_scaled = build_diag_generator(grid, derive_coeffs(scaled)).matrix.toarray()
    np.testing.assert_allclose(g_scaled, scale * g_base, rtol=1e-10, atol=1e-12 * np.abs(g_scaled).max())

    grid = FockGrid(60, 15)
    controls = SteadyControls(beta_mode="auto")
    a = solve_steady(derive_coeffs(base), grid, controls)
    b = solve_steady(derive_coeffs(scaled), grid, controls)
    np.testing.assert_allclose(b.p_alpha.probabilities, a.p_alpha.probabilities, rtol=1e-7, atol=1e-14)
    assert b.nbar_beta == pytest.approx(a.nbar_beta, rel=1e-7, abs=1e-14)
