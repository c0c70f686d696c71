import os
from dataclasses import replace

import numpy as np
import pytest
from omegaconf import OmegaConf

from oclaser.model.config import Config
from oclaser.model.params import DerivedCoeffs, derive_coeffs, with_pump_ratio
from oclaser.model.fock import FockGrid, marginal
from oclaser.model.steady import (
    KMTable, SteadyControls, SteadyResult, solve_alpha_recurrence, solve_beta_recurrence,
    solve_steady, liouvillian_null_vector, liouvillian_steady_oracle, regime_beta_mode
)
from oclaser.model.observables import analytic_weak_pump, g2_zero
from oclaser.utils.common import instantiate_from_config
from oclaser.utils.errors import (
    ConvergenceError, DegenerateRegimeError, DegenerateSteadyStateError, GridTooSmallError, NonNormalizableError,
    ParameterError, PhysicsWarning
)

STEADY_CONFIGS = os.path.join(os.path.dirname(os.path.dirname(__file__)), "configs", "steady")


def test_unpumped_field_is_vacuum(reference_params):
    sol = solve_steady(derive_coeffs(reference_params), controls=SteadyControls(beta_mode="auto"))
    assert sol.p_alpha.probabilities[0] == 1.0
    assert sol.nbar_alpha == 0.0


def test_unsaturated_thermal_limit(symmetric_params):
    coeffs = derive_coeffs(with_pump_ratio(symmetric_params, 0.5)).without_saturation()
    sol = solve_steady(coeffs)
    ref = analytic_weak_pump(coeffs, sol.p_alpha.n_max)
    assert sol.p_alpha.total_variation(ref) <= 1e-3
    assert sol.nbar_alpha == pytest.approx(1.0, rel=1e-6)


def test_thermal_limit_with_cross_damping(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 0.5)).without_saturation()
    sol = solve_steady(coeffs)
    assert sol.p_alpha.total_variation(analytic_weak_pump(coeffs, sol.p_alpha.n_max)) <= 0.05
    assert sol.nbar_alpha == pytest.approx(1.0, rel=0.15)


def test_above_threshold_mean(reference_params):
    sol = solve_steady(derive_coeffs(with_pump_ratio(reference_params, 2.0)))
    assert sol.converged
    assert sol.nbar_alpha == pytest.approx(337.84, rel=0.02)
    assert sol.nbar_beta / sol.nbar_alpha < 1e-2


def test_beta_vacuum_without_cross_damping(symmetric_params):
    sol = solve_steady(derive_coeffs(with_pump_ratio(symmetric_params, 2.0)))
    assert sol.p_beta.probabilities[0] == 1.0
    assert sol.nbar_beta == 0.0
    assert sol.iterations == 1


def test_small_grid_is_regrown(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    with pytest.raises(GridTooSmallError) as info:
        solve_alpha_recurrence(coeffs, 0.0, FockGrid(150, 15))
    assert info.value.mode == "alpha"
    sol = solve_steady(coeffs, FockGrid(150, 15), SteadyControls(max_regrow=6))
    assert sol.grid.n_max_alpha > 150
    assert sol.nbar_alpha == pytest.approx(337.84, rel=0.02)


def test_regrow_gives_up(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    with pytest.raises(GridTooSmallError):
        solve_steady(coeffs, FockGrid(20, 15), SteadyControls(max_regrow=1))


def test_beta_recurrence_with_unphysical_damping(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(replace(reference_params, gamma12=16.0), 2.0))
    with pytest.raises((DegenerateRegimeError, NonNormalizableError)):
        solve_beta_recurrence(coeffs, 300.0, FockGrid(600, 15))


def test_auto_beta_mode_falls_back_to_vacuum(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(replace(reference_params, gamma12=16.0), 2.0))
    with pytest.warns(PhysicsWarning, match="vacuum"):
        sol = solve_steady(coeffs, controls=SteadyControls(beta_mode="auto"))
    assert sol.nbar_beta == 0.0
    assert sol.nbar_alpha > 0


@pytest.mark.parametrize("ratio", [0.1, 0.25, 0.5, 0.9])
def test_auto_beta_mode_decouples_below_threshold(reference_params, ratio):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, ratio))
    resolved, mode = regime_beta_mode(coeffs)
    assert resolved.C3 == 0.0
    assert mode == "recurrence"
    grid = FockGrid(200, 15)
    sol = solve_steady(coeffs, grid, SteadyControls(beta_mode="auto"))
    decoupled = solve_steady(replace(coeffs, C3=0.0), grid)
    np.testing.assert_array_equal(sol.p_alpha.probabilities, decoupled.p_alpha.probabilities)
    assert sol.nbar_beta == 0.0


def test_auto_beta_mode_couples_above_threshold(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    assert regime_beta_mode(coeffs) == (coeffs, "recurrence")
    auto = solve_steady(coeffs, controls=SteadyControls(beta_mode="auto"))
    full = solve_steady(coeffs, controls=SteadyControls(beta_mode="recurrence"))
    np.testing.assert_array_equal(auto.p_alpha.probabilities, full.p_alpha.probabilities)
    assert auto.nbar_beta > 0


def test_g2_falls_monotonically_across_threshold(reference_params):
    g2 = []
    for ratio in np.linspace(0.1, 3.0, 20):
        sol = solve_steady(
            derive_coeffs(with_pump_ratio(reference_params, ratio)), controls=SteadyControls(beta_mode="auto")
        )
        g2.append(g2_zero(sol.p_alpha))
    assert np.all(np.diff(g2) <= 0), np.round(g2, 4).tolist()
    assert 1.9 <= g2[0] <= 2.0
    assert 1.0 <= g2[-1] <= 1.1


def test_nbar_grows_with_pump(reference_params):
    nbar = [
        solve_steady(
            derive_coeffs(with_pump_ratio(reference_params, ratio)), controls=SteadyControls(beta_mode="auto")
        ).nbar_alpha
        for ratio in np.linspace(0.1, 3.0, 20)
    ]
    assert np.all(np.diff(nbar) >= 0), np.round(nbar, 4).tolist()


def test_negative_means_rejected(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    with pytest.raises(ParameterError):
        solve_alpha_recurrence(coeffs, -1.0, FockGrid(600, 15))
    with pytest.raises(ParameterError):
        solve_beta_recurrence(coeffs, -1.0, FockGrid(600, 15))


def test_degenerate_m_names_the_point(reference_params):
    table = KMTable(derive_coeffs(reference_params))
    with pytest.raises(DegenerateRegimeError, match=r"M\(0, 0\)"):
        table.m(0.0, 0.0)


def test_k_exceeds_m_with_detuning(reference_params):
    table = KMTable(derive_coeffs(with_pump_ratio(reference_params, 2.0)))
    m, k = table.m(338.0, 0.0), table.k(338.0, 0.0)
    assert k > m
    # the detuning correction is a small part of K at the lasing point
    assert (k - m) / m < 0.01


def test_self_consistent_solution_is_deterministic(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    a = solve_steady(coeffs)
    b = solve_steady(coeffs)
    np.testing.assert_array_equal(a.p_alpha.probabilities, b.p_alpha.probabilities)
    assert a.nbar_beta == b.nbar_beta


def test_iteration_budget_exhausted(reference_params):
    coeffs = derive_coeffs(with_pump_ratio(reference_params, 2.0))
    with pytest.raises(ConvergenceError, match="1 iterations"):
        solve_steady(coeffs, controls=SteadyControls(max_iter=1))


@pytest.mark.slow
def test_recurrence_agrees_with_null_space(oracle_params):
    coeffs = derive_coeffs(oracle_params)
    grid = FockGrid(60, 15)
    exact = liouvillian_steady_oracle(coeffs, grid)
    sol = solve_steady(coeffs, grid, SteadyControls(beta_mode="auto"))
    assert marginal(exact, "alpha").total_variation(sol.p_alpha) <= 0.05
    assert exact.values.min() >= 0.0
    assert exact.trace == pytest.approx(1.0, abs=1e-12)


def test_oracle_refuses_huge_grid(oracle_params):
    with pytest.raises(ParameterError):
        liouvillian_steady_oracle(derive_coeffs(oracle_params), FockGrid(2000, 200))


def _beta_conserving_coeffs() -> DerivedCoeffs:
    # no pump, no beta damping and no cross term: every beta level is absorbing
    return DerivedCoeffs(A=0.0, B=0.0, C1=1.0, C2=0.0, C3=0.0, delta_bar=0.0, g=0.1)


def test_oracle_rejects_degenerate_null_space():
    with pytest.raises(DegenerateSteadyStateError):
        liouvillian_steady_oracle(_beta_conserving_coeffs(), FockGrid(4, 3))


def test_oracle_rejects_degenerate_null_space_above_dense_limit(monkeypatch):
    monkeypatch.setattr(Config, "dense_limit", 0)
    with pytest.raises(DegenerateSteadyStateError):
        liouvillian_steady_oracle(_beta_conserving_coeffs(), FockGrid(4, 3))


def test_oracle_sparse_check_keeps_regular_states(oracle_params, monkeypatch):
    coeffs = derive_coeffs(oracle_params)
    grid = FockGrid(60, 15)
    dense = liouvillian_steady_oracle(coeffs, grid)
    monkeypatch.setattr(Config, "dense_limit", 0)
    sparse = liouvillian_steady_oracle(coeffs, grid)
    np.testing.assert_allclose(sparse.values, dense.values, atol=1e-12)


def test_oracle_state_is_clamped_and_normalized(oracle_params):
    coeffs = derive_coeffs(oracle_params)
    grid = FockGrid(60, 15)
    raw = liouvillian_null_vector(coeffs, grid)
    state = liouvillian_steady_oracle(coeffs, grid)
    assert raw.sum() == pytest.approx(1.0, abs=1e-12)
    assert state.values.min() >= 0.0
    assert state.trace == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(state.values.ravel(), np.clip(raw, 0.0, None) / np.clip(raw, 0.0, None).sum())


@pytest.mark.parametrize("name", [
    "recurrence", "liouvillian", pytest.param("integration", marks=pytest.mark.slow),
])
def test_solvers_from_config(oracle_params, name):
    coeffs = derive_coeffs(oracle_params)
    grid = FockGrid(60, 15)
    target = instantiate_from_config(OmegaConf.load(os.path.join(STEADY_CONFIGS, f"{name}.yaml")))
    result = target.solve(coeffs, grid)
    assert isinstance(result, SteadyResult)
    assert result.solver == name
    assert result.p_alpha.probabilities.sum() == pytest.approx(1.0)
    reference = solve_steady(coeffs, grid, SteadyControls(beta_mode="auto"))
    assert result.p_alpha.total_variation(reference.p_alpha) <= 0.05
