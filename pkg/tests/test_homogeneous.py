"""Homogeneous ODE reduction: coefficients cross-validated against the grid
flow, Newton search, certification, closed-form trajectories."""

import numpy as np
import pytest

from warpflow.errors import ConfigError, NoConvergenceError, SingularJacobianError
from warpflow.flow import rhs_reduced
from warpflow.homogeneous import (
    HomogeneousState,
    blow_up_quantity,
    certify_stationary,
    field_equation_blocks,
    homogeneous_rhs,
    integrate_ode,
    linearization_spectrum,
    newton_stationary,
    realize_on_grid,
    rhs_norm,
)
from warpflow.runner import FlowConfig, run_flow


def test_vacuum_rhs_zero():
    state = HomogeneousState(p=7, sigma=1, lambda_tilde=0.0, kappa_hat=0.0)
    rhs = homogeneous_rhs(state)
    assert all(v == 0.0 for v in rhs.values())


def test_pure_scalar_substitution():
    state = HomogeneousState(p=7, sigma=1, lambda_tilde=1.0, kappa_hat=0.0, f=0.3)
    rhs = homogeneous_rhs(state)
    assert rhs["ds"] == 0.0
    assert rhs["df"] == pytest.approx(-2.0 * np.exp(-0.3), abs=1e-15)


@pytest.mark.parametrize("preset,p,kwargs", [
    ("volume_psi", 6, dict(c=0.9, f=0.2, s=1.3, sigma=1)),
    ("volume_psi", 6, dict(c=1.4, f=-0.4, s=0.7, sigma=-1)),
    ("beta_scalar", 3, dict(b=0.7, f=-0.3, s=0.8, sigma=-1)),
    ("beta_scalar", 3, dict(b=1.1, f=0.5, s=1.2, sigma=1)),
])
def test_ode_coefficients_match_grid_flow(preset, p, kwargs):
    # the stated oracle: evaluate the grid right-hand side on the spatially
    # constant realization and compare channel by channel
    sigma = kwargs.pop("sigma")
    state = HomogeneousState(p=p, sigma=sigma, lambda_tilde=-1.0, kappa_hat=0.0,
                             preset=preset, **kwargs)
    rhs_ode = homogeneous_rhs(state)
    grid_state = realize_on_grid(state)
    rhs_grid = rhs_reduced(grid_state, gauge="none")
    n = state.n
    assert np.max(np.abs(rhs_grid.dghat - rhs_ode["ds"] * np.eye(n))) <= 1e-12
    assert np.max(np.abs(rhs_grid.df - rhs_ode["df"])) <= 1e-12
    if grid_state.beta is not None:
        assert rhs_grid.dbeta.sup() <= 1e-12  # db/dt = 0
    if grid_state.psi is not None:
        assert rhs_grid.dpsi.sup() <= 1e-12  # dc/dt = 0


def test_ode_pde_trajectory_consistency():
    # equal steppers, equal dt, constant data: the trajectories agree to
    # rounding accumulation through t = 1
    state = HomogeneousState(p=6, sigma=1, lambda_tilde=-1.0, kappa_hat=0.0,
                             s=1.0, f=0.1, c=0.5, preset="volume_psi")
    records, termination = integrate_ode(state, dt=2e-2, t_end=1.0)
    assert termination["cause"] == "t_end_reached"
    grid_state = realize_on_grid(state)
    config = FlowConfig(dt=2e-2, t_end=1.0, gauge="none", cadence=1000,
                        record_level="light", force_dt=True)
    result = run_flow(grid_state, config)
    assert result.cause == "t_end_reached"
    final = result.final_state
    assert abs(float(final.f.values.flat[0]) - records[-1]["f"]) <= 1e-10
    assert abs(float(final.ghat.entries[..., 0, 0].flat[0]) - records[-1]["s"]) <= 1e-10


def test_newton_from_vacuum_returns_vacuum():
    guess = HomogeneousState(p=7, sigma=1, lambda_tilde=0.0, kappa_hat=0.0,
                             s=1.0, f=0.0)
    solution, iterations = newton_stationary(guess, ["s", "f"])
    assert rhs_norm(solution) <= 1e-12
    assert solution.s == pytest.approx(1.0) and solution.f == pytest.approx(0.0)


def test_newton_volume_flux_branch():
    # frozen oracle: at s = 1, f = 0, c = 1 the stationary parameters are
    # kappa_hat = c^2/3 and lambda_tilde = -c^2/6 (substituted back into the
    # reduced equations by hand)
    guess = HomogeneousState(p=6, sigma=1, lambda_tilde=-0.1, kappa_hat=0.25,
                             s=1.0, f=0.0, c=1.0, preset="volume_psi")
    solution, iterations = newton_stationary(guess, ["kappa_hat", "lambda_tilde"])
    assert iterations <= 20
    assert abs(solution.kappa_hat - 1.0 / 3.0) <= 1e-10
    assert abs(solution.lambda_tilde + 1.0 / 6.0) <= 1e-10
    assert rhs_norm(solution) <= 1e-12
    blocks = field_equation_blocks(solution)
    assert abs(blocks["r2_fiber"]) <= 1e-10
    assert abs(blocks["r2_base"]) <= 1e-10
    assert abs(blocks["r1"]) <= 1e-10


def test_newton_nonlinear_branch_in_state_variables():
    # fix the model parameters on the stationary branch and solve for (s, f)
    # from a perturbed state guess
    guess = HomogeneousState(p=6, sigma=1, lambda_tilde=-1.0 / 6.0, kappa_hat=1.0 / 3.0,
                             s=1.25, f=0.2, c=1.0, preset="volume_psi")
    solution, iterations = newton_stationary(guess, ["s", "f"])
    assert iterations <= 20
    assert rhs_norm(solution) <= 1e-12
    cert = certify_stationary(solution)
    assert cert["r2_fiber"] <= 1e-10 and cert["r2_base"] <= 1e-10


def test_certificate_reports_spectrum():
    point = HomogeneousState(p=6, sigma=1, lambda_tilde=-1.0 / 6.0, kappa_hat=1.0 / 3.0,
                             s=1.0, f=0.0, c=1.0, preset="volume_psi")
    cert = certify_stationary(point)
    assert len(cert["spectrum"]) == 2
    spectrum = linearization_spectrum(point)
    assert all(np.isfinite(z.real) for z in spectrum)


def test_newton_singular_jacobian():
    # in the pure-scalar preset ds/dt = -2 kappa_hat is independent of both
    # state variables, so the (s, f) Jacobian has a zero row
    guess = HomogeneousState(p=7, sigma=1, lambda_tilde=-1.0, kappa_hat=0.5,
                             s=1.0, f=0.0, preset="pure_scalar")
    with pytest.raises(SingularJacobianError):
        newton_stationary(guess, ["s", "f"])


def test_stationary_trajectory_drift():
    point = HomogeneousState(p=6, sigma=1, lambda_tilde=-1.0 / 6.0, kappa_hat=1.0 / 3.0,
                             s=1.0, f=0.0, c=1.0, preset="volume_psi")
    records, termination = integrate_ode(point, dt=1e-2, t_end=1.0)
    assert termination["cause"] == "t_end_reached"
    assert abs(records[-1]["s"] - 1.0) <= 1e-12
    assert abs(records[-1]["f"]) <= 1e-12


def test_closed_form_trajectories():
    up = HomogeneousState(p=7, sigma=1, lambda_tilde=-1.0, kappa_hat=0.0)
    records, termination = integrate_ode(up, dt=1e-3, t_end=1.0)
    assert termination["cause"] == "t_end_reached"
    assert abs(records[-1]["f"] - np.log(1.0 + 2.0)) <= 1e-8
    down = HomogeneousState(p=7, sigma=1, lambda_tilde=1.0, kappa_hat=0.0)
    records, termination = integrate_ode(down, dt=1e-3, t_end=1.0)
    assert termination["cause"] == "blow_up"
    assert termination["t"] == pytest.approx(0.5, rel=0.01)
    assert termination["quantity"] == "f"
    assert termination["dt_history"][-1][1] < 1e-3  # halvings recorded


def test_preset_validation():
    with pytest.raises(ConfigError):
        HomogeneousState(p=5, sigma=1, lambda_tilde=0.0, kappa_hat=0.0, preset="volume_psi")
    with pytest.raises(ConfigError):
        HomogeneousState(p=7, sigma=1, lambda_tilde=0.0, kappa_hat=0.0, c=1.0)
    with pytest.raises(ConfigError):
        realize_on_grid(HomogeneousState(p=6, sigma=1, lambda_tilde=0.0, kappa_hat=0.5,
                                         preset="pure_scalar"))


def test_blow_up_quantity_contributions():
    state = HomogeneousState(p=6, sigma=1, lambda_tilde=0.0, kappa_hat=0.5,
                             s=2.0, f=-1.5, c=3.0, preset="volume_psi")
    q = blow_up_quantity(state)
    assert q["f"] == 1.5
    assert q["psi"] == pytest.approx(3.0 / 4.0)
    assert q["rm"] == pytest.approx(0.5 * 2.0 / 2.0)
