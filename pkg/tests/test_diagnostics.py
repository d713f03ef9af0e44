"""Residual evaluators, Shi monitors, action, and the obstruction form."""

import numpy as np
import pytest

from conftest import constant_form, random_form, random_metric
from warpflow.diagnostics import (
    ShiConstants,
    action,
    action_homogeneous,
    action_reduced,
    field_equation_residual,
    field_equation_residual_reduced,
    record_euclidean,
    record_reduced,
    shi_quantities_euclidean,
    shi_quantities_reduced,
    stationarity_obstruction_check,
    stationarity_obstruction_check_reduced,
)
from warpflow.errors import PotentialMismatchError
from warpflow.flow import EuclideanState, ReducedState
from warpflow.forms import DifferentialForm, exterior_derivative, form_square
from warpflow.geometry import ricci
from warpflow.grids import GridSpec, MetricField, ScalarField
from warpflow.homogeneous import HomogeneousState, realize_on_grid
from warpflow.verification import _constant_reduced_state


def test_field_equation_residual_flat_vacuum():
    grid = GridSpec((6, 6, 6), (1.0,) * 3)
    res = field_equation_residual(MetricField.flat(grid), DifferentialForm.zero(grid, 2), -1)
    assert res.r1_sup == 0.0 and res.r2_sup == 0.0


def test_field_equation_residual_independent_oracle(rng):
    # oracle: a from-scratch dense evaluation of the Einstein-type equation
    grid = GridSpec((6, 6, 6), (1.0,) * 3)
    g = random_metric(rng, grid, 0.1)
    F = random_form(rng, grid, 2)
    res = field_equation_residual(g, F, -1)
    fsq, fnormsq = form_square(g, F)
    oracle = ricci(g) - 0.5 * fsq + (fnormsq.values / 6.0)[..., None, None] * g.entries
    assert np.max(np.abs(res.r2 - oracle)) <= 1e-12


def test_r2_trace_links_scalar_curvature_to_flux_norm(rng):
    # contracting the Einstein-type equation: wherever |r2| <= eps the scalar
    # curvature matches |F|^2 (1/2 k/3 ... with the degree-4 weights) within n eps;
    # checked by constructing an exact zero-residual algebraic point
    grid = GridSpec((4,) * 4, (1.0,) * 4)
    c = 0.7
    F = DifferentialForm.from_channels(grid, 4, {(0, 1, 2, 3): np.full(grid.shape, c)})
    g = MetricField.flat(grid)
    res = field_equation_residual(g, F, -1)
    fsq, fnormsq = form_square(g, F)
    scalar = np.einsum("...ij,...ij->...", g.inverse, ricci(g)) - np.einsum(
        "...ij,...ij->...", g.inverse, res.r2)
    # R - trace(r2) = (1/2) trace(F^2)/.. : for zero curvature the identity
    # reduces to trace(r2) = -(1/2) 4 |F|^2 + (n/6) |F|^2
    expected_trace = (-0.5 * 4 + 4.0 / 6.0) * fnormsq.values
    assert np.max(np.abs(np.einsum("...ij,...ij->...", g.inverse, res.r2)
                         - expected_trace)) <= 1e-12


def test_reduced_residual_zero_at_freund_rubin_point(rng):
    point = HomogeneousState(p=6, sigma=1, lambda_tilde=-1.0 / 6.0, kappa_hat=0.0,
                             s=1.0, f=0.0, c=0.0, preset="volume_psi")
    # only the kappa_hat = 0 member is grid-representable: the flat vacuum
    state = realize_on_grid(point)
    report = field_equation_residual_reduced(state)
    # lambda_tilde = -1/6 with zero flux leaves exactly the fiber residual
    assert report["r2_fiber_sup"] == pytest.approx(1.0 / 6.0)
    assert report["r2_base_sup"] <= 1e-12
    vacuum = _constant_reduced_state(rng, 7, 1, lam=0.0)
    flat = ReducedState.build(MetricField.flat(vacuum.grid), ScalarField.zeros(vacuum.grid),
                              p=7, sigma=1, lambda_tilde=0.0)
    report = field_equation_residual_reduced(flat)
    assert report["r1_sup"] == 0.0 and report["r2_sup"] == 0.0


def test_obstruction_form_cases(rng):
    grid = GridSpec((6, 6, 6), (1.0,) * 3)
    flat = MetricField.flat(grid)
    zero = stationarity_obstruction_check(flat, DifferentialForm.zero(grid, 2), -1)
    assert zero["alpha_sup"] == 0.0 and zero["d_alpha_sup"] == 0.0
    assert not zero["harmonic_obstruction"]
    const = constant_form(rng, grid, 2)
    report = stationarity_obstruction_check(flat, const, -1)
    assert report["d_alpha_sup"] <= 1e-13
    generic = stationarity_obstruction_check(flat, random_form(rng, grid, 2), -1)
    assert generic["d_alpha_sup"] > 0.0 or generic["codiff_alpha_sup"] > 0.0


def test_obstruction_form_reduced_vacuum():
    grid = GridSpec((4,) * 4, (1.0,) * 4)
    state = ReducedState.build(MetricField.flat(grid), ScalarField.zeros(grid),
                               p=6, sigma=1, lambda_tilde=0.0)
    report = stationarity_obstruction_check_reduced(state)
    assert report["alpha_sup"] == 0.0


def test_shi_euclidean_t_zero_weight(rng):
    grid = GridSpec((6, 6, 6), (1.0,) * 3)
    g = random_metric(rng, grid, 0.1)
    F = random_form(rng, grid, 2)
    state = EuclideanState(g, F, t=0.0)
    constants = ShiConstants(A1=2.5)
    out = shi_quantities_euclidean(state, constants, order=1)
    from warpflow.forms import pointwise_inner

    expected = 2.5 * float(np.max(pointwise_inner(g, F, F)))
    assert out["G1"] == pytest.approx(expected, rel=1e-12)


def test_shi_reduced_vacuum_zero():
    grid = GridSpec((4, 4, 4), (1.0,) * 3)
    state = ReducedState.build(MetricField.flat(grid), ScalarField.zeros(grid),
                               p=7, sigma=1, lambda_tilde=0.0, t=0.5)
    out = shi_quantities_reduced(state, ShiConstants(), order=3)
    for key in ("G0", "G1", "G2", "G3", "H"):
        assert out[key] == 0.0
    assert out["shi_order_cap"] == 3


def test_shi_recomputation_matches_stream(rng):
    # records are pure functions of the state: recomputing from a checkpoint
    # byte round-trip reproduces every G value exactly
    from warpflow import serialize

    grid = GridSpec((6, 6, 6), (1.0,) * 3)
    x, y, z = grid.coordinates()
    entries = np.zeros(grid.shape + (3, 3)) + np.eye(3)
    entries[..., 0, 0] += 0.1 * np.sin(2 * np.pi * y)
    state = ReducedState.build(MetricField(grid, entries),
                               ScalarField(grid, 0.2 * np.sin(2 * np.pi * x)),
                               p=7, sigma=1, lambda_tilde=0.0, t=0.37)
    streamed = shi_quantities_reduced(state, ShiConstants(), order=2)
    blob = serialize.dump_state(state)
    recomputed = shi_quantities_reduced(serialize.load(blob), ShiConstants(), order=2)
    for key, value in streamed.items():
        assert recomputed[key] == pytest.approx(value, abs=1e-12)


def test_action_values(rng):
    grid = GridSpec((4,) * 4, (1.0,) * 4)
    flat = MetricField.flat(grid)
    assert action(flat, DifferentialForm.zero(grid, 4), -1) == 0.0
    c = 1.1
    F = DifferentialForm.from_channels(grid, 4, {(0, 1, 2, 3): np.full(grid.shape, c)})
    # kinetic term only: -(1/2) c^2 x unit volume
    assert action(flat, F, -1) == pytest.approx(-0.5 * c * c, rel=1e-12)
    with pytest.raises(Exception):
        action(flat, F, +1)  # positive-definite grid weight needs sigma = -1


def test_action_chern_simons_guard(rng):
    grid = GridSpec((8, 8), (1.0, 1.0))
    flat = MetricField.flat(grid)
    x, _ = grid.coordinates()
    potential = DifferentialForm.from_channels(grid, 1, {(1,): np.sin(2 * np.pi * x)})
    F = exterior_derivative(potential)
    value = action(flat, F, -1, potential=potential)
    assert np.isfinite(value)
    bad = DifferentialForm.from_channels(grid, 1, {(1,): 2.0 + np.sin(2 * np.pi * x)})
    with pytest.raises(PotentialMismatchError):
        action(flat, F + constant_form(rng, grid, 2), -1, potential=bad)


def test_action_einstein_coefficient_oracle():
    # trace oracle: scalar curvature n kappa integrates to n kappa x volume;
    # represented through the homogeneous action with unit warp
    state = HomogeneousState(p=6, sigma=-1, lambda_tilde=0.0, kappa_hat=0.4,
                             s=1.0, f=0.0, preset="pure_scalar")
    assert action_homogeneous(state) == pytest.approx(4 * 0.4)


def test_action_reduced_consistency():
    # flat vacuum: zero; homogeneous flux state matches the closed form
    grid = GridSpec((4,) * 4, (1.0,) * 4)
    state = ReducedState.build(MetricField.flat(grid), ScalarField.zeros(grid),
                               p=6, sigma=1, lambda_tilde=0.0)
    assert action_reduced(state) == pytest.approx(0.0, abs=1e-14)
    h = HomogeneousState(p=6, sigma=1, lambda_tilde=0.0, kappa_hat=0.0,
                         s=1.0, f=0.3, c=0.8, preset="volume_psi")
    grid_state = realize_on_grid(h)
    assert action_reduced(grid_state) == pytest.approx(action_homogeneous(h), rel=1e-12)


def test_records_are_complete(rng):
    grid = GridSpec((4,) * 4, (1.0,) * 4)
    psi = DifferentialForm.from_channels(grid, 4, {(0, 1, 2, 3): np.full(grid.shape, 0.4)})
    state = ReducedState.build(MetricField.flat(grid), ScalarField.zeros(grid),
                               p=6, sigma=1, lambda_tilde=0.0, psi=psi, t=0.2)
    rec = record_reduced(state, 1e-3, 7, 0.123, ShiConstants(), shi_order=2)
    for key in ("t", "step", "dt", "sup_f", "sup_psi", "sup_rm", "d_psi_sup",
                "G0", "G1", "G2", "H", "r1_sup", "r2_sup", "d_alpha_sup",
                "codiff_alpha_sup", "action", "rhs_sup"):
        assert key in rec
    assert rec["t"] == 0.2 and rec["step"] == 7
    estate = EuclideanState(MetricField.flat(GridSpec((5, 5, 5), (1.0,) * 3)),
                            DifferentialForm.zero(GridSpec((5, 5, 5), (1.0,) * 3), 2), t=0.1)
    erec = record_euclidean(estate, -1, 1e-3, 3, 0.0, ShiConstants(), shi_order=1)
    for key in ("sup_F", "sup_grad_F", "d_F_sup", "G1", "c0_ratio", "r1_sup", "action"):
        assert key in erec
