"""Run-loop semantics: termination causes, halving, cadence, monitors."""

import numpy as np
import pytest

from warpflow.errors import CflViolationError
from warpflow.flow import EuclideanState, ReducedState
from warpflow.forms import DifferentialForm
from warpflow.grids import GridSpec, MetricField, ScalarField
from warpflow.runner import FlowConfig, extremum_violations, run_flow


def vacuum_state(n=3, p=7, shape=4):
    grid = GridSpec((shape,) * n, (1.0,) * n)
    return ReducedState.build(MetricField.flat(grid), ScalarField.zeros(grid),
                              p=p, sigma=1, lambda_tilde=0.0)


def test_vacuum_reaches_t_end():
    state = vacuum_state()
    config = FlowConfig(dt=1e-3, t_end=0.02, gauge="deturck", cadence=5)
    result = run_flow(state, config)
    assert result.cause == "t_end_reached"
    assert result.termination["t"] == pytest.approx(0.02)
    for record in result.records:
        assert record["rhs_sup"] == 0.0
        assert record["sup_f"] == 0.0


def test_record_cadence_count():
    # cadence k over N steps gives ceil(N/k) + 1 records
    for steps, cadence in ((10, 3), (12, 4), (7, 10)):
        state = vacuum_state()
        config = FlowConfig(dt=1e-4, steps=steps, cadence=cadence, gauge="none",
                            record_level="light")
        result = run_flow(state, config)
        assert len(result.records) == int(np.ceil(steps / cadence)) + 1
        times = [rec["t"] for rec in result.records]
        assert times == sorted(times)
        assert len(set(times)) == len(times)  # strictly increasing


def test_blow_up_scalar_flow():
    # pure-f grid flow with lambda = +1 escapes at t = e^{f0} / 2
    grid = GridSpec((4, 4, 4), (1.0,) * 3)
    state = ReducedState.build(MetricField.flat(grid), ScalarField.zeros(grid),
                               p=7, sigma=1, lambda_tilde=1.0)
    config = FlowConfig(dt=1e-3, t_end=1.0, gauge="none", cadence=100,
                        record_level="light", force_dt=True)
    result = run_flow(state, config)
    assert result.cause == "blow_up"
    assert result.termination["t"] == pytest.approx(0.5, rel=0.02)
    assert result.termination["quantity"] == "f"
    assert len(result.dt_history) > 1  # halvings recorded


def test_long_time_scalar_flow_matches_closed_form():
    grid = GridSpec((4, 4, 4), (1.0,) * 3)
    state = ReducedState.build(MetricField.flat(grid), ScalarField.zeros(grid),
                               p=7, sigma=1, lambda_tilde=-1.0)
    config = FlowConfig(dt=1e-3, t_end=1.0, gauge="none", cadence=1000,
                        record_level="light", force_dt=True)
    result = run_flow(state, config)
    assert result.cause == "t_end_reached"
    final_f = float(result.final_state.f.values[0, 0, 0])
    assert abs(final_f - np.log(1 + 2 * 1.0)) < 1e-6


def test_cfl_guard():
    state = vacuum_state(shape=8)
    with pytest.raises(CflViolationError):
        run_flow(state, FlowConfig(dt=1.0, t_end=0.1))
    # forced runs proceed (vacuum has zero rhs, so nothing blows up)
    result = run_flow(state, FlowConfig(dt=1.0, t_end=2.0, force_dt=True, cadence=10,
                                        record_level="light"))
    assert result.cause == "t_end_reached"


def test_positivity_lost_detection():
    # the Hessian forcing of a sharp scalar bump drives the metric negative in
    # one oversized step; with the halving budget exhausted the run must
    # report positivity loss (k_max is out of reach, so nothing else fires)
    grid = GridSpec((8, 8), (1.0, 1.0))
    x, _ = grid.coordinates()
    state = ReducedState.build(MetricField.flat(grid), ScalarField(grid, 3.0 * np.cos(2 * np.pi * x)),
                               p=8, sigma=1, lambda_tilde=0.0)
    config = FlowConfig(dt=0.1, t_end=1.0, gauge="none", cadence=1000,
                        record_level="light", force_dt=True, max_halvings=3,
                        k_max=1e12)
    result = run_flow(state, config)
    assert result.cause == "positivity_lost"
    assert result.termination["halvings"] == 3


def test_extremum_monitor_detects_injected_jump():
    times = [0.0, 0.1, 0.2, 0.3]
    max_f = [1.0, 0.99, 1.95, 1.9]   # +1 jump injected at step 2
    min_f = [-1.0, -0.99, -0.98, -0.97]
    from warpflow.diagnostics import extremum_monitor

    violations = extremum_monitor(times, max_f, min_f, dt=1e-3, h_min=1e-1)
    assert len(violations) == 1
    assert violations[0]["kind"] == "max_increase"
    assert violations[0]["step"] == 2


def test_heat_run_has_no_extremum_violations():
    grid = GridSpec((16, 16), (1.0, 1.0))
    x, _ = grid.coordinates()
    state = ReducedState.build(MetricField.flat(grid), ScalarField(grid, 0.3 * np.sin(2 * np.pi * x)),
                               p=8, sigma=1, lambda_tilde=0.0)
    config = FlowConfig(dt=1e-4, steps=100, gauge="f_gauged", freeze_metric=True,
                        cadence=50, record_level="light")
    result = run_flow(state, config)
    assert result.cause == "t_end_reached"
    violations = extremum_violations(result, grid, 1e-4)
    assert violations == []


def test_shi_sup_tracked_and_closedness_sup():
    grid = GridSpec((6, 6, 6), (1.0,) * 3)
    x, y, z = grid.coordinates()
    F = DifferentialForm.from_channels(grid, 2, {(0, 1): 0.2 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)})
    state = EuclideanState(MetricField.flat(grid), F)
    config = FlowConfig(dt=1e-5, steps=20, cadence=10, gauge="deturck", shi_order=2)
    result = run_flow(state, config, sigma=-1)
    assert "G1" in result.shi_sup and "G2" in result.shi_sup
    assert np.isfinite(result.shi_sup["G1"])
    assert result.closedness_sup["d_F"] <= 1e-12
