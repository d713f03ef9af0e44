"""Flow driver: time loop, blow-up detection, diagnostics streaming.

Termination semantics: the run integrates until t_end (or a step budget) or
until the monitored quantity sup(|Rm| + |f| + |beta| + |psi|) (reduced) or
sup(|Rm| + |F|) (total-space) exceeds ``k_max`` or goes non-finite.  A failed
or above-threshold step is retried with half the step size, persistently, up
to ``max_halvings`` cumulative halvings; running out of the budget declares
blow-up (or positivity loss when the failures were metric-degeneracy), and
the step-size history is part of the summary.  Whether adaptive halving can
mask a genuine finite-time singularity is undecidable from inside the run,
which is why both the threshold crossing and the dt history are reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .diagnostics import (
    ShiConstants,
    extremum_monitor,
    record_euclidean,
    record_reduced,
)
from .errors import CflViolationError, ConfigError, DegenerateMetricError
from .flow import (
    EuclideanState,
    ReducedState,
    cfl_limit,
    rhs_euclidean,
    rhs_reduced,
    step,
)
from .forms import form_norm_field
from .geometry import riemann_lowered, riemann_norm

TERMINATION_CAUSES = ("t_end_reached", "blow_up", "positivity_lost")


@dataclass
class FlowConfig:
    """Time-integration configuration shared by both flow families."""

    scheme: str = "rk4"
    dt: float | None = None
    cfl: float | None = None
    t_end: float = 1.0
    steps: int | None = None
    gauge: str = "deturck"
    k_max: float = 1e6
    cadence: int = 10
    max_halvings: int = 20
    freeze_metric: bool = False
    force_dt: bool = False
    shi_order: int = 1
    shi_constants: ShiConstants = dataclass_field(default_factory=ShiConstants)
    shi_bound: float | None = None
    record_level: str = "full"   # "light" skips curvature-heavy record fields
    full_checks_every_step: bool | None = None

    def __post_init__(self):
        if self.scheme not in ("euler", "rk4"):
            raise ConfigError(f"unknown scheme {self.scheme!r}", path="flow.scheme")
        if self.dt is None and self.cfl is None:
            raise ConfigError("either dt or cfl must be given", path="flow.dt")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt must be positive", path="flow.dt")
        if self.cfl is not None and not 0 < self.cfl <= 1:
            raise ConfigError("cfl must lie in (0, 1]", path="flow.cfl")
        if self.k_max <= 0:
            raise ConfigError("k_max must be positive", path="flow.k_max")
        if self.cadence < 1:
            raise ConfigError("cadence must be >= 1", path="flow.cadence")


@dataclass
class RunResult:
    records: list[dict]
    termination: dict
    final_state: object
    extremum_series: dict
    shi_sup: dict
    dt_history: list[tuple[float, float]]
    closedness_sup: dict = dataclass_field(default_factory=dict)

    @property
    def cause(self) -> str:
        return self.termination["cause"]


def _blow_up_contributions(state, include_rm: bool) -> dict[str, float]:
    if isinstance(state, ReducedState):
        out = {"f": state.f.sup()}
        if state.beta is not None:
            out["beta"] = float(np.max(form_norm_field(state.ghat, state.beta)))
        if state.psi is not None:
            out["psi"] = float(np.max(form_norm_field(state.ghat, state.psi)))
        if include_rm:
            out["rm"] = float(np.max(riemann_norm(state.ghat, riemann_lowered(state.ghat))))
        return out
    out = {"F": float(np.max(form_norm_field(state.g, state.F)))}
    if include_rm:
        out["rm"] = float(np.max(riemann_norm(state.g, riemann_lowered(state.g))))
    return out


def run_flow(initial_state, config: FlowConfig, sigma: int | None = None,
             sink=None) -> RunResult:
    """Integrate a state under its flow; see the module docstring for semantics.

    ``sink`` is called with each diagnostics record as it is produced.
    For reduced states sigma comes from the state; for total-space states it
    must be supplied (the flux forcing sign).
    """
    reduced = isinstance(initial_state, ReducedState)
    if reduced:
        sigma = initial_state.sigma
    elif sigma is None:
        raise ConfigError("total-space runs need sigma", path="sigma")
    grid = initial_state.grid
    g_of = (lambda s: s.ghat) if reduced else (lambda s: s.g)
    reference = g_of(initial_state).copy() if config.gauge == "deturck" else None
    reference_gamma = None
    if reference is not None:
        from .geometry import christoffel

        reference_gamma = christoffel(reference)

    if reduced:
        def rhs_fn(s):
            return rhs_reduced(s, gauge=config.gauge, reference_metric=reference,
                               freeze_metric=config.freeze_metric,
                               reference_gamma=reference_gamma)
    else:
        gauge = "none" if config.gauge == "f_gauged" else config.gauge

        def rhs_fn(s):
            return rhs_euclidean(s, sigma, gauge=gauge, reference_metric=reference,
                                 reference_gamma=reference_gamma)

    full_every_step = config.full_checks_every_step
    if full_every_step is None:
        full_every_step = False

    state = initial_state
    dt = config.dt
    if dt is None:
        dt = cfl_limit(state, config.cfl)
    elif not config.force_dt:
        bound = cfl_limit(state, 1.0)
        if dt > bound * (1 + 1e-12):
            raise CflViolationError(
                f"dt = {dt:.3e} exceeds the diffusive bound {bound:.3e}; "
                "set force_dt to run anyway"
            )

    if config.steps is not None:
        t_end = state.t + config.steps * dt
        budget = config.steps
    else:
        t_end = config.t_end
        budget = None

    records: list[dict] = []
    closedness_sup: dict[str, float] = {}
    shi_sup: dict[str, float] = {}
    dt_history: list[tuple[float, float]] = [(state.t, dt)]
    times: list[float] = []
    max_f: list[float] = []
    min_f: list[float] = []
    halvings = 0
    step_index = 0
    emitted_steps = set()

    def emit(s, rhs_sup_val: float):
        include_rm = config.record_level == "full"
        if reduced:
            rec = record_reduced(s, dt, step_index, rhs_sup_val, config.shi_constants,
                                 config.shi_order, include_rm=include_rm)
        else:
            rec = record_euclidean(s, sigma, dt, step_index, rhs_sup_val,
                                   config.shi_constants, config.shi_order, include_rm=include_rm)
        for key, value in rec.items():
            if key.startswith("G") or key == "H":
                if isinstance(value, float):
                    shi_sup[key] = max(shi_sup.get(key, -np.inf), value)
        records.append(rec)
        emitted_steps.add(step_index)
        if sink is not None:
            sink(rec)

    def track_extrema(s):
        times.append(s.t)
        if reduced:
            max_f.append(float(np.max(s.f.values)))
            min_f.append(float(np.min(s.f.values)))
        closed = s.closedness() if reduced else {"d_F": s.closedness()}
        for key, value in closed.items():
            closedness_sup[key] = max(closedness_sup.get(key, 0.0), value)

    def quantity(s, full: bool) -> tuple[float, dict]:
        contributions = _blow_up_contributions(s, include_rm=full)
        return sum(contributions.values()), contributions

    track_extrema(state)
    emit(state, rhs_fn(state).sup())
    q0, contribs = quantity(state, full=True)
    if not np.isfinite(q0) or q0 > config.k_max:
        worst = max(contribs, key=lambda k: contribs[k])
        termination = {"cause": "blow_up", "t": state.t, "quantity": worst, "value": q0,
                       "halvings": 0}
        return RunResult(records, termination, state,
                         {"t": times, "max_f": max_f, "min_f": min_f}, shi_sup, dt_history,
                         closedness_sup)

    degenerate_failures = 0
    other_failures = 0

    while True:
        if budget is not None:
            if step_index >= budget:
                break
        elif state.t >= t_end - 1e-14:
            break
        dt_eff = dt if budget is not None else min(dt, t_end - state.t)
        try:
            with np.errstate(all="ignore"):
                candidate = step(state, rhs_fn, dt_eff, config.scheme)
            full = full_every_step or ((step_index + 1) % config.cadence == 0)
            q, contribs = quantity(candidate, full=full)
            if not np.isfinite(q) or q > config.k_max:
                raise _QuantityExceeded(contribs, q)
            failure = None
        except DegenerateMetricError as exc:
            failure = "degenerate"
            degenerate_failures += 1
        except _QuantityExceeded as exc:
            failure = "quantity"
            contribs, q = exc.contributions, exc.value
            other_failures += 1
        except (ValueError, FloatingPointError, np.linalg.LinAlgError):
            failure = "numeric"
            other_failures += 1

        if failure is not None:
            if halvings >= config.max_halvings:
                _, contribs = quantity(state, full=True)
                worst = max(contribs, key=lambda k: contribs[k]) if contribs else "f"
                cause = ("positivity_lost"
                         if degenerate_failures > 0 and other_failures == 0 else "blow_up")
                termination = {"cause": cause, "t": state.t, "quantity": worst,
                               "halvings": halvings}
                if step_index not in emitted_steps:
                    emit(state, rhs_fn(state).sup())
                return RunResult(records, termination, state,
                                 {"t": times, "max_f": max_f, "min_f": min_f},
                                 shi_sup, dt_history, closedness_sup)
            dt = dt / 2.0
            halvings += 1
            dt_history.append((state.t, dt))
            continue

        state = candidate
        step_index += 1
        track_extrema(state)
        if step_index % config.cadence == 0:
            emit(state, rhs_fn(state).sup())

    if step_index not in emitted_steps:
        emit(state, rhs_fn(state).sup())
    termination = {"cause": "t_end_reached", "t": state.t, "halvings": halvings}
    return RunResult(records, termination, state,
                     {"t": times, "max_f": max_f, "min_f": min_f}, shi_sup, dt_history,
                     closedness_sup)


class _QuantityExceeded(Exception):
    def __init__(self, contributions, value):
        self.contributions = contributions
        self.value = value


def extremum_violations(result: RunResult, state_grid, dt: float) -> list[dict]:
    """Maximum-principle violations over a completed run's extremum series."""
    series = result.extremum_series
    if not series["max_f"]:
        return []
    return extremum_monitor(series["t"], series["max_f"], series["min_f"],
                            dt, min(state_grid.h))
