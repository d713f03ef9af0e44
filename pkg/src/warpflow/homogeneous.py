"""Homogeneous (spatially constant) reduction of the coupled flow to ODEs.

The base metric is s * gE for a fixed Einstein reference with
Ric(gE) = kappa_hat * gE; kappa_hat is a symbolic modeling parameter (round
Einstein bases are not periodic-chart representable, so it is never gridded).
Two flux presets keep the contracted square of the flux exactly proportional
to the metric, which is what makes the homogeneous ansatz consistent:

  * ``beta_scalar`` (p = 3): the flux vol-block is a constant 0-form b, whose
    contracted square vanishes identically;
  * ``volume_psi``  (p = 6): psi = c * dvol(gE), the top form of the base,
    with |psi|^2 = c^2 / s^4 and psi^2 = (c^2 / s^4) ghat.

``pure_scalar`` keeps only (s, f) for any p.  The flux coefficients are
constants of motion, so the dynamical system is the pair (s, f):

    ds/dt = -2 kappa_hat + (2/3) c^2 / s^3 + (1/3) sigma e^{-(p+1) f} b^2 s
    df/dt = -(2/3) sigma e^{-(p+1) f} b^2 - (1/3) c^2 / s^4
            - 2 lambda_tilde e^{-f}

These coefficients are cross-validated against the grid flow on spatially
constant states (see tests), not trusted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, NoConvergenceError, SingularJacobianError
from .forms import DifferentialForm
from .grids import GridSpec, MetricField, ScalarField

PRESETS = ("pure_scalar", "beta_scalar", "volume_psi")


@dataclass(frozen=True)
class HomogeneousState:
    """Homogeneous flow state (s, f, b, c) with model parameters."""

    p: int
    sigma: int
    lambda_tilde: float
    kappa_hat: float
    s: float = 1.0
    f: float = 0.0
    b: float = 0.0
    c: float = 0.0
    preset: str = "pure_scalar"
    t: float = 0.0

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}", path="ode.preset")
        if self.preset == "beta_scalar" and self.p != 3:
            raise ConfigError("beta_scalar preset needs p = 3 (scalar flux block)", path="ode.p")
        if self.preset == "volume_psi" and self.p != 6:
            raise ConfigError("volume_psi preset needs p = 6 (top-degree psi)", path="ode.p")
        if self.preset != "beta_scalar" and self.b != 0.0:
            raise ConfigError("b is only active in the beta_scalar preset", path="ode.b")
        if self.preset != "volume_psi" and self.c != 0.0:
            raise ConfigError("c is only active in the volume_psi preset", path="ode.c")
        if self.s <= 0:
            raise ConfigError("base scale s must be positive", path="ode.s")

    @property
    def n(self) -> int:
        return 10 - self.p

    def flux_norms(self) -> tuple[float, float]:
        """(|beta|^2, |psi|^2) under the scaled base metric."""
        beta_sq = self.b ** 2 if self.preset == "beta_scalar" else 0.0
        psi_sq = self.c ** 2 / self.s ** 4 if self.preset == "volume_psi" else 0.0
        return beta_sq, psi_sq


def homogeneous_rhs(state: HomogeneousState) -> dict[str, float]:
    """Right-hand side (ds, df, db, dc); flux coefficients are conserved."""
    q = state.p + 1
    beta_sq, psi_sq = state.flux_norms()
    e_mqf = math.exp(-q * state.f)
    ds = -2.0 * state.kappa_hat + (2.0 / 3.0) * psi_sq * state.s \
        + (1.0 / 3.0) * state.sigma * e_mqf * beta_sq * state.s
    df = -(2.0 / 3.0) * state.sigma * e_mqf * beta_sq - psi_sq / 3.0 \
        - 2.0 * state.lambda_tilde * math.exp(-state.f)
    return {"ds": ds, "df": df, "db": 0.0, "dc": 0.0}


def rhs_norm(state: HomogeneousState) -> float:
    rhs = homogeneous_rhs(state)
    return max(abs(rhs["ds"]), abs(rhs["df"]))


def field_equation_blocks(state: HomogeneousState) -> dict[str, float]:
    """Blockwise field-equation residual of the homogeneous ansatz.

    Evaluates the Einstein-type equation on the fiber block (coefficient of
    the fiber Einstein metric) and the base block (coefficient of ghat), plus
    the flux equation, which is derivative-free here and reduces to the
    vanishing of the (vol ^ base)-flux cross term; both presets make it zero.
    """
    q = state.p + 1
    beta_sq, psi_sq = state.flux_norms()
    e_f = math.exp(state.f)
    e_mqf = math.exp(-q * state.f)
    e_mpf = math.exp(-state.p * state.f)
    fnormsq = -state.sigma * e_mqf * beta_sq + psi_sq
    # fiber block: lambda_tilde - (1/2)(F^2 fiber coeff) + (1/6)|F|^2 e^f,
    # with (F^2)_fiber = -sigma e^{-p f} |beta|^2
    r_fiber = state.lambda_tilde + 0.5 * state.sigma * e_mpf * beta_sq + fnormsq * e_f / 6.0
    # base block: Ric coeff - (1/2)(F^2 base coeff) + (1/6)|F|^2
    # the scalar-flux square tensor vanishes; the top-degree one is psi_sq * ghat
    r_base = state.kappa_hat / state.s - 0.5 * psi_sq + fnormsq / 6.0
    return {"r2_fiber": r_fiber, "r2_base": r_base, "r1": 0.0}


# ---------------------------------------------------------------------------
# Newton search for stationary points
# ---------------------------------------------------------------------------

FREE_PARAMETERS = ("s", "f", "b", "c", "kappa_hat", "lambda_tilde")


def _with_params(state: HomogeneousState, names: list[str], values: np.ndarray) -> HomogeneousState:
    return replace(state, **{name: float(v) for name, v in zip(names, values)})


def _residual_vector(state: HomogeneousState) -> np.ndarray:
    rhs = homogeneous_rhs(state)
    return np.array([rhs["ds"], rhs["df"]])


def newton_stationary(guess: HomogeneousState, free: list[str],
                      tol: float = 1e-12, max_iter: int = 100,
                      fd_step: float = 1e-6) -> tuple[HomogeneousState, int]:
    """Newton iteration on the (ds, df) residual over the chosen free parameters.

    The system is square only for two free parameters; the Jacobian uses
    central finite differences with step fd_step * max(1, |x|).
    """
    if len(free) != 2:
        raise ConfigError("newton search needs exactly two free parameters", path="ode.free")
    for name in free:
        if name not in FREE_PARAMETERS:
            raise ConfigError(f"unknown free parameter {name!r}", path="ode.free")
    x = np.array([getattr(guess, name) for name in free], dtype=float)
    state = guess
    for iteration in range(1, max_iter + 1):
        state = _with_params(guess, free, x)
        res = _residual_vector(state)
        if not np.all(np.isfinite(res)):
            raise NoConvergenceError("residual went non-finite during Newton iteration")
        if float(np.max(np.abs(res))) <= tol:
            return state, iteration
        jac = np.zeros((2, 2))
        for col in range(2):
            h = fd_step * max(1.0, abs(x[col]))
            xp, xm = x.copy(), x.copy()
            xp[col] += h
            xm[col] -= h
            rp = _residual_vector(_with_params(guess, free, xp))
            rm = _residual_vector(_with_params(guess, free, xm))
            jac[:, col] = (rp - rm) / (2.0 * h)
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError(f"Jacobian is singular at {x}") from exc
        if not np.all(np.isfinite(delta)):
            raise SingularJacobianError(f"Jacobian solve produced non-finite step at {x}")
        x = x + delta
    raise NoConvergenceError(f"Newton did not reach {tol} in {max_iter} iterations")


def linearization_spectrum(state: HomogeneousState, fd_step: float = 1e-6) -> list[complex]:
    """Eigenvalues of the finite-difference Jacobian of (ds, df) in (s, f).

    Reported for inspection only; no stability claim is attached.
    """
    jac = np.zeros((2, 2))
    names = ["s", "f"]
    x = np.array([state.s, state.f])
    for col in range(2):
        h = fd_step * max(1.0, abs(x[col]))
        xp, xm = x.copy(), x.copy()
        xp[col] += h
        xm[col] -= h
        rp = _residual_vector(_with_params(state, names, xp))
        rm = _residual_vector(_with_params(state, names, xm))
        jac[:, col] = (rp - rm) / (2.0 * h)
    return [complex(z) for z in np.linalg.eigvals(jac)]


def certify_stationary(state: HomogeneousState) -> dict:
    """Conjunctive certificate: flow residual plus field-equation blocks."""
    blocks = field_equation_blocks(state)
    spectrum = linearization_spectrum(state)
    return {
        "rhs_sup": rhs_norm(state),
        "r2_fiber": abs(blocks["r2_fiber"]),
        "r2_base": abs(blocks["r2_base"]),
        "r1": abs(blocks["r1"]),
        "spectrum": [[z.real, z.imag] for z in spectrum],
    }


# ---------------------------------------------------------------------------
# trajectory integration (same termination semantics as the grid flow)
# ---------------------------------------------------------------------------

def blow_up_quantity(state: HomogeneousState) -> dict[str, float]:
    """Contributions to the monitored blow-up sum.

    |Rm| of the symbolic Einstein base is not available from kappa_hat alone;
    the Ricci coefficient |kappa_hat| sqrt(n) / s stands in for it.
    """
    beta_sq, psi_sq = state.flux_norms()
    return {
        "rm": abs(state.kappa_hat) * math.sqrt(state.n) / state.s,
        "f": abs(state.f),
        "beta": math.sqrt(beta_sq),
        "psi": math.sqrt(psi_sq),
    }


def _rk4_step(state: HomogeneousState, dt: float) -> HomogeneousState:
    k1 = homogeneous_rhs(state)
    s2 = replace(state, s=state.s + 0.5 * dt * k1["ds"], f=state.f + 0.5 * dt * k1["df"])
    k2 = homogeneous_rhs(s2)
    s3 = replace(state, s=state.s + 0.5 * dt * k2["ds"], f=state.f + 0.5 * dt * k2["df"])
    k3 = homogeneous_rhs(s3)
    s4 = replace(state, s=state.s + dt * k3["ds"], f=state.f + dt * k3["df"])
    k4 = homogeneous_rhs(s4)
    return replace(
        state,
        s=state.s + dt / 6.0 * (k1["ds"] + 2 * k2["ds"] + 2 * k3["ds"] + k4["ds"]),
        f=state.f + dt / 6.0 * (k1["df"] + 2 * k2["df"] + 2 * k3["df"] + k4["df"]),
        t=state.t + dt,
    )


def _euler_step(state: HomogeneousState, dt: float) -> HomogeneousState:
    k = homogeneous_rhs(state)
    return replace(state, s=state.s + dt * k["ds"], f=state.f + dt * k["df"], t=state.t + dt)


def integrate_ode(state: HomogeneousState, dt: float, t_end: float,
                  scheme: str = "rk4", k_max: float = 1e6,
                  max_halvings: int = 20, cadence: int = 1):
    """Integrate the homogeneous system; returns (records, termination).

    Termination mirrors the grid flow: the step size is halved (up to
    ``max_halvings`` cumulative times) whenever a step produces a non-finite
    or above-threshold state, and blow-up is declared once the budget runs
    out, reporting the largest contributor to the monitored quantity.
    """
    stepper = _rk4_step if scheme == "rk4" else _euler_step
    records = []
    dt_history = [(state.t, dt)]
    halvings = 0
    step_index = 0

    def record(st):
        rhs = homogeneous_rhs(st)
        records.append({
            "t": st.t, "s": st.s, "f": st.f, "b": st.b, "c": st.c,
            "ds": rhs["ds"], "df": rhs["df"],
            "rhs_sup": max(abs(rhs["ds"]), abs(rhs["df"])),
        })

    record(state)
    while state.t < t_end - 1e-15:
        dt_eff = min(dt, t_end - state.t)
        try:
            with np.errstate(all="ignore"):
                candidate = stepper(state, dt_eff)
            quantity = blow_up_quantity(candidate)
            total = sum(quantity.values())
            ok = math.isfinite(total) and total <= k_max and candidate.s > 0
        except (OverflowError, ValueError):
            ok = False
            quantity = blow_up_quantity(state)
        if not ok:
            if halvings >= max_halvings:
                worst = max(quantity, key=lambda k: quantity[k])
                termination = {
                    "cause": "blow_up", "t": state.t, "quantity": worst,
                    "halvings": halvings, "dt_history": dt_history,
                }
                record(state)
                return records, termination
            dt = dt / 2.0
            halvings += 1
            dt_history.append((state.t, dt))
            continue
        state = candidate
        step_index += 1
        if step_index % cadence == 0:
            record(state)
    if records[-1]["t"] != state.t:
        record(state)
    termination = {"cause": "t_end_reached", "t": state.t, "halvings": halvings,
                   "dt_history": dt_history}
    return records, termination


def realize_on_grid(state: HomogeneousState, points_per_axis: int = 4):
    """Grid counterpart of a homogeneous state, for ODE/PDE cross-checks.

    Only flat reference bases are grid-representable, so kappa_hat must be 0.
    """
    from .flow import ReducedState

    if state.kappa_hat != 0.0:
        raise ConfigError("only kappa_hat = 0 states are grid-representable", path="ode.kappa_hat")
    n = state.n
    if not 1 <= n <= 7:
        raise ConfigError(f"base dimension {n} not grid-representable", path="ode.p")
    grid = GridSpec((points_per_axis,) * n, (1.0,) * n)
    ghat = MetricField.flat(grid, scale=state.s)
    f = ScalarField.constant(grid, state.f)
    beta = psi = None
    if state.preset == "beta_scalar":
        beta = DifferentialForm.from_channels(grid, 0, {(): np.full(grid.shape, state.b)})
    if state.preset == "volume_psi":
        psi = DifferentialForm.from_channels(grid, 4, {(0, 1, 2, 3): np.full(grid.shape, state.c)})
    return ReducedState.build(ghat, f, state.p, state.sigma, state.lambda_tilde,
                              beta=beta, psi=psi, t=state.t)
