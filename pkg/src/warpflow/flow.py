"""Flow states and right-hand sides for the coupled metric/form systems.

Two systems are implemented:

  * The total-space system on a single grid metric g coupled to a closed
    form F:  dF/dt = -Box F - (sigma/2) d star(F ^ F),
             dg/dt = -2 Ric + F^2 - (1/3) |F|^2 g.

  * The dimensionally reduced system for (ghat, f, beta, psi) on the base of
    a warped product with an abstract Einstein fiber factor, in three gauges:
      - "none":      the plain reduced system, whose f-equation carries the
                     (q/2)|grad f|^2 term and whose metric equation carries
                     the full q * Hessian term;
      - "f_gauged":  the system after pulling back along the flow of
                     -(q/2) grad f, which absorbs the Hessian into the metric
                     equation and doubles the gradient coupling of beta;
      - "deturck":   f_gauged plus a DeTurck correction on the metric
                     equation built against a reference metric.

The form equations are assembled in manifestly exact shape: every forcing is
either d(something) or annihilated on closed forms, so closedness of beta,
psi, F is preserved by any linear time stepper up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegreeMismatchError, GridMismatchError
from .forms import (
    DifferentialForm,
    exterior_derivative,
    form_square,
    hodge_laplacian,
    hodge_star,
    lie_derivative,
    wedge,
)
from .geometry import EinsteinFactor, christoffel, covariant_derivative, gradient, hessian_and_laplacian, ricci
from .grids import GridSpec, MetricField, ScalarField

RIEMANNIAN = -1  # sign convention for base-grid Hodge stars

GAUGE_MODES = ("none", "deturck", "f_gauged")


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

@dataclass
class EuclideanState:
    """Grid metric plus closed form evolving under the total-space system."""

    g: MetricField
    F: DifferentialForm
    t: float = 0.0

    def __post_init__(self):
        if self.F.grid != self.g.grid:
            raise GridMismatchError("metric and form live on different grids")

    @property
    def grid(self) -> GridSpec:
        return self.g.grid

    def arrays(self) -> list[np.ndarray]:
        return [self.g.entries, self.F.comps]

    def with_arrays(self, arrays: list[np.ndarray], t: float, check: bool = True) -> "EuclideanState":
        g = MetricField(self.g.grid, arrays[0], self.g.eps_pd, _skip_checks=not check)
        if check:
            if not np.all(np.isfinite(arrays[1])):
                raise ValueError("form components went non-finite")
        return EuclideanState(g, DifferentialForm(self.grid, self.F.degree, arrays[1]), t)

    def closedness(self) -> float:
        return exterior_derivative(self.F).sup()


@dataclass
class ReducedState:
    """The tuple (ghat, f, beta, psi) on the base, with fiber bookkeeping.

    ``p`` fixes the fiber dimension q = p + 1 and the base dimension
    n = 10 - p; beta is a (3-p)-form (absent for p >= 4) and psi a 4-form
    (absent for n < 4).
    """

    ghat: MetricField
    f: ScalarField
    beta: DifferentialForm | None
    psi: DifferentialForm | None
    p: int
    sigma: int
    factor: EinsteinFactor
    t: float = 0.0

    def __post_init__(self):
        n = self.ghat.grid.n
        if n != 10 - self.p:
            raise GridMismatchError(f"base dimension {n} inconsistent with p={self.p}")
        if self.sigma not in (-1, 1):
            raise ValueError("sigma must be +1 or -1")
        if self.factor.pdim != self.p + 1 or self.factor.sigma != self.sigma:
            raise ValueError("Einstein factor inconsistent with (p, sigma)")
        beta_degree = 3 - self.p
        if beta_degree >= 0:
            if self.beta is None:
                self.beta = DifferentialForm.zero(self.ghat.grid, beta_degree)
            elif self.beta.degree != beta_degree:
                raise DegreeMismatchError(f"beta must have degree {beta_degree}")
        elif self.beta is not None:
            raise DegreeMismatchError(f"beta channels are absent for p={self.p}")
        if n >= 4:
            if self.psi is None:
                self.psi = DifferentialForm.zero(self.ghat.grid, 4)
            elif self.psi.degree != 4:
                raise DegreeMismatchError("psi must have degree 4")
        elif self.psi is not None:
            raise DegreeMismatchError(f"psi channels are absent for base dimension {n}")

    @classmethod
    def build(cls, ghat: MetricField, f: ScalarField, p: int, sigma: int,
              lambda_tilde: float, beta: DifferentialForm | None = None,
              psi: DifferentialForm | None = None, t: float = 0.0) -> "ReducedState":
        factor = EinsteinFactor(pdim=p + 1, sigma=sigma, lambda_tilde=lambda_tilde)
        return cls(ghat, f, beta, psi, p, sigma, factor, t)

    @property
    def grid(self) -> GridSpec:
        return self.ghat.grid

    def arrays(self) -> list[np.ndarray]:
        out = [self.ghat.entries, self.f.values]
        if self.beta is not None:
            out.append(self.beta.comps)
        if self.psi is not None:
            out.append(self.psi.comps)
        return out

    def with_arrays(self, arrays: list[np.ndarray], t: float, check: bool = True) -> "ReducedState":
        ghat = MetricField(self.grid, arrays[0], self.ghat.eps_pd, _skip_checks=not check)
        if check and not all(np.all(np.isfinite(a)) for a in arrays[1:]):
            raise ValueError("state fields went non-finite")
        f = ScalarField.__new__(ScalarField)
        f.grid, f.values = self.grid, arrays[1]
        pos = 2
        beta = None
        if self.beta is not None:
            beta = DifferentialForm(self.grid, self.beta.degree, arrays[pos])
            pos += 1
        psi = None
        if self.psi is not None:
            psi = DifferentialForm(self.grid, 4, arrays[pos])
        return ReducedState(ghat, f, beta, psi, self.p, self.sigma, self.factor, t)

    def closedness(self) -> dict[str, float]:
        out = {}
        if self.beta is not None:
            out["d_beta"] = exterior_derivative(self.beta).sup()
        if self.psi is not None:
            out["d_psi"] = exterior_derivative(self.psi).sup()
        return out


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

@dataclass
class ReducedRhs:
    dghat: np.ndarray
    df: np.ndarray
    dbeta: DifferentialForm | None
    dpsi: DifferentialForm | None

    def arrays(self) -> list[np.ndarray]:
        out = [self.dghat, self.df]
        if self.dbeta is not None:
            out.append(self.dbeta.comps)
        if self.dpsi is not None:
            out.append(self.dpsi.comps)
        return out

    def sup(self) -> float:
        sups = [float(np.max(np.abs(self.dghat))), float(np.max(np.abs(self.df)))]
        if self.dbeta is not None:
            sups.append(self.dbeta.sup())
        if self.dpsi is not None:
            sups.append(self.dpsi.sup())
        return max(sups)


@dataclass
class EuclideanRhs:
    dg: np.ndarray
    dF: DifferentialForm

    def arrays(self) -> list[np.ndarray]:
        return [self.dg, self.dF.comps]

    def sup(self) -> float:
        return max(float(np.max(np.abs(self.dg))), self.dF.sup())


def d_star_wedge(ghat: MetricField, one_form: DifferentialForm, x: DifferentialForm) -> DifferentialForm:
    """d star(one_form ^ star x): the gradient coupling acting on a form x."""
    sx = hodge_star(ghat, RIEMANNIAN, x)
    w = wedge(one_form, sx)
    return exterior_derivative(hodge_star(ghat, RIEMANNIAN, w))


def d_of_scaled_star(ghat: MetricField, scale: np.ndarray, x: DifferentialForm) -> DifferentialForm:
    """d(scale * star x), the manifestly exact shape of the form forcings."""
    return exterior_derivative(hodge_star(ghat, RIEMANNIAN, x) * scale)


def rhs_reduced(state: ReducedState, gauge: str = "none",
                reference_metric: MetricField | None = None,
                freeze_metric: bool = False,
                reference_gamma: np.ndarray | None = None) -> ReducedRhs:
    """Right-hand side of the reduced system in the requested gauge."""
    if gauge not in GAUGE_MODES:
        raise ValueError(f"unknown gauge {gauge!r}; expected one of {GAUGE_MODES}")
    ghat, f, beta, psi = state.ghat, state.f, state.beta, state.psi
    grid = state.grid
    n = grid.n
    p = state.p
    q = p + 1
    sigma = state.sigma
    lam = state.factor.lambda_tilde

    gamma = christoffel(ghat)
    ric = ricci(ghat, gamma)
    hess, lap, gradsq = hessian_and_laplacian(ghat, f, gamma)
    df_channels = gradient(f)
    df1 = DifferentialForm(grid, 1, df_channels)

    # identically-zero flux blocks short-circuit their (exactly zero) terms
    beta_active = beta is not None and bool(beta.comps.any())
    psi_active = psi is not None and bool(psi.comps.any())
    exp_mqf = np.exp(-q * f.values) if beta_active else None
    beta_sq_tensor = beta_sq_norm = None
    if beta_active:
        beta_sq_tensor, bn = form_square(ghat, beta)
        beta_sq_norm = bn.values
    psi_sq_tensor = psi_sq_norm = None
    if psi_active:
        psi_sq_tensor, pn = form_square(ghat, psi)
        psi_sq_norm = pn.values

    mdf = np.moveaxis(df_channels, 0, -1)
    df_outer = mdf[..., :, None] * mdf[..., None, :]

    if freeze_metric:
        dghat = np.zeros(grid.shape + (n, n))
    else:
        if gauge == "none":
            dghat = -2.0 * ric + q * (hess + 0.5 * df_outer)
        else:
            dghat = -2.0 * ric + (0.5 * q) * df_outer
        trace_term = np.zeros(grid.shape)
        if beta_sq_tensor is not None:
            w = sigma * exp_mqf
            dghat -= w[..., None, None] * beta_sq_tensor
            trace_term -= w * beta_sq_norm
        if psi_sq_tensor is not None:
            dghat += psi_sq_tensor
            trace_term += psi_sq_norm
        dghat -= (trace_term / 3.0)[..., None, None] * ghat.entries
        if gauge == "deturck":
            if reference_metric is None:
                raise ValueError("deturck gauge needs a reference metric")
            _, sym_grad, _ = deturck_vector(ghat, reference_metric, gamma=gamma,
                                            reference_gamma=reference_gamma)
            dghat = dghat + sym_grad

    df_rhs = lap.values.copy()
    if lam != 0.0:
        # skipped when zero: exp(-f) may legitimately overflow on diverging
        # states, and 0 * inf would poison the scalar equation
        df_rhs -= (2.0 * lam) * np.exp(-f.values)
    if beta_sq_norm is not None:
        df_rhs = df_rhs - ((2.0 / 3.0) * sigma) * (exp_mqf * beta_sq_norm)
    if psi_sq_norm is not None:
        df_rhs = df_rhs - psi_sq_norm / 3.0
    if gauge == "none":
        df_rhs = df_rhs + (0.5 * q) * gradsq.values

    grad_coeff = 0.5 * q if gauge == "none" else float(q)

    dbeta = None
    if beta is not None:
        dbeta = DifferentialForm.zero(grid, beta.degree)
        if beta_active:
            dbeta = dbeta - hodge_laplacian(ghat, RIEMANNIAN, beta)
            if beta.degree >= 1:
                dbeta = dbeta + ((-1.0) ** (p + 1)) * grad_coeff * d_star_wedge(ghat, df1, beta)
        if psi_active and 2 * psi.degree <= n:
            # only reachable on bases of dimension >= 8; kept for generality
            psi_psi = wedge(psi, psi)
            scale = np.exp(0.5 * q * f.values)
            dbeta = dbeta - sigma * ((-1.0) ** p) * 0.5 * d_of_scaled_star(ghat, scale, psi_psi)

    dpsi = None
    if psi is not None:
        dpsi = DifferentialForm.zero(grid, 4)
        if psi_active:
            dpsi = dpsi - hodge_laplacian(ghat, RIEMANNIAN, psi)
            if gauge == "none":
                dpsi = dpsi + ((-1.0) ** p) * 0.5 * q * d_star_wedge(ghat, df1, psi)
        if beta_active and psi_active:
            beta_psi = wedge(beta, psi)
            if beta_psi.degree == beta.degree + psi.degree:
                scale = np.exp(-0.5 * q * f.values)
                dpsi = dpsi + d_of_scaled_star(ghat, scale, beta_psi)

    return ReducedRhs(dghat, df_rhs, dbeta, dpsi)


def rhs_euclidean(state: EuclideanState, sigma: int, gauge: str = "none",
                  reference_metric: MetricField | None = None,
                  reference_gamma: np.ndarray | None = None) -> EuclideanRhs:
    """Right-hand side of the total-space system on the grid.

    The quadratic forcing d star(F ^ F) exists as a degree-matched object only
    when n = 3 deg(F) - 1; in every other case it is dropped (F ^ F is then
    identically zero or lives in the wrong degree to source dF/dt).
    """
    if gauge not in ("none", "deturck"):
        raise ValueError(f"unknown gauge {gauge!r} for the total-space system")
    g, F = state.g, state.F
    grid = state.grid
    n = grid.n
    k = F.degree

    ric = ricci(g)
    fsq_tensor, fsq_norm = form_square(g, F)
    dg = -2.0 * ric + fsq_tensor - (fsq_norm.values / 3.0)[..., None, None] * g.entries

    dF = -1.0 * hodge_laplacian(g, sigma, F)
    if 2 * k <= n and n - 2 * k + 1 == k:
        ff = wedge(F, F)
        dF = dF - 0.5 * sigma * exterior_derivative(hodge_star(g, sigma, ff))

    if gauge == "deturck":
        if reference_metric is None:
            raise ValueError("deturck gauge needs a reference metric")
        vvec, sym_grad, lie_f = deturck_vector(g, reference_metric, form=F,
                                               reference_gamma=reference_gamma)
        dg = dg + sym_grad
        dF = dF + lie_f

    return EuclideanRhs(dg, dF)


def deturck_vector(g: MetricField, reference: MetricField,
                   gamma: np.ndarray | None = None,
                   form: DifferentialForm | None = None,
                   reference_gamma: np.ndarray | None = None):
    """DeTurck gauge data against a reference metric.

    Returns (V as vector channels (n, *shape), the symmetrized covariant
    gradient nabla_i V_j + nabla_j V_i, and the Lie derivative L_V form when a
    form is supplied).  V^j = g^{kl} (Gamma^j_{kl} - Gamma_ref^j_{kl}).
    """
    grid = g.grid
    n = grid.n
    if reference.grid != grid:
        raise GridMismatchError("reference metric lives on a different grid")
    if gamma is None:
        gamma = christoffel(g)
    gamma_ref = christoffel(reference) if reference_gamma is None else reference_gamma
    from . import kernels

    if kernels.ENABLED:
        plus, minus = kernels.neighbor_tables(grid.shape)
        v_up_f, sym_f = kernels.deturck_kernel(
            np.ascontiguousarray(gamma.reshape(-1, n, n, n)),
            np.ascontiguousarray(gamma_ref.reshape(-1, n, n, n)),
            g.entries.reshape(-1, n, n), g.inverse.reshape(-1, n, n),
            plus, minus, np.array([2.0 * h for h in grid.h]),
        )
        v_up = v_up_f.reshape(grid.shape + (n,))
        sym_grad = sym_f.reshape(grid.shape + (n, n))
    else:
        v_up = np.einsum("...kl,...jkl->...j", g.inverse, gamma - gamma_ref)
        v_cov = np.einsum("...ij,...j->...i", g.entries, v_up)
        grad_v = covariant_derivative(gamma, v_cov, grid)  # (*shape, i, j)
        sym_grad = grad_v + np.swapaxes(grad_v, -1, -2)
    vvec = np.moveaxis(v_up, -1, 0)
    lie = lie_derivative(vvec, form) if form is not None else None
    return vvec, sym_grad, lie


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

def cfl_limit(state, cfl_factor: float) -> float:
    """Diffusive step bound c * h_min^2 / (2 n lambda_max(g^{-1}))."""
    g = state.g if isinstance(state, EuclideanState) else state.ghat
    grid = g.grid
    lam_max = g.max_inverse_eigenvalue()
    return cfl_factor * min(grid.h) ** 2 / (2.0 * grid.n * lam_max)


def step(state, rhs_fn, dt: float, scheme: str = "rk4"):
    """One forward-Euler or classical RK4 update of all fields.

    The returned state re-runs the positive-definiteness check; intermediate
    stages skip it (they are not states of the flow).
    """
    a0 = state.arrays()
    if scheme == "euler":
        k1 = rhs_fn(state).arrays()
        new = [a + dt * k for a, k in zip(a0, k1)]
        return state.with_arrays(new, state.t + dt, check=True)
    if scheme != "rk4":
        raise ValueError(f"unknown scheme {scheme!r}")
    k1 = rhs_fn(state).arrays()
    s2 = state.with_arrays([a + 0.5 * dt * k for a, k in zip(a0, k1)], state.t + 0.5 * dt, check=False)
    k2 = rhs_fn(s2).arrays()
    s3 = state.with_arrays([a + 0.5 * dt * k for a, k in zip(a0, k2)], state.t + 0.5 * dt, check=False)
    k3 = rhs_fn(s3).arrays()
    s4 = state.with_arrays([a + dt * k for a, k in zip(a0, k3)], state.t + dt, check=False)
    k4 = rhs_fn(s4).arrays()
    new = [
        a + (dt / 6.0) * (x1 + 2.0 * x2 + 2.0 * x3 + x4)
        for a, x1, x2, x3, x4 in zip(a0, k1, k2, k3, k4)
    ]
    return state.with_arrays(new, state.t + dt, check=True)
