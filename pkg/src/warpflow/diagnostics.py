"""Residuals, monitored quantities, Shi-type estimates, action evaluation.

Everything here is a pure evaluator over immutable states: recomputing any
quantity from a checkpoint reproduces the streamed value exactly, which the
tests assert.  Estimate constants (A, A0, A1, A2, B, ...) are monitor knobs
defaulting to 1 and are configurable; they calibrate nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blocks import (
    block_codifferential,
    block_d,
    block_form,
    block_normsq,
    block_scale,
    block_square,
    block_star,
    block_wedge,
)
from .errors import DegreeMismatchError, PotentialMismatchError
from .flow import EuclideanState, ReducedState, RIEMANNIAN
from .forms import (
    DifferentialForm,
    codifferential,
    exterior_derivative,
    form_norm_field,
    form_square,
    hodge_star,
    pointwise_inner,
    wedge,
)
from .geometry import (
    christoffel,
    covariant_derivative,
    gradient,
    hessian_and_laplacian,
    ricci,
    riemann_lowered,
    riemann_norm,
    tensor_norm_field,
    warped_ricci_blocks,
)
from .grids import MetricField, ScalarField


@dataclass
class ShiConstants:
    """Undetermined estimate constants; all default to 1 and are overridable."""

    A: float = 1.0
    A0: float = 1.0
    A1: float = 1.0
    A2: float = 1.0
    A3: float = 1.0
    B: float = 1.0
    B0: float = 1.0
    B1: float = 1.0
    B2: float = 1.0

    @classmethod
    def from_dict(cls, overrides: dict | None) -> "ShiConstants":
        return cls(**(overrides or {}))


SHI_ORDER_CAP = 3  # derivative orders above 3 are out of numerical reach on coarse grids


# ---------------------------------------------------------------------------
# field-equation residuals
# ---------------------------------------------------------------------------

@dataclass
class FieldEquationResidual:
    r1: DifferentialForm | None
    r2: np.ndarray
    r1_sup: float
    r2_sup: float


def field_equation_residual(g: MetricField, F: DifferentialForm, sigma: int) -> FieldEquationResidual:
    """Flux equation d star F - (1/2) F ^ F and Einstein-type equation residual.

    The quadratic term is degree-compatible with d star F only when
    n = 3 deg(F) - 1; otherwise it is identically zero or inapplicable and the
    flux residual is d star F alone.
    """
    n, k = g.grid.n, F.degree
    r1 = exterior_derivative(hodge_star(g, sigma, F))
    if n == 3 * k - 1 and 2 * k <= n:
        r1 = r1 - 0.5 * wedge(F, F)
    fsq, fnormsq = form_square(g, F)
    r2 = ricci(g) - 0.5 * fsq + (fnormsq.values / 6.0)[..., None, None] * g.entries
    return FieldEquationResidual(r1, r2, r1.sup(), float(np.max(np.abs(r2))))


def field_equation_residual_reduced(state: ReducedState) -> dict:
    """Blockwise field-equation residuals of a reduced state."""
    ghat, f = state.ghat, state.f
    factor = state.factor
    flux = block_form(factor, 4, vol=state.beta, base=state.psi, grid=state.grid)
    d_star_f = block_d(block_star(flux, f, ghat))
    ff = block_wedge(flux, flux)
    r1 = _block_sub(d_star_f, block_scale(ff, 0.5))
    fsq_fiber, fsq_base, fnormsq = block_square(flux, f, ghat)
    ric_fiber, ric_base = warped_ricci_blocks(factor, f, ghat)
    ef = np.exp(f.values)
    r2_fiber = ric_fiber.values - 0.5 * fsq_fiber.values + fnormsq * ef / 6.0
    r2_base = ric_base - 0.5 * fsq_base + (fnormsq / 6.0)[..., None, None] * ghat.entries
    return {
        "r1_sup": r1.sup(),
        "r2_fiber_sup": float(np.max(np.abs(r2_fiber))),
        "r2_base_sup": float(np.max(np.abs(r2_base))),
        "r2_sup": max(float(np.max(np.abs(r2_fiber))), float(np.max(np.abs(r2_base)))),
    }


def _block_sub(a, b):
    from .blocks import block_add

    return block_add(a, block_scale(b, -1.0))


# ---------------------------------------------------------------------------
# the closure-obstruction form: star d star F - (1/2) star (F ^ F)
# ---------------------------------------------------------------------------

def stationarity_obstruction_check(g: MetricField, F: DifferentialForm, sigma: int,
                                   tol: float = 1e-8) -> dict:
    """Closed/co-closedness of the obstruction form at candidate stationary points.

    At a stationary point of the flow this form is both closed and co-closed;
    if it is additionally nonzero, the stationary point may fail the actual
    field equations (a harmonic obstruction), which the flag reports.
    """
    n, k = g.grid.n, F.degree
    alpha = hodge_star(g, sigma, exterior_derivative(hodge_star(g, sigma, F)))
    if n == 3 * k - 1 and 2 * k <= n:
        alpha = alpha - 0.5 * hodge_star(g, sigma, wedge(F, F))
    d_sup = exterior_derivative(alpha).sup()
    codiff_sup = codifferential(g, sigma, alpha).sup() if alpha.degree >= 1 else 0.0
    alpha_sup = alpha.sup()
    return {
        "alpha_sup": alpha_sup,
        "d_alpha_sup": d_sup,
        "codiff_alpha_sup": codiff_sup,
        "harmonic_obstruction": bool(alpha_sup > tol and d_sup <= tol and codiff_sup <= tol),
    }


def stationarity_obstruction_check_reduced(state: ReducedState, tol: float = 1e-8) -> dict:
    """Blockwise obstruction-form check for reduced states."""
    ghat, f = state.ghat, state.f
    flux = block_form(state.factor, 4, vol=state.beta, base=state.psi, grid=state.grid)
    alpha = block_star(block_d(block_star(flux, f, ghat)), f, ghat)
    ff = block_wedge(flux, flux)
    alpha = _block_sub(alpha, block_scale(block_star(ff, f, ghat), 0.5))
    d_sup = block_d(alpha).sup()
    codiff_sup = block_codifferential(alpha, f, ghat).sup()
    alpha_sup = alpha.sup()
    return {
        "alpha_sup": alpha_sup,
        "d_alpha_sup": d_sup,
        "codiff_alpha_sup": codiff_sup,
        "harmonic_obstruction": bool(alpha_sup > tol and d_sup <= tol and codiff_sup <= tol),
    }


# ---------------------------------------------------------------------------
# Shi-type smoothing monitors
# ---------------------------------------------------------------------------

def _dense_form(a: DifferentialForm) -> np.ndarray:
    """Expand increasing-index channels to the dense antisymmetric tensor."""
    import itertools as _it

    n, k = a.grid.n, a.degree
    out = np.zeros(a.grid.shape + (n,) * k)
    if k == 0:
        return a.comps[0].copy()
    for pos, idx in enumerate(a.channel_indices):
        for perm in _it.permutations(range(k)):
            target = tuple(idx[p] for p in perm)
            out[(...,) + target] = _perm_parity(perm) * a.comps[pos]
    return out


def _perm_parity(perm) -> float:
    sign = 1.0
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def _derivative_norms(g: MetricField, dense: np.ndarray, orders: int, form_degree: int,
                      gamma: np.ndarray) -> list[np.ndarray]:
    """[|T|, |grad T|, ..., |grad^orders T|] pointwise for a dense tensor field."""
    out = [tensor_norm_field(g, dense, form_degree)]
    current = dense
    for _ in range(orders):
        current = covariant_derivative(gamma, current, g.grid)
        out.append(tensor_norm_field(g, current, form_degree))
    return out


def shi_quantities_euclidean(state: EuclideanState, constants: ShiConstants,
                             order: int = 1) -> dict:
    """t-weighted smoothing monitors of the total-space flow, pointwise-supremized."""
    order = min(order, SHI_ORDER_CAP)
    g, F, t = state.g, state.F, state.t
    gamma = christoffel(g)
    f_norms = _derivative_norms(g, _dense_form(F), order, F.degree, gamma)
    rm = riemann_lowered(g, gamma)
    rm_norms = _derivative_norms(g, rm, max(order - 1, 0), 0, gamma)
    fsq = f_norms[0] ** 2
    out = {"shi_order": order, "shi_order_cap": SHI_ORDER_CAP}
    g1 = t * ((fsq + constants.A) * f_norms[1] ** 2 + rm_norms[0] ** 2) + constants.A1 * fsq
    out["G1"] = float(np.max(g1))
    if order >= 2:
        g2 = (t ** 2 * (f_norms[2] ** 2 + rm_norms[1] ** 2)
              + constants.A1 * t * ((constants.A + fsq) * f_norms[1] ** 2 + rm_norms[0] ** 2)
              + constants.A2 * fsq)
        out["G2"] = float(np.max(g2))
    if order >= 3:
        g3 = (t ** 3 * (f_norms[3] ** 2 + rm_norms[2] ** 2)
              + constants.A2 * t ** 2 * (f_norms[2] ** 2 + rm_norms[1] ** 2)
              + constants.A1 * t * ((constants.A0 + fsq) * f_norms[1] ** 2 + rm_norms[0] ** 2)
              + constants.B * fsq)
        out["G3"] = float(np.max(g3))
    out["c0_ratio"] = _quartic_coupling_ratio(g, F, f_norms)
    return out


def _quartic_coupling_ratio(g: MetricField, F: DifferentialForm, f_norms) -> float:
    """Measured ratio |<F, d star(F^F)>| / (|grad F| |F|^2), reported not assumed."""
    n, k = g.grid.n, F.degree
    if not (2 * k <= n and n - 2 * k + 1 == k):
        return 0.0
    forcing = exterior_derivative(hodge_star(g, RIEMANNIAN, wedge(F, F)))
    numerator = np.abs(pointwise_inner(g, F, forcing))
    denominator = f_norms[1] * f_norms[0] ** 2
    mask = denominator > 1e-14
    if not np.any(mask):
        return 0.0
    return float(np.max(numerator[mask] / denominator[mask]))


def shi_quantities_reduced(state: ReducedState, constants: ShiConstants,
                           order: int = 1) -> dict:
    """Smoothing monitors of the reduced flow, pointwise-supremized.

    G0 carries the t-weighted first-order data plus A0 f^2; G1, G2, G3 stack
    the higher derivatives; H is the standard t-graded combination built from
    them at the configured order.
    """
    order = min(order, SHI_ORDER_CAP)
    ghat, f, t = state.ghat, state.f, state.t
    gamma = christoffel(ghat)
    # scalar ladder: |grad f|, |grad^2 f|, ..., |grad^{order+1} f|
    f_norms = _derivative_norms(ghat, f.values.copy(), order + 1, 0, gamma)
    beta_norms = psi_norms = None
    if state.beta is not None:
        beta_norms = _derivative_norms(ghat, _dense_form(state.beta), order, state.beta.degree, gamma)
    if state.psi is not None:
        psi_norms = _derivative_norms(ghat, _dense_form(state.psi), order, 4, gamma)
    rm = riemann_lowered(ghat, gamma)
    rm_norms = _derivative_norms(ghat, rm, max(order - 1, 0), 0, gamma)

    def flux_norm(norms, level):
        return norms[level] ** 2 if norms is not None else np.zeros(state.grid.shape)

    zeroth = f_norms[1] ** 2 + flux_norm(beta_norms, 0) + flux_norm(psi_norms, 0)
    g_fields = {}
    g_fields["G0"] = t * zeroth + constants.A0 * f.values ** 2
    if order >= 1:
        g_fields["G1"] = ((flux_norm(psi_norms, 0) + constants.A1) * flux_norm(psi_norms, 1)
                          + (flux_norm(beta_norms, 0) + constants.A2) * flux_norm(beta_norms, 1)
                          + rm_norms[0] ** 2 + f_norms[2] ** 2)
    if order >= 2:
        g_fields["G2"] = (rm_norms[1] ** 2 + f_norms[3] ** 2
                          + flux_norm(beta_norms, 2) + flux_norm(psi_norms, 2))
    if order >= 3:
        g_fields["G3"] = (rm_norms[2] ** 2 + f_norms[4] ** 2
                          + flux_norm(beta_norms, 3) + flux_norm(psi_norms, 3))
    out = {"shi_order": order, "shi_order_cap": SHI_ORDER_CAP}
    b_weights = {1: constants.B1, 2: constants.B2}
    if order >= 1:
        h_field = (t ** order) * g_fields[f"G{order}"] + constants.B0 * zeroth
        for i in range(1, order):
            h_field = h_field + b_weights.get(i, 1.0) * (t ** i) * g_fields[f"G{i}"]
        out["H"] = float(np.max(h_field))
    for key, values in g_fields.items():
        out[key] = float(np.max(values))
    return out


# ---------------------------------------------------------------------------
# action
# ---------------------------------------------------------------------------

def action(g: MetricField, F: DifferentialForm, sigma: int,
           potential: DifferentialForm | None = None) -> float:
    """Riemann-sum value of the total action density on a grid state.

    The Chern-Simons term is evaluated only when a potential with
    d(potential) = F (within 1e-8) is supplied and the triple wedge is
    degree-compatible; it vanishes identically whenever F ^ F does.
    Grid metrics are positive-definite, so the density weight requires the
    Riemannian convention sigma = -1.
    """
    if sigma != -1:
        raise DegreeMismatchError("the direct grid action requires the Riemannian convention")
    scal = np.einsum("...ij,...ij->...", g.inverse, ricci(g))
    _, fnormsq = form_square(g, F)
    density = (scal - 0.5 * fnormsq.values) * g.sqrt_det
    value = float(np.sum(density)) * g.grid.cell_volume
    if potential is not None:
        mismatch = (exterior_derivative(potential) - F).sup()
        if mismatch > 1e-8:
            raise PotentialMismatchError(
                f"d(potential) differs from F by {mismatch:.3e} (tolerance 1e-8)"
            )
        ff = wedge(F, F)
        cs = wedge(ff, potential)
        if cs.degree == g.grid.n and 2 * F.degree + potential.degree == g.grid.n:
            value += float(np.sum(cs.comps[0])) * g.grid.cell_volume / 6.0
    return value


def total_scalar_curvature(state: ReducedState) -> np.ndarray:
    """Scalar curvature of the warped product, as a base field."""
    q = state.p + 1
    lam = state.factor.lambda_tilde
    hess, lap, gradsq = hessian_and_laplacian(state.ghat, state.f)
    scal_base = np.einsum("...ij,...ij->...", state.ghat.inverse, ricci(state.ghat))
    return (q * lam * np.exp(-state.f.values) + scal_base
            - q * lap.values - 0.25 * q * (q + 1) * gradsq.values)


def action_reduced(state: ReducedState) -> float:
    """Action per unit fiber coordinate volume, blockwise.

    The warped volume weight is e^{q f / 2} sqrt(det ghat); the quadratic
    flux term uses the total-space norm of the flux blocks.
    """
    q = state.p + 1
    flux = block_form(state.factor, 4, vol=state.beta, base=state.psi, grid=state.grid)
    fnormsq = block_normsq(flux, state.f, state.ghat)
    density = (total_scalar_curvature(state) - 0.5 * fnormsq) \
        * np.exp(0.5 * q * state.f.values) * state.ghat.sqrt_det
    return float(np.sum(density)) * state.grid.cell_volume


def action_homogeneous(hstate) -> float:
    """Action of a homogeneous state per unit base and fiber coordinate volume."""
    q = hstate.p + 1
    n = hstate.n
    beta_sq, psi_sq = hstate.flux_norms()
    fnormsq = -hstate.sigma * math.exp(-q * hstate.f) * beta_sq + psi_sq
    scal = q * hstate.lambda_tilde * math.exp(-hstate.f) + n * hstate.kappa_hat / hstate.s
    weight = math.exp(0.5 * q * hstate.f) * hstate.s ** (n / 2.0)
    return (scal - 0.5 * fnormsq) * weight


# ---------------------------------------------------------------------------
# extremum (maximum-principle) monitor
# ---------------------------------------------------------------------------

def extremum_monitor(times: list[float], max_f: list[float], min_f: list[float],
                     dt: float, h_min: float) -> list[dict]:
    """Steps where max f rose or min f fell beyond the discretization allowance.

    The allowance is 10 (dt + h^2)(1 + sup|f|), sized to absorb scheme and
    stencil truncation on a flow whose continuum limit transports extrema
    monotonically.
    """
    sup_f = max(max(np.abs(max_f)), max(np.abs(min_f))) if max_f else 0.0
    tol = 10.0 * (dt + h_min ** 2) * (1.0 + sup_f)
    violations = []
    for k in range(1, len(times)):
        if max_f[k] > max_f[k - 1] + tol:
            violations.append({"step": k, "t": times[k], "kind": "max_increase",
                               "jump": max_f[k] - max_f[k - 1], "tol": tol})
        if min_f[k] < min_f[k - 1] - tol:
            violations.append({"step": k, "t": times[k], "kind": "min_decrease",
                               "jump": min_f[k - 1] - min_f[k], "tol": tol})
    return violations


# ---------------------------------------------------------------------------
# per-record assembly
# ---------------------------------------------------------------------------

def record_reduced(state: ReducedState, dt: float, step_index: int, rhs_sup: float,
                   constants: ShiConstants, shi_order: int = 1,
                   include_rm: bool = True) -> dict:
    """One diagnostics record for a reduced state (pure function of the state)."""
    ghat, f = state.ghat, state.f
    rec: dict = {"t": state.t, "step": step_index, "dt": dt}
    rec["sup_f"] = f.sup()
    rec["sup_grad_f"] = float(np.max(tensor_norm_field(ghat, gradient_dense(f), 0)))
    rec["sup_beta"] = float(np.max(form_norm_field(ghat, state.beta))) if state.beta is not None else None
    rec["sup_psi"] = float(np.max(form_norm_field(ghat, state.psi))) if state.psi is not None else None
    closed = state.closedness()
    rec["d_beta_sup"] = closed.get("d_beta")
    rec["d_psi_sup"] = closed.get("d_psi")
    if include_rm:
        rec["sup_rm"] = float(np.max(riemann_norm(ghat, riemann_lowered(ghat))))
        shi = shi_quantities_reduced(state, constants, shi_order)
        rec.update({k: shi[k] for k in shi})
        feq = field_equation_residual_reduced(state)
        rec.update(feq)
        alpha = stationarity_obstruction_check_reduced(state)
        rec["d_alpha_sup"] = alpha["d_alpha_sup"]
        rec["codiff_alpha_sup"] = alpha["codiff_alpha_sup"]
        rec["action"] = action_reduced(state)
    rec["rhs_sup"] = rhs_sup
    return rec


def gradient_dense(f: ScalarField) -> np.ndarray:
    """df as a dense (*, n) covariant field (norm plumbing for records)."""
    return np.moveaxis(gradient(f), 0, -1)


def record_euclidean(state: EuclideanState, sigma: int, dt: float, step_index: int,
                     rhs_sup: float, constants: ShiConstants, shi_order: int = 1,
                     include_rm: bool = True) -> dict:
    g, F = state.g, state.F
    rec: dict = {"t": state.t, "step": step_index, "dt": dt}
    rec["sup_F"] = float(np.max(form_norm_field(g, F)))
    rec["d_F_sup"] = state.closedness()
    if include_rm:
        rec["sup_rm"] = float(np.max(riemann_norm(g, riemann_lowered(g))))
        shi = shi_quantities_euclidean(state, constants, shi_order)
        rec.update(shi)
        gamma = christoffel(g)
        grad_f_dense = covariant_derivative(gamma, _dense_form(F), g.grid)
        rec["sup_grad_F"] = float(np.max(tensor_norm_field(g, grad_f_dense, F.degree)))
        res = field_equation_residual(g, F, sigma)
        rec["r1_sup"] = res.r1_sup
        rec["r2_sup"] = res.r2_sup
        alpha = stationarity_obstruction_check(g, F, sigma)
        rec["d_alpha_sup"] = alpha["d_alpha_sup"]
        rec["codiff_alpha_sup"] = alpha["codiff_alpha_sup"]
        if sigma == -1:
            rec["action"] = action(g, F, sigma)
    rec["rhs_sup"] = rhs_sup
    return rec
