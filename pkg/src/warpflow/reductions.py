"""Lifting reduced states to total-space blocks and consistency checks.

``total_space_flow_blocks`` evaluates the total-space system through the
warped-product block calculus: the metric equation through the warped Ricci
blocks and contracted form squares, the form equation through the star/d
chain.  Comparing it against the reduced right-hand side gives a residual
that vanishes to rounding on derivative-free states (the comparison is then
pure algebra) and at second order in h on smooth states (the two sides order
their discrete Leibniz expansions differently).

``beta_only_rhs`` and ``psi_only_rhs`` are independent transcriptions of the
single-flux warm-up systems, used to cross-check the general right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import (
    WarpedBlockForm,
    block_d,
    block_form,
    block_normsq,
    block_scale,
    block_square,
    block_star,
    block_wedge,
)
from .errors import DegreeMismatchError
from .flow import RIEMANNIAN, ReducedRhs, ReducedState, d_star_wedge, rhs_reduced
from .forms import DifferentialForm, form_square, hodge_laplacian, hodge_star, wedge, exterior_derivative
from .geometry import EinsteinFactor, christoffel, gradient, hessian_and_laplacian, ricci, warped_ricci_blocks
from .grids import MetricField, ScalarField


@dataclass
class BlockState:
    """A reduced state presented as total-space blocks.

    ``f`` is kept as the canonical field so lift/reduce round-trips are exact;
    the warp coefficient e^f is derived.
    """

    f: ScalarField
    base_metric: MetricField
    flux: WarpedBlockForm          # dvol_fiber ^ beta + psi
    factor: EinsteinFactor
    p: int
    sigma: int
    t: float = 0.0

    @property
    def fiber_coeff(self) -> ScalarField:
        return ScalarField(self.f.grid, np.exp(self.f.values))


def lift_state(state: ReducedState) -> BlockState:
    """Assemble the total-space blocks of a reduced state."""
    flux = block_form(state.factor, 4, vol=state.beta, base=state.psi, grid=state.grid)
    return BlockState(
        f=state.f,
        base_metric=state.ghat,
        flux=flux,
        factor=state.factor,
        p=state.p,
        sigma=state.sigma,
        t=state.t,
    )


def reduce_state(block: BlockState) -> ReducedState:
    """Inverse of ``lift_state``; exact round-trip by construction."""
    return ReducedState.build(
        ghat=block.base_metric,
        f=block.f,
        p=block.p,
        sigma=block.sigma,
        lambda_tilde=block.factor.lambda_tilde,
        beta=block.flux.vol,
        psi=block.flux.base,
        t=block.t,
    )


@dataclass
class TotalFlowBlocks:
    """Total-space flow right-hand side in block components."""

    dg_fiber_coeff: np.ndarray   # coefficient of the fiber Einstein metric
    dg_base: np.ndarray          # base-base block of dg/dt
    dflux_vol: DifferentialForm | None
    dflux_base: DifferentialForm | None


def total_space_flow_blocks(state: ReducedState) -> TotalFlowBlocks:
    """Evaluate the total-space system blockwise on a lifted state.

    The Laplacian term of the form equation uses the degree-4 codifferential
    of the total space, valid on closed flux; callers should hand in states
    with closed beta and psi (the flow preserves that).
    """
    ghat, f = state.ghat, state.f
    sigma = state.sigma
    factor = state.factor
    flux = block_form(factor, 4, vol=state.beta, base=state.psi, grid=state.grid)

    fsq_fiber, fsq_base, fnormsq = block_square(flux, f, ghat)
    ric_fiber, ric_base = warped_ricci_blocks(factor, f, ghat)
    ef = np.exp(f.values)

    dg_fiber = -2.0 * ric_fiber.values + fsq_fiber.values - (fnormsq / 3.0) * ef
    dg_base = -2.0 * ric_base + fsq_base - (fnormsq / 3.0)[..., None, None] * ghat.entries

    # -d d^+ F = sigma d star d star F on closed degree-4 flux
    chain = block_scale(block_d(block_star(block_d(block_star(flux, f, ghat)), f, ghat)), sigma)
    ff = block_wedge(flux, flux)
    forcing = block_scale(block_d(block_star(ff, f, ghat)), -0.5 * sigma)
    dflux = _block_add_optional(chain, forcing)
    return TotalFlowBlocks(dg_fiber, dg_base, dflux.vol, dflux.base)


def _block_add_optional(a: WarpedBlockForm, b: WarpedBlockForm) -> WarpedBlockForm:
    from .blocks import block_add

    return block_add(a, b)


def lift_consistency_check(state: ReducedState) -> dict[str, float]:
    """Per-block sup-norm discrepancy between the reduced and lifted flows."""
    reduced = rhs_reduced(state, gauge="none")
    total = total_space_flow_blocks(state)
    ef = np.exp(state.f.values)
    residuals = {
        "g_fiber": float(np.max(np.abs(ef * reduced.df - total.dg_fiber_coeff))),
        "g_base": float(np.max(np.abs(reduced.dghat - total.dg_base))),
    }
    if state.beta is not None:
        lhs = reduced.dbeta
        rhs = total.dflux_vol
        residuals["flux_vol"] = (lhs - rhs).sup() if rhs is not None else lhs.sup()
    if state.psi is not None:
        lhs = reduced.dpsi
        rhs = total.dflux_base
        residuals["flux_base"] = (lhs - rhs).sup() if rhs is not None else lhs.sup()
    return residuals


def lift_consistency_orders(make_state, shapes: list[int]) -> dict[str, list[float]]:
    """Run the lift check over a refinement ladder; returns residuals per block.

    ``make_state(shape)`` builds the same smooth state sampled on an
    (shape, ...) grid.  Convergence orders are log2 ratios of successive
    residuals.
    """
    residual_series: dict[str, list[float]] = {}
    for shape in shapes:
        res = lift_consistency_check(make_state(shape))
        for key, val in res.items():
            residual_series.setdefault(key, []).append(val)
    return residual_series


def convergence_orders(series: list[float], floor: float = 1e-13) -> list[float]:
    """log2 ratios of successive residuals; NaN where both sit at rounding level."""
    out = []
    for a, b in zip(series, series[1:]):
        if a <= floor and b <= floor:
            out.append(float("nan"))
        else:
            out.append(float(np.log2(a / max(b, 1e-300))))
    return out


# ---------------------------------------------------------------------------
# warm-up specializations, coded independently of the general system
# ---------------------------------------------------------------------------

def beta_only_rhs(state: ReducedState) -> ReducedRhs:
    """Reduced system specialized to flux = dvol ^ beta (psi = 0)."""
    if state.psi is not None and state.psi.sup() != 0.0:
        raise DegreeMismatchError("beta-only specialization needs psi = 0")
    ghat, f, beta = state.ghat, state.f, state.beta
    grid = state.grid
    n = grid.n
    p, q, sigma = state.p, state.p + 1, state.sigma
    lam = state.factor.lambda_tilde

    gamma = christoffel(ghat)
    ric = ricci(ghat, gamma)
    hess, lap, gradsq = hessian_and_laplacian(ghat, f, gamma)
    dfc = gradient(f)
    df_outer = np.einsum("i...,j...->...ij", dfc, dfc)
    exp_mqf = np.exp(-q * f.values)

    bsq_tensor, bsq_norm = form_square(ghat, beta)
    dghat = (-2.0 * ric + q * (hess + 0.5 * df_outer)
             - (sigma * exp_mqf)[..., None, None] * bsq_tensor
             + ((sigma / 3.0) * exp_mqf * bsq_norm.values)[..., None, None] * ghat.entries)
    df_rhs = (lap.values + 0.5 * q * gradsq.values
              - (2.0 / 3.0) * sigma * exp_mqf * bsq_norm.values
              - 2.0 * lam * np.exp(-f.values))
    dbeta = -1.0 * hodge_laplacian(ghat, RIEMANNIAN, beta)
    if beta.degree >= 1:
        df1 = DifferentialForm(grid, 1, dfc)
        dbeta = dbeta + ((-1.0) ** (p + 1)) * 0.5 * q * d_star_wedge(ghat, df1, beta)
    dpsi = DifferentialForm.zero(grid, 4) if state.psi is not None else None
    return ReducedRhs(dghat, df_rhs, dbeta, dpsi)


def psi_only_rhs(state: ReducedState) -> ReducedRhs:
    """Reduced system specialized to flux = psi (beta = 0).

    Valid only on bases of dimension <= 7: in higher dimension psi ^ psi
    sources the lost fiber components and closedness of the flux is not
    preserved, so the specialization is rejected.
    """
    n = state.grid.n
    if n > 7:
        raise DegreeMismatchError(
            "psi-only flux requires base dimension <= 7; "
            "psi ^ psi otherwise obstructs closedness along the flow"
        )
    if state.beta is not None and state.beta.sup() != 0.0:
        raise DegreeMismatchError("psi-only specialization needs beta = 0")
    ghat, f, psi = state.ghat, state.f, state.psi
    grid = state.grid
    p, q = state.p, state.p + 1
    lam = state.factor.lambda_tilde

    gamma = christoffel(ghat)
    ric = ricci(ghat, gamma)
    hess, lap, gradsq = hessian_and_laplacian(ghat, f, gamma)
    dfc = gradient(f)
    df_outer = np.einsum("i...,j...->...ij", dfc, dfc)

    psq_tensor, psq_norm = form_square(ghat, psi)
    dghat = (-2.0 * ric + q * (hess + 0.5 * df_outer) + psq_tensor
             - (psq_norm.values / 3.0)[..., None, None] * ghat.entries)
    df_rhs = (lap.values + 0.5 * q * gradsq.values
              - psq_norm.values / 3.0
              - 2.0 * lam * np.exp(-f.values))
    dpsi = -1.0 * hodge_laplacian(ghat, RIEMANNIAN, psi)
    df1 = DifferentialForm(grid, 1, dfc)
    dpsi = dpsi + ((-1.0) ** p) * 0.5 * q * d_star_wedge(ghat, df1, psi)
    dbeta = DifferentialForm.zero(grid, state.beta.degree) if state.beta is not None else None
    return ReducedRhs(dghat, df_rhs, dbeta, dpsi)


def specialization_check(state: ReducedState) -> dict[str, float]:
    """Discrepancy between the matching warm-up system and the general one.

    The state must have one of the flux blocks identically zero; the report
    carries the sup-norm difference per evolving channel.
    """
    psi_zero = state.psi is None or state.psi.sup() == 0.0
    beta_zero = state.beta is None or state.beta.sup() == 0.0
    if psi_zero and state.beta is not None:
        path = "beta_only"
    elif beta_zero and state.psi is not None:
        path = "psi_only"
    else:
        raise DegreeMismatchError("specialization check needs beta = 0 or psi = 0")
    general = rhs_reduced(state, gauge="none")
    special = beta_only_rhs(state) if path == "beta_only" else psi_only_rhs(state)
    report = {
        "path": path,
        "ghat": float(np.max(np.abs(general.dghat - special.dghat))),
        "f": float(np.max(np.abs(general.df - special.df))),
    }
    if general.dbeta is not None and special.dbeta is not None:
        report["beta"] = (general.dbeta - special.dbeta).sup()
    if general.dpsi is not None and special.dpsi is not None:
        report["psi"] = (general.dpsi - special.dpsi).sup()
    return report


# ---------------------------------------------------------------------------
# warped Hodge-star identity report
# ---------------------------------------------------------------------------

def warped_star_identity_report(state: ReducedState, oracle_points: int = 8,
                                seed: int = 0) -> dict[str, float]:
    """Residuals of the warped-product star/square identities on a state.

    Two kinds of checks are mixed:
      * algebraic identities (the star of the flux, its contracted squares,
        and the star of flux ^ flux) are checked pointwise against the dense
        total-space oracle on a sample of grid points - these vanish to
        rounding on any state;
      * derivative identities (the d star chains versus their product-rule
        expanded displays) differ by discrete-Leibniz terms and decay at
        second order under refinement, vanishing exactly on derivative-free
        states.
    """
    from .blocks import oracle_square, oracle_star, oracle_wedge, pointwise_total_form, sample_points
    from .forms import DifferentialForm as DF

    ghat, f = state.ghat, state.f
    grid = state.grid
    factor = state.factor
    sigma = state.sigma
    p = state.p
    q = p + 1
    flux = block_form(factor, 4, vol=state.beta, base=state.psi, grid=grid)
    sample = sample_points(grid, oracle_points, seed)
    report: dict[str, float] = {}

    def dense_gap(block, oracle):
        dense = pointwise_total_form(block, sample)
        if oracle.comps.size == 0 and dense.comps.size == 0:
            return 0.0
        return float(np.max(np.abs(dense.comps - oracle.comps)))

    star_flux = block_star(flux, f, ghat)
    report["star_flux_vs_oracle"] = dense_gap(star_flux, oracle_star(factor, f, ghat, flux, sample))

    fsq_fiber, fsq_base, fnorm = block_square(flux, f, ghat)
    sq_oracle, norm_oracle = oracle_square(factor, f, ghat, flux, sample)
    from .lorentz import lorentz_metric
    eta = lorentz_metric(q) if sigma == 1 else np.eye(q)
    report["flux_square_fiber_vs_oracle"] = float(
        np.max(np.abs(sq_oracle[..., :q, :q] - fsq_fiber.values[sample][..., None, None] * eta)))
    report["flux_square_base_vs_oracle"] = float(
        np.max(np.abs(sq_oracle[..., q:, q:] - fsq_base[sample])))
    report["flux_square_mixed_block"] = float(np.max(np.abs(sq_oracle[..., :q, q:])))
    report["flux_normsq_vs_oracle"] = float(np.max(np.abs(norm_oracle - fnorm[sample])))

    ff = block_wedge(flux, flux)
    report["flux_wedge_flux_vs_oracle"] = dense_gap(ff, oracle_wedge(flux, flux, sample))
    star_ff = block_star(ff, f, ghat)
    report["star_flux_wedge_vs_oracle"] = dense_gap(
        star_ff, oracle_star(factor, f, ghat, ff, sample))

    # derivative identities: chains versus product-rule expanded displays
    df1 = DF(grid, 1, np.stack([np.asarray(v) for v in _grad_channels(f)]))
    exp_p = np.exp(0.5 * q * f.values)
    exp_m = np.exp(-0.5 * q * f.values)
    chain = block_d(star_flux)

    def maybe_sup(a, b):
        if a is None and b is None:
            return 0.0
        if a is None:
            return b.sup()
        if b is None:
            return a.sup()
        return (a - b).sup()

    displayed_base = None
    if state.beta is not None:
        sb = hodge_star(ghat, RIEMANNIAN, state.beta)
        displayed_base = (sigma * 0.5 * q) * (wedge(df1, sb) * exp_m) \
            - sigma * (exterior_derivative(sb) * exp_m)
        if displayed_base.degree > grid.n:
            displayed_base = None
    displayed_vol = None
    if state.psi is not None:
        sp = hodge_star(ghat, RIEMANNIAN, state.psi)
        term = 0.5 * q * wedge(df1, sp) + exterior_derivative(sp)
        displayed_vol = ((-1.0) ** (p + 1)) * (term * exp_p)
    report["d_star_flux_base_vs_display"] = maybe_sup(chain.base, displayed_base)
    report["d_star_flux_vol_vs_display"] = maybe_sup(chain.vol, displayed_vol)

    chain2 = block_star(chain, f, ghat)
    disp2_base = None
    if state.psi is not None:
        sp = hodge_star(ghat, RIEMANNIAN, state.psi)
        disp2_base = (sigma * ((-1.0) ** p)) * (
            0.5 * q * hodge_star(ghat, RIEMANNIAN, wedge(df1, sp))
            + hodge_star(ghat, RIEMANNIAN, exterior_derivative(sp)))
    disp2_vol = None
    if state.beta is not None:
        sb = hodge_star(ghat, RIEMANNIAN, state.beta)
        disp2_vol = (-sigma) * hodge_star(ghat, RIEMANNIAN, exterior_derivative(sb)) \
            + (sigma * 0.5 * q) * hodge_star(ghat, RIEMANNIAN, wedge(df1, sb))
        if disp2_vol.degree != chain2.degree - q:
            disp2_vol = None
    report["star_d_star_flux_base_vs_display"] = maybe_sup(chain2.base, disp2_base)
    report["star_d_star_flux_vol_vs_display"] = maybe_sup(chain2.vol, disp2_vol)
    return report


def _grad_channels(f: ScalarField):
    from .geometry import gradient

    return gradient(f)
