"""Finite-difference Riemannian curvature and warped-product curvature blocks.

Christoffel symbols come from centered first differences of the metric;
Riemann is assembled from dGamma + Gamma*Gamma rather than from second metric
derivatives.  The raw assembly is exactly antisymmetric in its last index pair
and satisfies the first Bianchi identity to rounding; projecting out the
first-pair symmetric part and the pair-exchange antisymmetric part therefore
lands on an algebraic curvature tensor with all four classical symmetries at
machine precision, while changing the values only at discretization order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .grids import GridSpec, MetricField, ScalarField, centered_diff, second_diff


@dataclass(frozen=True)
class EinsteinFactor:
    """An abstract Einstein factor: dimension, signature type, Einstein constant.

    The factor is never realized on a grid; all of its geometry enters through
    the Einstein constant ``lambda_tilde`` (Ric = lambda_tilde * metric) and
    the signature flag.  ``sigma`` is +1 for a Lorentzian factor and -1 for a
    Riemannian one.
    """

    pdim: int              # dimension p + 1 of the factor
    sigma: int             # +1 Lorentzian, -1 Riemannian
    lambda_tilde: float    # Einstein constant, normally normalized to -1, 0, +1

    def __post_init__(self):
        if self.pdim < 1:
            raise ValueError(f"factor dimension must be >= 1, got {self.pdim}")
        if self.sigma not in (-1, 1):
            raise ValueError(f"sigma must be +1 or -1, got {self.sigma}")


@dataclass
class CurvatureBundle:
    """Christoffels, Riemann (all symmetries enforced), Ricci, scalar and |Rm|."""

    christoffels: np.ndarray   # (*shape, n, n, n), Gamma^a_{ij}
    riemann: np.ndarray        # (*shape, n, n, n, n), fully lowered
    ricci: np.ndarray          # (*shape, n, n)
    scalar: np.ndarray         # (*shape,)
    norm_rm: np.ndarray        # (*shape,), sqrt of the full contraction


def christoffel(g: MetricField) -> np.ndarray:
    """Gamma^a_{ij} = 1/2 g^{ad} (d_i g_{dj} + d_j g_{di} - d_d g_{ij})."""
    grid = g.grid
    n = grid.n
    if kernels.ENABLED:
        plus, minus = kernels.neighbor_tables(grid.shape)
        flat = kernels.christoffel_kernel(
            g.entries.reshape(-1, n, n), g.inverse.reshape(-1, n, n),
            plus, minus, np.array([0.5 / h for h in grid.h]),
        )
        return flat.reshape(grid.shape + (n, n, n))
    dg = np.stack([centered_diff(g.entries, grid, k) for k in range(n)], axis=-3)
    # dg[..., k, i, j] = partial_k g_{ij}; build d_i g_{dj} + d_j g_{di} - d_d g_{ij}
    lead = dg.ndim - 3
    term_a = np.transpose(dg, tuple(range(lead)) + (lead + 1, lead, lead + 2))
    term_b = np.transpose(dg, tuple(range(lead)) + (lead + 1, lead + 2, lead))
    sym = term_a + term_b - dg
    # batched matmul: Gamma^a_{ij} = 1/2 Ginv[a,d] sym[d, (ij)]
    flat = sym.reshape(grid.shape + (n, n * n))
    gam = 0.5 * (g.inverse @ flat)
    return gam.reshape(grid.shape + (n, n, n))


def ricci(g: MetricField, gamma: np.ndarray | None = None) -> np.ndarray:
    """Symmetrized Ricci tensor from the contracted coordinate formula."""
    grid = g.grid
    n = grid.n
    if gamma is None:
        gamma = christoffel(g)
    if kernels.ENABLED:
        plus, minus = kernels.neighbor_tables(grid.shape)
        flat = kernels.ricci_kernel(
            np.ascontiguousarray(gamma.reshape(-1, n, n, n)),
            plus, minus, np.array([0.5 / h for h in grid.h]),
        )
        return flat.reshape(grid.shape + (n, n))
    lead = gamma.ndim - 3
    trace_gamma = np.einsum("...kki->...i", gamma)  # Gamma^k_{ki}
    ric = np.zeros(grid.shape + (n, n))
    for k in range(n):
        ric += centered_diff(gamma[..., k, :, :], grid, k)
    for j in range(n):
        ric[..., :, j] -= centered_diff(trace_gamma, grid, j)
    # Gamma^p_{ji} Gamma^k_{pk}: contract the p-leg of Gamma against its trace
    ric += np.swapaxes(np.einsum("...pji,...p->...ji", gamma, trace_gamma), -1, -2)
    # Gamma^p_{ki} Gamma^k_{pj}: batched matmul over the paired (k, p) legs
    m1 = np.transpose(gamma, tuple(range(lead)) + (lead + 1, lead, lead + 2))  # [k, p, i]
    m1 = m1.reshape(grid.shape + (n * n, n))
    m2 = gamma.reshape(grid.shape + (n * n, n))                                 # [(k p), j]
    ric -= np.swapaxes(m1, -1, -2) @ m2
    return 0.5 * (ric + np.swapaxes(ric, -1, -2))


def riemann_lowered(g: MetricField, gamma: np.ndarray | None = None) -> np.ndarray:
    """Fully lowered Riemann tensor with all algebraic symmetries enforced.

    Assembly: R^l_{kij} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik}
                          + Gamma^l_{im} Gamma^m_{jk} - Gamma^l_{jm} Gamma^m_{ik},
    lowered with g, then projected onto first-pair antisymmetry and pair
    exchange.  The raw tensor is already antisymmetric in (i, j) and satisfies
    the first Bianchi identity to rounding, so the projection removes only the
    discretization-order symmetry defects without touching those identities.
    """
    grid = g.grid
    n = grid.n
    if gamma is None:
        gamma = christoffel(g)
    dgamma = np.stack([centered_diff(gamma, grid, i) for i in range(n)], axis=-4)
    # dgamma[..., i, l, j, k] = partial_i Gamma^l_{jk}
    lead = dgamma.ndim - 4
    head = tuple(range(lead))
    r_up = (np.transpose(dgamma, head + (lead + 1, lead + 3, lead, lead + 2))
            - np.transpose(dgamma, head + (lead + 1, lead + 3, lead + 2, lead)))
    # Gamma^l_{im} Gamma^m_{jk} - (i <-> j), via batched matmul over m
    a = np.transpose(gamma, head + (lead, lead + 2, lead + 1))
    a = a.reshape(grid.shape + (n * n, n))            # [(l i), m]
    b = gamma.reshape(grid.shape + (n, n * n))        # [m, (j k)]
    prod = (a @ b).reshape(grid.shape + (n, n, n, n))  # [l, i, j, k]
    head4 = tuple(range(lead))
    gg = np.transpose(prod, head4 + (lead, lead + 3, lead + 1, lead + 2))   # [l, k, i, j]
    gg -= np.transpose(prod, head4 + (lead, lead + 3, lead + 2, lead + 1))  # minus [l, k, j, i]
    r_up += gg
    rm = (g.entries @ r_up.reshape(grid.shape + (n, n * n * n))).reshape(grid.shape + (n,) * 4)
    rm = 0.5 * (rm - np.transpose(rm, head4 + (lead + 1, lead, lead + 2, lead + 3)))
    rm = 0.5 * (rm + np.transpose(rm, head4 + (lead + 2, lead + 3, lead, lead + 1)))
    return rm


def raise_slot(ginv: np.ndarray, tensor: np.ndarray, slot: int, grid_ndim: int) -> np.ndarray:
    """Raise one covariant slot of a dense tensor with g^{-1} (batched matmul)."""
    axis = grid_ndim + slot
    moved = np.moveaxis(tensor, axis, grid_ndim)
    shape = moved.shape
    flat = moved.reshape(shape[:grid_ndim + 1] + (-1,))
    raised = ginv @ flat
    return np.moveaxis(raised.reshape(shape), grid_ndim, axis)


def riemann_norm(g: MetricField, rm: np.ndarray) -> np.ndarray:
    """|Rm| from the full contraction R_{ijkl} R^{ijkl}."""
    grid_ndim = g.grid.n
    up = rm
    for slot in range(4):
        up = raise_slot(g.inverse, up, slot, grid_ndim)
    normsq = np.einsum("...ijkl,...ijkl->...", rm, up)
    return np.sqrt(np.maximum(normsq, 0.0))


def curvature_suite(g: MetricField) -> CurvatureBundle:
    """All curvature fields of a grid metric; second-order accurate in h."""
    gamma = christoffel(g)
    ric = ricci(g, gamma)
    rm = riemann_lowered(g, gamma)
    scalar = np.einsum("...ij,...ij->...", g.inverse, ric)
    return CurvatureBundle(
        christoffels=gamma,
        riemann=rm,
        ricci=ric,
        scalar=scalar,
        norm_rm=riemann_norm(g, rm),
    )


def gradient(f: ScalarField) -> np.ndarray:
    """df as (n, *shape) channels (also the components of the 1-form df)."""
    return np.stack([centered_diff(f.values, f.grid, i) for i in range(f.grid.n)], axis=0)


def hessian_and_laplacian(
    g: MetricField, f: ScalarField, gamma: np.ndarray | None = None
) -> tuple[np.ndarray, ScalarField, ScalarField]:
    """Covariant Hessian, metric Laplacian trace_g(hess), and |grad f|^2_g.

    The Hessian uses the compact stencil on the diagonal, so for a flat metric
    the Laplacian is the classical (2n+1)-point stencil exactly.
    """
    grid = g.grid
    n = grid.n
    if gamma is None:
        gamma = christoffel(g)
    if kernels.ENABLED:
        plus, minus = kernels.neighbor_tables(grid.shape)
        hess_f, lap_f, gradsq_f, _ = kernels.hessian_kernel(
            f.values.reshape(-1), np.ascontiguousarray(gamma.reshape(-1, n, n, n)),
            g.inverse.reshape(-1, n, n), plus, minus,
            np.array([2.0 * h for h in grid.h]), np.array([h * h for h in grid.h]),
        )
        return (hess_f.reshape(grid.shape + (n, n)),
                ScalarField(grid, lap_f.reshape(grid.shape)),
                ScalarField(grid, gradsq_f.reshape(grid.shape)))
    df = gradient(f)
    hess = np.zeros(grid.shape + (n, n))
    for i in range(n):
        hess[..., i, i] = second_diff(f.values, grid, i, i)
        for j in range(i + 1, n):
            mixed = second_diff(f.values, grid, i, j)
            hess[..., i, j] = mixed
            hess[..., j, i] = mixed
    hess -= np.einsum("...kij,k...->...ij", gamma, df)
    lap = np.einsum("...ij,...ij->...", g.inverse, hess)
    gradsq = np.einsum("...ij,i...,j...->...", g.inverse, df, df)
    return hess, ScalarField(grid, lap), ScalarField(grid, gradsq)


def warped_ricci_blocks(
    factor: EinsteinFactor, f: ScalarField, ghat: MetricField
) -> tuple[ScalarField, np.ndarray]:
    """Ricci blocks of the warped product e^f (Einstein factor) + base.

    Returns the scalar coefficient multiplying the factor metric in the
    factor-factor Ricci block, and the base-base Ricci block as a 2-tensor
    field.  The mixed Ricci block vanishes identically in this representation.
    """
    q = factor.pdim
    hess, lap, gradsq = hessian_and_laplacian(ghat, f)
    ef = np.exp(f.values)
    coeff = factor.lambda_tilde - 0.5 * ef * (lap.values + 0.5 * q * gradsq.values)
    df = gradient(f)
    ric_ij = ricci(ghat) - 0.5 * q * (hess + 0.5 * np.einsum("i...,j...->...ij", df, df))
    return ScalarField(ghat.grid, coeff), ric_ij


# ---------------------------------------------------------------------------
# covariant derivatives of dense tensors (Shi-type monitor plumbing)
# ---------------------------------------------------------------------------

def covariant_derivative(gamma: np.ndarray, tensor: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Covariant derivative of a fully covariant dense tensor field.

    ``tensor`` has shape (*grid.shape, n, ..., n) with r index axes; the result
    prepends the derivative index: nabla_p T_{i1..ir} at [..., p, i1, ..., ir].
    """
    n = grid.n
    r = tensor.ndim - n
    out = np.stack([centered_diff(tensor, grid, p) for p in range(n)], axis=n)
    letters = "abcdefg"[:r]
    for slot in range(r):
        contracted = list(letters)
        contracted[slot] = "q"
        out -= np.einsum(
            f"...qp{letters[slot]},...{''.join(contracted)}->...p{letters}",
            gamma, tensor, optimize=True,
        )
    return out


def tensor_norm_field(g: MetricField, tensor: np.ndarray, form_degree: int = 0) -> np.ndarray:
    """Pointwise norm of a dense covariant tensor, every slot raised with g^{-1}.

    ``form_degree`` counts trailing antisymmetric slots carrying the 1/k!
    form normalization; derivative slots are contracted without weights.
    """
    grid_ndim = g.grid.n
    r = tensor.ndim - grid_ndim
    if r == 0:
        return np.abs(tensor)
    up = tensor
    for slot in range(r):
        up = raise_slot(g.inverse, up, slot, grid_ndim)
    axes = tuple(range(grid_ndim, grid_ndim + r))
    normsq = np.sum(tensor * up, axis=axes) / math.factorial(form_degree)
    return np.sqrt(np.maximum(normsq, 0.0))
