"""Uniform periodic grids and the scalar/metric fields that live on them.

All fields are collocated: every quantity is sampled at the same grid points
x_i = (j + 0) * h_i, with periodic wrap-around.  Derivatives are centered
differences; pure second derivatives use the compact 3-point stencil so the
scalar Laplacian of a flat metric reduces to the classical (2n+1)-point
stencil.  Mixed partials are built once per unordered pair, which keeps
Hessians exactly symmetric in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import DegenerateMetricError, GridMismatchError

# Base dimensions supported on the grid.  Flow runs target n <= 4; larger n
# (up to 7) exists for derivative-free consistency checks, where the grids
# stay at the minimal 4 points per axis.
MAX_DIM = 7
MIN_POINTS_PER_AXIS = 4

# Default floor for the smallest metric eigenvalue.
EPS_POSDEF = 1e-10


@dataclass(frozen=True)
class GridSpec:
    """An n-torus sampled on a uniform grid: points per axis and axis periods."""

    shape: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "lengths", tuple(float(l) for l in self.lengths))
        n = len(self.shape)
        if not 1 <= n <= MAX_DIM:
            raise GridMismatchError(f"grid dimension must be in 1..{MAX_DIM}, got {n}")
        if len(self.lengths) != n:
            raise GridMismatchError("shape and lengths must have equal length")
        if any(s < MIN_POINTS_PER_AXIS for s in self.shape):
            raise GridMismatchError(
                f"every axis needs at least {MIN_POINTS_PER_AXIS} points, got {self.shape}"
            )
        if any(l <= 0 for l in self.lengths):
            raise GridMismatchError(f"axis periods must be positive, got {self.lengths}")

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(l / s for l, s in zip(self.lengths, self.shape))

    @property
    def num_points(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def coordinates(self) -> list[np.ndarray]:
        """Coordinate arrays of shape ``self.shape``, one per axis."""
        axes = [np.arange(s) * hi for s, hi in zip(self.shape, self.h)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(tuple(s * factor for s in self.shape), self.lengths)


def check_same_grid(a_grid: GridSpec, b_grid: GridSpec) -> None:
    if a_grid != b_grid:
        raise GridMismatchError(f"grid mismatch: {a_grid} vs {b_grid}")


def centered_diff(arr: np.ndarray, grid: GridSpec, axis: int, grid_axis_start: int = 0) -> np.ndarray:
    """Centered periodic first difference along grid axis ``axis``."""
    ax = grid_axis_start + axis
    h = grid.h[axis]
    return (np.roll(arr, -1, axis=ax) - np.roll(arr, 1, axis=ax)) / (2.0 * h)


def second_diff(arr: np.ndarray, grid: GridSpec, i: int, j: int, grid_axis_start: int = 0) -> np.ndarray:
    """Periodic second difference d^2/dx_i dx_j (compact stencil when i == j)."""
    if i == j:
        ax = grid_axis_start + i
        h = grid.h[i]
        return (np.roll(arr, -1, axis=ax) - 2.0 * arr + np.roll(arr, 1, axis=ax)) / (h * h)
    return centered_diff(centered_diff(arr, grid, j, grid_axis_start), grid, i, grid_axis_start)


class ScalarField:
    """A single real value per grid point."""

    def __init__(self, grid: GridSpec, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != grid.shape:
            raise GridMismatchError(
                f"scalar field shape {values.shape} does not match grid {grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("scalar field contains non-finite values")
        self.grid = grid
        self.values = values

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


class MetricField:
    """Symmetric positive-definite 2-tensor field, one n x n matrix per point.

    Symmetry is exact by storage (the constructor symmetrizes after verifying
    the input is symmetric to rounding); positive-definiteness is enforced via
    the smallest eigenvalue at every grid point.
    """

    def __init__(self, grid: GridSpec, entries: np.ndarray, eps_pd: float = EPS_POSDEF,
                 _skip_checks: bool = False):
        entries = np.asarray(entries, dtype=np.float64)
        n = grid.n
        if entries.shape != grid.shape + (n, n):
            raise GridMismatchError(
                f"metric entries shape {entries.shape} does not match grid {grid.shape} + ({n},{n})"
            )
        self.grid = grid
        self.eps_pd = eps_pd
        if _skip_checks:
            self.entries = entries
            return
        transposed = np.swapaxes(entries, -1, -2)
        scale = max(1.0, float(np.max(np.abs(entries))))
        if not np.allclose(entries, transposed, atol=1e-12 * scale, rtol=0.0):
            raise ValueError("metric entries are not symmetric")
        self.entries = 0.5 * (entries + transposed)
        self.check_positive_definite()

    @classmethod
    def flat(cls, grid: GridSpec, scale: float = 1.0) -> "MetricField":
        eye = np.broadcast_to(np.eye(grid.n) * scale, grid.shape + (grid.n, grid.n)).copy()
        return cls(grid, eye)

    def check_positive_definite(self) -> float:
        """Raise ``DegenerateMetricError`` at the first offending point.

        The check is equivalent to the smallest eigenvalue being at least
        eps_pd: the fast path attempts a Cholesky factorization of
        g - eps_pd * I, the fallback computes eigenvalues directly.  Returns
        the smallest eigenvalue (fallback) or eps_pd (fast path success).
        """
        n = self.grid.n
        if kernels.ENABLED and np.all(np.isfinite(self.entries)):
            ok = kernels.min_pivot_shifted(self.entries.reshape(-1, n, n), self.eps_pd)
            if np.all(ok == 1.0):
                return self.eps_pd
            flat_bad = int(np.argmin(ok))
            bad = np.unravel_index(flat_bad, self.grid.shape)
            eigs = np.linalg.eigvalsh(self.entries.reshape(-1, n, n)[flat_bad])
            raise DegenerateMetricError(bad, float(eigs[0]))
        eigs = np.linalg.eigvalsh(self.entries)
        min_eigs = eigs[..., 0]
        min_val = float(np.min(min_eigs))
        if not np.isfinite(min_val) or min_val < self.eps_pd:
            bad = np.unravel_index(int(np.nanargmin(min_eigs)), self.grid.shape)
            raise DegenerateMetricError(bad, min_val)
        return min_val

    @cached_property
    def _inv_det(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.grid.n
        if kernels.ENABLED and n <= 4:
            inv, det = kernels.inv_det_kernel(self.entries.reshape(-1, n, n))
            return inv.reshape(self.entries.shape), det.reshape(self.grid.shape)
        return _inv_det_small(self.entries)

    @property
    def inverse(self) -> np.ndarray:
        return self._inv_det[0]

    @property
    def det(self) -> np.ndarray:
        return self._inv_det[1]

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(self.det)

    @cached_property
    def is_spatially_constant(self) -> bool:
        origin = self.entries[(0,) * self.grid.n]
        return bool(np.all(self.entries == origin))

    def max_inverse_eigenvalue(self) -> float:
        """Largest eigenvalue of g^{-1} over the grid (diffusion speed scale)."""
        eigs = np.linalg.eigvalsh(self.entries)
        return float(1.0 / np.min(eigs[..., 0]))

    def copy(self) -> "MetricField":
        return MetricField(self.grid, self.entries.copy(), self.eps_pd, _skip_checks=True)


def _inv_det_small(entries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched inverse and determinant; closed cofactor forms for n <= 3.

    Batched LAPACK on tiny matrices is call-bound on one core; the explicit
    formulas are exact and an order of magnitude faster.  Larger n falls back
    to numpy.linalg.
    """
    n = entries.shape[-1]
    a = entries
    if n == 1:
        det = a[..., 0, 0]
        inv = (1.0 / det)[..., None, None]
        return inv, det
    if n == 2:
        det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        inv = np.empty_like(a)
        inv[..., 0, 0] = a[..., 1, 1]
        inv[..., 1, 1] = a[..., 0, 0]
        inv[..., 0, 1] = -a[..., 0, 1]
        inv[..., 1, 0] = -a[..., 1, 0]
        inv /= det[..., None, None]
        return inv, det
    if n == 3:
        c00 = a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1]
        c01 = a[..., 1, 2] * a[..., 2, 0] - a[..., 1, 0] * a[..., 2, 2]
        c02 = a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]
        det = a[..., 0, 0] * c00 + a[..., 0, 1] * c01 + a[..., 0, 2] * c02
        inv = np.empty_like(a)
        inv[..., 0, 0] = c00
        inv[..., 1, 0] = c01
        inv[..., 2, 0] = c02
        inv[..., 0, 1] = a[..., 0, 2] * a[..., 2, 1] - a[..., 0, 1] * a[..., 2, 2]
        inv[..., 1, 1] = a[..., 0, 0] * a[..., 2, 2] - a[..., 0, 2] * a[..., 2, 0]
        inv[..., 2, 1] = a[..., 0, 1] * a[..., 2, 0] - a[..., 0, 0] * a[..., 2, 1]
        inv[..., 0, 2] = a[..., 0, 1] * a[..., 1, 2] - a[..., 0, 2] * a[..., 1, 1]
        inv[..., 1, 2] = a[..., 0, 2] * a[..., 1, 0] - a[..., 0, 0] * a[..., 1, 2]
        inv[..., 2, 2] = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        inv /= det[..., None, None]
        return inv, det
    if n == 4:
        # block inversion via two Schur complements would still branch; a
        # cofactor expansion stays fully vectorized
        m = a
        s0 = m[..., 0, 0] * m[..., 1, 1] - m[..., 1, 0] * m[..., 0, 1]
        s1 = m[..., 0, 0] * m[..., 1, 2] - m[..., 1, 0] * m[..., 0, 2]
        s2 = m[..., 0, 0] * m[..., 1, 3] - m[..., 1, 0] * m[..., 0, 3]
        s3 = m[..., 0, 1] * m[..., 1, 2] - m[..., 1, 1] * m[..., 0, 2]
        s4 = m[..., 0, 1] * m[..., 1, 3] - m[..., 1, 1] * m[..., 0, 3]
        s5 = m[..., 0, 2] * m[..., 1, 3] - m[..., 1, 2] * m[..., 0, 3]
        c5 = m[..., 2, 2] * m[..., 3, 3] - m[..., 3, 2] * m[..., 2, 3]
        c4 = m[..., 2, 1] * m[..., 3, 3] - m[..., 3, 1] * m[..., 2, 3]
        c3 = m[..., 2, 1] * m[..., 3, 2] - m[..., 3, 1] * m[..., 2, 2]
        c2 = m[..., 2, 0] * m[..., 3, 3] - m[..., 3, 0] * m[..., 2, 3]
        c1 = m[..., 2, 0] * m[..., 3, 2] - m[..., 3, 0] * m[..., 2, 2]
        c0 = m[..., 2, 0] * m[..., 3, 1] - m[..., 3, 0] * m[..., 2, 1]
        det = s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0
        inv = np.empty_like(m)
        inv[..., 0, 0] = m[..., 1, 1] * c5 - m[..., 1, 2] * c4 + m[..., 1, 3] * c3
        inv[..., 0, 1] = -m[..., 0, 1] * c5 + m[..., 0, 2] * c4 - m[..., 0, 3] * c3
        inv[..., 0, 2] = m[..., 3, 1] * s5 - m[..., 3, 2] * s4 + m[..., 3, 3] * s3
        inv[..., 0, 3] = -m[..., 2, 1] * s5 + m[..., 2, 2] * s4 - m[..., 2, 3] * s3
        inv[..., 1, 0] = -m[..., 1, 0] * c5 + m[..., 1, 2] * c2 - m[..., 1, 3] * c1
        inv[..., 1, 1] = m[..., 0, 0] * c5 - m[..., 0, 2] * c2 + m[..., 0, 3] * c1
        inv[..., 1, 2] = -m[..., 3, 0] * s5 + m[..., 3, 2] * s2 - m[..., 3, 3] * s1
        inv[..., 1, 3] = m[..., 2, 0] * s5 - m[..., 2, 2] * s2 + m[..., 2, 3] * s1
        inv[..., 2, 0] = m[..., 1, 0] * c4 - m[..., 1, 1] * c2 + m[..., 1, 3] * c0
        inv[..., 2, 1] = -m[..., 0, 0] * c4 + m[..., 0, 1] * c2 - m[..., 0, 3] * c0
        inv[..., 2, 2] = m[..., 3, 0] * s4 - m[..., 3, 1] * s2 + m[..., 3, 3] * s0
        inv[..., 2, 3] = -m[..., 2, 0] * s4 + m[..., 2, 1] * s2 - m[..., 2, 3] * s0
        inv[..., 3, 0] = -m[..., 1, 0] * c3 + m[..., 1, 1] * c1 - m[..., 1, 2] * c0
        inv[..., 3, 1] = m[..., 0, 0] * c3 - m[..., 0, 1] * c1 + m[..., 0, 2] * c0
        inv[..., 3, 2] = -m[..., 3, 0] * s3 + m[..., 3, 1] * s1 - m[..., 3, 2] * s0
        inv[..., 3, 3] = m[..., 2, 0] * s3 - m[..., 2, 1] * s1 + m[..., 2, 2] * s0
        inv /= det[..., None, None]
        return inv, det
    return np.linalg.inv(entries), np.linalg.det(entries)
