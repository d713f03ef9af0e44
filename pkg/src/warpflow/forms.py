"""Discrete differential forms on uniform periodic grids.

A degree-k form stores one real channel per strictly increasing multi-index
(i1 < ... < ik), channels-first: ``comps`` has shape (C(n,k), *grid.shape).
Evaluation at a permuted index is sign(permutation) times the canonical
channel, and repeated indices give zero.

Conventions:
  * The exterior derivative is built from centered periodic differences.
    Difference operators along distinct axes commute, so d(d a) vanishes to
    rounding on any input.
  * ``hodge_star(g, sigma, a)`` is the metric star normalized so that
    star(1) = dvol_g and star(dvol_g) = -sigma.  With sigma = -1 this is the
    plain Riemannian star.  With sigma = +1 the Lorentzian sign bookkeeping is
    emulated by an overall sign on degrees k with 2k > n; a real star on a
    positive-definite metric cannot also realize the Lorentzian double-star
    sign at the middle degree of an even-dimensional grid (see star_sign_law).
  * The codifferential carries the degree-dependent sign that makes it the
    exact adjoint of d for constant metrics on the periodic grid.

All operations are pure: inputs are never mutated and outputs are fresh
arrays, so inputs may be shared read-only across parallel workers.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .errors import DegreeMismatchError, GridMismatchError
from .grids import GridSpec, MetricField, ScalarField, centered_diff, check_same_grid


# ---------------------------------------------------------------------------
# multi-index combinatorics (cached per (n, k))
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def increasing_tuples(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All strictly increasing k-tuples from range(n), in lexicographic order."""
    return tuple(itertools.combinations(range(n), k))

@lru_cache(maxsize=None)
def channel_table(n: int, k: int) -> dict[tuple[int, ...], int]:
    return {idx: pos for pos, idx in enumerate(increasing_tuples(n, k))}

def num_channels(n: int, k: int) -> int:
    return math.comb(n, k)

def perm_sign(seq) -> int:
    """Sign of the permutation sorting ``seq`` (0 if entries repeat)."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign

def sort_index(idx) -> tuple[tuple[int, ...], int]:
    """Canonical (sorted tuple, sign); sign 0 when an index repeats."""
    s = perm_sign(idx)
    return tuple(sorted(idx)), s

@lru_cache(maxsize=None)
def wedge_plan(n: int, ka: int, kb: int) -> tuple[tuple[int, int, int, int], ...]:
    """(out_channel, a_channel, b_channel, sign) triples for a degree (ka, kb) wedge."""
    plan = []
    chan_a = channel_table(n, ka)
    chan_b = channel_table(n, kb)
    for out_pos, K in enumerate(increasing_tuples(n, ka + kb)):
        for a_positions in itertools.combinations(range(ka + kb), ka):
            I = tuple(K[p] for p in a_positions)
            J = tuple(K[p] for p in range(ka + kb) if p not in a_positions)
            sign = perm_sign(I + J)
            plan.append((out_pos, chan_a[I], chan_b[J], sign))
    return tuple(plan)

@lru_cache(maxsize=None)
def star_plan(n: int, k: int) -> tuple[tuple[int, int, int], ...]:
    """(out_channel, in_channel, sign) with sign the parity of (I, complement(I))."""
    chan_out = channel_table(n, n - k)
    plan = []
    for in_pos, I in enumerate(increasing_tuples(n, k)):
        J = tuple(i for i in range(n) if i not in I)
        plan.append((chan_out[J], in_pos, perm_sign(I + J)))
    return tuple(plan)

@lru_cache(maxsize=None)
def removal_plan(n: int, k: int) -> tuple[tuple[tuple[int, ...], tuple[tuple[int, int, int], ...]], ...]:
    """For each increasing (k-1)-tuple K: the list of (i, channel(sort(i,K)), sign)."""
    chan_k = channel_table(n, k)
    out = []
    for K in increasing_tuples(n, k - 1):
        entries = []
        for i in range(n):
            if i in K:
                continue
            full, sign = sort_index((i,) + K)
            entries.append((i, chan_k[full], sign))
        out.append((K, tuple(entries)))
    return tuple(out)


# ---------------------------------------------------------------------------
# the form type
# ---------------------------------------------------------------------------

class DifferentialForm:
    """Degree-k antisymmetric tensor field with increasing-index channel storage."""

    def __init__(self, grid: GridSpec, degree: int, comps: np.ndarray):
        if not 0 <= degree <= grid.n:
            raise DegreeMismatchError(f"degree {degree} out of range for n={grid.n}")
        comps = np.asarray(comps, dtype=np.float64)
        expected = (num_channels(grid.n, degree),) + grid.shape
        if comps.shape != expected:
            raise GridMismatchError(f"component shape {comps.shape}, expected {expected}")
        self.grid = grid
        self.degree = degree
        self.comps = comps

    @classmethod
    def zero(cls, grid: GridSpec, degree: int) -> "DifferentialForm":
        return cls(grid, degree, np.zeros((num_channels(grid.n, degree),) + grid.shape))

    @classmethod
    def from_channels(cls, grid: GridSpec, degree: int,
                      channels: dict[tuple[int, ...], np.ndarray]) -> "DifferentialForm":
        """Build from a sparse {increasing multi-index: grid array} mapping."""
        form = cls.zero(grid, degree)
        table = channel_table(grid.n, degree)
        for idx, values in channels.items():
            key, sign = sort_index(tuple(idx))
            if sign == 0:
                raise DegreeMismatchError(f"repeated index in {idx}")
            form.comps[table[key]] += sign * np.broadcast_to(values, grid.shape)
        return form

    def component(self, idx) -> np.ndarray:
        """Component at an arbitrary (possibly unsorted) multi-index."""
        key, sign = sort_index(tuple(idx))
        if sign == 0:
            return np.zeros(self.grid.shape)
        return sign * self.comps[channel_table(self.grid.n, self.degree)[key]]

    @property
    def channel_indices(self) -> tuple[tuple[int, ...], ...]:
        return increasing_tuples(self.grid.n, self.degree)

    def sup(self) -> float:
        if self.comps.size == 0:
            return 0.0
        return float(np.max(np.abs(self.comps)))

    def copy(self) -> "DifferentialForm":
        return DifferentialForm(self.grid, self.degree, self.comps.copy())

    # forms behave as a vector space; arithmetic keeps tests and RHS code terse
    def __add__(self, other: "DifferentialForm") -> "DifferentialForm":
        self._check_compatible(other)
        return DifferentialForm(self.grid, self.degree, self.comps + other.comps)

    def __sub__(self, other: "DifferentialForm") -> "DifferentialForm":
        self._check_compatible(other)
        return DifferentialForm(self.grid, self.degree, self.comps - other.comps)

    def __mul__(self, scalar) -> "DifferentialForm":
        if isinstance(scalar, ScalarField):
            return DifferentialForm(self.grid, self.degree, self.comps * scalar.values)
        if isinstance(scalar, np.ndarray):
            return DifferentialForm(self.grid, self.degree, self.comps * scalar)
        return DifferentialForm(self.grid, self.degree, self.comps * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "DifferentialForm":
        return DifferentialForm(self.grid, self.degree, -self.comps)

    def _check_compatible(self, other: "DifferentialForm") -> None:
        check_same_grid(self.grid, other.grid)
        if self.degree != other.degree:
            raise DegreeMismatchError(f"degree mismatch: {self.degree} vs {other.degree}")


# ---------------------------------------------------------------------------
# algebra
# ---------------------------------------------------------------------------

def wedge(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    """Pointwise exterior product with shuffle signs.

    When deg(a) + deg(b) exceeds the grid dimension the result is identically
    zero; the zero form of the clamped degree n is returned.
    """
    check_same_grid(a.grid, b.grid)
    n = a.grid.n
    k = a.degree + b.degree
    if k > n:
        return DifferentialForm.zero(a.grid, n)
    out = DifferentialForm.zero(a.grid, k)
    for out_ch, a_ch, b_ch, sign in wedge_plan(n, a.degree, b.degree):
        out.comps[out_ch] += sign * a.comps[a_ch] * b.comps[b_ch]
    return out


def _submatrix_dets(matrices: np.ndarray, rows: tuple[int, ...], cols: tuple[int, ...]) -> np.ndarray:
    """Determinants of a fixed submatrix across the grid.

    Batched LAPACK determinants are call-bound for the tiny sizes used here,
    so orders up to 4 expand the cofactor formulas directly.
    """
    k = len(rows)
    if k == 0:
        return np.ones(matrices.shape[:-2])
    if k == 1:
        return matrices[..., rows[0], cols[0]].copy()
    m = matrices[..., list(rows), :][..., :, list(cols)]
    if k == 2:
        return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    if k == 3:
        return (m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
                - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
                + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0]))
    if k == 4:
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
        return s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0
    return _det_recursive(m)


def _det_recursive(m: np.ndarray) -> np.ndarray:
    """First-row cofactor expansion down to the explicit order-4 formula."""
    k = m.shape[-1]
    if k <= 4:
        rows = tuple(range(k))
        return _submatrix_dets(m, rows, rows)
    total = np.zeros(m.shape[:-2])
    minor_rows = list(range(1, k))
    for j in range(k):
        cols = [c for c in range(k) if c != j]
        minor = m[..., minor_rows, :][..., :, cols]
        total += ((-1.0) ** j) * m[..., 0, j] * _det_recursive(minor)
    return total


def raise_all_indices(g: MetricField, a: DifferentialForm) -> np.ndarray:
    """Channel array of the form with every index raised by g^{-1}.

    The action on increasing-index channels is the k-th compound matrix of
    g^{-1}: sharp_J = sum_I a_I det(Ginv[I, J]).  Degrees 0, 1, 2, n-1 and n
    use closed forms of the compound (identity, g^{-1} itself, the 2x2 minor
    expansion, the adjugate identity, 1/det g); other degrees fall back to
    batched submatrix determinants.
    """
    n, k = g.grid.n, a.degree
    if k == 0:
        return a.comps.copy()
    ginv = g.inverse
    idx = increasing_tuples(n, k)
    if g.is_spatially_constant:
        g0 = ginv[(0,) * n]
        compound = np.array([[float(np.linalg.det(g0[np.ix_(I, J)])) for I in idx] for J in idx])
        flat = a.comps.reshape(len(idx), -1)
        return (compound @ flat).reshape(a.comps.shape)
    if k == 1:
        stacked = np.moveaxis(a.comps, 0, -1)[..., None]          # (*shape, n, 1)
        return np.moveaxis((ginv @ stacked)[..., 0], -1, 0)
    if k == n:
        return a.comps / g.det
    if k == n - 1:
        # det of the (n-1)-minor of g^{-1} removing row i / column j is the
        # cofactor (-1)^{i+j} g_{ji} / det g (adjugate identity)
        removed = [next(iter(set(range(n)) - set(I))) for I in idx]
        sharp = np.zeros_like(a.comps)
        for j_pos, j in enumerate(removed):
            acc = np.zeros(g.grid.shape)
            for i_pos, i in enumerate(removed):
                acc += a.comps[i_pos] * (((-1.0) ** (i + j)) * g.entries[..., j, i])
            sharp[j_pos] = acc / g.det
        return sharp
    if k == 2:
        sharp = np.zeros_like(a.comps)
        for j_pos, (c, d) in enumerate(idx):
            acc = np.zeros(g.grid.shape)
            for i_pos, (A, b) in enumerate(idx):
                minor = ginv[..., A, c] * ginv[..., b, d] - ginv[..., A, d] * ginv[..., b, c]
                acc += a.comps[i_pos] * minor
            sharp[j_pos] = acc
        return sharp
    sharp = np.zeros_like(a.comps)
    for j_pos, J in enumerate(idx):
        acc = np.zeros(g.grid.shape)
        for i_pos, I in enumerate(idx):
            acc += a.comps[i_pos] * _submatrix_dets(ginv, I, J)
        sharp[j_pos] = acc
    return sharp


def pointwise_inner(g: MetricField, a: DifferentialForm, b: DifferentialForm) -> np.ndarray:
    """<a, b>_g at every grid point (1/k! normalization folded in)."""
    a._check_compatible(b)
    check_same_grid(a.grid, g.grid)
    sharp = raise_all_indices(g, a)
    return np.einsum("c...,c...->...", sharp, b.comps)


def inner_product(g: MetricField, a: DifferentialForm, b: DifferentialForm) -> float:
    """Discrete L^2 pairing: Riemann sum of <a,b>_g with sqrt(det g) weights."""
    dens = pointwise_inner(g, a, b) * g.sqrt_det
    return float(np.sum(dens)) * a.grid.cell_volume


def form_norm_field(g: MetricField, a: DifferentialForm) -> np.ndarray:
    """Pointwise |a|_g (non-negative square root of the pointwise pairing)."""
    sq = pointwise_inner(g, a, a)
    return np.sqrt(np.maximum(sq, 0.0))


def _star_degree_sign(sigma: int, k: int, n: int) -> float:
    # sigma = -1: plain Riemannian star.  sigma = +1: flip degrees above the
    # middle so that star(1) = dvol, star(dvol) = -sigma, and the double-star
    # sign law holds on every degree with 2k != n.
    if sigma == -1 or 2 * k <= n:
        return 1.0
    return -1.0


def hodge_star(g: MetricField, sigma: int, a: DifferentialForm) -> DifferentialForm:
    """Metric Hodge dual of ``a``; see the module docstring for the sigma convention."""
    check_same_grid(g.grid, a.grid)
    n, k = g.grid.n, a.degree
    sharp = raise_all_indices(g, a)
    out = DifferentialForm.zero(g.grid, n - k)
    sqrt_det = g.sqrt_det
    tau = _star_degree_sign(sigma, k, n)
    for out_ch, in_ch, sign in star_plan(n, k):
        out.comps[out_ch] = (tau * sign) * sqrt_det * sharp[in_ch]
    return out


def volume_form(g: MetricField) -> DifferentialForm:
    out = DifferentialForm.zero(g.grid, g.grid.n)
    out.comps[0] = g.sqrt_det.copy()
    return out


def exterior_derivative(a: DifferentialForm) -> DifferentialForm:
    """Discrete d from centered periodic differences; d(d a) = 0 to rounding.

    For a top-degree input the zero top-degree form is returned.
    """
    n, k = a.grid.n, a.degree
    if k == n:
        return DifferentialForm.zero(a.grid, n)
    out = DifferentialForm.zero(a.grid, k + 1)
    chan_in = channel_table(n, k)
    for out_ch, K in enumerate(increasing_tuples(n, k + 1)):
        acc = out.comps[out_ch]
        for pos in range(k + 1):
            i = K[pos]
            rest = K[:pos] + K[pos + 1:]
            sign = (-1.0) ** pos
            acc += sign * centered_diff(a.comps[chan_in[rest]], a.grid, i, grid_axis_start=0)
    return out


def codifferential(g: MetricField, sigma: int, a: DifferentialForm) -> DifferentialForm:
    """Adjoint of d: sign-corrected star-d-star.

    The degree-dependent sign is fixed so that <d a, b> = <a, codifferential b>
    holds exactly (to rounding) for constant metrics on the periodic grid; the
    choice is validated by the adjointness tests rather than trusted.
    Degree-0 input returns the zero 0-form.
    """
    n, k = g.grid.n, a.degree
    if k == 0:
        return DifferentialForm.zero(g.grid, 0)
    sign = (-1.0) ** (n * (k + 1) + 1)
    sign *= _star_degree_sign(sigma, k, n) * _star_degree_sign(sigma, n - k + 1, n)
    return sign * hodge_star(g, sigma, exterior_derivative(hodge_star(g, sigma, a)))


def hodge_laplacian(g: MetricField, sigma: int, a: DifferentialForm) -> DifferentialForm:
    """Hodge Laplacian d d^+ + d^+ d (degree-guarded at the ends of the complex)."""
    k = a.degree
    out = DifferentialForm.zero(g.grid, k)
    if k >= 1:
        out = out + exterior_derivative(codifferential(g, sigma, a))
    if k < g.grid.n:
        out = out + codifferential(g, sigma, exterior_derivative(a))
    return out


def interior_product(vector: np.ndarray, a: DifferentialForm) -> DifferentialForm:
    """Contraction of the first slot with a vector field given as (n, *shape) channels."""
    n, k = a.grid.n, a.degree
    if k == 0:
        return DifferentialForm.zero(a.grid, 0)
    out = DifferentialForm.zero(a.grid, k - 1)
    for out_ch, (_, entries) in enumerate(removal_plan(n, k)):
        acc = out.comps[out_ch]
        for i, in_ch, sign in entries:
            acc += sign * vector[i] * a.comps[in_ch]
    return out


def lie_derivative(vector: np.ndarray, a: DifferentialForm) -> DifferentialForm:
    """Cartan formula d(i_V a) + i_V(d a); the second term dies on closed forms."""
    term1 = exterior_derivative(interior_product(vector, a))
    term2 = interior_product(vector, exterior_derivative(a))
    return term1 + term2


def form_square(g: MetricField, F: DifferentialForm) -> tuple[np.ndarray, ScalarField]:
    """The symmetric 2-tensor F^2_ij (one index each, rest contracted) and |F|^2.

    Degree-k normalization 1/(k-1)! for the tensor and 1/k! for the norm is
    folded into the increasing-index summation, so trace_g(F^2) = k |F|^2
    holds pointwise by construction.  Degree-0 input returns (0, F^2).
    """
    check_same_grid(g.grid, F.grid)
    n, k = g.grid.n, F.degree
    shape = g.grid.shape
    if k == 0:
        normsq = ScalarField(g.grid, F.comps[0] ** 2)
        return np.zeros(shape + (n, n)), normsq
    sharp = raise_all_indices(g, F)
    chan = channel_table(n, k)
    mixed = np.zeros(shape + (n, n))  # (F^2)_i^j before lowering
    for _, entries in removal_plan(n, k):
        for i, ch_i, sign_i in entries:
            for j, ch_j, sign_j in entries:
                mixed[..., i, j] += (sign_i * sign_j) * F.comps[ch_i] * sharp[ch_j]
    lowered = mixed @ g.entries
    fsq = 0.5 * (lowered + np.swapaxes(lowered, -1, -2))
    normsq_vals = np.einsum("c...,c...->...", F.comps, sharp)
    return fsq, ScalarField(g.grid, normsq_vals)


def closedness_residual(a: DifferentialForm) -> float:
    """sup-norm of d a (zero for top-degree forms by convention)."""
    return exterior_derivative(a).sup()


def star_sign_law(sigma: int, k: int, n: int) -> float:
    """Expected sign of star(star(a)) on degree-k forms: -sigma (-1)^{k(n-k)}.

    For sigma = +1 on a positive-definite grid metric the law is realizable on
    every degree except k = n/2 on even-dimensional grids, where any real star
    squares to +(-1)^{k(n-k)}.
    """
    return -sigma * (-1.0) ** (k * (n - k))
