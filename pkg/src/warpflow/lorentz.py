"""Antisymmetric forms over a single (possibly Lorentzian) vector space.

Unlike the grid forms, these live over one vector space with an arbitrary
non-degenerate symmetric metric, so they can represent the pointwise algebra
of an indefinite-signature ambient space.  Index raising through the inverse
metric supplies all signature signs; the star built this way obeys
star(1) = dvol, star(dvol) = sign(det), star(star) = sign(det) (-1)^{k(n-k)}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegreeMismatchError
from .forms import (
    channel_table,
    increasing_tuples,
    num_channels,
    perm_sign,
    sort_index,
    star_plan,
    wedge_plan,
)

MAX_ALGEBRA_DIM = 11


def lorentz_metric(dim: int) -> np.ndarray:
    """diag(-1, 1, ..., 1) with the timelike direction first."""
    eta = np.eye(dim)
    eta[0, 0] = -1.0
    return eta


@dataclass
class AlgebraForm:
    """Degree-j form on a ``dim``-dimensional vector space, increasing-index channels.

    ``comps`` may carry trailing axes (e.g. grid axes) so a field of pointwise
    algebra values is a single object.
    """

    dim: int
    degree: int
    comps: np.ndarray

    def __post_init__(self):
        if self.dim > MAX_ALGEBRA_DIM:
            raise DegreeMismatchError(f"algebra dimension {self.dim} exceeds {MAX_ALGEBRA_DIM}")
        if not 0 <= self.degree <= self.dim:
            raise DegreeMismatchError(f"degree {self.degree} out of range for dim {self.dim}")
        self.comps = np.asarray(self.comps, dtype=np.float64)
        c = num_channels(self.dim, self.degree)
        if self.comps.shape[:1] != (c,):
            raise DegreeMismatchError(f"expected {c} channels, got shape {self.comps.shape}")

    @classmethod
    def zero(cls, dim: int, degree: int, trailing: tuple[int, ...] = ()) -> "AlgebraForm":
        return cls(dim, degree, np.zeros((num_channels(dim, degree),) + trailing))

    @classmethod
    def volume(cls, dim: int, coefficient: float = 1.0) -> "AlgebraForm":
        out = cls.zero(dim, dim)
        out.comps[0] = coefficient
        return out

    @classmethod
    def from_channels(cls, dim: int, degree: int, channels: dict) -> "AlgebraForm":
        trailing = np.broadcast(*[np.asarray(v) for v in channels.values()]).shape if channels else ()
        out = cls.zero(dim, degree, tuple(trailing))
        table = channel_table(dim, degree)
        for idx, value in channels.items():
            key, sign = sort_index(tuple(idx))
            if sign == 0:
                raise DegreeMismatchError(f"repeated index in {idx}")
            out.comps[table[key]] += sign * np.asarray(value)
        return out

    def component(self, idx) -> np.ndarray:
        key, sign = sort_index(tuple(idx))
        if sign == 0:
            return np.zeros(self.comps.shape[1:])
        return sign * self.comps[channel_table(self.dim, self.degree)[key]]

    def sup(self) -> float:
        if self.comps.size == 0:
            return 0.0
        return float(np.max(np.abs(self.comps)))


def _raise_all(metric_inv: np.ndarray, a: AlgebraForm) -> np.ndarray:
    """Raise every index; ``metric_inv`` is (dim, dim) or (*trailing, dim, dim)."""
    if a.degree == 0:
        return a.comps.copy()
    idx = increasing_tuples(a.dim, a.degree)
    sharp = np.zeros_like(a.comps)
    for j_pos, J in enumerate(idx):
        acc = np.zeros(a.comps.shape[1:])
        for i_pos, I in enumerate(idx):
            sub = metric_inv[..., list(I), :][..., :, list(J)]
            acc = acc + a.comps[i_pos] * np.linalg.det(sub)
        sharp[j_pos] = acc
    return sharp


def algebra_inner(metric: np.ndarray, a: AlgebraForm, b: AlgebraForm) -> np.ndarray:
    if a.degree != b.degree or a.dim != b.dim:
        raise DegreeMismatchError("inner product needs equal degree and dimension")
    sharp = _raise_all(np.linalg.inv(metric), a)
    return np.einsum("c...,c...->...", sharp, b.comps)


def algebra_wedge(a: AlgebraForm, b: AlgebraForm) -> AlgebraForm:
    if a.dim != b.dim:
        raise DegreeMismatchError("wedge needs a common vector space")
    k = a.degree + b.degree
    if k > a.dim:
        return AlgebraForm.zero(a.dim, a.dim, a.comps.shape[1:])
    out = AlgebraForm.zero(a.dim, k, np.broadcast(a.comps[:1], b.comps[:1]).shape[1:])
    for out_ch, a_ch, b_ch, sign in wedge_plan(a.dim, a.degree, b.degree):
        out.comps[out_ch] = out.comps[out_ch] + sign * a.comps[a_ch] * b.comps[b_ch]
    return out


def algebra_star(metric: np.ndarray, a: AlgebraForm) -> AlgebraForm:
    """Hodge dual for an arbitrary non-degenerate metric (signs from raising)."""
    n = a.dim
    det = np.linalg.det(metric)
    weight = np.sqrt(np.abs(det))
    sharp = _raise_all(np.linalg.inv(metric), a)
    out = AlgebraForm.zero(n, n - a.degree, a.comps.shape[1:])
    for out_ch, in_ch, sign in star_plan(n, a.degree):
        out.comps[out_ch] = sign * weight * sharp[in_ch]
    return out


def algebra_square(metric: np.ndarray, a: AlgebraForm) -> tuple[np.ndarray, np.ndarray]:
    """(a^2)_{ab} = <i_a alpha, i_b alpha> as a dense matrix, plus |a|^2."""
    n, j = a.dim, a.degree
    trailing = a.comps.shape[1:]
    sharp = _raise_all(np.linalg.inv(metric), a)
    normsq = np.einsum("c...,c...->...", a.comps, sharp)
    square_mixed = np.zeros(trailing + (n, n))  # (a^2)_a{}^b
    if j >= 1:
        chan = channel_table(n, j)
        for K in increasing_tuples(n, j - 1):
            entries = []
            for i in range(n):
                if i in K:
                    continue
                full, sign = sort_index((i,) + K)
                entries.append((i, chan[full], sign))
            for ia, ch_a, sign_a in entries:
                for ib, ch_b, sign_b in entries:
                    square_mixed[..., ia, ib] += (sign_a * sign_b) * a.comps[ch_a] * sharp[ch_b]
    square = np.einsum("...am,...mb->...ab", square_mixed, np.broadcast_to(metric, trailing + (n, n)))
    square = 0.5 * (square + np.swapaxes(square, -1, -2))
    return square, normsq


def conformal_square_verdict(dim: int, alpha: AlgebraForm, tol: float = 1e-10) -> dict:
    """Classify whether alpha^2_{ab} is a constant multiple of the Lorentz metric.

    Returns ``conformal`` (alpha^2 = c eta within tol, c read off the 00
    component), the constant ``c``, and ``forced_trivial``: a nonzero middle
    degree form (0 < j < dim) that is conformal, which the classification of
    conformally-square forms on Lorentzian vector spaces rules out.
    """
    if alpha.dim != dim:
        raise DegreeMismatchError(f"form dimension {alpha.dim} != {dim}")
    eta = lorentz_metric(dim)
    square, _ = algebra_square(eta, alpha)
    c = float(square[0, 0] / eta[0, 0])
    residual = float(np.max(np.abs(square - c * eta)))
    scale = max(1.0, float(np.max(np.abs(square))))
    conformal = residual <= tol * scale
    nonzero = alpha.sup() > tol
    forced = bool(conformal and 0 < alpha.degree < dim and nonzero)
    return {
        "conformal": bool(conformal),
        "c": c,
        "residual": residual,
        "forced_trivial": forced,
    }
