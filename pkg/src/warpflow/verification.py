"""Shared property suites: discrete-calculus identities, the Lorentzian
conformal-square classification scan, lift consistency, and specialization
equivalence.  The CLI verify mode and the acceptance tests both run these.
"""

from __future__ import annotations

import numpy as np

from .forms import (
    DifferentialForm,
    codifferential,
    exterior_derivative,
    form_square,
    hodge_star,
    inner_product,
    num_channels,
    star_sign_law,
    volume_form,
    wedge,
)
from .flow import ReducedState
from .grids import GridSpec, MetricField, ScalarField
from .lorentz import AlgebraForm, conformal_square_verdict
from .reductions import (
    convergence_orders,
    lift_consistency_check,
    specialization_check,
)


class Check:
    """One named pass/fail with a measured value and its bound."""

    def __init__(self, name: str, value: float, bound: float, passed: bool | None = None):
        self.name = name
        self.value = value
        self.bound = bound
        self.passed = (value <= bound) if passed is None else passed

    def as_row(self) -> dict:
        return {"name": self.name, "value": self.value, "bound": self.bound,
                "passed": bool(self.passed)}


def random_form(rng, grid: GridSpec, degree: int, scale: float = 1.0) -> DifferentialForm:
    comps = scale * rng.standard_normal((num_channels(grid.n, degree),) + grid.shape)
    return DifferentialForm(grid, degree, comps)


def random_metric(rng, grid: GridSpec, amplitude: float = 0.1) -> MetricField:
    n = grid.n
    pert = amplitude * rng.standard_normal((n, n))
    entries = np.broadcast_to(np.eye(n) + 0.5 * (pert + pert.T), grid.shape + (n, n)).copy()
    x = grid.coordinates()[0]
    bump = amplitude * np.sin(2.0 * np.pi * x / grid.lengths[0])
    entries[..., 0, 0] += bump
    return MetricField(grid, entries)


def forms_identity_suite(seed: int = 0) -> list[Check]:
    """Calculus identities across dimensions 1..4 and every degree."""
    rng = np.random.default_rng(seed)
    checks: list[Check] = []
    dd_worst = 0.0
    starstar_worst = 0.0
    adjoint_worst = 0.0
    trace_worst = 0.0
    pairing_worst = 0.0
    for n in range(1, 5):
        grid = GridSpec((8,) * n, (1.0,) * n)
        flat = MetricField.flat(grid)
        curved = random_metric(rng, grid, 0.08)
        for k in range(0, n + 1):
            a = random_form(rng, grid, k)
            if k < n:
                dd = exterior_derivative(exterior_derivative(a)).sup()
                dd_worst = max(dd_worst, dd / max(a.sup(), 1e-30))
            for sigma in (-1, 1):
                if sigma == 1 and 2 * k == n:
                    continue  # no real star realizes the Lorentzian sign there
                ss = hodge_star(curved, sigma, hodge_star(curved, sigma, a))
                expected = star_sign_law(sigma, k, n)
                starstar_worst = max(
                    starstar_worst,
                    float(np.max(np.abs(ss.comps - expected * a.comps))) / max(a.sup(), 1e-30),
                )
            if k >= 1:
                b = random_form(rng, grid, k - 1)
                lhs = inner_product(flat, exterior_derivative(b), a)
                rhs = inner_product(flat, b, codifferential(flat, -1, a))
                adjoint_worst = max(adjoint_worst, abs(lhs - rhs))
            if k >= 1:
                fsq, normsq = form_square(curved, a)
                trace = np.einsum("...ij,...ij->...", curved.inverse, fsq)
                trace_worst = max(
                    trace_worst,
                    float(np.max(np.abs(trace - k * normsq.values))) / max(normsq.values.max(), 1e-30),
                )
            b2 = random_form(rng, grid, k)
            direct = inner_product(curved, a, b2)
            top = wedge(a, hodge_star(curved, -1, b2))
            via_wedge = float(np.sum(top.comps[0])) * grid.cell_volume if top.degree == n else 0.0
            pairing_worst = max(pairing_worst, abs(direct - via_wedge) / max(abs(direct), 1.0))
    checks.append(Check("d(d a) = 0 (relative)", dd_worst, 1e-13))
    checks.append(Check("double-star sign law (relative)", starstar_worst, 1e-12))
    checks.append(Check("flat adjointness <d a, b> - <a, d+ b>", adjoint_worst, 1e-12))
    checks.append(Check("trace of contracted square = k |a|^2", trace_worst, 1e-12))
    checks.append(Check("pairing <a,b> = integral a ^ star b", pairing_worst, 1e-12))

    # Cauchy-Schwarz: |F^2|^2 >= (k^2/n) |F|^4, 1000 random forms
    violations = 0
    worst_margin = np.inf
    cases = [(4, 4), (4, 2), (3, 2)]
    per_case = 1000 // len(cases) + 1
    for n, k in cases:
        grid = GridSpec((4,) * n, (1.0,) * n)
        for _ in range(per_case):
            g = random_metric(rng, grid, 0.15)
            F = random_form(rng, grid, k)
            fsq, normsq = form_square(g, F)
            ginv = g.inverse
            up = np.einsum("...ij,...ia,...jb->...ab", fsq, ginv, ginv)
            fsq_normsq = np.einsum("...ab,...ab->...", fsq, up)
            bound = (k * k / n) * normsq.values ** 2
            slack = fsq_normsq - bound
            tol = 1e-12 * np.maximum(1.0, np.abs(bound))
            if np.any(slack < -tol):
                violations += 1
            worst_margin = min(worst_margin, float(np.min(slack / np.maximum(bound, 1e-30))))
    checks.append(Check("contracted-square Cauchy-Schwarz violations", float(violations), 0.0))

    # basis sanity: star(dx) on the flat 3-torus, star(1), star(dvol)
    grid3 = GridSpec((4, 4, 4), (1.0, 1.0, 1.0))
    flat3 = MetricField.flat(grid3)
    dx = DifferentialForm.from_channels(grid3, 1, {(0,): np.ones(grid3.shape)})
    sdx = hodge_star(flat3, -1, dx)
    basis_err = float(np.max(np.abs(sdx.component((1, 2)) - 1.0)))
    checks.append(Check("star(dx) = dy ^ dz on the flat 3-torus", basis_err, 1e-15))
    for sigma in (-1, 1):
        sd = hodge_star(flat3, sigma, volume_form(flat3))
        checks.append(Check(f"star(dvol) = {-sigma} (sigma={sigma:+d})",
                            float(np.max(np.abs(sd.comps[0] - (-sigma)))), 1e-15))
    return checks


def conformal_square_suite(seed: int = 0, samples: int = 1000) -> list[Check]:
    """Randomized classification scan over middle-degree Lorentzian forms."""
    rng = np.random.default_rng(seed)
    checks = []
    for dim, degree in ((3, 1), (3, 2), (4, 2)):
        conformal_hits = 0
        forced = 0
        for _ in range(samples):
            comps = rng.standard_normal(num_channels(dim, degree))
            verdict = conformal_square_verdict(dim, AlgebraForm(dim, degree, comps))
            conformal_hits += int(verdict["conformal"])
            forced += int(verdict["forced_trivial"])
        checks.append(Check(f"nonzero conformal-square {degree}-forms in dim {dim} "
                            f"({samples} samples)", float(conformal_hits), 0.0))
        checks.append(Check(f"forced-trivial flags in dim {dim}, degree {degree}",
                            float(forced), 0.0))
    vol = conformal_square_verdict(4, AlgebraForm.volume(4, 2.5))
    checks.append(Check("volume form classified conformal",
                        0.0 if vol["conformal"] else 1.0, 0.0))
    const = conformal_square_verdict(4, AlgebraForm.zero(4, 0))
    checks.append(Check("constant form classified conformal",
                        0.0 if const["conformal"] else 1.0, 0.0))
    return checks


def _constant_reduced_state(rng, p: int, sigma: int, lam: float = -1.0) -> ReducedState:
    n = 10 - p
    grid = GridSpec((4,) * n, (1.0,) * n)
    pert = 0.08 * rng.standard_normal((n, n))
    entries = np.broadcast_to(np.eye(n) + 0.5 * (pert + pert.T), grid.shape + (n, n)).copy()
    ghat = MetricField(grid, entries)
    f = ScalarField.constant(grid, float(rng.uniform(-0.3, 0.3)))
    beta = psi = None
    if p <= 3:
        kb = 3 - p
        values = rng.standard_normal(num_channels(n, kb))
        comps = np.broadcast_to(values[(...,) + (None,) * n],
                                (num_channels(n, kb),) + grid.shape).copy()
        beta = DifferentialForm(grid, kb, comps)
    if n >= 4:
        values = rng.standard_normal(num_channels(n, 4))
        comps = np.broadcast_to(values[(...,) + (None,) * n],
                                (num_channels(n, 4),) + grid.shape).copy()
        psi = DifferentialForm(grid, 4, comps)
    return ReducedState.build(ghat, f, p, sigma, lam, beta=beta, psi=psi)


def smooth_reduced_state(shape_xy: int, sigma: int = -1, amp: float = 0.05) -> ReducedState:
    """A p=6 state varying along two axes only (thin grid for refinement runs)."""
    p, n = 6, 4
    grid = GridSpec((shape_xy, shape_xy, 4, 4), (1.0,) * 4)
    x, y = grid.coordinates()[:2]
    entries = np.zeros(grid.shape + (n, n)) + np.eye(n)
    entries[..., 0, 0] += amp * np.sin(2 * np.pi * y)
    entries[..., 0, 1] += 0.5 * amp * np.sin(2 * np.pi * x)
    entries[..., 1, 0] = entries[..., 0, 1]
    ghat = MetricField(grid, entries)
    f = ScalarField(grid, amp * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y))
    psi = DifferentialForm.from_channels(
        grid, 4, {(0, 1, 2, 3): 0.5 + amp * np.sin(2 * np.pi * (x + y))})
    return ReducedState.build(ghat, f, p, sigma, -1.0, psi=psi)


def lift_suite(seed: int = 0, shapes: tuple[int, ...] = (16, 32, 64)) -> list[Check]:
    """Derivative-free exactness plus smooth-state refinement orders."""
    rng = np.random.default_rng(seed)
    checks = []
    worst = 0.0
    for p in (3, 6, 7):
        for sigma in (1, -1):
            res = lift_consistency_check(_constant_reduced_state(rng, p, sigma))
            worst = max(worst, max(res.values()))
    checks.append(Check("lift consistency, derivative-free states (p in {3,6,7}, both sigma)",
                        worst, 1e-12))
    series: list[float] = []
    for shape in shapes:
        res = lift_consistency_check(smooth_reduced_state(shape))
        series.append(max(v for k, v in res.items() if k.startswith("flux")))
    orders = convergence_orders(series)
    mean_order = float(np.mean(orders))
    checks.append(Check("lift consistency smooth refinement order (target 2.0 +- 0.2)",
                        abs(mean_order - 2.0), 0.2))
    checks[-1].order_series = (series, orders)
    return checks


def random_smooth_state(rng, p: int, sigma: int, shape: int, psi_zero: bool = False,
                        beta_zero: bool = False) -> ReducedState:
    n = 10 - p
    grid = GridSpec((shape,) * n, (1.0,) * n)
    pert = 0.05 * rng.standard_normal((n, n))
    entries = np.broadcast_to(np.eye(n) + 0.5 * (pert + pert.T), grid.shape + (n, n)).copy()
    xs = grid.coordinates()
    entries[..., 0, 0] += 0.05 * np.sin(2 * np.pi * xs[min(1, n - 1)])
    ghat = MetricField(grid, entries)
    f = ScalarField(grid, 0.2 * np.sin(2 * np.pi * xs[0]))
    beta = psi = None
    if p <= 3 and not beta_zero:
        kb = 3 - p
        beta = DifferentialForm(grid, kb,
                                0.3 * rng.standard_normal((num_channels(n, kb),) + grid.shape))
    if n >= 4 and not psi_zero:
        psi = DifferentialForm(grid, 4,
                               0.3 * rng.standard_normal((num_channels(n, 4),) + grid.shape))
    return ReducedState.build(ghat, f, p, sigma, -1.0, beta=beta, psi=psi)


def specialization_suite(seed: int = 0, samples: int = 100) -> list[Check]:
    """Warm-up systems versus the general right-hand side on random states."""
    rng = np.random.default_rng(seed)
    worst_beta = 0.0
    worst_psi = 0.0
    for i in range(samples):
        sigma = 1 if i % 2 == 0 else -1
        st = random_smooth_state(rng, 3, sigma, 4, psi_zero=True)
        rep = specialization_check(st)
        worst_beta = max(worst_beta, max(v for k, v in rep.items() if k != "path"))
        st = random_smooth_state(rng, 6, sigma, 5, beta_zero=True)
        rep = specialization_check(st)
        worst_psi = max(worst_psi, max(v for k, v in rep.items() if k != "path"))
    return [
        Check(f"single-flux warm-up vs general RHS, vol block ({samples} states)",
              worst_beta, 1e-14),
        Check(f"single-flux warm-up vs general RHS, base block ({samples} states)",
              worst_psi, 1e-14),
    ]


def run_all_suites(seed: int = 0, refine: int = 3) -> list[Check]:
    shapes = tuple(16 * 2 ** i for i in range(refine))
    checks = []
    checks += forms_identity_suite(seed)
    checks += conformal_square_suite(seed)
    checks += lift_suite(seed, shapes)
    checks += specialization_suite(seed)
    return checks


def format_table(checks: list[Check]) -> str:
    lines = []
    width = max(len(c.name) for c in checks) + 2
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        lines.append(f"{status}  {c.name:<{width}} value={c.value:.3e}  bound={c.bound:.3e}")
    total = sum(1 for c in checks if c.passed)
    lines.append(f"{total}/{len(checks)} checks passed")
    return "\n".join(lines)
