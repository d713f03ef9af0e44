import numpy as np
import pytest

from warpflow.forms import DifferentialForm, num_channels
from warpflow.grids import GridSpec, MetricField, ScalarField


def random_form(rng, grid, degree, scale=1.0):
    comps = scale * rng.standard_normal((num_channels(grid.n, degree),) + grid.shape)
    return DifferentialForm(grid, degree, comps)


def random_metric(rng, grid, amplitude=0.1, smooth=True):
    n = grid.n
    pert = amplitude * rng.standard_normal((n, n))
    entries = np.broadcast_to(np.eye(n) + 0.5 * (pert + pert.T), grid.shape + (n, n)).copy()
    if smooth:
        x = grid.coordinates()[0]
        entries[..., 0, 0] += amplitude * np.sin(2 * np.pi * x / grid.lengths[0])
    return MetricField(grid, entries)


def constant_form(rng, grid, degree):
    values = rng.standard_normal(num_channels(grid.n, degree))
    comps = np.broadcast_to(values[(...,) + (None,) * grid.n],
                            (num_channels(grid.n, degree),) + grid.shape).copy()
    return DifferentialForm(grid, degree, comps)


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
