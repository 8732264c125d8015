import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdlab.exceptions import CorruptFieldError, ResolutionLossError
from cdlab.grid_field import (
    Field,
    Grid,
    lp_norm,
    moment0,
    moment1,
    read_field_csv,
    resample,
    write_field_csv,
)
from cdlab.kernels import heat_g

from oracles import g1


def gauss(grid, t=1.0, shift=0.0):
    return grid.sample(lambda x: np.exp(-(x[..., 0] - shift) ** 2 / (4 * t)) / math.sqrt(4 * math.pi * t))


@given(st.sampled_from([16, 64, 1000, 4096]), st.floats(0.5, 500.0))
def test_axis_symmetric_and_spacing_exact(N, L):
    g = Grid(1, L, N)
    assert np.array_equal(g.axis, -g.axis[::-1])
    assert g.h * g.N == 2 * g.L


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(3, 1.0, 16)
    with pytest.raises(ValueError):
        Grid(1, 1.0, 15)
    with pytest.raises(ValueError):
        Grid(1, -1.0, 16)


def test_lp_norms_of_heat_kernel():
    g = Grid(1, 40, 4096)
    f = gauss(g)
    assert lp_norm(g.zeros(), 1) == 0.0
    assert abs(lp_norm(f, 1) - 1.0) < 1e-8
    assert abs(lp_norm(f, math.inf) - (4 * math.pi) ** -0.5) < 1e-5
    # L2 norm of G(., 1) is (8 pi)^(-1/4)
    assert abs(lp_norm(f, 2) - (8 * math.pi) ** -0.25) < 1e-8
    with pytest.raises(ValueError):
        lp_norm(f, 3)


def test_moments():
    g = Grid(1, 40, 4096)
    f = gauss(g)
    assert abs(moment0(f) - 1) < 1e-8
    assert abs(moment1(f)[0]) < 1e-10
    assert abs(moment1(gauss(g, shift=1.0))[0] - 1) < 1e-6
    dip = g.sample(lambda x: -x[..., 0] / 2 * np.exp(-x[..., 0] ** 2 / 4))
    assert abs(moment0(dip)) < 1e-10


def test_moments_2d():
    g = Grid(2, 20, 256)
    f = g.sample(lambda x: heat_g(x - np.array([1.0, -0.5]), 1.0, 2))
    assert abs(moment0(f) - 1) < 1e-8
    assert np.allclose(moment1(f), [1.0, -0.5], atol=1e-8)


def test_resample_identity_and_refinement():
    g = Grid(1, 40, 2048)
    f = gauss(g)
    assert np.array_equal(resample(f, g).values, f.values)
    fine = Grid(1, 40, 4096)
    out = resample(f, fine)
    exact = np.array([g1(x, 1.0) for x in fine.axis])
    assert np.max(np.abs(out.values - exact)) <= 1e-6
    zero = resample(g.zeros(), fine)
    assert not zero.values.any()


def test_resample_errors_and_mass_bound():
    g = Grid(1, 40, 2048)
    with pytest.raises(ResolutionLossError):
        resample(gauss(g), Grid(1, 40, 512))
    with pytest.raises(ValueError):
        resample(gauss(g), Grid(1, 20, 2048))
    _, bound = resample(gauss(g), Grid(1, 50, 4096), return_error=True)
    assert bound < 1e-8


def test_corrupt_field_rejected():
    g = Grid(1, 1.0, 16)
    v = np.zeros(16)
    v[3] = np.nan
    with pytest.raises(CorruptFieldError):
        lp_norm(Field(g, v), 1)


def test_field_is_immutable():
    f = Grid(1, 1.0, 16).zeros()
    with pytest.raises(ValueError):
        f.values[0] = 1.0


@settings(max_examples=20, deadline=None)
@given(shift=st.floats(-3, 3), t=st.floats(0.2, 4))
def test_csv_round_trip_exact(shift, t, tmp_path_factory):
    g = Grid(1, 10.0, 64)
    f = gauss(g, t, shift).with_time(t)
    path = write_field_csv(f, tmp_path_factory.mktemp("csv") / "f.csv")
    back = read_field_csv(path)
    assert back.grid == g and back.time_tag == t
    assert np.array_equal(back.values, f.values)
