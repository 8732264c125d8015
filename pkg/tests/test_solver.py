import math

import numpy as np
import pytest
from scipy.linalg import solve_banded

from cdlab.exceptions import CorruptFieldError, DomainTooSmallError
from cdlab.grid_field import Field, Grid, lp_norm
from cdlab.kernels import dt_grad_heat_g, grad_heat_g, heat_g
from cdlab.model import DiffusionPerturbation, Gaussian, InitialData, ModelSpec
from cdlab.solver import (
    DiffusionSolver,
    SolverConfig,
    convection,
    diffusion_apply,
    discrete_rhs,
    gradient_field,
    ledger_schedule,
    snapshot_schedule,
    solve,
    thomas,
)

HEAT = ModelSpec(1, 3.0, (0.0,), DiffusionPerturbation(), InitialData((Gaussian(1.0, 1.0),)))


def heat_field(grid, t):
    return grid.sample(lambda x: heat_g(x, t, grid.n), t)


def test_constant_is_harmonic_in_the_interior():
    g = Grid(1, 10.0, 64)
    f = Field(g, np.full(64, 3.0))
    diff, _ = discrete_rhs(f, HEAT)
    assert np.all(diff.values[1:-1] == 0.0)


def test_laplacian_of_heat_kernel_second_order():
    errs = []
    for N in (256, 512, 1024):
        g = Grid(1, 20.0, N)
        diff, conv = discrete_rhs(heat_field(g, 1.0), HEAT)
        # d_t G = d_xx G
        exact = g.sample(lambda x: -(1 / 2 - x[..., 0] ** 2 / 4) * heat_g(x, 1.0))
        errs.append(np.max(np.abs(diff.values - exact.values)))
        assert not conv.values.any()
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8)


def test_laplacian_2d_second_order():
    errs = []
    for N in (64, 128):
        g = Grid(2, 12.0, N)
        model = ModelSpec(2, 2.0, (0.0, 0.0))
        diff = diffusion_apply(heat_field(g, 1.0), model)
        r2 = np.sum(g.points() ** 2, axis=-1)
        exact = (r2 / 4 - 1.0) * heat_g(g.points(), 1.0, 2)
        errs.append(np.max(np.abs(diff.values - exact)))
    assert math.log2(errs[0] / errs[1]) >= 1.8


def test_convection_parity_and_conservation():
    g = Grid(1, 15.0, 256)
    model = ModelSpec(1, 3.0, (1.0,))
    odd = g.sample(lambda x: -x[..., 0] * np.exp(-x[..., 0] ** 2))
    c = convection(odd, model).values
    assert np.array_equal(c, c[::-1])
    assert abs(np.sum(c)) < 1e-13


def test_corrupt_field_rejected():
    g = Grid(1, 5.0, 16)
    v = np.zeros(16)
    v[2] = np.inf
    with pytest.raises(CorruptFieldError):
        discrete_rhs(Field(g, v), HEAT)


def test_gradient_field():
    g = Grid(1, 20.0, 512)
    zero = gradient_field(Field(g, np.ones(512)))[0]
    assert np.allclose(zero.values, 0.0, atol=1e-12)
    errs = []
    for N in (256, 512):
        g = Grid(1, 20.0, N)
        gx = gradient_field(heat_field(g, 1.0))[0]
        errs.append(np.max(np.abs(gx.values - grad_heat_g(g.points(), 1.0)[..., 0])))
    assert math.log2(errs[0] / errs[1]) >= 1.8
    odd = g.sample(lambda x: np.sin(x[..., 0]) * np.exp(-x[..., 0] ** 2))
    gx = gradient_field(odd)[0].values
    assert np.array_equal(gx, gx[::-1])


def test_thomas_matches_banded_solver():
    rng = np.random.default_rng(1)
    n, batch = 40, 3
    lo, up = rng.uniform(-1, 0, (n, batch)), rng.uniform(-1, 0, (n, batch))
    dg = 3.0 + rng.uniform(0, 1, (n, batch))
    rhs = rng.normal(size=(n, batch))
    x = thomas(lo, dg, up, rhs)
    for j in range(batch):
        ab = np.zeros((3, n))
        ab[0, 1:] = up[:-1, j]
        ab[1] = dg[:, j]
        ab[2, :-1] = lo[1:, j]
        assert np.allclose(x[:, j], solve_banded((1, 1), ab, rhs[:, j]), rtol=1e-12)


def test_schedules():
    cfg = SolverConfig(Grid(1, 10.0, 64), 100.0)
    snaps = snapshot_schedule(cfg)
    assert snaps[0] == cfg.t0 and snaps[-1] == 100.0
    ratios = snaps[1:-1] / snaps[:-2]
    assert np.allclose(ratios, cfg.snapshot_ratio)
    dense = ledger_schedule(cfg)
    assert set(snaps) <= set(dense)
    assert np.all(np.diff(dense) > 0)


def test_solver_config_validation():
    g = Grid(1, 10.0, 64)
    with pytest.raises(ValueError):
        SolverConfig(g, -1.0)
    with pytest.raises(ValueError):
        SolverConfig(g, 10.0, cfl=0.9)
    with pytest.raises(ValueError):
        SolverConfig(g, 10.0, snapshot_ratio=1.0)


def test_heat_oracle(run_heat):
    # exact solution G(., t + 1)
    u = run_heat.snapshot(4.0)
    exact = heat_field(u.grid, 5.0)
    assert np.max(np.abs(u.values - exact.values)) <= 5e-4
    assert run_heat.diagnostics["mass_drift"] <= 1e-6
    assert run_heat.diagnostics["mass_ok"]


def test_constant_perturbation_rescales_time():
    b0 = 0.25
    model = ModelSpec(1, 3.0, (0.0,), DiffusionPerturbation("constant", b0),
                      InitialData((Gaussian(1.0, 1.0),)))
    rec = solve(model, SolverConfig(Grid(1, 40.0, 2048), 2.0, dt_init=1e-2))
    exact = heat_field(rec.config.grid, 1.0 + (1.0 + b0) * 2.0)
    assert np.max(np.abs(rec.snapshot(2.0).values - exact.values)) <= 5e-4


def test_heat_2d_against_exact():
    model = ModelSpec(2, 2.0, (0.0, 0.0), DiffusionPerturbation(),
                      InitialData((Gaussian(1.0, 1.0, (0.0, 0.0)),)))
    rec = solve(model, SolverConfig(Grid(2, 16.0, 128), 2.0, dt_init=1e-2))
    exact = heat_field(rec.config.grid, 3.0)
    assert np.max(np.abs(rec.snapshot(2.0).values - exact.values)) <= 2e-3


def test_sup_norm_decay_bounded(run_b0):
    # t^(1/2) |u|_inf approaches M G(0, 1) from below
    M = run_b0.ledger.mass
    ts = [t for t in run_b0.times if t >= 1.0]
    vals = np.array([math.sqrt(t) * lp_norm(run_b0.snapshot(t), math.inf) for t in ts])
    assert vals.max() <= 1.05 * M / math.sqrt(4 * math.pi)
    assert vals[-1] / vals[ts.index(min(ts, key=lambda s: abs(s - 10.0)))] <= 1.05


def test_gradient_l1_decay_bounded(run_bvar):
    # limit M |dG(1)|_1 = M / sqrt(pi)
    M = run_bvar.ledger.mass
    ts = run_bvar.times
    vals = np.array([math.sqrt(t) * lp_norm(gradient_field(run_bvar.snapshot(t))[0], 1)
                     for t in ts])
    assert ts[0] <= 0.01 * (1 + 1e-12)
    assert np.all(vals <= 1.05 * M / math.sqrt(math.pi))


def test_mass_and_ledger(run_bvar):
    assert run_bvar.diagnostics["mass_ok"]
    assert len(run_bvar.times) >= 40
    assert np.all(np.diff(run_bvar.ledger.times) > 0)
    assert run_bvar.diagnostics["max_cfl"] <= 0.4


def test_domain_too_small():
    model = ModelSpec(1, 3.0, (1.0,), DiffusionPerturbation(), InitialData((Gaussian(2.0, 1.0),)))
    with pytest.raises(DomainTooSmallError):
        solve(model, SolverConfig(Grid(1, 3.0, 64), 1.0))
    with pytest.raises(DomainTooSmallError):
        solve(model, SolverConfig(Grid(1, 20.0, 256), 100.0))


def test_deterministic():
    model = ModelSpec(1, 3.0, (1.0,), DiffusionPerturbation("power_decay", 0.3, 2.0),
                      InitialData((Gaussian(2.0, 1.0, (0.5,)),)))
    cfg = SolverConfig(Grid(1, 30.0, 256), 5.0)
    a, b = solve(model, cfg), solve(model, cfg)
    assert np.array_equal(a.snapshot(5.0).values, b.snapshot(5.0).values)
    assert a.ledger.rows == b.ledger.rows


def test_estimator_interface():
    est = DiffusionSolver(HEAT, SolverConfig(Grid(1, 30.0, 512), 1.0, dt_init=1e-2))
    assert set(est.get_params()) == {"model", "config"}
    est.fit()
    u = est.predict(1.0)
    assert np.max(np.abs(u.values - heat_field(u.grid, 2.0).values)) < 1e-3
    assert -1e-6 <= est.score() <= 0.0
