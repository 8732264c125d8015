import math

import numpy as np
import pytest

from cdlab.exceptions import LedgerGapError, NonDecayingIntegrandError, SnapshotScheduleError
from cdlab.functionals import (
    Ledger,
    PhiEvaluator,
    _decay_envelope,
    finalize_constants,
    phi_duhamel,
    phi_field,
)
from cdlab.grid_field import Grid, lp_norm
from cdlab.kernels import heat_g
from cdlab.model import DiffusionPerturbation, ModelSpec
from cdlab.solver import solve

from conftest import BVAR, small_config, small_model


def consts(run):
    return finalize_constants(run.ledger, run.model, require_long=False)


def test_rows_strictly_increasing(run_bvar):
    led = run_bvar.ledger
    assert np.all(np.diff(led.times) > 0)
    with pytest.raises(ValueError, match="non-monotone"):
        led.accumulate(led.times[-1], run_bvar.snapshot(run_bvar.times[-1]))


def test_zero_perturbation_rows_and_constants(run_b0):
    assert not np.any(run_b0.ledger.column("int_bgradu"))
    cs = consts(run_b0)
    assert np.array_equal(cs.calN, [0.0]) and cs.calL == 0.0
    assert all(cs.K(t) == 0.0 for t in (2.0, 50.0, 100.0))


def test_rho_row_vanishes_on_profile():
    model = small_model()
    g = Grid(1, 60.0, 8192)
    led = Ledger(model, g)
    for t in (0.5, 1.0, 4.0):
        led.accumulate(t, 2.0 * g.sample(lambda x, t=t: heat_g(x, t), t))
    assert np.max(np.abs(led.column("int_rho"))) < 1e-12


def test_drift_free_calM_is_zero(run_heat):
    cs = finalize_constants(run_heat.ledger, run_heat.model, require_long=False)
    assert np.array_equal(cs.calM, [0.0])
    assert cs.calM0 is not None and cs.calM1 is not None


def test_first_moment_balance(run_bvar):
    # m1' = -d int |u|^(q-1) u - int b u_x for n = 1
    led = run_bvar.ledger
    m1 = led.column("m1")
    rhs = -1.0 * led.column("cum_uq") - led.column("cum_bgradu")
    # the b term is sampled as -int (grad b) u, consistent to O(h^2)
    assert np.max(np.abs(m1 - m1[0] - rhs)) < 5e-5


def test_calM_split_and_k_split(run_bvar):
    cs = consts(run_bvar)
    assert np.allclose(cs.calM, cs.calM0 + cs.calM1, rtol=0, atol=1e-15)
    defects = [abs(cs.k_split_defect(t)) for t in run_bvar.times if t > 1.0]
    assert max(defects) < 1e-12


def test_long_horizon_required(run_bvar):
    with pytest.raises(LedgerGapError):
        finalize_constants(run_bvar.ledger, run_bvar.model, t_final=50.0)


def test_dipole_K_decreasing(run_dipole):
    cs = consts(run_dipole)
    ts = np.array([t for t in run_dipole.times if t >= 10.0])
    k = np.abs([cs.K(t) for t in ts])
    assert k[-1] < k[0]


def test_abs_gradient_integral_grows_like_log(run_bvar):
    led = run_bvar.ledger
    t = led.times
    sel = t >= 10.0
    c, a = np.polyfit(np.log(t[sel]), led.column("cum_abs_bgradu")[sel], 1)
    assert c > 0


def test_non_decaying_integrand():
    ts = np.geomspace(10, 100, 20)
    with pytest.raises(NonDecayingIntegrandError):
        _decay_envelope(ts, ts ** 0.1, 100.0, lambda s: s ** -1.5, "rho")
    C = _decay_envelope(ts, 3.0 * ts ** -2.0, 100.0, lambda s: s ** -1.5, "rho")
    assert C == pytest.approx(3.0 * 10.0 ** -0.5)


def test_phi_field_properties(run_b0, run_bvar):
    u = run_b0.snapshot(run_b0.times[-1])
    assert not phi_field(100.0, u, run_b0.ledger, run_b0.model).values.any()
    for t in run_bvar.times[::10]:
        f = phi_field(t, run_bvar.snapshot(t), run_bvar.ledger, run_bvar.model)
        assert abs(np.sum(f.values) * f.grid.h) < 1e-12
    # even u and even b give an odd phi
    g = Grid(1, 30.0, 1024)
    model = ModelSpec(1, 3.0, (1.0,), BVAR)
    f = phi_field(2.0, g.sample(lambda x: heat_g(x, 1.5), 2.0), Ledger(model, g), model)
    assert np.allclose(f.values, -f.values[::-1], rtol=0, atol=1e-15 * np.abs(f.values).max())


def test_phi_duhamel_properties(run_b0, run_bvar):
    assert not phi_duhamel(50.0, run_b0.ledger).values.any()
    cs = consts(run_bvar)
    h = run_bvar.config.grid.h
    stars = {1: [], math.inf: []}
    for t in [s for s in run_bvar.times if s >= 10.0]:
        f = cs.Phi.field(t)
        assert abs(np.sum(f.values) * h) < 1e-8
        for p in stars:
            e = 0.5 * (1 - (0 if p == math.inf else 1 / p)) + 0.5
            stars[p].append(t ** e * lp_norm(f, p))
    for vals in stars.values():
        assert max(vals) <= 1.05 * vals[0]


def test_phi_needs_fine_snapshots():
    run = solve(small_model(BVAR), small_config(t_final=20.0, L=40.0, N=256, snapshot_ratio=2.0))
    cs = finalize_constants(run.ledger, run.model, require_long=False)
    assert isinstance(cs.Phi, PhiEvaluator)
    with pytest.raises(SnapshotScheduleError):
        cs.Phi.field(run.times[-1])


def test_ledger_csv_round_trip(run_bvar, tmp_path):
    led = run_bvar.ledger
    back = Ledger.from_csv(led.to_csv(tmp_path / "ledger.csv"), led.model, led.grid)
    assert back.rows == led.rows
    with pytest.raises(LedgerGapError):
        back.value_at("mass", 1e6)


def test_constants_json_is_plain(run_bvar):
    import json

    js = consts(run_bvar).to_json()
    assert json.loads(json.dumps(js)) == js
    assert set(js) >= {"M", "m", "calM", "calL", "tails", "K"}
