import json

import numpy as np
import pytest

from cdlab.config import build_config, parse_text
from cdlab.exceptions import IncompleteRunError
from cdlab.functionals import finalize_constants
from cdlab.solver import solve
from cdlab.store import missing_artifacts, read_run, write_run

TEXT = """\
name = rt
model.n = 1
model.q = 3
model.d = 1
model.b.kind = power_decay
model.b.amplitude = 0.3
model.u0.kind = sum
model.u0.mass = 2
model.u0.center = 0.5
model.u0.scale = 1
grid.points = 512
grid.half_width = 40
time.t_final = 20
"""


@pytest.fixture(scope="module")
def stored(tmp_path_factory):
    cfg = build_config(parse_text(TEXT))
    rec = solve(cfg.model, cfg.solver)
    d = write_run(rec, cfg, tmp_path_factory.mktemp("rt"))
    return rec, cfg, d


def test_round_trip(stored):
    rec, cfg, d = stored
    back, cfg2 = read_run(d)
    assert cfg2.model == cfg.model and cfg2.solver == cfg.solver
    assert back.times == rec.times
    assert back.ledger.rows == rec.ledger.rows
    for t in rec.times:
        assert np.array_equal(back.snapshot(t).values, rec.snapshot(t).values)
    assert np.array_equal(back.initial.values, rec.initial.values)


def test_phi_rebuilt_from_snapshots(stored):
    rec, _, d = stored
    back, _ = read_run(d)
    t = rec.times[-1]
    a = finalize_constants(rec.ledger, rec.model, require_long=False).Phi.field(t)
    b = finalize_constants(back.ledger, back.model, require_long=False).Phi.field(t)
    assert np.array_equal(a.values, b.values)


def test_short_run_constants_flagged(stored):
    _, _, d = stored
    js = json.loads((d / "constants.json").read_text())
    assert js["complete"] is False


def test_missing_artifacts(stored, tmp_path):
    import shutil

    _, _, d = stored
    broken = tmp_path / "b"
    shutil.copytree(d, broken)
    snap = sorted((broken / "snapshots").iterdir())[3]
    snap.unlink()
    assert missing_artifacts(broken) == [f"snapshots/{snap.name}"]
    with pytest.raises(IncompleteRunError):
        read_run(broken)
