import math

import pytest

from cdlab.cli import list_presets, preset_path
from cdlab.config import build_config, load_config, parse_text
from cdlab.exceptions import ConfigError

BASE = """\
model.n = 1
model.q = 3
model.d = 1
model.u0.kind = gaussian
grid.points = 256
grid.half_width = 30
time.t_final = 2
"""


def cfg(text):
    return build_config(parse_text(text))


def test_minimal_config():
    c = cfg(BASE)
    assert c.model.q == 3.0 and c.solver.grid.N == 256
    assert c.verify.norms == ("1", "inf")


def test_comments_and_lists():
    c = cfg(BASE + "verify.regimes = critical, critical_1d   # both forms\n# whole line\n")
    assert c.verify.regimes == ("critical", "critical_1d")


def test_missing_key_is_named():
    with pytest.raises(ConfigError, match="model.q"):
        cfg(BASE.replace("model.q = 3\n", ""))


def test_q_threshold():
    with pytest.raises(ConfigError, match=r"q must exceed 1 \+ 1/n") as exc:
        cfg(BASE.replace("model.q = 3", "model.q = 1.0"))
    assert exc.value.line == 2


def test_errors_carry_position():
    with pytest.raises(ConfigError) as exc:
        parse_text("model.n = 1\n  bogus.key = 3\n")
    assert (exc.value.line, exc.value.column) == (2, 3)
    with pytest.raises(ConfigError, match="line 1"):
        parse_text("model.n 1\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("model.n = 1\nmodel.n = 2\n")
    with pytest.raises(ConfigError, match="bad value"):
        parse_text("model.q = three\n")


def test_invalid_values():
    with pytest.raises(ConfigError, match="b.kind"):
        cfg(BASE + "model.b.kind = wiggly\n")
    with pytest.raises(ConfigError, match="center"):
        cfg(BASE + "model.u0.center = 1, 2\n")
    with pytest.raises(ConfigError, match="fit_window"):
        cfg(BASE + "verify.fit_window = 10, 5\n")
    with pytest.raises(ConfigError, match="norm"):
        cfg(BASE + "verify.norms = 1, 3\n")
    with pytest.raises(ConfigError):
        cfg(BASE + "model.b.kind = power_decay\nmodel.b.amplitude = 1.5\n")


def test_auto_half_width():
    c = cfg(BASE.replace("grid.half_width = 30\n", "grid.auto_half_width = true\n"))
    assert c.solver.grid.L == math.ceil(8 * math.sqrt(3.0) + math.sqrt(2.0))


def test_name_defaults_to_stem(tmp_path):
    p = tmp_path / "my_run.cfg"
    p.write_text(BASE)
    assert load_config(p).name == "my_run"
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_every_preset_validates():
    names = list_presets()
    assert set(names) == {
        "heat_oracle_1d", "subcritical_1d_q2.5", "critical_1d_b0", "critical_1d_bvar",
        "critical_1d_dipole", "supercritical_1d_q4", "critical_2d_b0", "critical_2d_bvar",
    }
    for name in names:
        c = load_config(preset_path(name))
        assert c.name == name and c.verify.regimes


def test_echo_round_trip():
    from cdlab.store import config_from_echo

    c = cfg(BASE + "model.b.kind = power_decay\nmodel.b.amplitude = 0.3\n")
    back = config_from_echo(c.echo())
    assert back.model == c.model and back.solver == c.solver
