"""Experiment configuration files.

Grammar (one entry per line)::

    # comment            blank lines and '#' comments are ignored
    section.key = value  dotted keys; values are numbers, words, booleans
                         or comma-separated lists; text after '#' is dropped

Recognised keys are listed in ``KEYS``; anything else is an error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import ConfigError, RegimeError
from .grid_field import Grid
from .model import B_KINDS, DiffusionPerturbation, Dipole, Gaussian, InitialData, ModelSpec
from .solver import SolverConfig

# key -> (type, default); default None means required
KEYS = {
    "name": ("str", ""),
    "model.n": ("int", None),
    "model.q": ("float", None),
    "model.d": ("floats", None),
    "model.b.kind": ("str", "zero"),
    "model.b.amplitude": ("float", 0.0),
    "model.b.delta": ("float", 2.0),
    "model.u0.kind": ("str", None),
    "model.u0.mass": ("float", 1.0),
    "model.u0.width": ("float", 1.0),
    "model.u0.center": ("floats", (0.0,)),
    "model.u0.scale": ("float", 1.0),
    "model.u0.dipole_width": ("float", 1.0),
    "grid.half_width": ("float", 0.0),
    "grid.points": ("int", None),
    "grid.auto_half_width": ("bool", False),
    "time.t_final": ("float", None),
    "time.dt_init": ("float", 1e-3),
    "time.dt_rel": ("float", 0.01),
    "time.snapshot_ratio": ("float", 2.0 ** 0.125),
    "time.t0": ("float", 0.01),
    "time.report_times": ("floats", ()),
    "verify.regimes": ("strs", ()),
    "verify.norms": ("strs", ("1", "inf")),
    "verify.fit_window": ("floats", ()),
    "verify.slope_tol": ("float", 0.07),
    "verify.trend_factor": ("float", 1.3),
    "output.directory": ("str", "runs/out"),
    "output.emit_plots": ("bool", False),
}

U0_KINDS = ("gaussian", "dipole", "sum")


@dataclass(frozen=True)
class VerifyConfig:
    regimes: tuple = ()
    norms: tuple = ("1", "inf")
    fit_window: tuple = ()
    slope_tol: float = 0.07
    trend_factor: float = 1.3


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: ModelSpec
    solver: SolverConfig
    verify: VerifyConfig
    directory: str
    emit_plots: bool
    values: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Normalised key/value view, suitable for ``run.json``."""
        return {k: _jsonable(v) for k, v in sorted(self.values.items())}


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


def _convert(kind, text, line, col, key):
    try:
        if kind == "str":
            return text
        if kind == "int":
            return int(text)
        if kind == "float":
            return _float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if kind == "floats":
            return tuple(_float(p) for p in parts)
        return tuple(parts)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}", line, col) from None


def _float(text):
    if text.lower() in ("inf", "+inf"):
        return math.inf
    return float(text)


def parse_text(text: str):
    """Return ``{key: (value, line, column)}``; syntax errors raise :class:`ConfigError`."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "=" not in line:
            col = len(raw) - len(raw.lstrip()) + 1
            raise ConfigError("expected 'key = value'", lineno, col)
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        key_col = len(key_part) - len(key_part.lstrip()) + 1
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, key_col)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r}", lineno, key_col)
        value = value_part.strip()
        val_col = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        if not value:
            raise ConfigError(f"missing value for {key}", lineno, val_col)
        entries[key] = (_convert(KEYS[key][0], value, lineno, val_col, key), lineno, val_col)
    return entries


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    cfg = build_config(parse_text(text))
    if not cfg.name:
        cfg = ExperimentConfig(path.stem, cfg.model, cfg.solver, cfg.verify, cfg.directory,
                               cfg.emit_plots, {**cfg.values, "name": path.stem})
    return cfg


def build_config(entries: dict) -> ExperimentConfig:
    """Validate parsed entries and build the model, solver and verify settings."""
    for key, (_, default) in KEYS.items():
        if default is None and key not in entries:
            raise ConfigError(f"missing required key {key!r}")

    def get(key):
        return entries[key][0] if key in entries else KEYS[key][1]

    def fail(key, message):
        if key in entries:
            raise ConfigError(message, entries[key][1], entries[key][2])
        raise ConfigError(message)

    n, q = get("model.n"), get("model.q")
    if n not in (1, 2):
        fail("model.n", "n must be 1 or 2")
    if not q > 1.0 + 1.0 / n:
        fail("model.q", "q must exceed 1 + 1/n")
    d = get("model.d")
    if len(d) == 1 and n == 2:
        d = (d[0], d[0])
    if len(d) != n:
        fail("model.d", f"drift needs {n} components")

    kind = get("model.b.kind")
    if kind not in B_KINDS:
        fail("model.b.kind", f"b.kind must be one of {', '.join(B_KINDS)}")
    try:
        b = DiffusionPerturbation(kind, get("model.b.amplitude"), get("model.b.delta"))
    except ValueError as exc:
        fail("model.b.amplitude", str(exc))

    u0_kind = get("model.u0.kind")
    if u0_kind not in U0_KINDS:
        fail("model.u0.kind", f"u0.kind must be one of {', '.join(U0_KINDS)}")
    center = get("model.u0.center")
    if len(center) == 1 and n == 2:
        center = (center[0], center[0])
    if len(center) != n:
        fail("model.u0.center", f"center needs {n} components")
    for key in ("model.u0.width", "model.u0.dipole_width"):
        if not get(key) > 0:
            fail(key, f"{key.split('.')[-1]} must be positive")
    comps = []
    if u0_kind in ("gaussian", "sum"):
        comps.append(Gaussian(get("model.u0.mass"), get("model.u0.width"), center))
    if u0_kind == "dipole":
        comps.append(Dipole(get("model.u0.scale"), get("model.u0.width")))
    if u0_kind == "sum":
        comps.append(Dipole(get("model.u0.scale"), get("model.u0.dipole_width")))
    u0 = InitialData(tuple(comps))
    try:
        model = ModelSpec(n, q, d, b, u0)
    except (ValueError, RegimeError) as exc:
        fail("model.q", str(exc))

    t_final = get("time.t_final")
    if not t_final > 0:
        fail("time.t_final", "t_final must be positive")
    L = get("grid.half_width")
    if get("grid.auto_half_width"):
        L = max(L, math.ceil(8.0 * math.sqrt(1.0 + t_final) + u0.radius))
    if not L > 0:
        fail("grid.half_width", "half_width must be positive (or set grid.auto_half_width)")
    try:
        grid = Grid(n, L, get("grid.points"))
        solver = SolverConfig(
            grid=grid,
            t_final=t_final,
            dt_init=get("time.dt_init"),
            dt_rel=get("time.dt_rel"),
            snapshot_ratio=get("time.snapshot_ratio"),
            t0=get("time.t0"),
            report_times=get("time.report_times"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    norms = tuple(get("verify.norms"))
    for p in norms:
        if p not in ("1", "2", "inf"):
            fail("verify.norms", f"norm must be 1, 2 or inf, got {p!r}")
    window = get("verify.fit_window")
    if window and (len(window) != 2 or not 0 < window[0] < window[1]):
        fail("verify.fit_window", "fit_window needs two increasing positive times")
    verify = VerifyConfig(tuple(get("verify.regimes")), norms, tuple(window),
                          get("verify.slope_tol"), get("verify.trend_factor"))

    values = {k: (entries[k][0] if k in entries else v[1]) for k, v in KEYS.items()}
    values["grid.half_width"] = float(L)
    return ExperimentConfig(get("name"), model, solver, verify, get("output.directory"),
                            get("output.emit_plots"), values)
