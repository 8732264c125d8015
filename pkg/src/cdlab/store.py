"""Run directories: ``run.json``, ``snapshots/``, ``ledger.csv``, ``constants.json``."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, build_config
from .exceptions import IncompleteRunError, LedgerGapError, NonDecayingIntegrandError
from .functionals import Ledger, finalize_constants
from .grid_field import read_field_csv, write_field_csv
from .solver import RunRecord

RUN_FILES = ("run.json", "ledger.csv", "constants.json", "snapshots")


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    return v


def dump_json(obj, path):
    Path(path).write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def snapshot_name(t) -> str:
    return f"t_{float(t):.17g}.csv"


def write_run(record: RunRecord, config: ExperimentConfig, directory) -> Path:
    """Persist ``record``; constants are finalized here (tails need ``t_final >= 100``)."""
    out = Path(directory)
    snap_dir = out / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    write_field_csv(record.initial, snap_dir / snapshot_name(0.0))
    for t in record.times:
        write_field_csv(record.snapshots[t], snap_dir / snapshot_name(t))
    record.ledger.to_csv(out / "ledger.csv")

    t_final = record.config.t_final
    try:
        cs = finalize_constants(record.ledger, record.model, t_final,
                                require_long=t_final >= 100)
        constants = cs.to_json()
        constants["complete"] = t_final >= 100
    except (NonDecayingIntegrandError, LedgerGapError) as exc:
        constants = {"error": str(exc), "complete": False}
    dump_json(constants, out / "constants.json")

    dump_json({
        "name": config.name,
        "config": config.echo(),
        "diagnostics": record.diagnostics,
        "mass_history": record.mass_history,
        "snapshots": [0.0] + list(record.times),
    }, out / "run.json")
    return out


def missing_artifacts(directory):
    d = Path(directory)
    missing = [name for name in RUN_FILES if not (d / name).exists()]
    if not missing:
        meta = json.loads((d / "run.json").read_text())
        for t in meta.get("snapshots", []):
            if not (d / "snapshots" / snapshot_name(t)).exists():
                missing.append(f"snapshots/{snapshot_name(t)}")
    return missing


def config_from_echo(echo: dict) -> ExperimentConfig:
    entries = {k: (tuple(v) if isinstance(v, list) else v, None, None) for k, v in echo.items()}
    cfg = build_config(entries)
    return cfg


def read_run(directory) -> tuple[RunRecord, ExperimentConfig]:
    """Load a run directory; ``phi`` samples are rebuilt from the snapshots."""
    d = Path(directory)
    missing = missing_artifacts(d)
    if missing:
        raise IncompleteRunError(missing)
    meta = json.loads((d / "run.json").read_text())
    cfg = config_from_echo(meta["config"])
    model, solver = cfg.model, cfg.solver
    ledger = Ledger.from_csv(d / "ledger.csv", model, solver.grid)
    ledger.store_phi = model.n == 1
    record = RunRecord(model=model, config=solver, ledger=ledger,
                       diagnostics=meta.get("diagnostics", {}))
    record.mass_history = [tuple(x) for x in meta.get("mass_history", [])]
    for t in meta["snapshots"]:
        f = read_field_csv(d / "snapshots" / snapshot_name(t))
        if t == 0.0:
            record.initial = f
        else:
            record.snapshots[float(t)] = f
        if ledger.store_phi and not model.b.is_zero:
            ledger.attach_phi(t, f)
    return record, cfg
