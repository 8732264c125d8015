"""Verification reports over a finished run: residual series, fits, verdicts."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .analysis import (
    TolerancePolicy,
    _check_model,
    c_star_check,
    expected_log_coefficient,
    fit_rate,
    last_decade_ratio,
    log_model_comparison,
    residual_series,
    verdict,
)
from .exceptions import RegimeError
from .functionals import PhiEvaluator, finalize_constants
from .grid_field import lp_norm
from .profiles import _ALIASES, REGIMES, ExpansionSpec
from .store import dump_json

ORDERS = {
    "linear_only": (1, 2),
    "subcritical": (1, 2),
    "supercritical": (1, 2),
    "critical": (1, 2, 3),
    "critical_1d": (1, 2, 3),
    "ik_uhat": (2,),
}


def _norm_key(p):
    return math.inf if p == "inf" else int(p)


def constants_id(constants_json) -> str:
    blob = json.dumps(constants_json, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def verify_run(record, regimes, norms=("1", "inf"), window=(), policy=TolerancePolicy(),
               name="run"):
    """Evaluate every requested regime; returns a JSON-ready dict."""
    if not regimes:
        raise RegimeError("empty regimes list")
    model = record.model
    regimes = [_ALIASES.get(r, r) for r in regimes]
    for r in regimes:
        if r not in REGIMES:
            raise RegimeError(f"unknown regime {r!r}")
        _check_model(r, model)

    t_final = record.config.t_final
    cs = finalize_constants(record.ledger, model, t_final, require_long=False)
    cjson = cs.to_json()
    prov = {"run": name, "constants_id": constants_id(cjson)}
    lo, hi = (window if window else (t_final / 10.0, t_final))
    t_min = min(lo, t_final / 10.0)
    ps = [_norm_key(p) for p in norms]

    out = {"run": name, "constants": cjson, "policy": vars(policy), "regimes": {},
           "fit_window": [lo, hi]}
    for regime in regimes:
        block = {"orders": {}}
        for order in ORDERS[regime]:
            spec = ExpansionSpec(regime, order, cs, model.n, model.q, model.d)
            reports = residual_series(record, spec, ps, t_min=t_min)
            entry = {}
            for rep in reports:
                rep.provenance = prov
                if order == 1 and regime != "linear_only":
                    rep.window = (lo, hi)
                    rep.slope, rep.stderr = fit_rate(rep.times, rep.residuals, rep.window,
                                                     rep.has_log)
                    verdict(rep, policy, "rate")
                else:
                    verdict(rep, policy, "trend")
                entry[rep.p] = rep.to_dict()
            block["orders"][str(order)] = entry
        block["improvement"] = _improvement(block["orders"])
        if regime in ("critical", "critical_1d"):
            block.update(_critical_extras(record, cs, regime, ps, lo, hi))
        out["regimes"][regime] = block
    out["passed"] = all(_all_passed(b) for b in out["regimes"].values())
    return out


def _improvement(orders):
    """Adding an order never raises the residual at the final snapshot."""
    keys = sorted(orders, key=int)
    res = {}
    for a, b in zip(keys[:-1], keys[1:]):
        for p in orders[a]:
            ra, rb = orders[a][p]["residuals"], orders[b][p]["residuals"]
            if ra and rb:
                res[f"{a}->{b} p={p}"] = bool(rb[-1] <= ra[-1])
    return res


def _critical_extras(record, cs, regime, ps, lo, hi):
    model = record.model
    extras = {}
    rep = residual_series(record, ExpansionSpec(regime, 1, cs, model.n, model.q, model.d),
                          [1], t_min=lo)[0]
    cmp = log_model_comparison(rep.times, rep.residuals, rep.exponent, (lo, hi))
    expect = expected_log_coefficient(model, cs.M, 1)
    cmp["c_expected"] = expect
    cmp["c_rel_error"] = abs(cmp["c"] - expect) / expect if expect else math.inf
    growth = 1.0 / last_decade_ratio(rep.times, rep.normalized)
    cmp["last_decade_growth"] = growth
    extras["log_term"] = cmp
    if regime == "critical" and model.n == 1 and model.b.is_zero:
        cst = {}
        for p in ps:
            times, lhs, c, gap = c_star_check(record, cs, p)
            cst[str(p) if p != math.inf else "inf"] = {"C_star": c, "lhs_final": lhs[-1],
                                                       "gap": gap}
        extras["c_star"] = cst
    if regime == "critical_1d":
        ts = [t for t in record.times if t > 1.0]
        extras["k_split_max_defect"] = max(abs(cs.k_split_defect(t)) for t in ts)
        if isinstance(cs.Phi, PhiEvaluator):
            phi = {}
            for p in ps:
                inv = 0.0 if p == math.inf else 1.0 / p
                e = 0.5 * (1.0 - inv) + 0.5
                sel = [t for t in record.times if 10.0 <= t <= record.config.t_final]
                vals = [t ** e * lp_norm(cs.Phi.field(t), p) for t in sel]
                phi[str(p) if p != math.inf else "inf"] = {
                    "times": sel, "values": vals,
                    "non_growing": bool(max(vals[len(vals) // 2:]) <= vals[0] * 1.05),
                }
            extras["phi_star"] = phi
    if model.n >= 2 and cs.calN is not None:
        nrm = float(np.linalg.norm(cs.calN))
        extras["calN_tail_ratio"] = cs.tails.get("calN", 0.0) / nrm if nrm else 0.0
    return extras


def _all_passed(block):
    ok = True
    for entry in block["orders"].values():
        for rep in entry.values():
            ok = ok and bool(rep["passed"])
    return ok


def write_report(report, directory, emit_plots=False):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    dump_json(report, d / "report.json")
    rows = []
    for regime, block in sorted(report["regimes"].items()):
        for order, entry in sorted(block["orders"].items()):
            for p, rep in sorted(entry.items()):
                for t, r, nr in zip(rep["times"], rep["residuals"], rep["normalized"]):
                    rows.append([regime, order, p, repr(float(t)), repr(float(r)),
                                 repr(float(nr))])
    with (d / "report.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["regime", "order", "p", "t", "residual", "normalized"])
        w.writerows(rows)
    if emit_plots:
        _write_plots(report, d)
    return d


def _write_plots(report, d):
    plots = d / "plots"
    plots.mkdir(exist_ok=True)
    for regime, block in sorted(report["regimes"].items()):
        for p in sorted(next(iter(block["orders"].values()))):
            lines = [
                "set datafile separator ','",
                "set logscale xy",
                "set xlabel 't'",
                "set ylabel 'normalized residual'",
                f"set title '{regime}, p={p}'",
            ]
            series = []
            for order in sorted(block["orders"]):
                cond = f'(strcol(1) eq "{regime}" && strcol(2) eq "{order}" && strcol(3) eq "{p}")'
                series.append(f"'../report.csv' using ($4):({cond} ? $6 : 1/0) "
                              f"with linespoints title 'order {order}'")
            lines.append("plot " + ", \\\n     ".join(series))
            (plots / f"{regime}_p{p}.gp").write_text("\n".join(lines) + "\n")


def summarize(report) -> list:
    """Flat ``(regime, order, p, check, passed, margin)`` rows."""
    rows = []
    for regime, block in sorted(report["regimes"].items()):
        for order, entry in sorted(block["orders"].items()):
            for p, rep in sorted(entry.items()):
                rows.append((regime, order, p, rep["check"], rep["passed"], rep["margin"]))
    return rows
