"""Command line entry point: ``cdlab run | profiles | verify | report``.

Exit codes: 0 ok, 2 usage or configuration, 3 instability, 4 domain too
small, 5 incomplete run directory.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernels, profiles
from .analysis import TolerancePolicy
from .config import load_config
from .exceptions import (
    CdlabError,
    ConfigError,
    DomainMismatchError,
    DomainTooSmallError,
    IncompleteRunError,
    InstabilityError,
    InvalidTimeError,
    RegimeError,
)
from .reporting import summarize, verify_run, write_report
from .solver import solve
from .store import read_run, write_run

EXIT_OK, EXIT_USAGE, EXIT_INSTABILITY, EXIT_DOMAIN, EXIT_INCOMPLETE = 0, 2, 3, 4, 5

PROFILES = ("psi_star", "psi", "z_profile", "v_exact", "f_star", "heat_g")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def preset_path(name) -> Path:
    """Resolve ``name`` as a file path or as a shipped preset name."""
    p = Path(name)
    if p.exists():
        return p
    stem = p.name[:-4] if p.name.endswith(".cfg") else p.name
    shipped = resources.files("cdlab") / "presets" / f"{stem}.cfg"
    if shipped.is_file():
        return Path(str(shipped))
    raise ConfigError(f"no such config or preset: {name}")


def list_presets():
    root = resources.files("cdlab") / "presets"
    return sorted(e.name[:-4] for e in root.iterdir() if e.name.endswith(".cfg"))


# ------------------------------------------------------------------ run

def run_one(config_path, output=None) -> Path:
    cfg = load_config(preset_path(config_path))
    out = Path(output) / cfg.name if output else Path(cfg.directory)
    out.mkdir(parents=True, exist_ok=True)
    record = solve(cfg.model, cfg.solver)
    return write_run(record, cfg, out)


def _run_job(args):
    path, output = args
    try:
        d = run_one(path, output)
        return path, EXIT_OK, str(d)
    except CdlabError as exc:
        return path, _code(exc), _describe(exc)


def _code(exc) -> int:
    if isinstance(exc, InstabilityError):
        return EXIT_INSTABILITY
    if isinstance(exc, DomainTooSmallError):
        return EXIT_DOMAIN
    if isinstance(exc, IncompleteRunError):
        return EXIT_INCOMPLETE
    return EXIT_USAGE


def _describe(exc) -> str:
    msg = str(exc)
    if isinstance(exc, InstabilityError) and exc.last_stable_time is not None:
        msg += f" (last stable t={exc.last_stable_time:.6g})"
    return msg


def cmd_run(args) -> int:
    jobs = [(c, args.output) for c in args.configs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    worst = EXIT_OK
    for path, code, info in results:
        if code == EXIT_OK:
            print(f"{path}: {info}")
        else:
            print(f"{path}: error: {info}", file=sys.stderr)
        worst = max(worst, code)
    return worst


# ------------------------------------------------------------- profiles

def parse_points(text):
    """``a:b:k`` (k points, inclusive) or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad range {text!r}")
        a, b, k = float(parts[0]), float(parts[1]), int(parts[2])
        return np.linspace(a, b, k)
    return np.array([float(v) for v in text.split(",") if v.strip()])


def evaluate_profile(name, x, t, n, q, d):
    quad = profiles.DEFAULT_QUAD
    if name == "f_star":
        return kernels.f_star(x, n)
    if name == "heat_g":
        return kernels.heat_g(x, t, n)
    if name == "psi_star":
        return profiles.psi_star(x, n, d, quad)
    if name == "psi":
        return profiles.psi(x, t, n, d, quad)
    if name == "v_exact":
        return profiles.v_exact(x, t, n, d, quad)
    if name == "z_profile":
        return profiles.z_profile(x, t, q, n, d, quad)
    raise ConfigError(f"unknown profile {name!r}")


def cmd_profiles(args) -> int:
    if args.name not in PROFILES:
        raise ConfigError(f"unknown profile {args.name!r}; choose from {', '.join(PROFILES)}")
    n = args.n
    xs = parse_points(args.x)
    if n == 2:
        ys = parse_points(args.y) if args.y else xs
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    else:
        pts = xs
    d = tuple(args.d) if len(args.d) == n else (args.d[0],) * n
    q = args.q if args.q is not None else kernels.critical_q(n)
    times = parse_points(args.t) if args.t else np.array([1.0])
    lines = []
    for t in times:
        vals = np.atleast_1d(evaluate_profile(args.name, pts, float(t), n, q,
                                              d if n == 2 else d[0]))
        lines.append(f"# profile={args.name} n={n} q={q!r} t={float(t)!r}")
        for pt, v in zip(pts, vals):
            coords = ",".join(repr(float(c)) for c in np.atleast_1d(pt))
            lines.append(f"{coords},{float(v)!r}")
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    record, cfg = read_run(args.run)
    regimes = args.regimes.split(",") if args.regimes is not None else list(cfg.verify.regimes)
    regimes = [r.strip() for r in regimes if r.strip()]
    if not regimes:
        raise RegimeError("empty regimes list")
    policy = TolerancePolicy(cfg.verify.slope_tol, cfg.verify.trend_factor)
    report = verify_run(record, regimes, cfg.verify.norms, cfg.verify.fit_window, policy,
                        name=cfg.name)
    out = Path(args.output) if args.output else Path(args.run)
    write_report(report, out, cfg.emit_plots)
    _print_summary(report)
    return EXIT_OK


def _print_summary(report):
    for regime, order, p, check, ok, margin in summarize(report):
        status = "PASS" if ok else "FAIL"
        print(f"{regime:14s} order {order} p={p:3s} {check:5s} {status} margin={margin:+.4f}")


def cmd_report(args) -> int:
    path = Path(args.run) / "report.json"
    if not path.exists():
        raise IncompleteRunError(["report.json"])
    report = json.loads(path.read_text())
    _print_summary(report)
    for regime, block in sorted(report["regimes"].items()):
        for key in ("log_term", "c_star", "phi_star", "k_split_max_defect", "calN_tail_ratio"):
            if key in block:
                val = block[key]
                if key == "phi_star":
                    val = {p: v["non_growing"] for p, v in val.items()}
                print(f"{regime} {key}: {json.dumps(val, sort_keys=True)}")
    return EXIT_OK


# ----------------------------------------------------------------- main

def build_parser():
    p = _Parser(prog="cdlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="solve one or more configs (paths or preset names)")
    r.add_argument("configs", nargs="+")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--output", help="parent directory; runs go to <output>/<name>")
    r.set_defaults(func=cmd_run)

    pr = sub.add_parser("profiles", help="sample a profile evaluator as CSV")
    pr.add_argument("name")
    pr.add_argument("--n", type=int, default=1, choices=(1, 2))
    pr.add_argument("--q", type=float)
    pr.add_argument("--d", type=float, nargs="+", default=[1.0])
    pr.add_argument("--x", default="0")
    pr.add_argument("--y")
    pr.add_argument("--t")
    pr.add_argument("--output")
    pr.set_defaults(func=cmd_profiles)

    v = sub.add_parser("verify", help="check expansions against a run directory")
    v.add_argument("run")
    v.add_argument("--regimes", help="comma-separated; defaults to verify.regimes")
    v.add_argument("--output")
    v.set_defaults(func=cmd_verify)

    rp = sub.add_parser("report", help="summarise an existing report.json")
    rp.add_argument("run")
    rp.set_defaults(func=cmd_report)

    sub.add_parser("presets", help="list shipped presets").set_defaults(
        func=lambda a: print("\n".join(list_presets())) or EXIT_OK)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except IncompleteRunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except InstabilityError as exc:
        print(f"error: {_describe(exc)}", file=sys.stderr)
        return EXIT_INSTABILITY
    except DomainTooSmallError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ConfigError, RegimeError, InvalidTimeError, DomainMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CdlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
