"""Residuals of asymptotic expansions, decay-rate fits and pass/fail verdicts."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import erf
from sklearn.base import BaseEstimator

from .exceptions import (
    DomainMismatchError,
    MissingConstantError,
    RegimeError,
    ResidualUnderflowError,
)
from .functionals import ConstantSet, finalize_constants
from .grid_field import Field, Grid, lp_norm
from .kernels import alpha_n, critical_q, grad_heat_g, heat_g
from .profiles import (
    DEFAULT_QUAD,
    ExpansionSpec,
    QuadratureSpec,
    build_expansion,
    check_regime,
    psi_star,
    regime_of,
)

__all__ = [
    "TolerancePolicy",
    "RateReport",
    "theoretical_rate",
    "normalization",
    "residual_series",
    "fit_rate",
    "log_model_comparison",
    "expected_log_coefficient",
    "c_star",
    "c_star_check",
    "verdict",
    "last_decade_ratio",
    "AsymptoticExpansion",
]

P_VALUES = (1, 2, math.inf)


def _pkey(p):
    return "inf" if p in (math.inf, np.inf, "inf") else str(int(p))


def _pval(p):
    return math.inf if p in (math.inf, np.inf, "inf") else float(p)


@dataclass(frozen=True)
class TolerancePolicy:
    slope_tol: float = 0.07
    trend_factor: float = 1.3


def theoretical_rate(regime, n, p, q, order=1):
    """Decay exponent ``e`` and log flag of the residual ``O``/``o`` bound.

    The residual is expected to behave like ``t^e`` (times ``log t`` when the
    flag is set).  ``order=1`` is the distance to ``M G``.
    """
    regime_of(n, q)
    p = _pval(p)
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    base = -(n / 2.0) * (1.0 - inv_p) - 0.5
    qc = critical_q(n)
    if regime == "ik_uhat":
        gamma = (n / 2.0) * (q - 1.0) - 0.5
        if abs(2 * gamma - 0.5) < 1e-12:
            return base, True
        if 2 * gamma < 0.5:
            return -(n / 2.0) * (1.0 - inv_p) - 2.0 * gamma, False
        return base, False
    if regime == "linear_only":
        return (-(n / 2.0) * (1.0 - inv_p) if order == 1 else base), False
    if regime in ("critical", "critical_1d", "critical_n>=2", "critical_n=1"):
        return base, order <= 2
    if q < qc:
        return -(n / 2.0) * (q - inv_p) + 0.5, False
    return base, False


def normalization(t, exponent, has_log):
    t = np.asarray(t, dtype=float)
    out = t ** (-exponent)
    return out / np.log(t) if has_log else out


@dataclass
class RateReport:
    regime: str
    order: int
    p: str
    times: list
    residuals: list
    normalized: list
    exponent: float
    has_log: bool
    slope: float | None = None
    stderr: float | None = None
    window: tuple | None = None
    passed: bool | None = None
    margin: float | None = None
    check: str = ""
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["window"] = None if self.window is None else list(self.window)
        return d


def _check_box(grid: Grid, M, t):
    inside = erf(grid.L / math.sqrt(4.0 * t)) ** grid.n
    if abs(M) * (1.0 - inside) > 1e-6:
        raise DomainMismatchError(f"domain mismatch: expansion mass outside box at t={t:g}")


def _check_model(regime, model):
    check_regime(regime, model.n, model.q)
    if regime == "linear_only" and (np.any(model.drift != 0) or not model.b.is_zero):
        raise RegimeError("regime/model mismatch")
    if regime == "critical" and model.n == 1 and not model.b.is_zero and model.b.kind != "constant":
        raise RegimeError("regime/model mismatch")


def residual_series(run, spec: ExpansionSpec, p_list=P_VALUES, t_min=0.0, t_max=math.inf,
                    expansion_fn=None):
    """One :class:`RateReport` per ``p`` over the run's snapshots in ``[t_min, t_max]``.

    ``expansion_fn(t, grid)`` overrides the expansion (used for self-tests).
    """
    grid = run.config.grid
    times = [t for t in run.times if t_min <= t <= t_max and t > 1.0]
    exps = {}
    for p in p_list:
        e, lg = theoretical_rate(spec.regime, spec.n, p, spec.q, spec.order)
        exps[_pkey(p)] = (e, lg)
    res = {k: [] for k in exps}
    M = run.ledger.mass
    for t in times:
        if expansion_fn is None:
            _check_box(grid, M, t)
            e = build_expansion(spec, t, grid)
        else:
            e = expansion_fn(t, grid)
        diff = run.snapshot(t) - e
        for p in p_list:
            res[_pkey(p)].append(lp_norm(diff, p))
    out = []
    for p in p_list:
        k = _pkey(p)
        e, lg = exps[k]
        norm = (np.asarray(res[k]) * normalization(times, e, lg)).tolist() if times else []
        out.append(RateReport(spec.regime, spec.order, k, list(times), res[k], norm, e, lg))
    return out


def fit_rate(times, values, window=None, has_log=False):
    """Least-squares slope of ``log v`` against ``log t``.

    With ``has_log`` a ``log log t`` regressor is added and the slope is the
    coefficient of ``log t`` alone.  Returns ``(slope, stderr)``.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0] * (1 - 1e-12)) & (t <= window[1] * (1 + 1e-12))
        t, v = t[sel], v[sel]
    if len(t) < 8:
        raise ValueError(f"fit needs at least 8 points in the window, got {len(t)}")
    if np.any(v <= 0):
        raise ResidualUnderflowError("residual underflow: use a coarser tolerance")
    cols = [np.ones_like(t), np.log(t)]
    if has_log:
        cols.append(np.log(np.log(t)))
    A = np.stack(cols, axis=1)
    y = np.log(v)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(t) - A.shape[1], 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.pinv(A.T @ A)
    return float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0)))


def log_model_comparison(times, residuals, exponent, window=None):
    """Compare ``y = a`` and ``y = a + c log t`` for ``y = residual t^-exponent``.

    Selection uses AIC (the two models are nested, so plain RSS always favours
    the larger one).  Returns a dict with both fits and the choice.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(residuals, dtype=float) * t ** (-exponent)
    if window is not None:
        sel = (t >= window[0] * (1 - 1e-12)) & (t <= window[1] * (1 + 1e-12))
        t, y = t[sel], y[sel]
    n = len(t)
    rss_const = float(np.sum((y - y.mean()) ** 2))
    A = np.stack([np.ones_like(t), np.log(t)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    rss_log = float(np.sum((y - A @ coef) ** 2))
    tiny = 1e-300
    aic_const = n * math.log(rss_const / n + tiny) + 2 * 1
    aic_log = n * math.log(rss_log / n + tiny) + 2 * 2
    return {
        "a_const": float(y.mean()),
        "rss_const": rss_const,
        "a": float(coef[0]),
        "c": float(coef[1]),
        "rss_log": rss_log,
        "aic_const": aic_const,
        "aic_log": aic_log,
        "prefers_log": bool(aic_log < aic_const),
    }


def expected_log_coefficient(model, M, p, ref=None):
    """``alpha_n |M|^(2/n) |M| ||d.grad G(1)||_p``: slope of ``y`` in ``log t``."""
    n = model.n
    ref = ref or _reference_grid(n)
    dg = np.tensordot(grad_heat_g(ref.points(), 1.0, n), model.drift, axes=([-1], [0]))
    return alpha_n(n) * abs(M) ** (2.0 / n) * abs(M) * lp_norm(Field(ref, dg), p)


def _reference_grid(n):
    return Grid(1, 30.0, 8192) if n == 1 else Grid(2, 14.0, 256)


def c_star(constants: ConstantSet, model, p, ref: Grid | None = None, quad=DEFAULT_QUAD):
    """``||(calM + calN - m).grad G(1) + |M|^(2/n) M Psi*||_p`` on a reference grid."""
    if not model.is_critical:
        raise RegimeError("regime/model mismatch")
    n = model.n
    if constants.calM is None:
        raise MissingConstantError("calM")
    calN = constants.calN
    if calN is None:
        if n >= 2:
            raise MissingConstantError("calN")
        calN = np.zeros(n)
    ref = ref or _reference_grid(n)
    pts = ref.points()
    vec = np.asarray(constants.calM) + np.asarray(calN) - np.asarray(constants.m)
    first = np.tensordot(grad_heat_g(pts, 1.0, n), vec, axes=([-1], [0]))
    M = constants.M
    second = abs(M) ** (2.0 / n) * M * psi_star(pts, n, model.d, quad)
    return lp_norm(Field(ref, first + np.reshape(second, ref.shape)), p)


def c_star_check(run, constants: ConstantSet, p, t_min=1.0 + 1e-12, ref=None):
    """Left side ``t^(n/2 (1-1/p) + 1/2) ||u - MG - alpha |M|^(2/n) M log t d.grad G||_p``.

    Returns ``(times, lhs, C*, relative gap at the final time)``.
    """
    model = run.model
    n = model.n
    grid = run.config.grid
    p = _pval(p)
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    expo = (n / 2.0) * (1.0 - inv_p) + 0.5
    M = constants.M
    cst = c_star(constants, model, p, ref)
    pts = grid.points()
    amp = alpha_n(n) * abs(M) ** (2.0 / n) * M
    times, lhs = [], []
    for t in run.times:
        if t < t_min:
            continue
        prof = M * heat_g(pts, t, n) + amp * math.log(t) * np.tensordot(
            grad_heat_g(pts, t, n), model.drift, axes=([-1], [0]))
        r = lp_norm(run.snapshot(t) - Field(grid, prof), p)
        times.append(t)
        lhs.append(t ** expo * r)
    gap = abs(lhs[-1] - cst) / cst if cst > 0 else math.inf
    return times, lhs, cst, gap


def last_decade_ratio(times, values):
    """``value(t_end / 10) / value(t_end)`` using the nearest snapshot to ``t_end/10``."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    i0 = int(np.argmin(np.abs(np.log(t / (t[-1] / 10.0)))))
    return float(v[i0] / v[-1])


def verdict(report: RateReport, policy: TolerancePolicy = TolerancePolicy(), kind=None):
    """Rate check (``|slope - exponent| <= slope_tol``) or trend check (``o(.)`` claims)."""
    kind = kind or ("rate" if report.order == 1 else "trend")
    if kind == "rate":
        if report.slope is None:
            report.slope, report.stderr = fit_rate(report.times, report.residuals,
                                                   report.window, report.has_log)
        report.margin = policy.slope_tol - abs(report.slope - report.exponent)
    else:
        ratio = last_decade_ratio(report.times, report.normalized)
        report.margin = ratio - policy.trend_factor
    report.check = kind
    report.passed = bool(report.margin >= 0)
    return report.passed


class AsymptoticExpansion(BaseEstimator):
    """Estimator view of an expansion.

    ``fit(run)`` computes the constants from the run ledger, ``predict(t)``
    samples the expansion on the run grid and ``score(run)`` is minus the mean
    normalized residual over the snapshots in ``[t_min, inf)``.
    """

    def __init__(self, regime="critical", order=2, p=1, t_min=10.0, rtol=1e-10, atol=1e-12):
        self.regime = regime
        self.order = order
        self.p = p
        self.t_min = t_min
        self.rtol = rtol
        self.atol = atol

    def fit(self, run, y=None):
        _check_model(self.regime, run.model)
        t_final = max(run.times)
        self.constants_ = finalize_constants(run.ledger, run.model, t_final,
                                             require_long=False)
        self.spec_ = ExpansionSpec(self.regime, self.order, self.constants_, run.model.n,
                                   run.model.q, run.model.d,
                                   QuadratureSpec(rtol=self.rtol, atol=self.atol))
        self.grid_ = run.config.grid
        return self

    def predict(self, t):
        return build_expansion(self.spec_, t, self.grid_)

    def score(self, run, y=None):
        rep = residual_series(run, self.spec_, [self.p], t_min=self.t_min)[0]
        return -float(np.mean(rep.normalized))
