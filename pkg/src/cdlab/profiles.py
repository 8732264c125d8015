"""Asymptotic profiles and the per-regime expansions built from them.

Every profile here is a time integral of a heat-kernel expression; the
convolutions are done in closed form (see :mod:`cdlab.kernels`) so only a 1-D
adaptive Gauss-Kronrod quadrature remains.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.integrate import quad_vec

from .exceptions import (
    InvalidTimeError,
    LedgerGapError,
    MissingConstantError,
    QuadratureError,
    RegimeError,
)
from .grid_field import Field, Grid
from .kernels import (
    GaussianExpr,
    alpha_n,
    critical_q,
    dt_grad_heat_g,
    gq_coefficient,
    grad_heat_g,
)

TAYLOR_CUTOFF = 1e-6

REGIMES = ("subcritical", "critical", "critical_1d", "supercritical", "linear_only", "ik_uhat")
_ALIASES = {
    "critical_n>=2": "critical",
    "critical_n≥2": "critical",
    "critical_n=1": "critical_1d",
}


@dataclass(frozen=True)
class QuadratureSpec:
    rtol: float = 1e-10
    atol: float = 1e-12
    limit: int = 2000
    rule: str = "gk21"

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("quadrature tolerances must be positive")


DEFAULT_QUAD = QuadratureSpec()


def integrate(func, a, b, quad: QuadratureSpec = DEFAULT_QUAD):
    """Adaptive vector-valued Gauss-Kronrod integral with a hard error check."""
    if b == a:
        return np.zeros_like(np.asarray(func(a), dtype=float))
    res, err, info = quad_vec(
        func, a, b, epsabs=quad.atol, epsrel=quad.rtol, norm="max",
        limit=quad.limit, quadrature=quad.rule, full_output=True,
    )
    scale = float(np.max(np.abs(res))) if np.size(res) else 0.0
    if info.status != 0 and err > max(quad.atol, quad.rtol * scale) * 10:
        raise QuadratureError(
            f"quadrature did not converge (error estimate {err:.3e})", error_estimate=err
        )
    return res


def _drift(d, n):
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if d.shape != (n,):
        raise ValueError(f"drift must have length {n}")
    return d


def _d_grad(x, theta, d, n):
    return grad_heat_g(x, theta, n) @ d


def psi_star(x, n=1, d=1.0, quad: QuadratureSpec = DEFAULT_QUAD):
    """Unit-time third-order profile generated by the critical nonlinearity.

    Evaluated as ``alpha_n * int_0^kappa w^-1 d.(grad G(x,1-w) - grad G(x,1)) dw``
    with ``kappa = 2/(n+2)``; below ``w = 1e-6`` the integrand is replaced by
    its limit ``-d . d_t grad G(x, 1)``.
    """
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    d = _drift(d, n)
    x = np.asarray(x, dtype=float)
    base = _d_grad(x, 1.0, d, n)
    limit = -(dt_grad_heat_g(x, 1.0, n) @ d)
    kappa = 2.0 / (n + 2)

    def integrand(w):
        if w < TAYLOR_CUTOFF:
            return limit
        return (_d_grad(x, 1.0 - w, d, n) - base) / w

    return alpha_n(n) * integrate(integrand, 0.0, kappa, quad)


def psi(x, t, n=1, d=1.0, quad: QuadratureSpec = DEFAULT_QUAD):
    """``t^(-(n+1)/2) psi_star(x / sqrt(t))``."""
    if not t > 0:
        raise InvalidTimeError("invalid time")
    x = np.asarray(x, dtype=float)
    return t ** (-(n + 1) / 2.0) * psi_star(x / math.sqrt(t), n, d, quad)


def v_exact(x, t, n=1, d=1.0, quad: QuadratureSpec = DEFAULT_QUAD):
    """Duhamel integral of the critical nonlinearity of ``G`` started at time 1.

    ``alpha_n * int_1^t tau^-1 d.grad G(x, t - tau + tau/q) dtau`` with
    ``tau = exp(sigma)``.
    """
    if not t >= 2:
        raise InvalidTimeError("v_exact requires t >= 2")
    d = _drift(d, n)
    x = np.asarray(x, dtype=float)
    kappa = 1.0 - 1.0 / critical_q(n)

    def integrand(sigma):
        return _d_grad(x, t - kappa * math.exp(sigma), d, n)

    return alpha_n(n) * integrate(integrand, 0.0, math.log(t), quad)


def check_subcritical(q, n):
    if not (1.0 + 1.0 / n < q < 1.0 + 2.0 / n):
        raise RegimeError("not subcritical")


def z_profile(x, t, q, n=1, d=1.0, quad: QuadratureSpec = DEFAULT_QUAD):
    """Subcritical second profile: Duhamel integral of ``d.grad(G^q)`` from 0.

    The ``tau^(-a)`` endpoint singularity, ``a = n(q-1)/2 < 1``, is removed by
    ``tau = sigma^(1/(1-a))``.
    """
    check_subcritical(q, n)
    if not t > 0:
        raise InvalidTimeError("invalid time")
    d = _drift(d, n)
    x = np.asarray(x, dtype=float)
    a = n * (q - 1.0) / 2.0
    p = 1.0 / (1.0 - a)
    shrink = 1.0 - 1.0 / q
    pref = (4.0 * math.pi) ** (-a) * q ** (-n / 2.0) * p

    def integrand(sigma):
        return _d_grad(x, t - shrink * sigma**p, d, n)

    return pref * integrate(integrand, 0.0, t ** (1.0 - a), quad)


def _lookup_moment(series, t, n):
    if callable(series):
        value = series(t)
    else:
        value = None
        for key, val in series.items():
            if abs(float(key) - t) <= 1e-12 * max(1.0, abs(t)):
                value = val
                break
    if value is None:
        raise LedgerGapError(f"ledger gap: no first moment at t={t!r}")
    return _drift(value, n)


def ik_drift_integral(t, q, n):
    """``int_0^t |G(., 1 + tau)^q|_{L^1} dtau`` in closed form."""
    a = n * (q - 1.0) / 2.0
    c = (4.0 * math.pi) ** (-a) * q ** (-n / 2.0)
    if abs(a - 1.0) < 1e-14:
        return c * math.log1p(t)
    return c * ((1.0 + t) ** (1.0 - a) - 1.0) / (1.0 - a)


def ik_shift(t, q, n, d, M, moment1_series):
    """Coefficient ``c(t)`` of the dipole term in the unified profile.

    The moment integral ``int x_i d.grad(G^q) dx`` equals ``-d_i |G^q|_{L^1}``
    after integration by parts, hence the plus sign below.
    """
    d = _drift(d, n)
    m1 = _lookup_moment(moment1_series, t, n)
    return m1 + abs(M) ** (q - 1.0) * M * d * ik_drift_integral(t, q, n)


def ik_uhat(x, t, q, n=1, d=1.0, M=1.0, moment1_series=None,
            quad: QuadratureSpec = DEFAULT_QUAD):
    """Unified profile valid for every ``q > 1 + 1/n`` (flat diffusion)."""
    if moment1_series is None:
        raise LedgerGapError("ledger gap: no first-moment series supplied")
    if not t > 0:
        raise InvalidTimeError("invalid time")
    d = _drift(d, n)
    x = np.asarray(x, dtype=float)
    c = ik_shift(t, q, n, d, M, moment1_series)
    base = GaussianExpr.heat(1.0 + t, n, coef=M) - GaussianExpr.heat(1.0 + t, n).directional(c)
    out = base(x)
    amp = abs(M) ** (q - 1.0) * M
    if amp != 0.0 and np.any(d != 0.0):
        def integrand(sigma):
            tau = math.expm1(sigma)
            theta = t - tau + (1.0 + tau) / q
            return (1.0 + tau) * gq_coefficient(1.0 + tau, q, n) * _d_grad(x, theta, d, n)

        out = out + amp * integrate(integrand, 0.0, math.log1p(t), quad)
    return out


# --------------------------------------------------------------------------
# expansions


@dataclass
class ExpansionSpec:
    """Which asymptotic expansion to assemble and to what order."""

    regime: str
    order: int = 2
    constants: object = None
    n: int = 1
    q: float = 3.0
    d: tuple = (1.0,)
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        self.regime = _ALIASES.get(self.regime, self.regime)
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.order not in (1, 2, 3):
            raise ValueError("order must be 1, 2 or 3")
        self.d = tuple(float(v) for v in np.atleast_1d(self.d))
        if len(self.d) != self.n:
            raise ValueError(f"drift must have length {self.n}")
        check_regime(self.regime, self.n, self.q)


def regime_of(n, q, tol=1e-12):
    qc = critical_q(n)
    if q <= 1.0 + 1.0 / n:
        raise RegimeError("below supercritical-mass threshold")
    if abs(q - qc) <= tol:
        return "critical"
    return "subcritical" if q < qc else "supercritical"


def check_regime(regime, n, q):
    """Raise :class:`RegimeError` when ``regime`` does not match ``(n, q)``."""
    if regime in ("linear_only", "ik_uhat"):
        regime_of(n, q)
        return
    actual = regime_of(n, q)
    wanted = "critical" if regime == "critical_1d" else regime
    if actual != wanted or (regime == "critical_1d" and n != 1):
        raise RegimeError("regime/model mismatch")


def _need(constants, name):
    value = getattr(constants, name, None) if constants is not None else None
    if value is None:
        raise MissingConstantError(name)
    return value


def expansion_terms(spec: ExpansionSpec, t):
    """List of ``(label, evaluator)`` pairs; each evaluator maps points to values."""
    n, q, cs = spec.n, spec.q, spec.constants
    d = np.asarray(spec.d)
    M = float(_need(cs, "M"))
    G = GaussianExpr.heat(t, n)
    terms = [("M G", lambda x: M * G(x))]
    if spec.order == 1:
        return terms

    regime = spec.regime
    amp = abs(M) ** (q - 1.0) * M
    if regime == "linear_only":
        m = np.asarray(_need(cs, "m"), dtype=float)
        terms.append(("-m.grad G", G.directional(-m)))
    elif regime == "supercritical":
        beta = np.asarray(_need(cs, "beta"), dtype=float)
        terms.append(("beta.grad G", G.directional(beta)))
    elif regime == "subcritical":
        terms.append(("|M|^(q-1) M Z", lambda x: amp * z_profile(x, t, q, n, d, spec.quad)))
    elif regime == "ik_uhat":
        moments = _need(cs, "moment1")
        terms = [("u_hat", lambda x: ik_uhat(x, t, q, n, d, M, moments, spec.quad))]
    elif regime == "critical":
        log_coef = alpha_n(n) * amp * math.log(t)
        terms.append(("alpha_n |M|^(2/n) M log t d.grad G", G.directional(log_coef * d)))
        if spec.order == 3:
            m = np.asarray(_need(cs, "m"), dtype=float)
            calM = np.asarray(_need(cs, "calM"), dtype=float)
            if n >= 2:
                calN = np.asarray(_need(cs, "calN"), dtype=float)
            else:
                calN = getattr(cs, "calN", None)
                calN = np.zeros(n) if calN is None else np.asarray(calN, dtype=float)
            terms.append(("(calM + calN - m).grad G", G.directional(calM + calN - m)))
            terms.append(("|M|^(2/n) M Psi", lambda x: amp * psi(x, t, n, d, spec.quad)))
    elif regime == "critical_1d":
        K = _need(cs, "K")
        coef = (K(t) + alpha_n(1) * d[0] * M**3) * math.log(t)
        terms.append(("(K + alpha_1 d M^3) log t dxG", G.directional([coef])))
        if spec.order == 3:
            m = np.asarray(_need(cs, "m"), dtype=float)
            calM = np.asarray(_need(cs, "calM"), dtype=float)
            Phi = _need(cs, "Phi")
            terms.append(("(calM - m) dxG", G.directional(calM - m)))
            terms.append(("M^3 Psi", lambda x: M**3 * psi(x, t, 1, d, spec.quad)))
            terms.append(("Phi", lambda x, _t=t: Phi(_t, x)))
    return terms


def build_expansion(spec: ExpansionSpec, t, grid: Grid) -> Field:
    """Sample the expansion on ``grid`` at time ``t``.

    The returned field carries the term labels in ``field_terms`` of the
    second return value.
    """
    return build_expansion_with_terms(spec, t, grid)[0]


def build_expansion_with_terms(spec: ExpansionSpec, t, grid: Grid):
    if not t > 0:
        raise InvalidTimeError("invalid time")
    terms = expansion_terms(spec, t)
    x = grid.points()
    values = np.zeros(grid.shape)
    for _, evaluate in terms:
        values = values + np.reshape(evaluate(x), grid.shape)
    return Field(grid, values, t), [label for label, _ in terms]
