"""Closed-form heat-kernel algebra.

A :class:`GaussianExpr` is a finite sum ``sum c * d^alpha G(x, theta)`` with
``|alpha| <= 2``.  Convolutions of such sums stay in the family (times add,
derivative indices add), which is what lets every profile reduce to a 1-D
time quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidTimeError, OrderOverflowError, RegimeError

MAX_ORDER = 2


def alpha_n(n: int) -> float:
    """Coefficient of the logarithmic profile at the critical exponent."""
    return (1.0 + 2.0 / n) ** (-n / 2.0) / (4.0 * math.pi)


def critical_q(n: int) -> float:
    return 1.0 + 2.0 / n


def _components(x, n):
    """Split points into coordinate arrays; n=1 accepts bare coordinates."""
    x = np.asarray(x, dtype=float)
    if n == 1:
        if x.ndim >= 2 and x.shape[-1] == 1:
            x = x[..., 0]
        return (x,)
    if x.shape[-1] != n:
        raise ValueError(f"points must have trailing axis of length {n}")
    return tuple(x[..., i] for i in range(n))


def _check_time(t):
    if not np.all(np.asarray(t) > 0):
        raise InvalidTimeError("invalid time")


def heat_g(x, t, n=1):
    """``(4 pi t)^(-n/2) exp(-|x|^2 / 4t)``."""
    _check_time(t)
    comps = _components(x, n)
    r2 = sum(c * c for c in comps)
    return (4.0 * math.pi * t) ** (-n / 2.0) * np.exp(-r2 / (4.0 * t))


def grad_heat_g(x, t, n=1):
    """Spatial gradient of :func:`heat_g`, trailing axis of length ``n``."""
    comps = _components(x, n)
    g = heat_g(x, t, n)
    return np.stack([-c / (2.0 * t) * g for c in comps], axis=-1)


def hess_heat_g(x, t, n=1):
    """Hessian of :func:`heat_g`, trailing shape ``(n, n)``."""
    comps = _components(x, n)
    g = heat_g(x, t, n)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            v = comps[i] * comps[j] / (4.0 * t * t) * g
            if i == j:
                v = v - g / (2.0 * t)
            row.append(v)
        rows.append(np.stack(row, axis=-1))
    return np.stack(rows, axis=-2)


def dt_grad_heat_g(x, t, n=1):
    """``d/dt grad G = grad Laplacian G``; used for removable-limit fallbacks."""
    comps = _components(x, n)
    r2 = sum(c * c for c in comps)
    g = heat_g(x, t, n)
    factor = r2 / (4.0 * t * t) - (n + 2) / (2.0 * t)
    return np.stack([-c / (2.0 * t) * factor * g for c in comps], axis=-1)


def _deriv(comps, alpha, theta, g):
    order = sum(alpha)
    if order == 0:
        return g
    if order == 1:
        i = alpha.index(1)
        return -comps[i] / (2.0 * theta) * g
    if 2 in alpha:
        i = alpha.index(2)
        return (comps[i] ** 2 / (4.0 * theta**2) - 1.0 / (2.0 * theta)) * g
    i, j = [k for k, a in enumerate(alpha) if a == 1]
    return comps[i] * comps[j] / (4.0 * theta**2) * g


@dataclass(frozen=True)
class GaussianExpr:
    """``sum coef * d^alpha G(., theta)`` in dimension ``n``.

    ``terms`` holds ``(coef, alpha, theta)`` with ``alpha`` a tuple of length
    ``n``.  Instances are immutable; arithmetic returns new expressions.
    """

    n: int
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        clean = []
        for coef, alpha, theta in self.terms:
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.n or min(alpha) < 0:
                raise ValueError(f"bad multi-index {alpha} for n={self.n}")
            if sum(alpha) > MAX_ORDER:
                raise OrderOverflowError("order overflow")
            if not theta > 0:
                raise InvalidTimeError("invalid time")
            clean.append((float(coef), alpha, float(theta)))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def heat(cls, t, n=1, coef=1.0, alpha=None):
        alpha = alpha if alpha is not None else (0,) * n
        return cls(n, ((coef, alpha, t),))

    @classmethod
    def empty(cls, n=1):
        return cls(n, ())

    def __len__(self):
        return len(self.terms)

    def __add__(self, other):
        if not isinstance(other, GaussianExpr):
            return NotImplemented
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        return GaussianExpr(self.n, self.terms + other.terms).simplify()

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return GaussianExpr(self.n, tuple((c * a, al, th) for a, al, th in self.terms))

    __mul__ = scale
    __rmul__ = scale

    def simplify(self):
        """Merge terms sharing ``(alpha, theta)`` and drop exact zeros."""
        acc = {}
        for coef, alpha, theta in self.terms:
            key = (alpha, theta)
            acc[key] = acc.get(key, 0.0) + coef
        terms = tuple((c, a, th) for (a, th), c in acc.items() if c != 0.0)
        return GaussianExpr(self.n, terms)

    def derivative(self, i):
        """``d/dx_i`` of the expression."""
        out = []
        for coef, alpha, theta in self.terms:
            a = list(alpha)
            a[i] += 1
            if sum(a) > MAX_ORDER:
                raise OrderOverflowError("order overflow")
            out.append((coef, tuple(a), theta))
        return GaussianExpr(self.n, tuple(out))

    def directional(self, d):
        """``d . grad`` of the expression."""
        d = np.atleast_1d(np.asarray(d, dtype=float))
        out = GaussianExpr.empty(self.n)
        for i, di in enumerate(d):
            if di != 0.0:
                out = out + self.derivative(i).scale(di)
        return out

    def __call__(self, x):
        comps = _components(x, self.n)
        shape = comps[0].shape
        total = np.zeros(shape)
        for coef, alpha, theta in self.terms:
            g = heat_g(x, theta, self.n)
            total = total + coef * _deriv(comps, alpha, theta, g)
        return total

    def integral(self) -> float:
        """Derivative terms integrate to zero; each ``G`` has unit mass."""
        return float(sum(c for c, a, _ in self.terms if sum(a) == 0))


def semigroup_convolve(a: GaussianExpr, b: GaussianExpr) -> GaussianExpr:
    """Exact convolution ``a * b`` using ``G(s) * G(t) = G(s + t)``."""
    if a.n != b.n:
        raise ValueError("dimension mismatch")
    terms = []
    for ca, aa, ta in a.terms:
        for cb, ab, tb in b.terms:
            alpha = tuple(i + j for i, j in zip(aa, ab))
            if sum(alpha) > MAX_ORDER:
                raise OrderOverflowError("order overflow")
            terms.append((ca * cb, alpha, ta + tb))
    return GaussianExpr(a.n, tuple(terms)).simplify()


def gq_coefficient(tau, q, n):
    """Mass of ``G(., tau)^q``: ``(4 pi tau)^(-n(q-1)/2) q^(-n/2)``."""
    return (4.0 * math.pi * tau) ** (-n * (q - 1.0) / 2.0) * q ** (-n / 2.0)


def gq_reduce(tau, q, n=1) -> GaussianExpr:
    """``G(., tau)^q`` as the single term ``coef * G(., tau / q)``."""
    if not q > 1:
        raise RegimeError("q must exceed 1")
    _check_time(tau)
    return GaussianExpr.heat(tau / q, n, coef=gq_coefficient(tau, q, n))


def f_star(y, n=1):
    """Zero-mass profile kernel at unit time (difference of two Gaussians)."""
    comps = _components(y, n)
    r2 = sum(c * c for c in comps)
    qc = critical_q(n)
    pref = 1.0 / (2.0 ** (n + 2) * math.pi ** (n / 2.0 + 1.0))
    return pref * (np.exp(-r2 * qc / 4.0) - qc ** (-n / 2.0) * np.exp(-r2 / 4.0))


def f_kernel(y, s, n=1):
    """``s^(-n/2-1) F*(y / sqrt(s))``."""
    _check_time(s)
    y = np.asarray(y, dtype=float)
    return s ** (-n / 2.0 - 1.0) * f_star(y / math.sqrt(s), n)


def f_expr(s, n=1) -> GaussianExpr:
    """``F(., s) = alpha_n / s * (G(., s/q) - G(., s))`` with ``q = 1 + 2/n``."""
    _check_time(s)
    c = alpha_n(n) / s
    qc = critical_q(n)
    return GaussianExpr(n, ((c, (0,) * n, s / qc), (-c, (0,) * n, s)))
