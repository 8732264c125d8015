"""Problem data: dimension, exponent, drift, diffusion perturbation, initial data."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import RegimeError
from .kernels import _components, critical_q, grad_heat_g, heat_g

B_KINDS = ("zero", "power_decay", "constant")


@dataclass(frozen=True)
class DiffusionPerturbation:
    """``b`` in ``a(x) = 1 + b(x)``.

    ``power_decay``: ``b0 * (1 + |x|^2)^(-delta/2)``; ``constant``: ``b0``.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    delta: float = 2.0

    def __post_init__(self):
        if self.kind not in B_KINDS:
            raise ValueError(f"unknown b.kind {self.kind!r}; expected one of {B_KINDS}")
        if not abs(self.amplitude) < 1.0:
            raise ValueError("|b| must stay below 1")
        if self.kind == "power_decay" and not self.delta > 0:
            raise ValueError("b.delta must be positive")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.amplitude == 0.0

    @property
    def sup_norm(self) -> float:
        return 0.0 if self.kind == "zero" else abs(self.amplitude)

    def __call__(self, x, n=1):
        comps = _components(x, n)
        if self.kind == "zero":
            return np.zeros(comps[0].shape)
        if self.kind == "constant":
            return np.full(comps[0].shape, float(self.amplitude))
        r2 = sum(c * c for c in comps)
        return self.amplitude * (1.0 + r2) ** (-self.delta / 2.0)

    def gradient(self, x, n=1):
        comps = _components(x, n)
        if self.kind != "power_decay":
            return np.zeros(comps[0].shape + (n,))
        r2 = sum(c * c for c in comps)
        common = -self.amplitude * self.delta * (1.0 + r2) ** (-self.delta / 2.0 - 1.0)
        return np.stack([common * c for c in comps], axis=-1)

    def envelope_constant(self) -> float:
        """``C`` with ``|b| + (1+|x|^2)^(1/2)|grad b| <= C (1+|x|^2)^(-delta/2)``."""
        return self.sup_norm * (1.0 + self.delta)


@dataclass(frozen=True)
class Gaussian:
    """``mass * G(x - center, width)``; ``width`` is the heat time (variance ``2 width``)."""

    mass: float = 1.0
    width: float = 1.0
    center: tuple = (0.0,)

    def __call__(self, x, n):
        comps = _components(x, n)
        c = _vector(self.center, n)
        shifted = np.stack([comps[i] - c[i] for i in range(n)], axis=-1)
        return self.mass * heat_g(shifted, self.width, n)

    def moments(self, n):
        return self.mass, self.mass * _vector(self.center, n)

    @property
    def radius(self) -> float:
        return float(np.max(np.abs(self.center))) + math.sqrt(2.0 * self.width)


@dataclass(frozen=True)
class Dipole:
    """``scale * d/dx_1 G(x, width)``: zero mass, first moment ``-scale e_1``."""

    scale: float = 1.0
    width: float = 1.0

    def __call__(self, x, n):
        return self.scale * grad_heat_g(x, self.width, n)[..., 0]

    def moments(self, n):
        m = np.zeros(n)
        m[0] = -self.scale
        return 0.0, m

    @property
    def radius(self) -> float:
        return math.sqrt(2.0 * self.width)


def _vector(v, n):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.size == 1 and n > 1:
        v = np.full(n, float(v[0]))
    if v.shape != (n,):
        raise ValueError(f"expected a vector of length {n}, got {v}")
    return v


@dataclass(frozen=True)
class InitialData:
    """Sum of :class:`Gaussian` and :class:`Dipole` components."""

    components: tuple = (Gaussian(),)

    def __call__(self, x, n=1):
        return sum(c(x, n) for c in self.components)

    def moments(self, n):
        M, m = 0.0, np.zeros(n)
        for c in self.components:
            cm, cv = c.moments(n)
            M += cm
            m = m + cv
        return M, m

    @property
    def radius(self) -> float:
        return max(c.radius for c in self.components)


@dataclass(frozen=True)
class ModelSpec:
    """Cauchy problem ``u_t - div(a grad u) = d . grad(|u|^(q-1) u)``."""

    n: int = 1
    q: float = 3.0
    d: tuple = (1.0,)
    b: DiffusionPerturbation = field(default_factory=DiffusionPerturbation)
    u0: InitialData = field(default_factory=InitialData)

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("n must be 1 or 2")
        if not self.q > 1.0 + 1.0 / self.n:
            raise RegimeError("q must exceed 1 + 1/n")
        object.__setattr__(self, "d", tuple(float(v) for v in _vector(self.d, self.n)))
        object.__setattr__(self, "q", float(self.q))

    @property
    def drift(self) -> np.ndarray:
        return np.asarray(self.d)

    @property
    def is_critical(self) -> bool:
        return abs(self.q - critical_q(self.n)) < 1e-12

    def initial_moments(self):
        return self.u0.moments(self.n)
