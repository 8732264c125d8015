"""Uniform cell-centered grids on a truncated box and sampled fields.

All integrals are midpoint rules with cell volume ``h**n``; sums go through
``numpy.sum`` which uses pairwise (compensated) accumulation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from .exceptions import CorruptFieldError, ResolutionLossError

__all__ = [
    "Grid",
    "Field",
    "check_field",
    "lp_norm",
    "moment0",
    "moment1",
    "resample",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class Grid:
    """Tensor grid of ``N**n`` cells covering ``[-L, L]**n``.

    Nodes sit at cell centers ``x_i = -L + (i + 1/2) h`` so the node set is
    symmetric under ``x -> -x``.
    """

    n: int
    L: float
    N: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.n}")
        if self.N < 16 or self.N % 2:
            raise ValueError(f"points_per_axis must be even and >= 16, got {self.N}")
        if not self.L > 0:
            raise ValueError("half_width must be positive")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    @property
    def axis(self) -> np.ndarray:
        # (i + 1/2) - N/2 is exactly antisymmetric in floating point
        return (np.arange(self.N) + 0.5 - self.N / 2) * self.h

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    def coords(self):
        """Node coordinates, one array per axis, broadcast to ``shape``."""
        ax = self.axis
        if self.n == 1:
            return (ax,)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return (X, Y)

    def points(self) -> np.ndarray:
        """Coordinates stacked on the last axis, shape ``shape + (n,)``."""
        return np.stack(self.coords(), axis=-1)

    def sample(self, func, t=None) -> "Field":
        """Sample ``func(points)`` where points has shape ``shape + (n,)``."""
        return Field(self, np.asarray(func(self.points()), dtype=float), t)

    def zeros(self, t=None) -> "Field":
        return Field(self, np.zeros(self.shape), t)

    def contains(self, other: "Grid") -> bool:
        return self.n == other.n and self.L >= other.L


class Field:
    """Real samples on a :class:`Grid`; immutable after construction."""

    __slots__ = ("grid", "values", "time_tag")

    def __init__(self, grid: Grid, values, time_tag=None):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            values = values.reshape(grid.shape)
        values.flags.writeable = False
        self.grid = grid
        self.values = values
        if time_tag is not None:
            time_tag = float(time_tag)
            if time_tag < 0:
                raise ValueError("time_tag must be nonnegative")
        self.time_tag = time_tag

    def __repr__(self):
        return f"Field(grid={self.grid!r}, t={self.time_tag})"

    def _binary(self, other, op):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            other = other.values
        return Field(self.grid, op(self.values, other), self.time_tag)

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values, self.time_tag)

    def with_time(self, t) -> "Field":
        return Field(self.grid, self.values, t)


def check_field(f: Field) -> Field:
    """Raise :class:`CorruptFieldError` unless every sample is finite."""
    if not isinstance(f, Field):
        raise TypeError(f"expected Field, got {type(f).__name__}")
    if not np.all(np.isfinite(f.values)):
        raise CorruptFieldError("corrupt field")
    return f


def lp_norm(f: Field, p) -> float:
    """Discrete L^p norm, ``p`` in {1, 2, inf}."""
    check_field(f)
    a = np.abs(f.values)
    if p == 1:
        return float(np.sum(a) * f.grid.cell_volume)
    if p == 2:
        return float(math.sqrt(np.sum(a * a) * f.grid.cell_volume))
    if p in (np.inf, math.inf, "inf"):
        return float(a.max()) if a.size else 0.0
    raise ValueError(f"p must be one of 1, 2, inf; got {p!r}")


def moment0(f: Field) -> float:
    check_field(f)
    return float(np.sum(f.values) * f.grid.cell_volume)


def moment1(f: Field) -> np.ndarray:
    check_field(f)
    vol = f.grid.cell_volume
    return np.array([np.sum(x * f.values) * vol for x in f.grid.coords()])


def _padded_axis(grid: Grid):
    # Dirichlet box: the field vanishes on the box boundary
    return np.concatenate(([-grid.L], grid.axis, [grid.L]))


def resample(f: Field, target: Grid, return_error: bool = False):
    """Cubic interpolation of ``f`` onto ``target``, zero outside the source box.

    With ``return_error=True`` also returns a bound on the mass change,
    ``|int(cubic) - int(linear)| + |int(linear) - int(f)|`` evaluated on the
    target grid.
    """
    check_field(f)
    src = f.grid
    if target.n != src.n:
        raise ValueError("dimension mismatch")
    if target.L < src.L * (1 - 1e-12):
        raise ValueError("target box must contain the source box")
    if target.h > 2.0 * src.h * (1 + 1e-12):
        raise ResolutionLossError("resolution loss")

    if target == src:
        out = Field(target, f.values, f.time_tag)
        return (out, 0.0) if return_error else out

    ax = _padded_axis(src)
    if src.n == 1:
        vals = np.concatenate(([0.0], f.values, [0.0]))
        x = target.axis
        inside = np.abs(x) <= src.L
        cubic = np.zeros_like(x)
        linear = np.zeros_like(x)
        cubic[inside] = CubicSpline(ax, vals)(x[inside])
        linear[inside] = np.interp(x[inside], ax, vals)
    else:
        vals = np.pad(f.values, 1)
        pts = target.points().reshape(-1, 2)
        inside = np.all(np.abs(pts) <= src.L, axis=1)
        cubic = np.zeros(len(pts))
        linear = np.zeros(len(pts))
        cubic[inside] = RegularGridInterpolator((ax, ax), vals, method="cubic")(pts[inside])
        linear[inside] = RegularGridInterpolator((ax, ax), vals, method="linear")(pts[inside])
        cubic = cubic.reshape(target.shape)
        linear = linear.reshape(target.shape)

    out = Field(target, cubic, f.time_tag)
    if not return_error:
        return out
    vol = target.cell_volume
    bound = abs(np.sum(cubic - linear) * vol) + abs(np.sum(linear) * vol - moment0(f))
    return out, float(bound)


def _fmt(v) -> str:
    return repr(float(v))


def write_field_csv(f: Field, path) -> Path:
    """Write ``# n=<n> L=<L> N=<N> t=<t>`` then ``x[,y],value`` rows."""
    path = Path(path)
    g = f.grid
    t = "" if f.time_tag is None else _fmt(f.time_tag)
    lines = [f"# n={g.n} L={_fmt(g.L)} N={g.N} t={t}"]
    if g.n == 1:
        for x, v in zip(g.axis, f.values):
            lines.append(f"{_fmt(x)},{_fmt(v)}")
    else:
        X, Y = g.coords()
        for x, y, v in zip(X.ravel(), Y.ravel(), f.values.ravel()):
            lines.append(f"{_fmt(x)},{_fmt(y)},{_fmt(v)}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_field_csv(path) -> Field:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise CorruptFieldError(f"{path}: missing field header")
        meta = dict(item.split("=", 1) for item in header[1:].split())
        grid = Grid(int(meta["n"]), float(meta["L"]), int(meta["N"]))
        t = float(meta["t"]) if meta.get("t") else None
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return check_field(Field(grid, data[:, -1].reshape(grid.shape), t))
