"""Radial functions on R^N sampled on a one-dimensional node set.

A radial profile ``f(|x|)`` is stored by its values at radii
``0 = r_0 < r_1 < ... < r_{m-1} = r_max``.  Integrals over R^N use the
composite trapezoid rule in the mapping coordinate of the grid with the
surface weight ``omega_{N-1} r^{N-1}``; the Dirichlet energy is the exact
energy of the piecewise-linear interpolant.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)

GridLaw = Literal["uniform", "graded"]

DEFAULT_CORE = 1.0e-4


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere in R^dim."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


@dataclass(frozen=True)
class GridSpec:
    """Node layout for radial profiles.

    Args:
        dim: Space dimension N (at least 3).
        r_max: Truncation radius; fields vanish there.
        nodes: Number of nodes m (at least 256).
        law: ``"uniform"`` or ``"graded"``.  The graded law maps a uniform
            coordinate ``x`` in [0, 1] through ``r = core (exp(kappa x) - 1)``,
            which keeps the relative spacing ``dr / r`` roughly constant away
            from the origin.
        core: Length scale below which graded nodes are evenly spaced.
    """

    dim: int
    r_max: float
    nodes: int
    law: GridLaw = "uniform"
    core: float = DEFAULT_CORE

    def __post_init__(self) -> None:
        if int(self.dim) != self.dim or self.dim < 3:
            raise ValueError(f"dim must be an integer >= 3, got {self.dim}")
        if not (math.isfinite(self.r_max) and self.r_max > 0):
            raise ValueError(f"r_max must be positive, got {self.r_max}")
        if int(self.nodes) != self.nodes or self.nodes < 256:
            raise ValueError(f"nodes must be an integer >= 256, got {self.nodes}")
        if self.law not in ("uniform", "graded"):
            raise ValueError(f"unknown grid law {self.law!r}")
        if self.law == "graded":
            if not (0 < self.core < self.r_max / 100):
                raise ValueError("graded grids need 0 < core < r_max/100")
            inner = np.count_nonzero(self.r <= self.r_max / 100)
            if inner < self.nodes // 4:
                raise ValueError(
                    f"graded grid puts only {inner} of {self.nodes} nodes in r <= r_max/100"
                )

    @property
    def kappa(self) -> float:
        """Grading rate of the exponential map (0 for uniform grids)."""
        if self.law == "uniform":
            return 0.0
        return math.log1p(self.r_max / self.core)

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nodes)

    @cached_property
    def r(self) -> np.ndarray:
        """Node radii."""
        if self.law == "uniform":
            r = self.r_max * self.x
        else:
            r = self.core * np.expm1(self.kappa * self.x)
        r[0] = 0.0
        r[-1] = self.r_max
        r.flags.writeable = False
        return r

    @cached_property
    def dr_dx(self) -> np.ndarray:
        if self.law == "uniform":
            return np.full(self.nodes, self.r_max)
        return self.core * self.kappa * np.exp(self.kappa * self.x)

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights for integrals over R^N of radial samples.

        Trapezoid weights in the mapping coordinate, except at the origin
        where the weight is the volume of the ball of radius r_1/2.  The
        trapezoid weight there is zero, which would make the nodal mass
        matrix singular.
        """
        dx = 1.0 / (self.nodes - 1)
        w = sphere_area(self.dim) * self.r ** (self.dim - 1) * self.dr_dx * dx
        w[-1] *= 0.5
        w[0] = sphere_area(self.dim) * (0.5 * self.r[1]) ** self.dim / self.dim
        w.flags.writeable = False
        return w

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.diff(self.r)

    @cached_property
    def shell_volumes(self) -> np.ndarray:
        """Measure of each annulus r_i < |x| < r_{i+1}."""
        rn = self.r ** self.dim
        return sphere_area(self.dim) * np.diff(rn) / self.dim

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        """Matrix K with ``f @ K @ f`` equal to the Dirichlet energy of f."""
        c = self.shell_volumes / self.spacing**2
        main = np.zeros(self.nodes)
        main[:-1] += c
        main[1:] += c
        return sparse.diags([-c, main, -c], [-1, 0, 1], format="csr")

    def describe(self) -> dict:
        """Plain-data summary used in reports."""
        out = {"dim": self.dim, "r_max": self.r_max, "nodes": self.nodes, "law": self.law}
        if self.law == "graded":
            out["core"] = self.core
        return out


def make_grid(
    dim: int, r_max: float, nodes: int, law: GridLaw = "uniform", core: float = DEFAULT_CORE
) -> GridSpec:
    """Build a validated :class:`GridSpec`."""
    return GridSpec(dim=dim, r_max=float(r_max), nodes=nodes, law=law, core=float(core))


@dataclass(frozen=True, eq=False)
class RadialField:
    """Samples of a radial profile on a grid.

    The value array is copied and frozen, so norms computed once stay valid.
    Solvers keep the last sample at zero; :meth:`from_function` truncates
    for you.
    """

    grid: GridSpec
    values: np.ndarray
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != (self.grid.nodes,):
            raise ValueError(f"expected {self.grid.nodes} samples, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field samples must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Callable[[np.ndarray], np.ndarray]) -> "RadialField":
        vals = np.asarray(fn(grid.r), dtype=float).copy()
        vals[-1] = 0.0
        return cls(grid, vals)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "RadialField":
        return cls(grid, np.zeros(grid.nodes))

    def _memo(self, key, compute):
        if key not in self._cache:
            self._cache[key] = compute()
        return self._cache[key]

    @property
    def mass(self) -> float:
        """Squared L^2 norm."""
        return self._memo("mass", lambda: lp_norm_p(self, 2.0))

    @property
    def kinetic(self) -> float:
        return self._memo("kinetic", lambda: kinetic(self))

    def lp(self, p: float) -> float:
        """Cached ``p``-th power of the L^p norm."""
        return self._memo(("lp", float(p)), lambda: lp_norm_p(self, p))

    def scaled(self, factor: float) -> "RadialField":
        return RadialField(self.grid, factor * self.values)


@dataclass(frozen=True, eq=False)
class FieldPair:
    """Two radial components on a common grid."""

    u: RadialField
    v: RadialField

    def __post_init__(self) -> None:
        if self.u.grid != self.v.grid:
            raise ValueError("both components must live on the same grid")

    @property
    def grid(self) -> GridSpec:
        return self.u.grid

    @property
    def masses(self) -> tuple[float, float]:
        return self.u.mass, self.v.mass

    @property
    def kinetic_sum(self) -> float:
        return self.u.kinetic + self.v.kinetic

    def dilate(self, t: float) -> "FieldPair":
        return FieldPair(dilate(self.u, t), dilate(self.v, t))


def integrate_radial(samples: np.ndarray, grid: GridSpec) -> float:
    """Integral over R^N of the radial function with the given node samples."""
    f = np.asarray(samples, dtype=float)
    if f.shape != (grid.nodes,):
        raise ValueError(f"expected {grid.nodes} samples, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("samples must be finite")
    return float(np.dot(grid.weights, f))


def lp_norm_p(f: RadialField, p: float) -> float:
    """Return ``||f||_p^p``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return integrate_radial(np.abs(f.values) ** p, f.grid)


def dirichlet_energy(values: np.ndarray, grid: GridSpec) -> float:
    """Dirichlet energy of raw samples, without requiring a zero last value."""
    slope = np.diff(values) / grid.spacing
    return float(np.dot(grid.shell_volumes, slope * slope))


def kinetic(f: RadialField) -> float:
    """Return ``||grad f||_2^2``."""
    return dirichlet_energy(f.values, f.grid)


def radial_derivative(f: RadialField) -> np.ndarray:
    """Nodal derivative: centred in the interior, zero at the origin, one-sided at r_max."""
    r, y = f.grid.r, f.values
    d = np.empty_like(y)
    d[1:-1] = np.gradient(y, r)[1:-1]
    d[0] = 0.0
    d[-1] = (y[-1] - y[-2]) / (r[-1] - r[-2])
    return d


def dilate(f: RadialField, t: float) -> RadialField:
    """Mass-preserving dilation ``t^{N/2} f(t r)`` with linear interpolation."""
    if not t > 0:
        raise ValueError(f"dilation factor must be positive, got {t}")
    if t == 1.0:
        return f
    g = f.grid
    vals = t ** (g.dim / 2.0) * np.interp(t * g.r, g.r, f.values, right=0.0)
    return RadialField(g, vals)


def is_schwartz(f: RadialField, tol: float | None = None) -> bool:
    """Nonnegative and radially non-increasing up to ``tol``.

    With ``tol=None`` the tolerance is ``1e-10`` times the peak value.
    """
    y = f.values
    if tol is None:
        tol = 1e-10 * float(np.max(np.abs(y), initial=0.0))
    return bool(np.all(y >= -tol) and np.all(np.diff(y) <= tol))


def write_snapshot(f: RadialField, path: str | Path) -> Path:
    """Write a field as ``r,value`` CSV."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["r", "value"])
        for r, y in zip(f.grid.r, f.values):
            writer.writerow([repr(float(r)), repr(float(y))])
    return path


def read_snapshot(path: str | Path, grid: GridSpec) -> RadialField:
    """Read an ``r,value`` CSV written for ``grid``."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    r = np.array([float(row["r"]) for row in rows])
    vals = np.array([float(row["value"]) for row in rows])
    if r.shape != grid.r.shape or not np.allclose(r, grid.r, rtol=1e-12, atol=0.0):
        raise ValueError(f"{path}: node radii do not match the grid")
    return RadialField(grid, vals)
