"""Energy, Pohozaev functional, gradients and constants of the coupled system.

The system couples two components through ``nu * int |u|^alpha |v|^beta``
with ``alpha + beta`` equal to the Sobolev exponent ``2N/(N-2)``.  All
integrals are the grid quadratures of :mod:`normcrit.radial_grid`.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .radial_grid import (
    FieldPair,
    GridSpec,
    RadialField,
    dilate,
    dirichlet_energy,
    make_grid,
    sphere_area,
)

logger = logging.getLogger(__name__)

SUM_RTOL = 1e-12


def spow(x: np.ndarray, e: float) -> np.ndarray:
    """Odd power ``sign(x) |x|^e``; finite for small negative overshoots."""
    return np.sign(x) * np.abs(x) ** e


def apow(x: np.ndarray, e: float) -> np.ndarray:
    """``|x|^e`` with the convention ``0^e = 0`` even for negative ``e``."""
    ax = np.abs(x)
    out = np.zeros_like(ax)
    nz = ax > 0
    out[nz] = ax[nz] ** e
    return out


@dataclass(frozen=True)
class ProblemParams:
    """Exponents, coefficients and masses of one instance of the system.

    ``nu = 0`` and a single zero mass are accepted; they describe the
    decoupled and the one-component limits.
    """

    dim: int
    p: float
    q: float
    alpha: float
    beta: float
    mu1: float = 1.0
    mu2: float = 1.0
    nu: float = 0.01
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self) -> None:
        n = self.dim
        if int(n) != n or n < 3:
            raise ValueError(f"dim must be an integer >= 3, got {n}")
        upper = 2.0 + 4.0 / n
        for name in ("p", "q"):
            s = getattr(self, name)
            if not 2.0 < s < upper:
                raise ValueError(f"{name} must lie in (2, 2+4/N) = (2, {upper:g}), got {s}")
        if not (self.alpha > 1 and self.beta > 1):
            raise ValueError("alpha and beta must both exceed 1")
        if abs(self.alpha + self.beta - self.two_star) > SUM_RTOL * self.two_star:
            raise ValueError(
                f"alpha+beta != 2N/(N-2): {self.alpha + self.beta} vs {self.two_star}"
            )
        if not (self.mu1 > 0 and self.mu2 > 0):
            raise ValueError("mu1 and mu2 must be positive")
        if not self.nu >= 0:
            raise ValueError("nu must be nonnegative")
        if self.a < 0 or self.b < 0 or self.a + self.b == 0:
            raise ValueError("masses must be nonnegative and not both zero")

    @property
    def two_star(self) -> float:
        return 2.0 * self.dim / (self.dim - 2.0)

    def gamma(self, s: float) -> float:
        return (s - 2.0) * self.dim / 2.0

    @property
    def gamma_p(self) -> float:
        return self.gamma(self.p)

    @property
    def gamma_q(self) -> float:
        return self.gamma(self.q)

    def replace(self, **changes) -> "ProblemParams":
        return dataclasses.replace(self, **changes)

    def swapped(self) -> "ProblemParams":
        """Parameters with the roles of the two components exchanged."""
        return ProblemParams(
            self.dim, self.q, self.p, self.beta, self.alpha,
            self.mu2, self.mu1, self.nu, self.b, self.a,
        )

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SolveReport:
    """Outcome of a constrained solve."""

    state: FieldPair
    energy: float
    lambda1: float
    lambda2: float
    pohozaev_residual: float
    mass_errors: tuple[float, float]
    iterations: int
    converged: bool
    gradient_norm: float = math.nan
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "energy": self.energy,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "pohozaev_residual": self.pohozaev_residual,
            "kinetic_sum": self.state.kinetic_sum,
            "mass_errors": list(self.mass_errors),
            "gradient_norm": self.gradient_norm,
            "iterations": self.iterations,
            "converged": self.converged,
        }
        out.update(self.extra)
        return out


def coupling_integral(params: ProblemParams, pair: FieldPair) -> float:
    """``int |u|^alpha |v|^beta``."""
    key = ("coupling", params.alpha, params.beta)
    cache = pair.u._cache
    partner = cache.get(key)
    if partner is not None and partner[0] is pair.v:
        return partner[1]
    dens = np.abs(pair.u.values) ** params.alpha * np.abs(pair.v.values) ** params.beta
    val = float(np.dot(pair.grid.weights, dens))
    cache[key] = (pair.v, val)
    return val


@dataclass(frozen=True)
class FiberNorms:
    """The four integrals that determine the energy along a dilation fiber."""

    kinetic: float
    lp_u: float
    lq_v: float
    coupling: float

    @classmethod
    def of(cls, params: ProblemParams, pair: FieldPair) -> "FiberNorms":
        return cls(
            kinetic=pair.kinetic_sum,
            lp_u=pair.u.lp(params.p),
            lq_v=pair.v.lp(params.q),
            coupling=coupling_integral(params, pair),
        )

    def coefficients(self, params: ProblemParams) -> tuple[float, float, float, float]:
        """``(A, B, C, D)`` of ``A t^2 - B t^gp - C t^gq - D t^2*``."""
        return (
            0.5 * self.kinetic,
            params.mu1 / params.p * self.lp_u,
            params.mu2 / params.q * self.lq_v,
            params.nu * self.coupling,
        )

    def value(self, params: ProblemParams, t):
        A, B, C, D = self.coefficients(params)
        t = np.asarray(t, dtype=float)
        return A * t**2 - B * t**params.gamma_p - C * t**params.gamma_q - D * t**params.two_star

    def derivative(self, params: ProblemParams, t):
        A, B, C, D = self.coefficients(params)
        gp, gq, s = params.gamma_p, params.gamma_q, params.two_star
        t = np.asarray(t, dtype=float)
        return 2 * A * t - gp * B * t ** (gp - 1) - gq * C * t ** (gq - 1) - s * D * t ** (s - 1)

    def second_derivative(self, params: ProblemParams, t):
        A, B, C, D = self.coefficients(params)
        gp, gq, s = params.gamma_p, params.gamma_q, params.two_star
        t = np.asarray(t, dtype=float)
        return (
            2 * A
            - gp * (gp - 1) * B * t ** (gp - 2)
            - gq * (gq - 1) * C * t ** (gq - 2)
            - s * (s - 1) * D * t ** (s - 2)
        )


def energy(params: ProblemParams, pair: FieldPair) -> float:
    """Discrete energy J(u, v)."""
    return float(FiberNorms.of(params, pair).value(params, 1.0))


def pohozaev(params: ProblemParams, pair: FieldPair) -> float:
    """Discrete Pohozaev functional P(u, v), the fiber derivative at t = 1."""
    return float(FiberNorms.of(params, pair).derivative(params, 1.0))


def fiber_energy(params: ProblemParams, pair: FieldPair, t):
    """Energy of the dilated pair ``t * (u, v)`` from cached norms.

    Accepts a scalar or an array of positive dilation factors.
    """
    if np.any(np.asarray(t) <= 0):
        raise ValueError("dilation factor must be positive")
    val = FiberNorms.of(params, pair).value(params, t)
    return float(val) if np.ndim(val) == 0 else val


def nonlinear_forces(params: ProblemParams, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise derivatives of the potential part of the energy density."""
    au, av = np.abs(u), np.abs(v)
    fu = params.mu1 * spow(u, params.p - 1) + params.nu * params.alpha * spow(u, params.alpha - 1) * av**params.beta
    fv = params.mu2 * spow(v, params.q - 1) + params.nu * params.beta * spow(v, params.beta - 1) * au**params.alpha
    return fu, fv


def energy_gradient_vectors(params: ProblemParams, pair: FieldPair) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of the discrete energy with respect to the nodal values."""
    g = pair.grid
    u, v = pair.u.values, pair.v.values
    fu, fv = nonlinear_forces(params, u, v)
    du = g.stiffness @ u - g.weights * fu
    dv = g.stiffness @ v - g.weights * fv
    du[-1] = 0.0
    dv[-1] = 0.0
    return du, dv


def grad_energy(params: ProblemParams, pair: FieldPair) -> FieldPair:
    """L^2 gradient of J: the field ``g`` with ``dJ[h] = int g h`` for all grid fields ``h``.

    In the continuum this is ``(-Lap u - mu1 u^{p-1} - nu alpha u^{alpha-1} v^beta, ...)``.
    """
    du, dv = energy_gradient_vectors(params, pair)
    w = pair.grid.weights
    return FieldPair(RadialField(pair.grid, du / w), RadialField(pair.grid, dv / w))


def multipliers(params: ProblemParams, pair: FieldPair) -> tuple[float, float]:
    """Lagrange multipliers recovered from testing the equations with u and v."""
    if params.a <= 0 or params.b <= 0:
        raise ValueError("multipliers need both masses positive")
    c = coupling_integral(params, pair)
    lam1 = (params.mu1 * pair.u.lp(params.p) + params.nu * params.alpha * c - pair.u.kinetic) / params.a
    lam2 = (params.mu2 * pair.v.lp(params.q) + params.nu * params.beta * c - pair.v.kinetic) / params.b
    return lam1, lam2


# ---------------------------------------------------------------------------
# Constants


def talenti_amplitude(dim: int) -> float:
    """``A_N = (N(N-2))^{(N-2)/4}``."""
    return (dim * (dim - 2.0)) ** ((dim - 2.0) / 4.0)


def talenti_profile(dim: int, r: np.ndarray) -> np.ndarray:
    """Extremal of the Sobolev inequality solving ``-Lap U = U^{2*-1}``."""
    return talenti_amplitude(dim) * (1.0 + np.asarray(r, dtype=float) ** 2) ** (-(dim - 2.0) / 2.0)


def sobolev_constant(dim: int, grid: GridSpec | None = None) -> float:
    """Sharp constant S in ``S ||u||_{2*}^2 <= ||grad u||_2^2``.

    Without a grid the Talenti quotient is integrated by adaptive
    quadrature over the half line.  With a grid the quotient of the sampled
    (untruncated) profile is returned instead.
    """
    if dim < 3:
        raise ValueError("dim must be >= 3")
    s = 2.0 * dim / (dim - 2.0)
    if grid is not None:
        if grid.dim != dim:
            raise ValueError("grid dimension mismatch")
        vals = talenti_profile(dim, grid.r)
        kin = dirichlet_energy(vals, grid)
        crit = float(np.dot(grid.weights, vals**s))
        return kin / crit ** (2.0 / s)
    amp = talenti_amplitude(dim)
    omega = sphere_area(dim)

    def dens_kin(r):
        du = amp * (dim - 2.0) * r * (1.0 + r * r) ** (-dim / 2.0)
        return du * du * r ** (dim - 1)

    def dens_crit(r):
        return (amp * (1.0 + r * r) ** (-(dim - 2.0) / 2.0)) ** s * r ** (dim - 1)

    kin = omega * _half_line(dens_kin)
    crit = omega * _half_line(dens_crit)
    return kin / crit ** (2.0 / s)


def _half_line(fn) -> float:
    head, _ = integrate.quad(fn, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    tail, _ = integrate.quad(fn, 1.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    return head + tail


def gn_ratio(f: RadialField, p: float) -> float:
    """``||f||_p^p / (||f||_2^{p-gamma_p} ||grad f||_2^{gamma_p})``, dilation and amplitude invariant."""
    gp = (p - 2.0) * f.grid.dim / 2.0
    return f.lp(p) / (f.mass ** ((p - gp) / 2.0) * f.kinetic ** (gp / 2.0))


GN_GRID = {"r_max": 40.0, "nodes": 8192}


def gn_constant(dim: int, p: float, grid: GridSpec | None = None) -> float:
    """Operational Gagliardo-Nirenberg constant C_p.

    The trial family consists of the positive ground state of
    ``-Lap w + w = w^{p-1}`` (the known optimizer) together with Gaussian
    and sech profiles; each member is evaluated at three dilations and the
    largest ratio is returned.  Since the ratio is dilation and amplitude
    invariant, the family covers all rescaled ground states.
    """
    if not 2.0 < p < 2.0 * dim / (dim - 2.0):
        raise ValueError(f"p must lie in (2, 2N/(N-2)), got {p}")
    from .scalar_solver import unit_frequency_ground_state

    if grid is None:
        grid = make_grid(dim, GN_GRID["r_max"], GN_GRID["nodes"])
    trials = [
        unit_frequency_ground_state(dim, p, grid),
        RadialField.from_function(grid, lambda r: np.exp(-r * r)),
        RadialField.from_function(grid, lambda r: 1.0 / np.cosh(r)),
    ]
    best = 0.0
    for f in trials:
        for t in (1.0, 0.7, 1.4):
            best = max(best, gn_ratio(dilate(f, t), p))
    return best


@dataclass(frozen=True)
class Constants:
    """Sobolev constant and Gagliardo-Nirenberg constants used by the threshold estimates."""

    sobolev_S: float
    gn_C: dict

    def C(self, p: float) -> float:
        return self.gn_C[float(p)]

    def to_json(self, dim: int, grid: dict | None = None) -> str:
        payload = {
            "N": dim,
            "S": self.sobolev_S,
            "C_p": {repr(float(k)): v for k, v in sorted(self.gn_C.items())},
            "grid": grid if grid is not None else {"gn": dict(GN_GRID, law="uniform")},
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def compute_constants(params: ProblemParams) -> Constants:
    exps = sorted({float(params.p), float(params.q)})
    return Constants(
        sobolev_S=sobolev_constant(params.dim),
        gn_C={e: gn_constant(params.dim, e) for e in exps},
    )
