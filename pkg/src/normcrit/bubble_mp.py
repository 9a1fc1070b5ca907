"""Truncated Sobolev extremals and the energy along the bubble-insertion curve.

``Theta_n`` is the Talenti profile concentrated at scale ``1/n``, cut off
linearly between ``r = 1`` and ``r = 2``.  Adding ``t Theta_n`` to both
components of the local minimizer (with the ratio ``sqrt(beta/alpha)``
between them) and renormalizing the masses gives a curve ``H_n(t)`` whose
maximum must stay below ``m + cap`` for the compactness argument; the
functions here evaluate that gap numerically.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import FitFailure, NoInteriorMax, ResolutionError, SearchFailure
from .functionals import Constants, ProblemParams, energy, sobolev_constant, talenti_amplitude
from .radial_grid import FieldPair, GridSpec, RadialField, sphere_area

logger = logging.getLogger(__name__)

MIN_CORE_NODES = 8


def theta(dim: int, n: float, r: np.ndarray) -> np.ndarray:
    """Pointwise values of the truncated bubble ``Theta_n``."""
    r = np.asarray(r, dtype=float)
    k = (dim - 2.0) / 2.0
    amp = talenti_amplitude(dim)
    inner = amp * (n / (1.0 + (n * r) ** 2)) ** k
    edge = amp * (n / (1.0 + n * n)) ** k
    return np.where(r < 1.0, inner, np.where(r < 2.0, edge * (2.0 - r), 0.0))


def make_bubble(dim: int, n: int, grid: GridSpec) -> RadialField:
    """Sample ``Theta_n`` on ``grid``; the core ``r <= 1/n`` needs at least 8 nodes."""
    if grid.dim != dim:
        raise ValueError("grid dimension mismatch")
    if n < 1:
        raise ValueError("n must be positive")
    core = int(np.count_nonzero(grid.r <= 1.0 / n))
    if core < MIN_CORE_NODES:
        raise ResolutionError(f"only {core} nodes resolve the core r <= 1/{n}; use a graded grid")
    if grid.r_max < 2.0:
        raise ResolutionError("grid must contain the support r <= 2")
    return RadialField(grid, theta(dim, n, grid.r))


# ---------------------------------------------------------------------------
# Norm asymptotics from exact one-dimensional quadrature


def _quad(fn, lo, hi, points=None) -> float:
    val, _ = integrate.quad(fn, lo, hi, epsabs=0.0, epsrel=1e-13, limit=500, points=points)
    return val


def _scaled_moment(dim: int, k: float, upper: float, power: float) -> float:
    """``int_0^upper s^power (1+s^2)^{-k} ds`` (``upper`` may be inf)."""
    fn = lambda s: s**power * (1.0 + s * s) ** (-k)  # noqa: E731
    if upper == math.inf:
        return _quad(fn, 0.0, 1.0) + _quad(fn, 1.0, math.inf)
    if upper <= 1.0:
        return _quad(fn, 0.0, upper)
    return _quad(fn, 0.0, 1.0) + _quad(fn, 1.0, upper)


def _scaled_tail(k: float, lower: float, power: float) -> float:
    """``int_lower^inf s^power (1+s^2)^{-k} ds``."""
    return _quad(lambda s: s**power * (1.0 + s * s) ** (-k), lower, math.inf)


def _edge_moment(dim: int, eta: float) -> float:
    """``int_1^2 (2-r)^eta r^{N-1} dr``."""
    return _quad(lambda r: (2.0 - r) ** eta * r ** (dim - 1), 1.0, 2.0)


def bubble_kinetic_excess(dim: int, n: float) -> float:
    """``||grad Theta_n||^2 - S^{N/2}`` computed without cancellation."""
    omega, amp = sphere_area(dim), talenti_amplitude(dim)
    edge = omega * amp**2 * (n / (1.0 + n * n)) ** (dim - 2.0) * (2.0**dim - 1.0) / dim
    tail = omega * amp**2 * (dim - 2.0) ** 2 * _scaled_tail(dim, n, dim + 1.0)
    return edge - tail


def bubble_critical_excess(dim: int, n: float) -> float:
    """``||Theta_n||_{2*}^{2*} - S^{N/2}``."""
    omega, amp = sphere_area(dim), talenti_amplitude(dim)
    s = 2.0 * dim / (dim - 2.0)
    edge = omega * amp**s * (n / (1.0 + n * n)) ** dim * _edge_moment(dim, s)
    tail = omega * amp**s * _scaled_tail(dim, n, dim - 1.0)
    return edge - tail


def bubble_lp(dim: int, n: float, eta: float) -> float:
    """``||Theta_n||_eta^eta`` by exact quadrature of the two pieces."""
    omega, amp = sphere_area(dim), talenti_amplitude(dim)
    k = (dim - 2.0) * eta / 2.0
    inner = omega * amp**eta * n ** (k - dim) * _scaled_moment(dim, k, n, dim - 1.0)
    edge = omega * amp**eta * (n / (1.0 + n * n)) ** k * _edge_moment(dim, eta)
    return inner + edge


def sobolev_power(dim: int) -> float:
    """``S^{N/2}``, the limit of the kinetic and critical norms of ``Theta_n``."""
    return sobolev_constant(dim) ** (dim / 2.0)


def theory_slope(dim: int, quantity: str) -> tuple[float, bool]:
    """Predicted exponent of ``n`` and whether a ``ln n`` factor accompanies it."""
    if quantity == "kinetic":
        return -(dim - 2.0), False
    if quantity == "l2star":
        return -float(dim), False
    if quantity.startswith("lp:"):
        eta = float(quantity[3:])
    elif quantity == "l2":
        eta = 2.0
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    a = (dim - 2.0) * eta / 2.0
    b = dim - a
    return -min(a, b), math.isclose(a, b)


@dataclass
class AsymptoticsRow:
    quantity: str
    n: int
    measured: float
    limit: float
    fitted_slope: float
    theory_slope: float


@dataclass
class BubbleFamily:
    dim: int
    n_values: list
    profiles: list = field(default_factory=list)
    norms: list = field(default_factory=list)


def bubble_family(dim: int, n_values, grid: GridSpec, etas=()) -> BubbleFamily:
    """Sampled profiles together with their grid norms."""
    fam = BubbleFamily(dim, list(n_values))
    s = 2.0 * dim / (dim - 2.0)
    for n in fam.n_values:
        f = make_bubble(dim, n, grid)
        rec = {"kinetic": f.kinetic, "l2star": f.lp(s), "l2": f.mass}
        rec.update({f"lp:{e:g}": f.lp(e) for e in etas})
        fam.profiles.append(f)
        fam.norms.append(rec)
    return fam


def bubble_asymptotics(dim: int, n_values, quantities=("kinetic", "l2star", "l2"), etas=()) -> list[AsymptoticsRow]:
    """Fitted decay exponents of the bubble norms toward their limits.

    Each norm is integrated exactly on its two analytic pieces; the slope is
    the least-squares fit of ``log|measured - limit|`` against ``log n``,
    after dividing by ``ln n`` when a logarithmic factor is predicted.
    """
    ns = sorted({int(n) for n in n_values})
    if len(ns) < 5 or ns[-1] < 8 * ns[0]:
        raise ValueError("need at least 5 distinct n spanning a factor of 8")
    quantities = list(quantities) + [f"lp:{e:g}" for e in etas]
    s_lim = sobolev_power(dim)
    rows: list[AsymptoticsRow] = []
    for qty in quantities:
        slope_th, has_log = theory_slope(dim, qty)
        measured, limits, diffs = [], [], []
        for n in ns:
            if qty == "kinetic":
                d = bubble_kinetic_excess(dim, n)
                lim = s_lim
            elif qty == "l2star":
                d = bubble_critical_excess(dim, n)
                lim = s_lim
            else:
                eta = 2.0 if qty == "l2" else float(qty[3:])
                d = bubble_lp(dim, n, eta)
                lim = 0.0
            measured.append(lim + d)
            limits.append(lim)
            diffs.append(d)
        diffs = np.abs(np.array(diffs))
        if np.any(diffs <= 1e-13 * max(s_lim, 1.0)):
            raise FitFailure(f"{qty}: differences fall below quadrature accuracy")
        logn = np.log(np.array(ns, dtype=float))
        y = np.log(diffs) - (np.log(logn) if has_log else 0.0)
        slope = float(np.polyfit(logn, y, 1)[0])
        for n, meas, lim in zip(ns, measured, limits):
            rows.append(AsymptoticsRow(qty, n, meas, lim, slope, slope_th))
    return rows


# ---------------------------------------------------------------------------
# Closed forms of the limiting profile


def tstar(params: ProblemParams) -> float:
    """Maximizer of ``(1/alpha) t^2 * 2*/2 - nu (beta/alpha)^{beta/2} t^{2*}``, in closed form."""
    N, al, be, nu = params.dim, params.alpha, params.beta, params.nu
    return nu ** (-(N - 2) / 4) * al ** ((4 - (N - 2) * al) / 8) * be ** (-(N - 2) * be / 8)


def limit_profile(params: ProblemParams, t):
    """``f(t) = (2*/(2 alpha)) t^2 - nu (beta/alpha)^{beta/2} t^{2*}``."""
    s = params.two_star
    t = np.asarray(t, dtype=float)
    return s / (2 * params.alpha) * t**2 - params.nu * (params.beta / params.alpha) ** (params.beta / 2) * t**s


def cap_increment(params: ProblemParams, constants: Constants) -> float:
    """Energy quantum ``max_t f(t) S^{N/2}`` of one concentration event."""
    N, al, be, nu = params.dim, params.alpha, params.beta, params.nu
    return (
        2.0 / (N - 2)
        * nu ** (-(N - 2) / 2)
        * al ** (-(N - 2) * al / 4)
        * be ** (-(N - 2) * be / 4)
        * constants.sobolev_S ** (N / 2)
    )


# ---------------------------------------------------------------------------
# The insertion curve


def test_pair(params: ProblemParams, minimizer: FieldPair, n: int, t: float, bubble: RadialField | None = None) -> FieldPair:
    """Minimizer plus ``t`` bubbles, renormalized to the prescribed masses."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    U = make_bubble(params.dim, n, minimizer.grid) if bubble is None else bubble
    ratio = math.sqrt(params.beta / params.alpha)
    fu = minimizer.u.values + t * U.values
    fv = minimizer.v.values + ratio * t * U.values
    g = minimizer.grid
    fu = RadialField(g, fu)
    fv = RadialField(g, fv)
    return FieldPair(fu.scaled(math.sqrt(params.a / fu.mass)), fv.scaled(math.sqrt(params.b / fv.mass)))


class _Curve:
    def __init__(self, params, minimizer, n):
        self.params, self.minimizer, self.n = params, minimizer, n
        self.bubble = make_bubble(params.dim, n, minimizer.grid)

    def pair(self, t: float) -> FieldPair:
        return test_pair(self.params, self.minimizer, self.n, t, self.bubble)

    def __call__(self, t: float) -> float:
        return energy(self.params, self.pair(t))


def endpoint_T(params: ProblemParams, minimizer: FieldPair, n: int, m: float | None = None) -> float:
    """Doubling search from ``2 t*`` for ``T`` with ``H_n(T) < 2 m``."""
    curve = _Curve(params, minimizer, n)
    if m is None:
        m = energy(params, minimizer)
    T = 2.0 * tstar(params)
    while curve(T) >= 2.0 * m:
        T *= 2.0
        if T > 1e6:
            raise SearchFailure("H_n stays above 2m up to T = 1e6")
    return T


def h_curve(params: ProblemParams, minimizer: FieldPair, n: int, t_grid) -> tuple[np.ndarray, float, float]:
    """``H_n`` on ``t_grid`` plus the golden-section refined interior maximum."""
    curve = _Curve(params, minimizer, n)
    ts = np.asarray(t_grid, dtype=float)
    vals = np.array([curve(t) for t in ts])
    k = int(np.argmax(vals))
    if k == 0 or k == len(ts) - 1:
        raise NoInteriorMax(f"H_n for n={n} has no interior maximum on [{ts[0]:g}, {ts[-1]:g}]")
    res = optimize.minimize_scalar(
        lambda t: -curve(t), bracket=(ts[k - 1], ts[k], ts[k + 1]), method="golden", tol=1e-10
    )
    t_n, h_max = float(res.x), float(-res.fun)
    if h_max < vals[k]:
        t_n, h_max = float(ts[k]), float(vals[k])
    return vals, t_n, h_max


@dataclass
class GapReport:
    n: int
    t_n: float
    H_at_tn: float
    m: float
    cap_increment: float
    margin: float
    T: float = math.nan


def verify_level_gap(
    params: ProblemParams,
    minimizer: FieldPair,
    constants: Constants,
    n: int,
    samples: int = 401,
    m: float | None = None,
) -> GapReport:
    """Compare the curve maximum with ``m + cap``."""
    if m is None:
        m = energy(params, minimizer)
    T = endpoint_T(params, minimizer, n, m)
    _, t_n, h_max = h_curve(params, minimizer, n, np.linspace(0.0, T, samples))
    cap = cap_increment(params, constants)
    return GapReport(n=n, t_n=t_n, H_at_tn=h_max, m=m, cap_increment=cap, margin=m + cap - h_max, T=T)
