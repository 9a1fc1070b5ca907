"""The local minimizer of the coupled energy near the origin of the kinetic scale.

For small coupling the energy restricted to masses ``(a, b)`` has a local
minimum in the set ``{||grad u||^2 + ||grad v||^2 < rho0}``.  The threshold
quantities ``rho0``, ``nu0`` and ``k0`` come from a Gagliardo-Nirenberg /
Sobolev lower bound of the energy on the sphere of kinetic radius ``rho``::

    J >= rho * h_nu(rho)   whenever   ||grad u||^2 + ||grad v||^2 = rho.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .constrained import ConstrainedProblem, CoupledNonlinearity, descend_and_polish, kkt_newton
from .errors import BallExit, NoConvergence, SearchFailure
from .functionals import Constants, ProblemParams, SolveReport, compute_constants, energy, pohozaev
from .radial_grid import FieldPair, GridSpec, RadialField
from .scalar_solver import scalar_ground_state

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Thresholds:
    rho0: float
    k0: float
    nu0: float


@dataclass(frozen=True)
class LocalMinConfig:
    tol: float = 1e-10
    max_iters: int = 5000
    step0: float = 1.0
    ball_check: bool = True

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.step0 > 0:
            raise ValueError("step0 must be positive")


def _h_terms(params: ProblemParams, constants: Constants, rho: float) -> tuple[float, float]:
    """``(nu-free part of h, coefficient of nu)`` at ``rho``."""
    P = params
    gp, gq, s = P.gamma_p, P.gamma_q, P.two_star
    free = (
        0.5
        - 2 ** (gp / 2) / P.p * P.mu1 * constants.C(P.p) * P.a ** ((P.p - gp) / 2) * rho ** ((gp - 2) / 2)
        - 2 ** (gq / 2) / P.q * P.mu2 * constants.C(P.q) * P.b ** ((P.q - gq) / 2) * rho ** ((gq - 2) / 2)
    )
    slope = 2 ** (s / 2) * constants.sobolev_S ** (-s / 2) * rho ** ((s - 2) / 2)
    return free, slope


def h_nu(params: ProblemParams, constants: Constants, rho: float, nu: float) -> float:
    """Lower-bound profile ``h_nu(rho)``; ``J >= rho h_nu(rho)`` on the kinetic sphere of radius rho."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    free, slope = _h_terms(params, constants, rho)
    return free - nu * slope


def compute_thresholds(params: ProblemParams, constants: Constants, rho_start: float = 1e-8) -> Thresholds:
    """Radius ``rho0``, coupling bound ``nu0`` and level ``k0``.

    ``rho0`` is the first point of the doubling sequence from ``rho_start``
    at which the coupling-free part of ``h`` exceeds 1/4.  ``nu0`` is half
    the coupling at which ``h(rho0)`` would vanish, so that
    ``k0 = rho0 h_{nu0}(rho0)`` is strictly positive.
    """
    rho = rho_start
    while True:
        free, slope = _h_terms(params, constants, rho)
        if free > 0.25:
            break
        rho *= 2.0
        if rho > 1e12:
            raise SearchFailure("no rho below 1e12 makes the coupling-free bound exceed 1/4")
    nu_root = free / slope
    nu0 = 0.5 * nu_root
    k0 = rho * h_nu(params, constants, rho, nu0)
    return Thresholds(rho0=rho, k0=k0, nu0=nu0)


def _interior(f: RadialField) -> np.ndarray:
    return np.array(f.values[:-1])


def _pair_from(grid: GridSpec, U) -> FieldPair:
    return FieldPair(RadialField(grid, np.append(U[0], 0.0)), RadialField(grid, np.append(U[1], 0.0)))


def build_report(params: ProblemParams, pair: FieldPair, iterations: int, converged: bool, residual: float, **extra) -> SolveReport:
    from .functionals import multipliers

    lam1, lam2 = multipliers(params, pair)
    ma, mb = pair.masses
    return SolveReport(
        state=pair,
        energy=energy(params, pair),
        lambda1=lam1,
        lambda2=lam2,
        pohozaev_residual=pohozaev(params, pair),
        mass_errors=(abs(ma - params.a) / params.a, abs(mb - params.b) / params.b),
        iterations=iterations,
        converged=converged,
        gradient_norm=residual,
        extra=extra,
    )


def decoupled_pair(params: ProblemParams, grid: GridSpec, tol: float = 1e-10) -> tuple[FieldPair, tuple]:
    """Scalar ground states for each component; the coupling-free reference."""
    ru = scalar_ground_state(params.dim, params.p, params.mu1, params.a, grid, tol=tol)
    rv = scalar_ground_state(params.dim, params.q, params.mu2, params.b, grid, tol=tol)
    return FieldPair(ru.w, rv.w), (ru, rv)


def _degenerate(params: ProblemParams, grid: GridSpec, config: LocalMinConfig) -> SolveReport:
    """One mass is zero: the problem reduces to a single scalar ground state."""
    zero = RadialField.zeros(grid)
    if params.b == 0:
        rep = scalar_ground_state(params.dim, params.p, params.mu1, params.a, grid, tol=config.tol)
        pair, lam = FieldPair(rep.w, zero), (rep.lam, math.nan)
    else:
        rep = scalar_ground_state(params.dim, params.q, params.mu2, params.b, grid, tol=config.tol)
        pair, lam = FieldPair(zero, rep.w), (math.nan, rep.lam)
    return SolveReport(
        state=pair,
        energy=energy(params, pair),
        lambda1=lam[0],
        lambda2=lam[1],
        pohozaev_residual=pohozaev(params, pair),
        mass_errors=(rep.mass_error if params.a else 0.0, rep.mass_error if params.b else 0.0),
        iterations=rep.iterations,
        converged=True,
        gradient_norm=rep.residual,
    )


def find_local_min(
    params: ProblemParams,
    grid: GridSpec,
    config: LocalMinConfig | None = None,
    init: FieldPair | None = None,
    thresholds: Thresholds | None = None,
    constants: Constants | None = None,
) -> SolveReport:
    """Local minimizer of the energy on the product of mass spheres.

    Descends with the preconditioned projected flow from ``init`` (default:
    the decoupled scalar ground states), then polishes with Newton's method.
    With ``config.ball_check`` the flow aborts with :class:`BallExit` once the
    kinetic sum exceeds ``2 rho0``, and the converged state must satisfy
    kinetic sum ``< rho0``.
    """
    config = config or LocalMinConfig()
    if params.a == 0 or params.b == 0:
        return _degenerate(params, grid, config)
    if grid.dim != params.dim:
        raise ValueError("grid dimension mismatch")
    if config.ball_check and thresholds is None:
        thresholds = compute_thresholds(params, constants or compute_constants(params))
    if thresholds is not None and params.nu >= thresholds.nu0:
        logger.warning("nu=%g is not below nu0=%g; local structure is not guaranteed", params.nu, thresholds.nu0)
    if init is None:
        init, _ = decoupled_pair(params, grid, tol=config.tol)
    prob = ConstrainedProblem(grid, CoupledNonlinearity(params), [params.a, params.b])

    def guard(U):
        kin = prob.kinetic(U[0]) + prob.kinetic(U[1])
        if kin > 2.0 * thresholds.rho0:
            raise BallExit(f"kinetic sum {kin:.4g} left the ball of radius 2*rho0={2 * thresholds.rho0:.4g}")

    _, newton, steps = descend_and_polish(
        prob,
        [_interior(init.u), _interior(init.v)],
        tol=config.tol,
        max_iters=config.max_iters,
        step0=config.step0,
        guard=guard if config.ball_check else None,
    )
    if not newton.converged:
        raise NoConvergence(
            f"local minimizer stalled at residual {newton.residual:.3e} "
            f"({steps} flow steps, {newton.iterations} Newton steps)"
        )
    pair = _pair_from(grid, newton.U)
    if config.ball_check and pair.kinetic_sum >= thresholds.rho0:
        raise BallExit(f"converged kinetic sum {pair.kinetic_sum:.4g} is not below rho0={thresholds.rho0:.4g}")
    extra = {}
    if thresholds is not None:
        extra = {"rho0": thresholds.rho0, "k0": thresholds.k0, "nu0": thresholds.nu0}
    return build_report(params, pair, steps + newton.iterations, True, newton.residual, **extra)


@dataclass
class SweepRow:
    nu: float
    m: float
    lambda1: float
    lambda2: float
    h1_dist: float
    report: SolveReport = field(repr=False)


def h1_norm(grid: GridSpec, du: np.ndarray, dv: np.ndarray) -> float:
    """H^1 norm of a pair given by interior nodal values."""
    w = grid.weights[:-1]
    K = grid.stiffness[:-1, :-1]
    total = float(np.dot(w, du * du) + np.dot(w, dv * dv) + du @ (K @ du) + dv @ (K @ dv))
    return math.sqrt(max(total, 0.0))


def sweep_nu(
    params: ProblemParams,
    grid: GridSpec,
    nu_list,
    config: LocalMinConfig | None = None,
    thresholds: Thresholds | None = None,
) -> list[SweepRow]:
    """Local minimizers along a descending list of couplings.

    Each solve is warm-started from the previous one.  States are carried as
    corrections to the decoupled reference pair, which keeps the H^1
    distance to that pair accurate even when it is many orders of magnitude
    below the size of the fields.
    """
    config = config or LocalMinConfig()
    nus = [float(x) for x in nu_list]
    if any(b >= a for a, b in zip(nus, nus[1:])):
        raise ValueError("nu_list must be strictly descending")
    if thresholds is None and config.ball_check:
        thresholds = compute_thresholds(params, compute_constants(params))
    if thresholds is not None and nus and nus[0] >= thresholds.nu0:
        raise ValueError(f"nu={nus[0]} is not below nu0={thresholds.nu0}")
    ref, _ = decoupled_pair(params, grid, tol=config.tol)
    base = [_interior(ref.u), _interior(ref.v)]
    delta, lam = None, None
    rows: list[SweepRow] = []
    for nu in nus:
        pk = params.replace(nu=nu)
        prob = ConstrainedProblem(grid, CoupledNonlinearity(pk), [pk.a, pk.b])
        res = kkt_newton(prob, base, tol=config.tol, delta0=delta, lam0=lam)
        if res.converged:
            delta, lam = res.delta, res.lam
            pair = _pair_from(grid, res.U)
            report = build_report(pk, pair, res.iterations, True, res.residual)
        else:
            logger.info("nu=%g: Newton from the warm start failed, running the full descent", nu)
            try:
                init = _pair_from(grid, [b + d for b, d in zip(base, delta)]) if delta is not None else None
                report = find_local_min(pk, grid, config, init=init, thresholds=thresholds)
            except Exception as exc:
                raise type(exc)(f"nu={nu}: {exc}") from exc
            delta = [_interior(report.state.u) - base[0], _interior(report.state.v) - base[1]]
            lam = [report.lambda1, report.lambda2]
        if config.ball_check and report.state.kinetic_sum >= thresholds.rho0:
            raise BallExit(f"nu={nu}: kinetic sum left the ball of radius rho0")
        dist = h1_norm(grid, delta[0], delta[1])
        rows.append(SweepRow(nu, report.energy, report.lambda1, report.lambda2, dist, report))
    return rows
