"""Second critical point of mountain-pass type.

Along each dilation fiber ``t -> J(t * (u, v))`` the energy has at most
two critical points: a local minimum followed by a local maximum.  Pairs
sitting at the fiber maximum form the branch on which a mountain-pass
critical point with positive energy lives, and on that branch it is a
minimum.  The solver therefore alternates a descent step with a retraction
to the fiber maximum, then finishes with Newton's method on the Lagrange
system.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .bubble_mp import cap_increment, endpoint_T, h_curve, test_pair
from .constrained import ConstrainedProblem, CoupledNonlinearity, kkt_newton
from .errors import FellToMinimizer, LevelViolation, NoConvergence, NoInteriorMax, NoPminus, SearchFailure
from .functionals import Constants, FiberNorms, ProblemParams, SolveReport, compute_constants, energy
from .local_minimizer import LocalMinConfig, Thresholds, build_report, compute_thresholds
from .radial_grid import FieldPair, GridSpec, RadialField, is_schwartz

logger = logging.getLogger(__name__)

LOG_GRID = np.geomspace(1e-6, 1e6, 4001)
NEWTON_ATTEMPT = 25


@dataclass(frozen=True)
class FiberRoots:
    """Critical dilations: ``t_minus`` a fiber minimum, ``t_plus`` the fiber maximum."""

    t_minus: float | None
    t_plus: float | None
    exists: bool


def fiber_sign_changes(params: ProblemParams, pair: FieldPair, grid=LOG_GRID) -> int:
    d = FiberNorms.of(params, pair).derivative(params, grid)
    s = np.sign(d)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def fiber_critical_points(params: ProblemParams, pair: FieldPair) -> FiberRoots:
    """Bracket the zeros of the fiber derivative on a log grid and refine them."""
    norms = FiberNorms.of(params, pair)
    if norms.kinetic <= 0:
        return FiberRoots(None, None, False)
    d = norms.derivative(params, LOG_GRID)
    roots = []
    for i in np.nonzero(np.sign(d[1:]) * np.sign(d[:-1]) < 0)[0]:
        t = optimize.brentq(lambda x: float(norms.derivative(params, x)), LOG_GRID[i], LOG_GRID[i + 1], xtol=1e-300, rtol=1e-13)
        roots.append(t)
    t_minus = t_plus = None
    for t in roots:
        if norms.second_derivative(params, t) < 0:
            if t_plus is None:
                t_plus = t
        elif t_minus is None:
            t_minus = t
    exists = t_plus is not None and t_minus is not None and t_minus < t_plus
    return FiberRoots(t_minus, t_plus, exists)


def project_pminus(params: ProblemParams, pair: FieldPair, rounds: int = 6, rtol: float = 1e-10) -> FieldPair:
    """Dilate the pair onto the maximum of its own fiber.

    Resampling by interpolation perturbs the norms slightly, so each
    dilation is followed by restoring the input masses, and the pair is
    dilated again until the fiber maximum sits at ``t = 1``.
    """
    masses = pair.masses
    out = pair
    for _ in range(rounds):
        roots = fiber_critical_points(params, out)
        if roots.t_plus is None:
            raise NoPminus("the fiber has no strict local maximum")
        if abs(roots.t_plus - 1.0) <= rtol:
            break
        out = _with_masses(out.dilate(roots.t_plus), masses)
    return out


def _with_masses(pair: FieldPair, masses) -> FieldPair:
    fields = []
    for f, target in zip((pair.u, pair.v), masses):
        fields.append(f.scaled(math.sqrt(target / f.mass)) if f.mass > 0 else f)
    return FieldPair(*fields)


@dataclass(frozen=True)
class MountainPassConfig:
    tol: float = 1e-10
    max_iters: int = 3000
    step0: float = 1.0
    switch_tol: float = 1e-6
    plateau_rtol: float = 1e-6
    plateau_window: int = 25

    @classmethod
    def from_local(cls, cfg: LocalMinConfig) -> "MountainPassConfig":
        return cls(tol=cfg.tol, max_iters=cfg.max_iters, step0=cfg.step0)


def _positive(f: RadialField) -> bool:
    """Positive at the origin and nowhere negative (far tails may underflow to zero)."""
    return bool(f.values[0] > 0 and np.all(f.values >= 0))


def _arrays(pair: FieldPair):
    return [np.array(pair.u.values[:-1]), np.array(pair.v.values[:-1])]


def _pair(grid: GridSpec, U) -> FieldPair:
    return FieldPair(RadialField(grid, np.append(U[0], 0.0)), RadialField(grid, np.append(U[1], 0.0)))


def riesz_shift(prob: ConstrainedProblem, U) -> float:
    """Shift for the Riesz map: the mean multiplier when positive, else kinetic per mass."""
    lam = prob.multipliers(U)
    fallback = prob.length_scale_shift(U)
    mean = sum(lam) / len(lam)
    return mean if mean > 1e-6 * fallback else fallback


def pminus_descent(
    params: ProblemParams,
    prob: ConstrainedProblem,
    seed: FieldPair,
    config: MountainPassConfig,
    floor: float,
):
    """Projected descent of the fiber-maximum energy.

    Stops when the residual is below ``config.switch_tol`` or when the
    energy gained over the last ``plateau_window`` steps is below
    ``plateau_rtol`` relative.  Returns the final pair, its energy, residual
    and the number of steps.  Raises :class:`FellToMinimizer` if the energy
    drops below ``floor``.
    """
    grid = seed.grid
    pair = project_pminus(params, seed)
    E = energy(params, pair)
    tau = config.step0
    U = _arrays(pair)
    res = prob.residual_norm(U)
    energies = [E]
    it = 0
    while it < config.max_iters and res > config.switch_tol:
        if len(energies) > config.plateau_window:
            gain = energies[-config.plateau_window - 1] - E
            if gain <= config.plateau_rtol * abs(E):
                break
        it += 1
        sigma = riesz_shift(prob, U)
        G = prob.gradient(U)
        D = []
        for u, g in zip(U, G):
            pg = prob.riesz(sigma, g)
            pu = prob.riesz(sigma, prob.w * u)
            c = float(np.dot(prob.w * u, pg)) / float(np.dot(prob.w * u, pu))
            D.append(-(pg - c * pu))
        accepted = False
        for _ in range(40):
            trial = prob.project([np.maximum(u + tau * d, 0.0) for u, d in zip(U, D)])
            try:
                tpair = project_pminus(params, _pair(grid, trial))
            except NoPminus:
                tau *= 0.5
                continue
            Et = energy(params, tpair)
            if Et < E:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            logger.debug("P- descent: line search stalled at step %d", it)
            break
        pair, E = tpair, Et
        if E < floor:
            raise FellToMinimizer(f"energy {E:.6g} dropped below k0={floor:.6g}")
        energies.append(E)
        U = _arrays(pair)
        tau = min(2.0 * tau, 1e3 * config.step0)
        res = prob.residual_norm(U)
        if it % 50 == 0:
            logger.info("P- descent step %d: J=%.10g residual=%.3e", it, E, res)
    return pair, E, res, it


@dataclass(frozen=True)
class PathSeed:
    n: int
    t_n: float
    H: float
    pair: FieldPair


def bubble_path_seed(params: ProblemParams, minimizer: FieldPair, n_values, samples: int = 401, m: float | None = None) -> PathSeed:
    """Highest point of the first bubble path (in increasing ``n``) that has one.

    A path only qualifies when it reaches below ``2 m`` and its energy has an
    interior maximum; on shallow minimizers this rules out small ``n``.
    """
    tried = []
    for n in sorted(int(k) for k in n_values):
        try:
            T = endpoint_T(params, minimizer, n, m)
            _, t_n, h = h_curve(params, minimizer, n, np.linspace(0.0, T, samples))
        except (SearchFailure, NoInteriorMax) as exc:
            tried.append(f"n={n}: {exc}")
            continue
        return PathSeed(n, t_n, h, test_pair(params, minimizer, n, t_n))
    raise SearchFailure("no bubble path with an interior maximum; " + "; ".join(tried))


def find_mountain_pass(
    params: ProblemParams,
    grid: GridSpec,
    seed: FieldPair,
    config: MountainPassConfig | None = None,
    thresholds: Thresholds | None = None,
    constants: Constants | None = None,
    m: float | None = None,
) -> SolveReport:
    """Mountain-pass solution started from a point of the bubble path.

    ``m`` is the local minimum level; with it the window
    ``0 < M < m + cap`` is checked and a :class:`LevelViolation` raised when
    the converged level falls outside.
    """
    config = config or MountainPassConfig()
    constants = constants or compute_constants(params)
    thresholds = thresholds or compute_thresholds(params, constants)
    prob = ConstrainedProblem(grid, CoupledNonlinearity(params), [params.a, params.b])
    pair, steps = seed, 0
    plateau = config.plateau_rtol
    while True:
        budget = config.max_iters - steps
        stage = dataclasses.replace(config, max_iters=budget, plateau_rtol=plateau)
        pair, E, res, done = pminus_descent(params, prob, pair, stage, floor=thresholds.k0)
        steps += done
        newton = kkt_newton(prob, _arrays(pair), tol=config.tol, max_iters=NEWTON_ATTEMPT)
        if newton.converged:
            break
        logger.info("Newton failed after %d descent steps (residual %.3e); descending further", steps, res)
        if steps >= config.max_iters or done == 0:
            raise NoConvergence(
                f"mountain-pass solve stalled at residual {res:.3e} after {steps} descent steps"
            )
        plateau /= 10.0
    final = _pair(grid, newton.U)
    M = energy(params, final)
    if M < thresholds.k0:
        raise FellToMinimizer(f"Newton converged to level {M:.6g} below k0={thresholds.k0:.6g}")
    cap = cap_increment(params, constants)
    upper = (m if m is not None else 0.0) + cap
    window_ok = bool(0.0 < M < upper) if m is not None else bool(M > 0)
    roots = fiber_critical_points(params, final)
    report = build_report(
        params,
        final,
        steps + newton.iterations,
        True,
        newton.residual,
        M=M,
        cap=cap,
        window_ok=window_ok,
        k0=thresholds.k0,
        fiber_t_plus=roots.t_plus,
        positive=_positive(final.u) and _positive(final.v),
        schwartz=bool(is_schwartz(final.u) and is_schwartz(final.v)),
    )
    if not window_ok:
        raise LevelViolation(f"converged level M={M:.10g} outside (0, m + cap = {upper:.10g})")
    return report
