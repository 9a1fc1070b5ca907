"""Mass-constrained critical points of discrete energies.

Two engines share one representation (a list of nodal arrays, one per
component, with the last node pinned to zero):

* :func:`sobolev_flow` is a descent method.  Each step solves with the
  shifted stiffness matrix ``K + sigma W`` (an H^1 Riesz map), removes the
  component normal to the mass sphere and rescales back onto it.
* :func:`kkt_newton` is Newton's method on the Lagrange system
  ``K u + lambda W u = W f(u)``, ``sum w u^2 = a``.  Unknowns are stored as a
  correction ``delta`` to a fixed base state, and nonlinear increments are
  evaluated in difference form, so small corrections keep full relative
  precision.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

from .functionals import ProblemParams, apow, spow
from .radial_grid import GridSpec

logger = logging.getLogger(__name__)

Arrays = list  # list[np.ndarray], one entry per component


def pow_diff(x: np.ndarray, dx: np.ndarray, e: float) -> np.ndarray:
    """``spow(x + dx, e) - spow(x, e)`` without cancellation when ``|dx| << x``."""
    out = spow(x + dx, e) - spow(x, e)
    safe = (x > 0) & (np.abs(dx) < 0.5 * x)
    xs = x[safe]
    out[safe] = xs**e * np.expm1(e * np.log1p(dx[safe] / xs))
    return out


def abspow_diff(x: np.ndarray, dx: np.ndarray, e: float) -> np.ndarray:
    """``|x + dx|^e - |x|^e`` with the same care as :func:`pow_diff`."""
    out = np.abs(x + dx) ** e - np.abs(x) ** e
    safe = (x > 0) & (np.abs(dx) < 0.5 * x)
    xs = x[safe]
    out[safe] = xs**e * np.expm1(e * np.log1p(dx[safe] / xs))
    return out


class PowerNonlinearity:
    """Single component, potential ``-mu/p int |u|^p``."""

    def __init__(self, mu: float, p: float):
        self.mu, self.p = mu, p
        self.ncomp = 1

    def potential(self, U: Arrays, w: np.ndarray) -> float:
        return -self.mu / self.p * float(np.dot(w, np.abs(U[0]) ** self.p))

    def forces(self, U: Arrays) -> Arrays:
        return [self.mu * spow(U[0], self.p - 1)]

    def force_diff(self, B: Arrays, D: Arrays) -> Arrays:
        return [self.mu * pow_diff(B[0], D[0], self.p - 1)]

    def jacobian(self, U: Arrays) -> dict:
        return {(0, 0): self.mu * (self.p - 1) * apow(U[0], self.p - 2)}


class CoupledNonlinearity:
    """Two components with power self-interactions and the product coupling."""

    def __init__(self, params: ProblemParams):
        self.P = params
        self.ncomp = 2

    def potential(self, U: Arrays, w: np.ndarray) -> float:
        P = self.P
        u, v = np.abs(U[0]), np.abs(U[1])
        dens = P.mu1 / P.p * u**P.p + P.mu2 / P.q * v**P.q + P.nu * u**P.alpha * v**P.beta
        return -float(np.dot(w, dens))

    def forces(self, U: Arrays) -> Arrays:
        P = self.P
        u, v = U
        fu = P.mu1 * spow(u, P.p - 1) + P.nu * P.alpha * spow(u, P.alpha - 1) * np.abs(v) ** P.beta
        fv = P.mu2 * spow(v, P.q - 1) + P.nu * P.beta * spow(v, P.beta - 1) * np.abs(u) ** P.alpha
        return [fu, fv]

    def force_diff(self, B: Arrays, D: Arrays) -> Arrays:
        P = self.P
        (u, v), (du, dv) = B, D
        cu = spow(u, P.alpha - 1)
        dcu = pow_diff(u, du, P.alpha - 1)
        cv = spow(v, P.beta - 1)
        dcv = pow_diff(v, dv, P.beta - 1)
        av = np.abs(v) ** P.beta
        dav = abspow_diff(v, dv, P.beta)
        au = np.abs(u) ** P.alpha
        dau = abspow_diff(u, du, P.alpha)
        # (x + dx)(y + dy) - x y = dx (y + dy) + x dy
        fu = P.mu1 * pow_diff(u, du, P.p - 1) + P.nu * P.alpha * (dcu * (av + dav) + cu * dav)
        fv = P.mu2 * pow_diff(v, dv, P.q - 1) + P.nu * P.beta * (dcv * (au + dau) + cv * dau)
        return [fu, fv]

    def jacobian(self, U: Arrays) -> dict:
        P = self.P
        u, v = U
        au, av = np.abs(u), np.abs(v)
        juu = P.mu1 * (P.p - 1) * apow(u, P.p - 2) + P.nu * P.alpha * (P.alpha - 1) * apow(u, P.alpha - 2) * av**P.beta
        jvv = P.mu2 * (P.q - 1) * apow(v, P.q - 2) + P.nu * P.beta * (P.beta - 1) * apow(v, P.beta - 2) * au**P.alpha
        juv = P.nu * P.alpha * P.beta * spow(u, P.alpha - 1) * spow(v, P.beta - 1)
        return {(0, 0): juu, (1, 1): jvv, (0, 1): juv}


@dataclass
class ConstrainedProblem:
    """Discrete energy ``1/2 sum u_i K u_i + potential(U)`` on mass spheres."""

    grid: GridSpec
    nonlinearity: object
    masses: Sequence[float]

    def __post_init__(self) -> None:
        g = self.grid
        n = g.nodes - 1
        self.n = n
        self.w = np.asarray(g.weights[:n])
        K = g.stiffness[:n, :n]
        self.K = sparse.csr_matrix(K)
        self.k_main = np.asarray(K.diagonal())
        self.k_off = np.asarray(K.diagonal(1))

    @property
    def ncomp(self) -> int:
        return self.nonlinearity.ncomp

    # -- evaluation on interior values -------------------------------------------------
    def mass(self, u: np.ndarray) -> float:
        return float(np.dot(self.w, u * u))

    def kinetic(self, u: np.ndarray) -> float:
        return float(u @ (self.K @ u))

    def energy(self, U: Arrays) -> float:
        return 0.5 * sum(self.kinetic(u) for u in U) + self.nonlinearity.potential(U, self.w)

    def gradient(self, U: Arrays) -> Arrays:
        F = self.nonlinearity.forces(U)
        return [self.K @ u - self.w * f for u, f in zip(U, F)]

    def multipliers(self, U: Arrays) -> list[float]:
        F = self.nonlinearity.forces(U)
        return [
            (float(np.dot(self.w, f * u)) - self.kinetic(u)) / m
            for u, f, m in zip(U, F, self.masses)
        ]

    def project(self, U: Arrays) -> Arrays:
        return [u * math.sqrt(m / self.mass(u)) for u, m in zip(U, self.masses)]

    def riesz(self, sigma: float, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(K + sigma W) x = rhs`` with the tridiagonal structure."""
        ab = np.zeros((3, self.n))
        ab[0, 1:] = self.k_off
        ab[1] = self.k_main + sigma * self.w
        ab[2, :-1] = self.k_off
        return solve_banded((1, 1), ab, rhs)

    def length_scale_shift(self, U: Arrays) -> float:
        """``sigma = kinetic / mass`` summed over components; an inverse squared width."""
        return sum(self.kinetic(u) for u in U) / sum(self.masses)

    def residual_norm(self, U: Arrays, lam: Sequence[float] | None = None) -> float:
        """Relative H^{-1} size of the Lagrange residual.

        ``|K u + lam W u - W f|_* / (|K u|_* + |lam W u|_* + |W f|_*)``, summed
        over components, where ``|r|_*^2 = r . (K + sigma W)^{-1} r``.
        """
        if lam is None:
            lam = self.multipliers(U)
        F = self.nonlinearity.forces(U)
        sigma = self.length_scale_shift(U)
        num = 0.0
        den = 0.0
        for u, f, lm in zip(U, F, lam):
            parts = (self.K @ u, lm * self.w * u, -self.w * f)
            r = parts[0] + parts[1] + parts[2]
            num += float(r @ self.riesz(sigma, r))
            den += sum(math.sqrt(abs(float(x @ self.riesz(sigma, x)))) for x in parts) ** 2
        return math.sqrt(num / den) if den > 0 else 0.0


@dataclass
class FlowResult:
    U: Arrays
    energy: float
    residual: float
    iterations: int
    history: list = field(default_factory=list)


def sobolev_flow(
    prob: ConstrainedProblem,
    U0: Arrays,
    tol: float,
    max_iters: int,
    step0: float = 1.0,
    clamp: bool = False,
    guard=None,
) -> FlowResult:
    """Preconditioned projected gradient descent on the mass spheres.

    Steps are accepted only when the energy decreases (backtracking by
    halving).  ``guard(U)`` may raise to abort, e.g. when a kinetic bound
    is exceeded.  Stops once :meth:`ConstrainedProblem.residual_norm` drops
    below ``tol`` or after ``max_iters`` iterations.
    """
    U = prob.project([np.array(u, dtype=float) for u in U0])
    E = prob.energy(U)
    tau = step0
    res = prob.residual_norm(U)
    hist = [(0, E, res)]
    it = 0
    while it < max_iters and res > tol:
        it += 1
        sigma = max(prob.length_scale_shift(U), 1e-300)
        G = prob.gradient(U)
        D = []
        for u, g in zip(U, G):
            pg = prob.riesz(sigma, g)
            pu = prob.riesz(sigma, prob.w * u)
            c = float(np.dot(prob.w * u, pg)) / float(np.dot(prob.w * u, pu))
            D.append(-(pg - c * pu))
        accepted = False
        for _ in range(40):
            trial = [u + tau * d for u, d in zip(U, D)]
            if clamp:
                trial = [np.maximum(x, 0.0) for x in trial]
            trial = prob.project(trial)
            Et = prob.energy(trial)
            if Et < E:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            logger.debug("flow: line search stalled at iteration %d", it)
            break
        U, E = trial, Et
        if guard is not None:
            guard(U)
        tau = min(2.0 * tau, 1e3 * step0)
        res = prob.residual_norm(U)
        hist.append((it, E, res))
    return FlowResult(U=U, energy=E, residual=res, iterations=it, history=hist)


@dataclass
class NewtonResult:
    base: Arrays
    delta: Arrays
    lam: list
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    @property
    def U(self) -> Arrays:
        return [b + d for b, d in zip(self.base, self.delta)]


def kkt_newton(
    prob: ConstrainedProblem,
    base: Arrays,
    tol: float,
    max_iters: int = 60,
    delta0: Arrays | None = None,
    lam0: Sequence[float] | None = None,
) -> NewtonResult:
    """Newton's method for the constrained stationarity system.

    After the residual falls below ``tol`` the iteration continues while it
    keeps shrinking by at least a factor two, so the returned state sits at
    the rounding floor of the discretization.
    """
    nc = prob.ncomp
    n = prob.n
    w = prob.w
    B = [np.array(b, dtype=float) for b in base]
    D = [np.zeros(n) if delta0 is None else np.array(d, dtype=float) for d in (delta0 or [None] * nc)]
    U = [b + d for b, d in zip(B, D)]
    lam = list(prob.multipliers(U) if lam0 is None else lam0)
    # The base part of the residual is O(1) while the answer may be a tiny
    # correction, so it is accumulated in extended precision.
    ld = np.longdouble
    w_ld = w.astype(ld)
    K_ld = prob.K.astype(ld)
    B_ld = [b.astype(ld) for b in B]
    FB = [w_ld * f for f in prob.nonlinearity.forces(B_ld)]
    KB = [K_ld @ b for b in B_ld]
    WB = [w_ld * b for b in B_ld]
    massB = [float(np.dot(wb, b) - ld(m)) for wb, b, m in zip(WB, B_ld, prob.masses)]

    def assemble_residual(D, lam):
        dF = prob.nonlinearity.force_diff(B, D)
        rows = []
        for i in range(nc):
            r_base = KB[i] + ld(lam[i]) * WB[i] - FB[i]
            r_delta = prob.K @ D[i] + lam[i] * w * D[i] - w * dF[i]
            rows.append((r_base + r_delta).astype(float))
        cons = [
            0.5 * (massB[i] + 2.0 * float(np.dot(w * B[i], D[i])) + float(np.dot(w, D[i] * D[i])))
            for i in range(nc)
        ]
        return rows, cons

    def merit(D, lam):
        U = [b + d for b, d in zip(B, D)]
        rel = prob.residual_norm(U, lam)
        mass_err = max(abs(prob.mass(u) - m) / m for u, m in zip(U, prob.masses))
        return max(rel, mass_err)

    cur = merit(D, lam)
    hist = [cur]
    converged = cur <= tol
    prev_snorm = math.inf
    it = 0
    while it < max_iters:
        it += 1
        U = [b + d for b, d in zip(B, D)]
        rows, cons = assemble_residual(D, lam)
        J = prob.nonlinearity.jacobian(U)
        blocks = [[None] * (2 * nc) for _ in range(2 * nc)]
        for i in range(nc):
            for j in range(nc):
                if i == j:
                    diag = lam[i] * w - w * J[(i, i)]
                    blocks[i][j] = prob.K + sparse.diags(diag)
                else:
                    key = (min(i, j), max(i, j))
                    blocks[i][j] = sparse.diags(-w * J[key])
            col = sparse.csr_matrix((w * U[i]).reshape(-1, 1))
            blocks[i][nc + i] = col
            blocks[nc + i][i] = col.T
        for i in range(nc):
            for j in range(nc):
                if blocks[nc + i][nc + j] is None and i == j:
                    blocks[nc + i][nc + j] = sparse.csr_matrix((1, 1))
        A = sparse.bmat(blocks, format="csc")
        rhs = -np.concatenate(rows + [np.array(cons)])
        # Symmetric diagonal scaling: near the origin the rows carry weights
        # of order r^N and would otherwise be swamped by rounding.
        d = np.abs(A.diagonal())
        d[d == 0] = 1.0
        S = sparse.diags(1.0 / np.sqrt(d))
        try:
            step = S @ spsolve((S @ A @ S).tocsc(), S @ rhs)
        except Exception as exc:  # singular Jacobian
            logger.debug("newton: linear solve failed: %s", exc)
            break
        if not np.all(np.isfinite(step)):
            break
        sD = [step[i * n:(i + 1) * n] for i in range(nc)]
        sL = step[nc * n:]
        snorm = max(
            math.sqrt(float(np.dot(w, s * s)) / max(prob.mass(u), 1e-300)) for s, u in zip(sD, U)
        )
        if converged:
            # At the rounding floor the merit is noise; judge progress by the
            # size of the Newton correction instead.
            Dt = [d + s for d, s in zip(D, sD)]
            lt = [l + s for l, s in zip(lam, sL)]
            mt = merit(Dt, lt)
            if mt > tol:
                break
            D, lam, cur = Dt, lt, mt
            hist.append(cur)
            if snorm > 0.5 * prev_snorm or snorm < 1e-17:
                break
            prev_snorm = snorm
            continue
        t = 1.0
        improved = False
        for _ in range(12):
            Dt = [d + t * s for d, s in zip(D, sD)]
            lt = [l + t * s for l, s in zip(lam, sL)]
            mt = merit(Dt, lt)
            if mt < cur:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        D, lam, cur = Dt, lt, mt
        hist.append(cur)
        prev_snorm = snorm * t
        converged = cur <= tol
    return NewtonResult(base=B, delta=D, lam=lam, residual=cur, iterations=it, converged=converged, history=hist)


SWITCH_LEVELS = (1e-3, 1e-5, 1e-7)


def descend_and_polish(
    prob: ConstrainedProblem,
    U0: Arrays,
    tol: float,
    max_iters: int,
    step0: float = 1.0,
    guard=None,
) -> tuple[FlowResult, NewtonResult, int]:
    """Flow until Newton's method takes over, tightening the hand-off level on failure.

    Returns the last flow result, the last Newton result (check its
    ``converged`` flag) and the total number of flow steps.
    """
    U, steps = U0, 0
    newton = None
    flow = None
    for level in (*SWITCH_LEVELS, tol):
        flow = sobolev_flow(prob, U, tol=max(tol, level), max_iters=max_iters - steps, step0=step0, guard=guard)
        steps += flow.iterations
        U = flow.U
        newton = kkt_newton(prob, U, tol=tol)
        if newton.converged or steps >= max_iters or level <= tol:
            break
        logger.debug("Newton failed from flow residual %.3e; tightening hand-off", flow.residual)
    return flow, newton, steps
