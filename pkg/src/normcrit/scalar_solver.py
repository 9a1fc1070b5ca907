"""Positive normalized ground states of ``-Lap w + lambda w = mu w^{p-1}``.

For mass-subcritical ``p`` the ground state minimizes
``1/2 ||grad w||^2 - mu/p ||w||_p^p`` on the sphere ``||w||_2^2 = a``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .constrained import ConstrainedProblem, PowerNonlinearity, descend_and_polish
from .errors import NoConvergence
from .radial_grid import GridSpec, RadialField, dilate, is_schwartz

logger = logging.getLogger(__name__)



@dataclass
class ScalarReport:
    w: RadialField
    lam: float
    energy: float
    mass_error: float
    iterations: int
    residual: float = math.nan

    def to_json(self) -> str:
        payload = {
            "lambda": self.lam,
            "energy": self.energy,
            "mass_error": self.mass_error,
            "iterations": self.iterations,
            "residual": self.residual,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _check_exponent(dim: int, p: float) -> None:
    if not 2.0 < p < 2.0 + 4.0 / dim:
        raise ValueError(f"p must lie in (2, 2+4/N) for N={dim}, got {p}")


def fiber_optimal_scale(dim: int, p: float, mu: float, f: RadialField) -> float:
    """Dilation factor minimizing ``1/2 t^2 K - mu/p t^gamma B`` for the profile ``f``."""
    gp = (p - 2.0) * dim / 2.0
    return (gp * mu * f.lp(p) / (p * f.kinetic)) ** (1.0 / (2.0 - gp))


def gaussian_guess(grid: GridSpec, mass: float, width: float = 1.0) -> RadialField:
    g = RadialField.from_function(grid, lambda r: np.exp(-(r / width) ** 2))
    return g.scaled(math.sqrt(mass / g.mass))


def scalar_ground_state(
    dim: int,
    p: float,
    mu: float,
    a: float,
    grid: GridSpec,
    tol: float = 1e-10,
    max_iters: int = 5000,
    init: RadialField | None = None,
) -> ScalarReport:
    """Mass-constrained ground state on ``grid``.

    The unit Gaussian (or ``init``) is first dilated to the best member of
    its fiber, then driven by the preconditioned projected flow until the
    relative residual is small enough for Newton's method on the Lagrange
    system to finish the job.
    """
    _check_exponent(dim, p)
    if not (mu > 0 and a > 0):
        raise ValueError("mu and a must be positive")
    if grid.dim != dim:
        raise ValueError("grid dimension mismatch")
    f0 = gaussian_guess(grid, a) if init is None else init.scaled(math.sqrt(a / init.mass))
    if init is None:
        f0 = dilate(f0, fiber_optimal_scale(dim, p, mu, f0))
    prob = ConstrainedProblem(grid, PowerNonlinearity(mu, p), [a])
    flow, newton, steps = descend_and_polish(prob, [f0.values[:-1]], tol=tol, max_iters=max_iters)
    if not newton.converged:
        raise NoConvergence(
            f"scalar solve stalled: residual {newton.residual:.3e} after "
            f"{steps} flow and {newton.iterations} Newton steps"
        )
    u = np.append(newton.U[0], 0.0)
    w = RadialField(grid, np.abs(u))
    lam = prob.multipliers([w.values[:-1]])[0]
    energy = 0.5 * w.kinetic - mu / p * w.lp(p)
    report = ScalarReport(
        w=w,
        lam=lam,
        energy=energy,
        mass_error=abs(w.mass - a) / a,
        iterations=steps + newton.iterations,
        residual=newton.residual,
    )
    if lam <= 0 or not is_schwartz(w):
        logger.warning("scalar ground state lacks the expected shape (lambda=%g)", lam)
    return report


def unit_frequency_ground_state(dim: int, p: float, grid: GridSpec, max_iters: int = 2000) -> RadialField:
    """Positive solution of ``-Lap Q + Q = Q^{p-1}`` by Petviashvili iteration.

    Valid for ``2 < p < 2N/(N-2)``; the grid should extend to about 30.
    """
    prob = ConstrainedProblem(grid, PowerNonlinearity(1.0, p), [1.0])
    w = prob.w
    q = np.exp(-prob.grid.r[:-1] ** 2)
    expo = (p - 1.0) / (p - 2.0)
    for _ in range(max_iters):
        nl = w * q ** (p - 1)
        lq = prob.K @ q + w * q
        m = float(q @ lq) / float(q @ nl)
        new = m**expo * prob.riesz(1.0, nl)
        change = float(np.max(np.abs(new - q))) / float(np.max(np.abs(new)))
        q = new
        if change < 1e-14 and abs(m - 1.0) < 1e-12:
            break
    else:
        raise NoConvergence("Petviashvili iteration did not settle")
    return RadialField(grid, np.append(q, 0.0))
