from __future__ import annotations

import math

import numpy as np
import pytest

from normcrit.errors import BallExit
from normcrit.functionals import energy, energy_gradient_vectors, pohozaev
from normcrit.local_minimizer import (
    LocalMinConfig,
    decoupled_pair,
    find_local_min,
    h_nu,
    sweep_nu,
)
from normcrit.radial_grid import FieldPair, RadialField, is_schwartz, make_grid

from conftest import canonical_params


class TestThresholds:
    def test_positive(self, thresholds):
        assert thresholds.rho0 > 0 and thresholds.k0 > 0 and thresholds.nu0 > 0

    def test_coupling_free_limit(self, constants):
        # With gamma_p = gamma_q = 3/2 the gap to 1/2 decays like rho^{-1/4}.
        p = canonical_params()
        gaps = [0.5 - h_nu(p, constants, rho, 0.0) for rho in (1e8, 1e12, 1e16)]
        assert gaps[0] / gaps[1] == pytest.approx(10.0, rel=1e-9)
        assert gaps[1] / gaps[2] == pytest.approx(10.0, rel=1e-9)

    def test_decreasing_in_nu(self, constants):
        p = canonical_params()
        vals = [h_nu(p, constants, 0.5, nu) for nu in (0.0, 0.1, 1.0, 3.0)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_quarter_condition(self, constants, thresholds):
        assert h_nu(canonical_params(), constants, thresholds.rho0, 0.0) > 0.25

    def test_window_ordering(self, constants, thresholds):
        p = canonical_params()
        r0, nu0 = thresholds.rho0, thresholds.nu0
        assert h_nu(p, constants, r0, nu0 / 2) > h_nu(p, constants, r0, nu0) > 0

    def test_smaller_masses_keep_thresholds(self, constants, thresholds):
        p = canonical_params(a=0.5, b=0.5)
        assert h_nu(p, constants, thresholds.rho0, thresholds.nu0) > h_nu(
            canonical_params(), constants, thresholds.rho0, thresholds.nu0
        )

    def test_lower_bound_on_random_pairs(self, constants):
        # J >= rho h_nu(rho) whenever the kinetic sum equals rho and the masses are (a, b).
        p = canonical_params(nu=0.5)
        g = make_grid(3, 60.0, 4096, "graded", 1e-4)
        rng = np.random.default_rng(5)
        for _ in range(50):
            wu, wv = rng.uniform(0.3, 4.0, size=2)
            u = RadialField.from_function(g, lambda r: np.exp(-((r / wu) ** 2)))
            v = RadialField.from_function(g, lambda r: 1 / np.cosh(r / wv))
            pair = FieldPair(u.scaled(1 / math.sqrt(u.mass)), v.scaled(1 / math.sqrt(v.mass)))
            rho = pair.kinetic_sum
            assert energy(p, pair) >= rho * h_nu(p, constants, rho, p.nu)


class TestLocalMin:
    def test_canonical(self, local_min, thresholds):
        rep = local_min
        assert rep.converged
        assert rep.energy < 0
        assert abs(rep.pohozaev_residual) <= 1e-5 * thresholds.rho0
        assert max(rep.mass_errors) <= 1e-8
        assert is_schwartz(rep.state.u) and is_schwartz(rep.state.v)
        assert rep.lambda1 > 0 and rep.lambda2 > 0
        assert rep.state.kinetic_sum < thresholds.rho0

    def test_stationarity(self, params, local_min):
        # K u - W f + lambda W u vanishes at a constrained critical point.
        g = local_min.state.grid
        du, dv = energy_gradient_vectors(params, local_min.state)
        for d, f, lam in ((du, local_min.state.u, local_min.lambda1), (dv, local_min.state.v, local_min.lambda2)):
            res = d + lam * g.weights * f.values
            scale = np.abs(g.stiffness @ f.values).sum()
            assert np.abs(res[:-1]).sum() <= 1e-8 * scale

    def test_beats_decoupled_pair(self, params, grid, local_min):
        ref, _ = decoupled_pair(params, grid)
        assert local_min.energy < energy(params, ref)

    def test_pohozaev_from_state(self, params, local_min):
        assert pohozaev(params, local_min.state) == pytest.approx(local_min.pohozaev_residual)

    def test_half_masses_cost_energy(self, grid, local_min):
        half = find_local_min(canonical_params(a=0.5, b=0.5), grid)
        assert half.energy > local_min.energy

    def test_single_component(self, grid):
        rep = find_local_min(canonical_params(b=0.0), grid)
        assert not np.any(rep.state.v.values)
        assert rep.lambda1 > 0 and math.isnan(rep.lambda2)

    def test_leaving_the_ball_is_reported(self, grid):
        # A strongly concentrated start has a kinetic sum far above 2 rho0.
        p = canonical_params()
        u = RadialField.from_function(grid, lambda r: np.exp(-((r / 0.05) ** 2)))
        u = u.scaled(1 / math.sqrt(u.mass))
        with pytest.raises(BallExit):
            find_local_min(p, grid, init=FieldPair(u, u))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LocalMinConfig(tol=0.0)
        with pytest.raises(ValueError):
            LocalMinConfig(max_iters=0)


@pytest.fixture(scope="module")
def rows(params, grid):
    return sweep_nu(params, grid, [1e-2, 3e-3, 1e-3, 3e-4, 1e-4])


class TestSweep:
    def test_distance_shrinks(self, rows):
        dist = [r.h1_dist for r in rows]
        assert all(b < a for a, b in zip(dist, dist[1:]))
        assert dist[-1] < 1e-2

    def test_levels_rise_to_decoupled(self, params, grid, rows):
        ref, _ = decoupled_pair(params, grid)
        m0 = energy(params.replace(nu=0.0), ref)
        levels = [r.m for r in rows]
        assert all(b > a for a, b in zip(levels, levels[1:]))
        assert levels[-1] < m0

    def test_multipliers_approach_scalar(self, params, grid, rows):
        _, (ru, rv) = decoupled_pair(params, grid)
        gaps = [abs(r.lambda1 - ru.lam) for r in rows]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))

    def test_requires_descending(self, params, grid):
        with pytest.raises(ValueError):
            sweep_nu(params, grid, [1e-3, 1e-2])
