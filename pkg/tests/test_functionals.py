from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normcrit.functionals import (
    FiberNorms,
    ProblemParams,
    compute_constants,
    coupling_integral,
    energy,
    fiber_energy,
    gn_constant,
    gn_ratio,
    grad_energy,
    multipliers,
    pohozaev,
    sobolev_constant,
)
from normcrit.radial_grid import FieldPair, RadialField, dilate, make_grid
from normcrit.scalar_solver import scalar_ground_state

from conftest import canonical_params
from oracles import shooting_ground_state_mass

GRID = make_grid(3, 40.0, 4096, "graded", 1e-4)


def smooth_pair(rng, grid=GRID):
    """Random positive, smooth, decaying pair."""
    h = rng.uniform(0.2, 1.5, size=2)
    w = rng.uniform(0.6, 2.5, size=2)
    c = rng.uniform(0.0, 0.8, size=2)
    u = RadialField.from_function(grid, lambda r: h[0] * np.exp(-((r / w[0]) ** 2)) * (1 + c[0] * r))
    v = RadialField.from_function(grid, lambda r: h[1] / np.cosh(r / w[1]) ** 2 * (1 + c[1] * r * r))
    return FieldPair(u, v)


class TestParams:
    def test_canonical(self):
        p = canonical_params()
        assert p.two_star == 6.0 and p.gamma_p == 1.5

    @pytest.mark.parametrize(
        "changes",
        [
            dict(p=2.0 + 4.0 / 3.0),
            dict(q=2.0),
            dict(alpha=2.5),
            dict(alpha=1.0, beta=5.0),
            dict(nu=-0.1),
            dict(a=0.0, b=0.0),
            dict(mu1=0.0),
        ],
    )
    def test_invalid(self, changes):
        with pytest.raises(ValueError):
            canonical_params(**changes)

    def test_swapped(self):
        p = ProblemParams(4, 2.5, 2.8, 1.5, 2.5, mu1=2.0, a=3.0)
        s = p.swapped()
        assert (s.p, s.q, s.alpha, s.beta, s.mu2, s.b) == (2.8, 2.5, 2.5, 1.5, 2.0, 3.0)


class TestEnergy:
    def test_zero_pair(self):
        z = RadialField.zeros(GRID)
        pair = FieldPair(z, z)
        p = canonical_params()
        assert energy(p, pair) == 0.0 and pohozaev(p, pair) == 0.0

    def test_coupling_zero_when_v_vanishes(self):
        pair = smooth_pair(np.random.default_rng(1))
        pair = FieldPair(pair.u, RadialField.zeros(GRID))
        assert coupling_integral(canonical_params(), pair) == 0.0

    def test_coupling_exponent_collapse(self):
        f = smooth_pair(np.random.default_rng(2)).u
        assert coupling_integral(canonical_params(), FieldPair(f, f)) == pytest.approx(f.lp(6.0), rel=1e-12)

    def test_coupling_sobolev_bound(self, constants):
        p = canonical_params()
        S = constants.sobolev_S
        rng = np.random.default_rng(3)
        for _ in range(30):
            pair = smooth_pair(rng)
            bound = S ** (-3.0) * pair.u.kinetic ** 1.5 * pair.v.kinetic ** 1.5
            assert coupling_integral(p, pair) <= bound

    @pytest.mark.parametrize("t", [0.2, 0.5, 2.0, 5.0])
    def test_fiber_matches_dilated_energy(self, t):
        p = canonical_params(nu=0.3)
        pair = smooth_pair(np.random.default_rng(4))
        assert energy(p, pair.dilate(t)) == pytest.approx(fiber_energy(p, pair, t), rel=1e-3)

    def test_fiber_at_one(self):
        p = canonical_params()
        pair = smooth_pair(np.random.default_rng(5))
        assert fiber_energy(p, pair, 1.0) == energy(p, pair)

    def test_fiber_limits(self):
        p = canonical_params()
        pair = smooth_pair(np.random.default_rng(6))
        assert fiber_energy(p, pair, 1e-3) < 0
        assert fiber_energy(p, pair, 10.0) < 0
        with pytest.raises(ValueError):
            fiber_energy(p, pair, 0.0)

    def test_scalar_consistency(self):
        # One component with no coupling is the scalar problem.
        g = make_grid(3, 200.0, 4096, "graded", 1e-4)
        rep = scalar_ground_state(3, 3.0, 1.0, 20.0, g)
        p = canonical_params(nu=0.0, a=20.0, b=0.0)
        pair = FieldPair(rep.w, RadialField.zeros(g))
        assert energy(p, pair) == pytest.approx(rep.energy, rel=1e-12)


class TestDerivatives:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_pohozaev_is_fiber_slope(self, seed):
        p = canonical_params(nu=0.5)
        pair = smooth_pair(np.random.default_rng(seed))
        h = 1e-4
        fd = (fiber_energy(p, pair, 1 + h) - fiber_energy(p, pair, 1 - h)) / (2 * h)
        scale = abs(pair.kinetic_sum) + abs(pohozaev(p, pair))
        assert abs(pohozaev(p, pair) - fd) <= 1e-4 * scale

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_gradient_directional(self, seed):
        rng = np.random.default_rng(seed)
        p = canonical_params(nu=0.5)
        pair = smooth_pair(rng)
        hpair = smooth_pair(rng)
        g = grad_energy(p, pair)
        w = GRID.weights
        inner = float(np.dot(w, g.u.values * hpair.u.values) + np.dot(w, g.v.values * hpair.v.values))
        eps = 1e-5

        def shifted(s):
            return FieldPair(
                RadialField(GRID, pair.u.values + s * hpair.u.values),
                RadialField(GRID, pair.v.values + s * hpair.v.values),
            )

        fd = (energy(p, shifted(eps)) - energy(p, shifted(-eps))) / (2 * eps)
        assert inner == pytest.approx(fd, rel=1e-4, abs=1e-9)

    def test_gradient_of_zero(self):
        z = RadialField.zeros(GRID)
        g = grad_energy(canonical_params(), FieldPair(z, z))
        assert not np.any(g.u.values) and not np.any(g.v.values)

    def test_multiplier_identity(self):
        # lambda * mass = (nonlinear terms) - kinetic, by construction
        p = canonical_params(a=2.0, b=0.5)
        pair = smooth_pair(np.random.default_rng(8))
        l1, l2 = multipliers(p, pair)
        c = coupling_integral(p, pair)
        assert l1 * p.a == pytest.approx(pair.u.lp(3.0) + 0.03 * c - pair.u.kinetic)
        assert l2 * p.b == pytest.approx(pair.v.lp(3.0) + 0.03 * c - pair.v.kinetic)

    def test_fiber_second_derivative(self):
        p = canonical_params(nu=0.2)
        norms = FiberNorms.of(p, smooth_pair(np.random.default_rng(9)))
        h = 1e-4
        for t in (0.5, 1.0, 2.0):
            fd = (norms.derivative(p, t + h) - norms.derivative(p, t - h)) / (2 * h)
            assert norms.second_derivative(p, t) == pytest.approx(fd, rel=1e-6)


class TestSobolev:
    def test_closed_form(self):
        # S = (N(N-2)/4) |S^N|^{2/N}; in N = 3 this is 3 (pi/2)^{4/3}.
        assert sobolev_constant(3) == pytest.approx(3 * (math.pi / 2) ** (4 / 3), rel=1e-10)
        area4 = 8 * math.pi**2 / 3  # surface area of the unit sphere S^4
        assert sobolev_constant(4) == pytest.approx(2 * area4 ** 0.5, rel=1e-10)

    @pytest.mark.parametrize("dim,expected", [(3, 5.478), (4, 10.26)])
    def test_fine_grid_quotient(self, dim, expected):
        g = make_grid(dim, 2000.0, 65536, "graded", 1e-4)
        quotient = sobolev_constant(dim, g)
        assert quotient == pytest.approx(sobolev_constant(dim), rel=2e-3)
        assert quotient == pytest.approx(expected, rel=1e-3)

    def test_refinement_converges(self):
        # Successive refinements approach the truncated-domain quotient.
        vals = [sobolev_constant(3, make_grid(3, 2000.0, m, "graded", 1e-4)) for m in (1024, 2048, 4096, 8192, 16384)]
        steps = np.abs(np.diff(vals))
        assert np.all(steps[1:] < steps[:-1])


class TestGagliardoNirenberg:
    def test_matches_ground_state_formula(self):
        # With Q the unit-frequency ground state, Pohozaev identities give
        # C = p^{p/2} / (gamma^{gamma/2} (p - gamma)^{(p-gamma)/2}) * L^{1-p/2},
        # L = ||Q||_p^p = p ||Q||_2^2 / (p - gamma).
        dim, p = 3, 3.0
        gam = (p - 2) * dim / 2
        mass = shooting_ground_state_mass(dim, p)
        L = p * mass / (p - gam)
        oracle = p ** (p / 2) / (gam ** (gam / 2) * (p - gam) ** ((p - gam) / 2)) * L ** (1 - p / 2)
        assert gn_constant(dim, p) == pytest.approx(oracle, rel=2e-3)

    @pytest.mark.parametrize("t", [0.3, 2.0, 5.0])
    def test_ratio_dilation_invariant(self, t):
        f = RadialField.from_function(GRID, lambda r: np.exp(-r * r) * (1 + r))
        assert gn_ratio(dilate(f, t), 3.0) == pytest.approx(gn_ratio(f, 3.0), rel=1e-3)

    def test_ratio_near_two(self):
        # gamma_p -> 0 as p -> 2, and the ratio of an L^2-normalized profile tends to 1.
        f = RadialField.from_function(GRID, lambda r: np.exp(-r * r))
        f = f.scaled(1 / math.sqrt(f.mass))
        vals = [gn_ratio(f, p) for p in (2.3, 2.1, 2.01, 2.001)]
        assert all(abs(b - 1) < abs(a - 1) for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(1.0, abs=5e-3)

    def test_inequality_holds_on_random_fields(self):
        C = gn_constant(3, 3.0)
        rng = np.random.default_rng(11)
        for _ in range(100):
            pair = smooth_pair(rng)
            assert gn_ratio(pair.u, 3.0) <= C
            assert gn_ratio(pair.v, 3.0) <= C

    def test_constants_json(self):
        p = canonical_params()
        c = compute_constants(p)
        text = c.to_json(3)
        assert '"S"' in text and '"C_p"' in text and '"N": 3' in text

    def test_rejects_supercritical(self):
        with pytest.raises(ValueError):
            gn_constant(3, 6.0)
