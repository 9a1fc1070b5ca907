from __future__ import annotations

import csv

import numpy as np
import pytest

from normcrit.lemma_oracles import (
    LEDGER_HEADER,
    ScanReport,
    coupled_rearrange,
    cross_term_h,
    gaussian,
    interaction_excess,
    interaction_large_s_ratio,
    random_critical_splits,
    rearrangement_identities,
    run_all_scans,
    scan_cross_term,
    scan_interaction_lower,
    scan_taylor_tail,
    scan_two_root,
    scan_two_root_random,
    superlevel_radius,
    taylor_ratio,
    verify_bathtub,
    verify_rearrangement_inequalities,
    write_ledger,
)
from normcrit.radial_grid import GridSpec, RadialField

GRID = GridSpec(dim=3, r_max=20.0, nodes=8192)


class TestTwoRoot:
    def test_random_counts(self):
        count, peak = scan_two_root_random(np.random.default_rng(1), 200)
        assert count.ok and peak.ok
        assert count.samples == 200

    def test_engineered_peak(self):
        # s1 = s2 = 1, s3 = 3: f'(1) = 0 gives A = 5.5 and then f(1) = 0.5.
        B = C = 1.0
        D = 3.0
        A = 0.5 * (B + C + 3 * D)
        res = scan_two_root(A, B, C, D, 1.0, 1.0, 3.0, normalized=True)
        assert A - B - C - D > 0
        assert res.roots == 2 and res.max_margin >= 0

    def test_single_root(self):
        # With negligible B and C the small-t minimum disappears from the scanned range.
        assert scan_two_root(1.0, 1e-12, 1e-12, 1.0, 1.5, 1.5, 4.0).roots == 1

    @pytest.mark.parametrize("s", [(1.0, 1.0, 2.0), (0.0, 1.0, 3.0), (1.0, 2.0, 3.0)])
    def test_rejects_exponents(self, s):
        with pytest.raises(ValueError):
            scan_two_root(1.0, 1.0, 1.0, 1.0, *s)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            scan_two_root(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 3.0)


class TestInteraction:
    def test_zero_at_origin(self):
        assert interaction_excess(3.0, 3.0, 0.7, 1.3, 0.0) == 0.0

    def test_large_s(self):
        t1, t2 = 0.6, 1.7
        r = interaction_large_s_ratio(3.0, 3.0, t1, t2, s=1e6)
        assert r == pytest.approx(3 * t1 + 3 * t2, rel=1e-4)
        assert r > (3 + 3) * 0.5 > 1.0

    def test_canonical_split(self):
        rep = scan_interaction_lower(3.0, 3.0)
        assert rep.ok and rep.extra["A2"] >= 0

    @pytest.mark.parametrize("dim", [3, 4, 5])
    def test_random_splits(self, dim):
        (a, b), = random_critical_splits(np.random.default_rng(dim), dim, 1)
        assert a + b == pytest.approx(2 * dim / (dim - 2), rel=1e-15)
        assert scan_interaction_lower(a, b).ok

    def test_preconditions(self):
        with pytest.raises(ValueError):
            scan_interaction_lower(1.0, 3.0)
        with pytest.raises(ValueError):
            scan_interaction_lower(3.0, 3.0, L1=0.5, A1=3.0)


class TestCrossTerm:
    @pytest.mark.parametrize("ab", [(2.0, 2.0), (3.0, 3.0), (1.2, 4.8)])
    def test_corners(self, ab):
        assert cross_term_h(*ab, 1.0, 1.0) == 1.0
        assert cross_term_h(*ab, 0.0, 0.0) == 1.0

    def test_quadratic_case(self):
        rep = scan_cross_term(2.0, 2.0, points=401)
        assert rep.ok
        assert rep.extra["max_h"] == pytest.approx(1.0, abs=1e-12)
        assert rep.extra["interior_max"] < 1.0

    def test_rejects(self):
        with pytest.raises(ValueError):
            scan_cross_term(1.0, 2.0)


class TestTaylor:
    def test_cubic_closed_form(self):
        s = np.array([0.1, 1.0, 10.0, 1e3])
        assert np.allclose(taylor_ratio(3.0, 1.0, s), (3 * s**2 + s**3) / s**3, rtol=1e-12)
        rep = scan_taylor_tail(3.0, 1.0, 1.0)
        assert rep.ok and rep.extra["A"] == pytest.approx(1.0, rel=1e-6)

    @pytest.mark.parametrize("eta", [2.5, 3.0, 4.0])
    def test_constant_in_unit_interval(self, eta):
        rep = scan_taylor_tail(eta)
        assert rep.ok and 0 < rep.extra["A"] <= 1

    def test_rejects(self):
        with pytest.raises(ValueError):
            scan_taylor_tail(2.0)


class TestRearrangement:
    def test_equal_pair_is_dilation(self):
        f = gaussian(GRID, 1.0, 1.0)
        w = coupled_rearrange(f, f)
        expected = np.exp(-((GRID.r / 2 ** (1 / 3)) ** 2))
        mask = GRID.r < 8.0
        # Piecewise-linear inversion: error below h^2 max|f''| / 8 with h = 20 / 8191.
        assert np.max(np.abs(w.values[mask] - expected[mask])) < 2e-6
        assert w.lp(3.0) == pytest.approx(2 * f.lp(3.0), rel=1e-4)

    def test_zero_partner(self):
        f = gaussian(GRID, 2.0, 1.5)
        w = coupled_rearrange(f, RadialField.zeros(GRID))
        assert np.max(np.abs(w.values - f.values)) < 1e-12

    def test_both_zero(self):
        z = RadialField.zeros(GRID)
        assert not np.any(coupled_rearrange(z, z).values)

    def test_identities_unequal(self):
        res = rearrangement_identities(gaussian(GRID, 1.0, 0.8), gaussian(GRID, 2.5, 2.0), p=2.5)
        assert res["measure_rel_err"] < 1e-3 and res["lp_rel_err"] < 1e-3

    def test_superlevel_radius_of_gaussian(self):
        f = gaussian(GRID, 1.0, 1.0)
        t = np.array([0.9, 0.5, 0.1])
        assert np.allclose(superlevel_radius(f, t), np.sqrt(-np.log(t)), rtol=1e-5)
        assert superlevel_radius(f, np.array([1.5]))[0] == 0.0

    def test_rejects_increasing(self):
        bump = RadialField.from_function(GRID, lambda r: r * np.exp(-r))
        with pytest.raises(ValueError):
            coupled_rearrange(bump, gaussian(GRID, 1.0, 1.0))

    def test_inequalities(self):
        q = (gaussian(GRID, 1.0, 0.7), gaussian(GRID, 2.0, 1.9), gaussian(GRID, 0.5, 2.4), gaussian(GRID, 1.4, 1.1))
        grad, cross = verify_rearrangement_inequalities([q], 3.0, 3.0)
        assert grad.ok and grad.worst_margin > 0
        assert cross.ok and cross.worst_margin > 0
        assert verify_bathtub([q]).ok

    def test_equal_pair_gradient_strict(self):
        f = gaussian(GRID, 1.0, 1.0)
        grad, _ = verify_rearrangement_inequalities([(f, f, f, f)], 3.0, 3.0)
        assert grad.worst_margin > 0.1

    def test_zero_field_cross_term(self):
        # With u2 = v2 = 0 the rearranged pair is the original one.
        f, g = gaussian(GRID, 1.0, 1.0), gaussian(GRID, 0.5, 2.0)
        z = RadialField.zeros(GRID)
        _, cross = verify_rearrangement_inequalities([(f, z, g, z)], 3.0, 3.0)
        assert abs(cross.worst_margin) < 1e-12


def test_battery_and_ledger(tmp_path):
    reports = run_all_scans(seed=42, two_root_samples=100)
    assert all(r.ok for r in reports), [r.row() for r in reports if not r.ok]
    path = write_ledger(reports, tmp_path / "ledger.csv")
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == LEDGER_HEADER
    assert len(rows) == len(reports) + 1
    assert all(r[2] == "0" for r in rows[1:])


def test_report_ok_threshold():
    assert ScanReport("x", 1, 0, -1e-13, "").ok
    assert not ScanReport("x", 1, 0, -1e-11, "").ok
    assert not ScanReport("x", 1, 1, 0.5, "").ok
