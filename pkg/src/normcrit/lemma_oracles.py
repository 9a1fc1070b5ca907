"""Brute-force checks of the elementary inequalities behind the energy estimates.

Every scan returns a :class:`ScanReport`.  Margins are signed and scaled so
that a value below ``-MARGIN_TOL`` means the inequality failed at the
recorded witness.  Constants that an inequality only asserts to exist
(``A2`` and ``A`` below) are computed on one grid and re-verified on a
different, finer one.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .radial_grid import GridSpec, RadialField, kinetic, lp_norm_p, sphere_area

logger = logging.getLogger(__name__)

MARGIN_TOL = 1e-12
LEDGER_HEADER = ["lemma_id", "samples", "violations", "worst_margin", "witness"]


@dataclass
class ScanReport:
    lemma_id: str
    samples: int
    violations: int
    worst_margin: float
    witness: str
    extra: dict | None = None

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.worst_margin > -MARGIN_TOL

    def row(self) -> list[str]:
        return [self.lemma_id, str(self.samples), str(self.violations), repr(float(self.worst_margin)), self.witness]


def _fmt(**kw) -> str:
    return ";".join(f"{k}={float(v)!r}" for k, v in kw.items())


class _Worst:
    """Tracks the smallest margin and its witness."""

    def __init__(self, lemma_id: str):
        self.lemma_id = lemma_id
        self.samples = 0
        self.violations = 0
        self.margin = math.inf
        self.witness = ""

    def add(self, margins: np.ndarray, witness_fn) -> None:
        margins = np.atleast_1d(np.asarray(margins, dtype=float))
        self.samples += margins.size
        self.violations += int(np.count_nonzero(~(margins > -MARGIN_TOL)))
        k = int(np.nanargmin(margins)) if np.any(np.isfinite(margins)) else 0
        if not np.isfinite(margins[k]) or margins[k] < self.margin:
            self.margin = float(margins[k])
            self.witness = witness_fn(k)

    def report(self, **extra) -> ScanReport:
        return ScanReport(self.lemma_id, self.samples, self.violations, self.margin, self.witness, extra or None)


# ---------------------------------------------------------------------------
# Two-root lemma


@dataclass
class TwoRootResult:
    roots: int
    max_margin: float | None


TWO_ROOT_GRID = np.geomspace(1e-8, 1e8, 100_001)


def _two_root_check(A, B, C, D, s1, s2, s3):
    if min(A, B, C, D) <= 0:
        raise ValueError("A, B, C, D must be positive")
    if not (0 < s1 < 2 and 0 < s2 < 2 and s3 > 2):
        raise ValueError("need s1, s2 in (0, 2) and s3 > 2")


def scan_two_root(A, B, C, D, s1, s2, s3, normalized: bool = False) -> TwoRootResult:
    """Count sign changes of ``f'`` for ``f = A t^2 - B t^s1 - C t^s2 - D t^s3``.

    With ``normalized=True`` the tuple is expected to satisfy ``f'(1) = 0``
    and ``f(1) > 0``; the relative amount by which ``f(1)`` exceeds the
    grid maximum of ``f`` is returned as ``max_margin``.
    """
    _two_root_check(A, B, C, D, s1, s2, s3)
    t = TWO_ROOT_GRID
    d = 2 * A * t - s1 * B * t ** (s1 - 1) - s2 * C * t ** (s2 - 1) - s3 * D * t ** (s3 - 1)
    sg = np.sign(d)
    sg = sg[sg != 0]
    roots = int(np.count_nonzero(sg[1:] != sg[:-1]))
    margin = None
    if normalized:
        tt = t[(t > 1e-4) & (t < 1e4)]
        f = A * tt**2 - B * tt**s1 - C * tt**s2 - D * tt**s3
        f1 = A - B - C - D
        margin = (f1 - float(np.max(f))) / abs(f1)
    return TwoRootResult(roots, margin)


def scan_two_root_random(rng: np.random.Generator, samples: int = 1000) -> list[ScanReport]:
    """Random admissible tuples (root count) and engineered tuples (maximum at t = 1)."""
    count = _Worst("two_root_count")
    peak = _Worst("two_root_max")
    for _ in range(samples):
        B, C, D = 10.0 ** rng.uniform(-3, 3, size=3)
        s1, s2 = rng.uniform(0.05, 1.95, size=2)
        s3 = rng.uniform(2.05, 8.0)
        A = 10.0 ** rng.uniform(-3, 3)
        res = scan_two_root(A, B, C, D, s1, s2, s3)
        count.add([2 - res.roots], lambda _k: _fmt(A=A, B=B, C=C, D=D, s1=s1, s2=s2, s3=s3))
        # f'(1) = 0 fixes A; f(1) > 0 needs D (s3 - 2) > B (2 - s1) + C (2 - s2).
        Dn = (B * (2 - s1) + C * (2 - s2)) / (s3 - 2) * rng.uniform(1.1, 10.0)
        An = 0.5 * (s1 * B + s2 * C + s3 * Dn)
        res = scan_two_root(An, B, C, Dn, s1, s2, s3, normalized=True)
        peak.add([res.max_margin], lambda _k: _fmt(A=An, B=B, C=C, D=Dn, s1=s1, s2=s2, s3=s3))
    return [count.report(), peak.report()]


# ---------------------------------------------------------------------------
# Lower bound for the mixed interaction term


def interaction_excess(alpha, beta, t1, t2, s):
    """``(t1+s)^a (t2+s)^b - t1^a t2^b - s^{a+b} - a t1^{a-1} t2^b s - b t2^{b-1} t1^a s``."""
    return (
        (t1 + s) ** alpha * (t2 + s) ** beta
        - t1**alpha * t2**beta
        - s ** (alpha + beta)
        - alpha * t1 ** (alpha - 1) * t2**beta * s
        - beta * t2 ** (beta - 1) * t1**alpha * s
    )


def _interaction_scale(alpha, beta, t1, t2, s):
    """Size of the largest terms, used to make margins relative."""
    return (t1 + s) ** alpha * (t2 + s) ** beta + s**2


def scan_interaction_lower(
    alpha: float,
    beta: float,
    L1: float = 0.5,
    L2: float = 2.0,
    A1: float = 1.0,
    coarse: int = 21,
    fine: int = 37,
) -> ScanReport:
    """Compute ``A2`` and verify ``excess >= A1 s^{a+b-1} - A2 s^2`` on a finer grid.

    ``A2 = max(0, -inf (excess - A1 s^{a+b-1}) / s^2)`` with the infimum taken
    over a coarse grid of ``[L1, L2]^2 x (0, 1e3 L2]`` and then polished by a
    bounded local minimization from the best grid point.
    """
    if not (alpha > 1 and beta > 1 and alpha + beta > 3):
        raise ValueError("need alpha, beta > 1 and alpha + beta > 3")
    if not (0 < L1 <= L2 and 0 < A1 < (alpha + beta) * L1):
        raise ValueError("need 0 < L1 <= L2 and 0 < A1 < (alpha+beta) L1")
    e = alpha + beta - 1

    def ratio(t1, t2, s):
        return (interaction_excess(alpha, beta, t1, t2, s) - A1 * s**e) / s**2

    t = np.linspace(L1, L2, coarse)
    s = np.geomspace(1e-6 * L1, 1e3 * L2, 600)
    T1, T2, S = np.meshgrid(t, t, s, indexing="ij")
    R = ratio(T1, T2, S)
    k = np.unravel_index(np.argmin(R), R.shape)
    x0 = np.array([T1[k], T2[k], math.log(S[k])])
    res = optimize.minimize(
        lambda x: ratio(x[0], x[1], math.exp(x[2])),
        x0,
        method="L-BFGS-B",
        bounds=[(L1, L2), (L1, L2), (math.log(1e-6 * L1), math.log(1e3 * L2))],
        options={"ftol": 1e-15, "gtol": 1e-13},
    )
    inf = min(float(R[k]), float(res.fun))
    A2 = max(0.0, -inf) * (1.0 + 1e-9)

    tf = np.linspace(L1, L2, fine)
    sf = np.concatenate([np.geomspace(1e-7 * L1, 1e3 * L2, 2400), [0.0]])
    worst = _Worst("interaction_lower")
    for t1 in tf:
        T2f, Sf = np.meshgrid(tf, sf, indexing="ij")
        lhs = interaction_excess(alpha, beta, t1, T2f, Sf)
        rhs = A1 * Sf**e - A2 * Sf**2
        scale = _interaction_scale(alpha, beta, t1, T2f, Sf)
        margin = np.where(scale > 0, (lhs - rhs) / np.where(scale > 0, scale, 1.0), 0.0)
        flat = margin.ravel()
        worst.add(
            flat,
            lambda j, t1=t1, T2f=T2f, Sf=Sf: _fmt(
                alpha=alpha, beta=beta, t1=t1, t2=T2f.ravel()[j], s=Sf.ravel()[j], A2=A2
            ),
        )
    return worst.report(A2=A2)


def interaction_large_s_ratio(alpha, beta, t1, t2, s=1e3):
    """``excess / s^{a+b-1}``, which tends to ``alpha t1 + beta t2``."""
    return interaction_excess(alpha, beta, t1, t2, s) / s ** (alpha + beta - 1)


# ---------------------------------------------------------------------------
# Cross-term inequality through its reduction to the unit square


def cross_term_h(alpha, beta, t, s):
    return (
        t**alpha * s**beta
        + alpha * t ** (alpha - 1) * (1 - t) * s**beta
        + beta * t**alpha * s ** (beta - 1) * (1 - s)
        + (1 - t) ** alpha * (1 - s) ** beta
    )


def scan_cross_term(alpha: float, beta: float, points: int = 2001) -> ScanReport:
    """Check ``h(t, s) <= 1`` on a ``points x points`` grid of the unit square."""
    if not (alpha > 1 and beta > 1):
        raise ValueError("need alpha, beta > 1")
    x = np.linspace(0.0, 1.0, points)
    T, S = np.meshgrid(x, x, indexing="ij")
    H = cross_term_h(alpha, beta, T, S)
    worst = _Worst("cross_term")
    worst.add(
        (1.0 - H).ravel(),
        lambda j: _fmt(alpha=alpha, beta=beta, t=T.ravel()[j], s=S.ravel()[j]),
    )
    interior = H[1:-1, 1:-1]
    return worst.report(max_h=float(H.max()), interior_max=float(interior.max()))


# ---------------------------------------------------------------------------
# Taylor remainder bound


def taylor_ratio(eta, t, s):
    return ((t + s) ** eta - t**eta - eta * t ** (eta - 1) * s) / s**eta


def scan_taylor_tail(eta: float, L1: float = 0.5, L2: float = 2.0) -> ScanReport:
    """Compute ``A = inf ratio`` (capped by the limit 1 as ``s -> inf``) and re-verify."""
    if not eta > 2:
        raise ValueError("eta must exceed 2")
    if not 0 < L1 <= L2:
        raise ValueError("need 0 < L1 <= L2")
    t = np.linspace(L1, L2, 41)
    s = np.geomspace(1e-6 * L1, 1e3 * L2, 2000)
    T, S = np.meshgrid(t, s, indexing="ij")
    R = taylor_ratio(eta, T, S)
    k = np.unravel_index(np.argmin(R), R.shape)
    res = optimize.minimize(
        lambda x: taylor_ratio(eta, x[0], math.exp(x[1])),
        np.array([T[k], math.log(S[k])]),
        method="L-BFGS-B",
        bounds=[(L1, L2), (math.log(1e-6 * L1), math.log(1e3 * L2))],
        options={"ftol": 1e-15, "gtol": 1e-13},
    )
    A = min(1.0, float(R[k]), float(res.fun)) * (1.0 - 1e-9)

    tf = np.linspace(L1, L2, 97)
    sf = np.concatenate([np.geomspace(1e-7 * L1, 1e3 * L2, 5001), [1e6 * L2]])
    Tf, Sf = np.meshgrid(tf, sf, indexing="ij")
    Rf = taylor_ratio(eta, Tf, Sf)
    worst = _Worst("taylor_tail")
    worst.add(((Rf - A) / A).ravel(), lambda j: _fmt(eta=eta, t=Tf.ravel()[j], s=Sf.ravel()[j], A=A))
    return worst.report(A=A)


# ---------------------------------------------------------------------------
# Coupled rearrangement of radial non-increasing profiles


def _check_decreasing(f: RadialField, name: str) -> None:
    y = f.values
    tol = 1e-10 * max(float(np.max(np.abs(y))), 1e-300)
    if np.any(y < -tol) or np.any(np.diff(y) > tol):
        raise ValueError(f"{name} must be nonnegative and radially non-increasing")


def superlevel_radius(f: RadialField, levels: np.ndarray) -> np.ndarray:
    """Radius of the ball ``{f > t}`` for each level ``t`` (piecewise-linear ``f``)."""
    r, y = f.grid.r, np.minimum.accumulate(np.maximum(f.values, 0.0))
    # Subnormal samples would give infinite interpolation slopes.
    y = np.where(y < 1e-200, 0.0, y)
    levels = np.asarray(levels, dtype=float)
    out = np.zeros_like(levels)
    above = levels < y[0]
    # y is non-increasing; interpolate r as a function of y on the reversed arrays.
    yr, rr = y[::-1], r[::-1]
    uniq, idx = np.unique(yr, return_index=True)
    # For a flat stretch keep the outermost radius, which is the first after reversal.
    out[above] = np.interp(levels[above], uniq, rr[idx])
    return out


def coupled_rearrange(u: RadialField, v: RadialField) -> RadialField:
    """Radial non-increasing profile whose superlevel balls have the summed measures."""
    if u.grid != v.grid:
        raise ValueError("fields must share a grid")
    _check_decreasing(u, "u")
    _check_decreasing(v, "v")
    g = u.grid
    N = g.dim
    levels = np.unique(np.concatenate([np.maximum(u.values, 0.0), np.maximum(v.values, 0.0)]))
    levels = levels[levels > 0]
    if levels.size == 0:
        return RadialField.zeros(g)
    # Midpoints between consecutive levels keep piecewise-linear accuracy.
    levels = np.unique(np.concatenate([levels, 0.5 * (levels[1:] + levels[:-1]), [0.0]]))
    radius = (superlevel_radius(u, levels) ** N + superlevel_radius(v, levels) ** N) ** (1.0 / N)
    # radius is non-increasing in the level; invert it.
    order = np.argsort(radius, kind="stable")
    rad, lev = radius[order], levels[order]
    keep = np.concatenate([[True], np.diff(rad) > 0])
    rad, lev = rad[keep], lev[keep]
    top = max(float(np.max(u.values)), float(np.max(v.values)))
    rad = np.concatenate([[0.0], rad]) if rad[0] > 0 else rad
    lev = np.concatenate([[top], lev]) if lev.size < rad.size else lev
    vals = np.interp(g.r, rad, lev, right=0.0)
    vals[-1] = 0.0
    return RadialField(g, vals)


def rearrangement_identities(u: RadialField, v: RadialField, p: float = 2.0, levels: int = 64) -> dict:
    """Relative errors of the measure identity and the L^p additivity."""
    w = coupled_rearrange(u, v)
    N = u.grid.dim
    top = 0.98 * min(float(np.max(w.values)), max(float(np.max(u.values)), float(np.max(v.values))))
    ts = np.linspace(0.02 * top, top, levels)
    vol = sphere_area(N) / N
    lhs = vol * superlevel_radius(w, ts) ** N
    rhs = vol * (superlevel_radius(u, ts) ** N + superlevel_radius(v, ts) ** N)
    measure_err = float(np.max(np.abs(lhs - rhs) / rhs))
    lp_w, lp_sum = lp_norm_p(w, p), lp_norm_p(u, p) + lp_norm_p(v, p)
    return {"measure_rel_err": measure_err, "lp_rel_err": abs(lp_w - lp_sum) / lp_sum, "rearranged": w}


def verify_rearrangement_inequalities(quadruples: Sequence[tuple], alpha: float, beta: float) -> list[ScanReport]:
    """Gradient and cross-term inequalities for ``(u1, u2, v1, v2)`` quadruples.

    Margins are relative: ``(rhs - lhs) / rhs`` for the gradient bound and
    ``(rearranged - original) / rearranged`` for the cross term.
    """
    grad = _Worst("rearrangement_gradient")
    cross = _Worst("rearrangement_cross")
    for idx, (u1, u2, v1, v2) in enumerate(quadruples):
        su = coupled_rearrange(u1, u2)
        sv = coupled_rearrange(v1, v2)
        g_rhs = kinetic(u1) + kinetic(u2)
        grad.add([(g_rhs - kinetic(su)) / g_rhs], lambda _k, i=idx: f"quadruple={i}")
        w = su.grid.weights
        orig = float(np.dot(w, u1.values**alpha * v1.values**beta + u2.values**alpha * v2.values**beta))
        rear = float(np.dot(w, su.values**alpha * sv.values**beta))
        cross.add([(rear - orig) / rear if rear > 0 else 0.0], lambda _k, i=idx: f"quadruple={i}")
    return [grad.report(), cross.report()]


def verify_bathtub(quadruples: Sequence[tuple]) -> ScanReport:
    """Optional scan of ``int u1 v1 + u2 v2 <= int {u1,u2}* {v1,v2}*``."""
    worst = _Worst("rearrangement_pairing")
    for idx, (u1, u2, v1, v2) in enumerate(quadruples):
        su, sv = coupled_rearrange(u1, u2), coupled_rearrange(v1, v2)
        w = su.grid.weights
        orig = float(np.dot(w, u1.values * v1.values + u2.values * v2.values))
        rear = float(np.dot(w, su.values * sv.values))
        worst.add([(rear - orig) / rear], lambda _k, i=idx: f"quadruple={i}")
    return worst.report()


# ---------------------------------------------------------------------------
# The full battery


def gaussian(grid: GridSpec, height: float, width: float) -> RadialField:
    return RadialField.from_function(grid, lambda r: height * np.exp(-((r / width) ** 2)))


def random_gaussian_quadruples(grid: GridSpec, rng: np.random.Generator, count: int) -> list[tuple]:
    out = []
    for _ in range(count):
        h = rng.uniform(0.3, 3.0, size=4)
        wd = rng.uniform(0.5, 3.0, size=4)
        out.append(tuple(gaussian(grid, hi, wi) for hi, wi in zip(h, wd)))
    return out


def random_critical_splits(rng: np.random.Generator, dim: int, count: int) -> list[tuple[float, float]]:
    """``(alpha, beta)`` with both above 1 and ``alpha + beta = 2N/(N-2)``."""
    s = 2.0 * dim / (dim - 2.0)
    out = []
    for _ in range(count):
        a = float(rng.uniform(1.0, s - 1.0))
        a = min(max(a, 1.0 + 1e-3), s - 1.0 - 1e-3)
        out.append((a, s - a))
    return out


def run_all_scans(seed: int = 42, two_root_samples: int = 1000, rearrangement_grid: GridSpec | None = None) -> list[ScanReport]:
    """Every scan used by the acceptance battery, in a fixed order."""
    rng = np.random.default_rng(seed)
    reports: list[ScanReport] = []
    reports.extend(scan_two_root_random(rng, two_root_samples))
    splits = [(3.0, 3.0)]
    for dim in (3, 4, 5):
        splits.extend(random_critical_splits(rng, dim, 3))
    for a, b in splits:
        rep = scan_interaction_lower(a, b)
        rep.lemma_id = f"interaction_lower[{a:.6g},{b:.6g}]"
        reports.append(rep)
    cross_pairs = [(2.0, 2.0), (3.0, 3.0), (1.5, 1.8333333333333333), (2.5, 3.5), (1.2, 4.8)]
    for a, b in cross_pairs:
        rep = scan_cross_term(a, b)
        rep.lemma_id = f"cross_term[{a:.6g},{b:.6g}]"
        reports.append(rep)
    for eta in (2.5, 3.0, 4.0):
        rep = scan_taylor_tail(eta)
        rep.lemma_id = f"taylor_tail[{eta:g}]"
        reports.append(rep)
    grid = rearrangement_grid or GridSpec(dim=3, r_max=20.0, nodes=8192)
    quads = random_gaussian_quadruples(grid, rng, 6)
    f = gaussian(grid, 1.0, 1.0)
    quads.append((f, f, f, f))
    ident = _Worst("rearrangement_identity")
    for i, (u1, u2, _, _) in enumerate(quads):
        res = rearrangement_identities(u1, u2, p=3.0)
        err = max(res["measure_rel_err"], res["lp_rel_err"])
        ident.add([1e-3 - err], lambda _k, i=i: f"quadruple={i}")
    reports.append(ident.report())
    # The equal quadruple is an equality case of the cross term, so it only
    # enters the (strict) gradient check.
    grad, cross = verify_rearrangement_inequalities(quads[:-1], 3.0, 3.0)
    (equal_grad, _) = verify_rearrangement_inequalities(quads[-1:], 3.0, 3.0)
    if equal_grad.worst_margin < grad.worst_margin:
        grad.worst_margin, grad.witness = equal_grad.worst_margin, f"quadruple={len(quads) - 1}"
    grad.samples += equal_grad.samples
    grad.violations += equal_grad.violations
    reports.extend([grad, cross])
    return reports


def write_ledger(reports: Iterable[ScanReport], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(LEDGER_HEADER)
        for rep in reports:
            wr.writerow(rep.row())
    return path
