"""Command line entry point ``normcrit``.

Usage::

    normcrit <subcommand> --config <path> [--out <dir>] [--seed <int>]

Each run writes its artifacts and a ``manifest.json`` into the output
directory, which is locked for the duration of the run.  Failures map to
exit codes 2 (configuration), 3 (no convergence), 4 (energy level outside
the admissible window) and 5 (inequality scan violation).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Callable

import filelock
import numpy as np

from . import __version__
from .bubble_mp import bubble_asymptotics, cap_increment, endpoint_T, h_curve
from .config import RunConfig, parse_config, with_overrides
from .errors import ConfigError, LevelViolation, NoInteriorMax, NormcritError, ScanViolation, SearchFailure
from .functionals import SolveReport, compute_constants
from .lemma_oracles import run_all_scans, write_ledger
from .local_minimizer import compute_thresholds, find_local_min, sweep_nu
from .mountain_pass_solver import MountainPassConfig, bubble_path_seed, find_mountain_pass
from .radial_grid import write_snapshot

logger = logging.getLogger("normcrit")

LOCK_NAME = ".normcrit.lock"
MANIFEST_NAME = "manifest.json"


def _num(x) -> str:
    """Shortest round-trip text for a float, so CSVs are reproducible byte for byte."""
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _inputs(cfg: RunConfig) -> dict:
    return {"params": cfg.params.as_dict(), "grid": cfg.grid.describe(), "solver": vars(cfg.solver)}


def _report_payload(cfg: RunConfig, rep: SolveReport, **extra) -> dict:
    out = {"inputs": _inputs(cfg), "report": rep.summary()}
    out.update(extra)
    return out


def _local(cfg: RunConfig):
    constants = compute_constants(cfg.params)
    thresholds = compute_thresholds(cfg.params, constants)
    rep = find_local_min(cfg.params, cfg.grid, cfg.solver, thresholds=thresholds, constants=constants)
    return rep, constants, thresholds


# ---------------------------------------------------------------------------
# Subcommands; each returns the list of artifact paths it wrote.


def cmd_solve_local(cfg: RunConfig, out: Path) -> list[Path]:
    rep, constants, thr = _local(cfg)
    window = {"rho0": thr.rho0, "k0": thr.k0, "nu0": thr.nu0, "inside_ball": rep.state.kinetic_sum < thr.rho0}
    return [
        _write_json(out / "local_report.json", _report_payload(cfg, rep, window=window)),
        write_snapshot(rep.state.u, out / "local_u.csv"),
        write_snapshot(rep.state.v, out / "local_v.csv"),
    ]


def cmd_solve_mp(cfg: RunConfig, out: Path) -> list[Path]:
    local, constants, thr = _local(cfg)
    seed = bubble_path_seed(cfg.params, local.state, cfg.mp_seed_n_values, cfg.samples, m=local.energy)
    logger.info("mountain-pass seed: n=%d t_n=%.6g H=%.10g", seed.n, seed.t_n, seed.H)
    mp_cfg = dataclasses.replace(MountainPassConfig.from_local(cfg.solver), max_iters=cfg.mp_max_iters)
    rep = find_mountain_pass(cfg.params, cfg.grid, seed.pair, mp_cfg, thr, constants, m=local.energy)
    payload = _report_payload(
        cfg, rep, minimizer_energy=local.energy, seed={"n": seed.n, "t_n": seed.t_n, "H": seed.H}
    )
    return [
        _write_json(out / "mp_report.json", payload),
        write_snapshot(rep.state.u, out / "mp_u.csv"),
        write_snapshot(rep.state.v, out / "mp_v.csv"),
    ]


def cmd_verify_bubble(cfg: RunConfig, out: Path) -> list[Path]:
    rows = bubble_asymptotics(cfg.params.dim, cfg.n_values, etas=cfg.etas)
    path = _write_csv(
        out / "asymptotics.csv",
        ["quantity", "n", "measured", "limit", "fitted_slope", "theory_slope"],
        [[r.quantity, r.n, _num(r.measured), _num(r.limit), _num(r.fitted_slope), _num(r.theory_slope)] for r in rows],
    )
    return [path]


def cmd_verify_gap(cfg: RunConfig, out: Path) -> list[Path]:
    local, constants, _ = _local(cfg)
    m = local.energy
    cap = cap_increment(cfg.params, constants)
    rows, failures = [], []
    for n in sorted(cfg.gap_n_values):
        try:
            T = endpoint_T(cfg.params, local.state, n, m)
            _, t_n, h = h_curve(cfg.params, local.state, n, np.linspace(0.0, T, cfg.samples))
        except (SearchFailure, NoInteriorMax) as exc:
            logger.warning("n=%d: %s", n, exc)
            failures.append(f"n={n}: {exc}")
            rows.append([n, "nan", "nan", _num(m), _num(cap), "nan"])
            continue
        margin = m + cap - h
        if not margin > 0:
            failures.append(f"n={n}: margin {margin:.6g} is not positive")
        rows.append([n, _num(t_n), _num(h), _num(m), _num(cap), _num(margin)])
    path = _write_csv(out / "gap.csv", ["n", "t_n", "H", "m", "cap", "margin"], rows)
    if failures:
        raise LevelViolation("; ".join(failures), [path])
    return [path]


def cmd_verify_lemmas(cfg: RunConfig, out: Path) -> list[Path]:
    reports = run_all_scans(cfg.seed, two_root_samples=cfg.two_root_samples)
    path = write_ledger(reports, out / "lemma_ledger.csv")
    bad = [r.lemma_id for r in reports if not r.ok]
    if bad:
        raise ScanViolation("violations in " + ", ".join(bad), [path])
    return [path]


def cmd_sweep_nu(cfg: RunConfig, out: Path) -> list[Path]:
    rows = sweep_nu(cfg.params, cfg.grid, cfg.nu_list, cfg.solver)
    path = _write_csv(
        out / "sweep.csv",
        ["nu", "m", "lambda1", "lambda2", "h1_dist"],
        [[_num(r.nu), _num(r.m), _num(r.lambda1), _num(r.lambda2), _num(r.h1_dist)] for r in rows],
    )
    return [path]


def cmd_constants(cfg: RunConfig, out: Path) -> list[Path]:
    constants = compute_constants(cfg.params)
    path = out / "constants.json"
    path.write_text(constants.to_json(cfg.params.dim), encoding="utf-8")
    return [path]


SUBCOMMANDS: dict[str, Callable[[RunConfig, Path], list[Path]]] = {
    "solve-local": cmd_solve_local,
    "solve-mp": cmd_solve_mp,
    "verify-bubble": cmd_verify_bubble,
    "verify-gap": cmd_verify_gap,
    "verify-lemmas": cmd_verify_lemmas,
    "sweep-nu": cmd_sweep_nu,
    "constants": cmd_constants,
}


def run_subcommand(name: str, cfg: RunConfig) -> tuple[int, list[Path]]:
    """Run one subcommand under the output-directory lock and write its manifest.

    Returns:
        The exit status and the artifact paths (manifest last).
    """
    if name not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {name!r}")
    out = cfg.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc.strerror}") from None
    lock = filelock.FileLock(str(out / LOCK_NAME))
    try:
        lock.acquire(timeout=0)
    except filelock.Timeout:
        raise NormcritError(f"output directory {out} is in use by another run") from None
    try:
        start = time.perf_counter()
        status, reason, artifacts = "ok", None, []
        try:
            artifacts = SUBCOMMANDS[name](cfg, out)
            code = 0
        except NormcritError as exc:
            code = exc.exit_code
            status, reason = type(exc).__name__, str(exc)
            if len(exc.args) > 1 and isinstance(exc.args[1], list):
                artifacts = exc.args[1]
                reason = str(exc.args[0])
        manifest = {
            "subcommand": name,
            "config_sha256": cfg.sha256,
            "seed": cfg.seed,
            "wall_seconds": time.perf_counter() - start,
            "status": status,
            "artifacts": [str(p) for p in artifacts],
            "version": __version__,
            "numpy": np.__version__,
            "inputs": _inputs(cfg),
        }
        if reason is not None:
            manifest["reason"] = reason
        mpath = _write_json(out / MANIFEST_NAME, manifest)
        if code:
            logger.error("%s failed (%s): %s", name, status, reason)
        return code, [*artifacts, mpath]
    finally:
        lock.release()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="normcrit", description="Normalized solutions of a critically coupled system.")
    ap.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    ap.add_argument("--config", required=True, help="flat key = value configuration file")
    ap.add_argument("--out", default=None, help="output directory (overrides run.output_dir)")
    ap.add_argument("--seed", type=int, default=None, help="seed for randomized scans (overrides run.seed)")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = with_overrides(parse_config(args.config), args.out, args.seed)
        code, paths = run_subcommand(args.subcommand, cfg)
    except NormcritError as exc:
        print(f"normcrit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    for p in paths:
        print(p)
    return code


if __name__ == "__main__":
    sys.exit(main())
