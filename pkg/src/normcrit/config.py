"""Run configuration read from flat ``section.key = value`` files.

Example::

    # canonical fixture
    params.dim = 3
    params.p = 3
    params.q = 3
    params.alpha = 3
    params.beta = 3
    params.nu = 0.01
    grid.r_max = 5000
    grid.nodes = 4096
    grid.law = graded

Blank lines and ``#`` comments are ignored.  Lists are comma separated.
Every key must appear in :data:`SCHEMA`; anything else is an error.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError
from .functionals import ProblemParams
from .local_minimizer import LocalMinConfig
from .radial_grid import DEFAULT_CORE, GridSpec


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    val = float(text)
    if not val.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(val)


def _list(conv: Callable[[str], Any]) -> Callable[[str], list]:
    def parse(text: str) -> list:
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        return [conv(t) for t in items]

    return parse


# key -> (converter, default); ``None`` marks a required key.
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "params.dim": (_int, None),
    "params.p": (float, None),
    "params.q": (float, None),
    "params.alpha": (float, None),
    "params.beta": (float, None),
    "params.mu1": (float, 1.0),
    "params.mu2": (float, 1.0),
    "params.nu": (float, 0.01),
    "params.a": (float, 1.0),
    "params.b": (float, 1.0),
    "grid.r_max": (float, 50.0),
    "grid.nodes": (_int, 4096),
    "grid.law": (str, "graded"),
    "grid.core": (float, DEFAULT_CORE),
    "solver.tol": (float, 1e-10),
    "solver.max_iters": (_int, 5000),
    "solver.step0": (float, 1.0),
    "solver.ball_check": (_bool, True),
    "bubble.n_values": (_list(_int), [16, 32, 64, 128, 256]),
    "bubble.gap_n_values": (_list(_int), [64, 128, 256]),
    "bubble.samples": (_int, 401),
    "bubble.etas": (_list(float), []),
    "mp.seed_n_values": (_list(_int), [64, 128, 256, 512, 1024]),
    "mp.max_iters": (_int, 3000),
    "sweep.nu_list": (_list(float), [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]),
    "lemmas.two_root_samples": (_int, 1000),
    "run.output_dir": (str, "normcrit-out"),
    "run.seed": (_int, 42),
}


@dataclass
class RunConfig:
    """Everything a subcommand needs, validated."""

    params: ProblemParams
    grid: GridSpec
    solver: LocalMinConfig
    n_values: list[int]
    gap_n_values: list[int]
    nu_list: list[float]
    output_dir: Path
    seed: int = 42
    samples: int = 401
    etas: list[float] = field(default_factory=list)
    mp_seed_n_values: list[int] = field(default_factory=list)
    mp_max_iters: int = 3000
    two_root_samples: int = 1000
    raw: dict = field(default_factory=dict, repr=False)
    sha256: str = ""


def read_pairs(text: str, source: str = "<config>") -> dict[str, tuple[str, int]]:
    """Split the file into ``key -> (raw value, line number)``."""
    out: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {out[key][1]})")
        out[key] = (value, lineno)
    return out


def config_from_text(text: str, source: str = "<config>") -> RunConfig:
    pairs = read_pairs(text, source)
    vals: dict[str, Any] = {}
    for key, (conv, default) in SCHEMA.items():
        if key in pairs:
            raw, lineno = pairs[key]
            try:
                vals[key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
        elif default is None:
            raise ConfigError(f"{source}: missing required key {key!r}")
        else:
            vals[key] = default

    def sect(prefix: str) -> dict:
        return {k.split(".", 1)[1]: v for k, v in vals.items() if k.startswith(prefix + ".")}

    try:
        params = ProblemParams(**sect("params"))
        g = sect("grid")
        grid = GridSpec(dim=params.dim, r_max=g["r_max"], nodes=g["nodes"], law=g["law"], core=g["core"])
        solver = LocalMinConfig(**sect("solver"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for key in ("bubble.n_values", "bubble.gap_n_values", "mp.seed_n_values"):
        if any(n < 4 for n in vals[key]):
            raise ConfigError(f"{source}: {key} entries must be at least 4")
    if vals["bubble.samples"] < 5:
        raise ConfigError(f"{source}: bubble.samples must be at least 5")
    return RunConfig(
        params=params,
        grid=grid,
        solver=solver,
        n_values=vals["bubble.n_values"],
        gap_n_values=vals["bubble.gap_n_values"],
        nu_list=vals["sweep.nu_list"],
        output_dir=Path(vals["run.output_dir"]),
        seed=vals["run.seed"],
        samples=vals["bubble.samples"],
        etas=vals["bubble.etas"],
        mp_seed_n_values=vals["mp.seed_n_values"],
        mp_max_iters=vals["mp.max_iters"],
        two_root_samples=vals["lemmas.two_root_samples"],
        raw=vals,
        sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )


def parse_config(path: str | Path) -> RunConfig:
    """Read and validate a configuration file.

    Raises:
        ConfigError: On a missing file, a malformed line (with its number),
            an unknown key, or a value that breaks a parameter invariant.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise ConfigError(f"{path}: not valid UTF-8") from None
    cfg = config_from_text(text, str(path))
    cfg.sha256 = hashlib.sha256(data).hexdigest()
    return cfg


def with_overrides(cfg: RunConfig, output_dir: str | Path | None = None, seed: int | None = None) -> RunConfig:
    changes: dict[str, Any] = {}
    if output_dir is not None:
        changes["output_dir"] = Path(output_dir)
    if seed is not None:
        changes["seed"] = int(seed)
    return dataclasses.replace(cfg, **changes)
