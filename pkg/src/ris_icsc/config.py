"""Scenario configuration: one immutable structure holding every parameter.

Documents are YAML mappings. Every key is optional; missing keys take the
defaults of the reference scenario (two UEs, M=4, N=2, d=2, L=30).

Schema (units in brackets)::

    K: 2                      # UEs
    M: 4                      # BS antennas
    N: 2                      # UE antennas
    L: 30                     # RIS elements
    d: 2                      # streams per UE
    bandwidth_hz: 1.0e6
    noise_comm_mw: 3.98e-12
    noise_sense_mw: 3.98e-12
    power_budget_mw: 10       # scalar or per-UE list
    sinr_threshold: "10 dB"   # "<x> dB" or a bare linear number
    weights: null             # per-UE list, default 1/K each
    pathloss_ref_db: 30
    ref_distance_m: 1
    exponents: {bu: 3.75, r: 2.2, ru: 2.2, uu: 2.2, target: 2.0}
    rician_k: 3
    geometry:
      bs: [0, 0]
      ris: [200, 0]
      ues: [[240, 50], [250, -50]]
      targets: [[260, 50], [250, -70]]
    task_bits: [200000, 300000]       # scalar, [lo, hi] range, or per-UE list
    cycles_per_bit: [500, 600]
    local_cpu_hz: [1.0e8, 2.0e8]
    edge_cpu_total_hz: 5.0e10
    epsilon: 1.0e-3
    max_iters: {compute: 50, newton: 60, inner: 30, outer: 30, single_ue: 30}
    newton_step: 0.5
    newton_eps: 0.01
    seed: 0

A two-element list for ``task_bits``, ``cycles_per_bit`` or ``local_cpu_hz``
is read as a ``[lo, hi]`` range and sampled per UE with the scenario seed;
use ``{values: [...]}`` to give explicit per-UE values instead. The seed can
be overridden with the ``RIS_ICSC_SEED`` environment variable.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import yaml

SEED_ENV_VAR = "RIS_ICSC_SEED"

# Node layouts of the reference scenarios (metres).
DEFAULT_GEOMETRY = {
    1: {"ues": ((250.0, 50.0),), "targets": ((270.0, 50.0),)},
    2: {
        "ues": ((240.0, 50.0), (250.0, -50.0)),
        "targets": ((260.0, 50.0), (250.0, -70.0)),
    },
}


class ConfigError(ValueError):
    """Raised for unparsable documents and invariant violations."""


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class Exponents:
    bu: float = 3.75
    r: float = 2.2
    ru: float = 2.2
    uu: float = 2.2
    target: float = 2.0


@dataclass(frozen=True)
class Geometry:
    bs: tuple[float, float] = (0.0, 0.0)
    ris: tuple[float, float] = (200.0, 0.0)
    ues: tuple[tuple[float, float], ...] = DEFAULT_GEOMETRY[2]["ues"]
    targets: tuple[tuple[float, float], ...] = DEFAULT_GEOMETRY[2]["targets"]


@dataclass(frozen=True)
class IterationCaps:
    compute: int = 50  # offload/edge-CPU alternation
    newton: int = 60  # fractional Newton passes
    inner: int = 30  # beamforming block cycles
    outer: int = 30  # joint loop
    single_ue: int = 30  # closed-form single-UE loop


@dataclass(frozen=True)
class SystemConfig:
    """Every scalar of one scenario. Powers and noise in mW, rates in bit/s.

    Per-UE quantities are tuples of length ``K``. ``task_ranges`` keeps the
    un-sampled task specification so :meth:`reseed` can redraw the task
    parameters for a new realization.
    """

    K: int = 2
    M: int = 4
    N: int = 2
    L: int = 30
    d: int = 2
    bandwidth_hz: float = 1.0e6
    noise_comm: float = 3.98e-12
    noise_sense: float = 3.98e-12
    power_budget: tuple[float, ...] = (10.0, 10.0)
    sinr_threshold_linear: float = 10.0
    weights: tuple[float, ...] = (0.5, 0.5)
    pathloss_ref_db: float = 30.0
    ref_distance_m: float = 1.0
    exponents: Exponents = field(default_factory=Exponents)
    rician_k: float = 3.0
    geometry: Geometry = field(default_factory=Geometry)
    task_bits: tuple[int, ...] = (250_000, 250_000)
    cycles_per_bit: tuple[float, ...] = (550.0, 550.0)
    local_cpu: tuple[float, ...] = (1.5e8, 1.5e8)
    edge_cpu_total: float = 5.0e10
    epsilon: float = 1.0e-3
    max_iters: IterationCaps = field(default_factory=IterationCaps)
    newton_step: float = 0.5
    newton_eps: float = 0.01
    rng_seed: int = 0
    task_ranges: Mapping[str, Any] | None = field(default=None, compare=False)

    def __post_init__(self):
        _validate(self)

    @property
    def sinr_threshold_db(self) -> float:
        return linear_to_db(self.sinr_threshold_linear)

    def streams(self) -> dict[str, np.random.Generator]:
        return seed_streams(self.rng_seed)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def reseed(self, seed: int) -> "SystemConfig":
        """Same scenario, new seed; ranged task parameters are redrawn."""
        doc = dict(self.task_ranges or {})
        cfg = self.replace(rng_seed=int(seed))
        if not doc:
            return cfg
        tasks = _resolve_tasks(doc, cfg.K, cfg.streams()["tasks"])
        return cfg.replace(**tasks)


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for tasks, channels and initialization.

    Splitting rule: ``SeedSequence(seed).spawn(3)``, children assigned in
    that order.
    """
    tasks, channels, init = np.random.SeedSequence(int(seed)).spawn(3)
    return {
        "tasks": np.random.default_rng(tasks),
        "channels": np.random.default_rng(channels),
        "init": np.random.default_rng(init),
    }


# --------------------------------------------------------------------------
# validation


def _check(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _validate(cfg: SystemConfig):
    for name in ("K", "M", "N", "d"):
        v = getattr(cfg, name)
        _check(isinstance(v, (int, np.integer)) and v >= 1, f"{name} must be an integer >= 1, got {v!r}")
    _check(isinstance(cfg.L, (int, np.integer)) and cfg.L >= 0, f"L must be an integer >= 0, got {cfg.L!r}")
    _check(cfg.d <= min(cfg.M, cfg.N), f"d exceeds min(M,N): d={cfg.d}, M={cfg.M}, N={cfg.N}")
    for name in ("bandwidth_hz", "noise_comm", "noise_sense", "edge_cpu_total", "epsilon"):
        v = getattr(cfg, name)
        _check(v > 0, f"{name} must be > 0, got {v!r}")
    _check(cfg.sinr_threshold_linear > 0, f"sinr_threshold must be > 0 (linear), got {cfg.sinr_threshold_linear!r}")
    _check(0.0 < cfg.newton_step < 1.0, f"newton_step must lie in (0, 1), got {cfg.newton_step!r}")
    _check(0.0 < cfg.newton_eps < 1.0, f"newton_eps must lie in (0, 1), got {cfg.newton_eps!r}")
    _check(cfg.ref_distance_m > 0, f"ref_distance_m must be > 0, got {cfg.ref_distance_m!r}")
    _check(cfg.rician_k >= 0, f"rician_k must be >= 0, got {cfg.rician_k!r}")
    per_ue = {
        "power_budget": cfg.power_budget,
        "weights": cfg.weights,
        "task_bits": cfg.task_bits,
        "cycles_per_bit": cfg.cycles_per_bit,
        "local_cpu": cfg.local_cpu,
    }
    for name, vals in per_ue.items():
        _check(len(vals) == cfg.K, f"{name} needs {cfg.K} entries, got {len(vals)}")
    for name in ("power_budget", "weights", "cycles_per_bit", "local_cpu"):
        _check(all(v > 0 for v in per_ue[name]), f"{name} entries must be > 0, got {per_ue[name]}")
    _check(all(v >= 0 for v in cfg.task_bits), f"task_bits entries must be >= 0, got {cfg.task_bits}")
    _check(len(cfg.geometry.ues) == cfg.K, f"geometry.ues needs {cfg.K} points, got {len(cfg.geometry.ues)}")
    _check(
        len(cfg.geometry.targets) == cfg.K,
        f"geometry.targets needs {cfg.K} points, got {len(cfg.geometry.targets)}",
    )
    for name in ("compute", "newton", "inner", "outer", "single_ue"):
        v = getattr(cfg.max_iters, name)
        _check(v >= 1, f"max_iters.{name} must be >= 1, got {v!r}")


# --------------------------------------------------------------------------
# loading

TOP_LEVEL_KEYS = {
    "K", "M", "N", "L", "d", "bandwidth_hz", "noise_comm_mw", "noise_sense_mw",
    "power_budget_mw", "sinr_threshold", "weights", "pathloss_ref_db",
    "ref_distance_m", "exponents", "rician_k", "geometry", "task_bits",
    "cycles_per_bit", "local_cpu_hz", "edge_cpu_total_hz", "epsilon",
    "max_iters", "newton_step", "newton_eps", "seed",
}  # fmt: skip
TASK_KEYS = ("task_bits", "cycles_per_bit", "local_cpu_hz")
DEFAULT_TASKS = {
    "task_bits": [200_000, 300_000],
    "cycles_per_bit": [500, 600],
    "local_cpu_hz": [1.0e8, 2.0e8],
}


def parse_threshold(value) -> float:
    """``"10 dB"`` -> 10.0 (linear); bare numbers are taken as linear."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        text = value.strip()
        if text.lower().endswith("db"):
            number = text[:-2].strip()
            try:
                return db_to_linear(float(number))
            except ValueError:
                raise ConfigError(f"sinr_threshold: cannot parse {value!r}") from None
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"sinr_threshold: cannot parse {value!r}") from None
    raise ConfigError(f"sinr_threshold: unsupported value {value!r}")


def _per_ue(name: str, value, K: int, cast=float) -> tuple:
    if isinstance(value, (list, tuple)):
        _check(len(value) == K, f"{name} needs {K} entries, got {len(value)}")
        return tuple(cast(v) for v in value)
    return tuple(cast(value) for _ in range(K))


def _resolve_task(name: str, spec, K: int, rng: np.random.Generator, integer: bool):
    if isinstance(spec, Mapping):
        unknown = set(spec) - {"values"}
        _check(not unknown, f"{name}: unknown keys {sorted(unknown)}")
        vals = spec["values"]
        _check(isinstance(vals, (list, tuple)) and len(vals) == K, f"{name}.values needs {K} entries")
        out = [float(v) for v in vals]
    elif isinstance(spec, (list, tuple)):
        _check(len(spec) == 2, f"{name}: a range must be [lo, hi], got {spec!r}")
        lo, hi = float(spec[0]), float(spec[1])
        _check(lo <= hi, f"{name}: range lower bound {lo} exceeds upper bound {hi}")
        if integer:
            out = [float(v) for v in rng.integers(int(math.ceil(lo)), int(math.floor(hi)) + 1, size=K)]
        else:
            out = list(rng.uniform(lo, hi, size=K))
    else:
        out = [float(spec)] * K
    if integer:
        _check(all(float(v).is_integer() for v in out), f"{name}: bit counts must be integers")
        return tuple(int(v) for v in out)
    return tuple(float(v) for v in out)


def _resolve_tasks(doc: Mapping[str, Any], K: int, rng: np.random.Generator) -> dict:
    specs = {k: doc.get(k, DEFAULT_TASKS[k]) for k in TASK_KEYS}
    # Fixed draw order keeps the sample independent of which keys were given.
    return {
        "task_bits": _resolve_task("task_bits", specs["task_bits"], K, rng, integer=True),
        "cycles_per_bit": _resolve_task("cycles_per_bit", specs["cycles_per_bit"], K, rng, integer=False),
        "local_cpu": _resolve_task("local_cpu_hz", specs["local_cpu_hz"], K, rng, integer=False),
    }


def _point(name, p) -> tuple[float, float]:
    _check(isinstance(p, (list, tuple)) and len(p) == 2, f"{name}: expected an [x, y] pair, got {p!r}")
    return (float(p[0]), float(p[1]))


def _geometry(doc: Mapping[str, Any] | None, K: int) -> Geometry:
    doc = dict(doc or {})
    unknown = set(doc) - {"bs", "ris", "ues", "targets"}
    _check(not unknown, f"geometry: unknown keys {sorted(unknown)}")
    default = DEFAULT_GEOMETRY.get(K)
    if ("ues" not in doc or "targets" not in doc) and default is None:
        raise ConfigError(f"geometry.ues and geometry.targets are required when K={K} (defaults exist for K=1, 2)")
    ues = tuple(_point("geometry.ues", p) for p in doc["ues"]) if "ues" in doc else default["ues"]
    targets = tuple(_point("geometry.targets", p) for p in doc["targets"]) if "targets" in doc else default["targets"]
    return Geometry(
        bs=_point("geometry.bs", doc.get("bs", (0.0, 0.0))),
        ris=_point("geometry.ris", doc.get("ris", (200.0, 0.0))),
        ues=ues,
        targets=targets,
    )


def _sub(cls, name: str, doc: Mapping[str, Any] | None, cast):
    doc = dict(doc or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    _check(not unknown, f"{name}: unknown keys {sorted(unknown)}")
    try:
        return cls(**{k: cast(v) for k, v in doc.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def config_from_dict(doc: Mapping[str, Any] | None, *, seed: int | None = None) -> SystemConfig:
    """Build a validated :class:`SystemConfig` from a parsed document."""
    doc = dict(doc or {})
    unknown = set(doc) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    if seed is None:
        seed = doc.get("seed", 0)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR}: not an integer: {env!r}") from None
    try:
        K = int(doc.get("K", 2))
        _check(K >= 1, f"K must be an integer >= 1, got {K}")
        kwargs = dict(
            K=K,
            M=int(doc.get("M", 4)),
            N=int(doc.get("N", 2)),
            L=int(doc.get("L", 30)),
            d=int(doc.get("d", 2)),
            bandwidth_hz=float(doc.get("bandwidth_hz", 1.0e6)),
            noise_comm=float(doc.get("noise_comm_mw", 3.98e-12)),
            noise_sense=float(doc.get("noise_sense_mw", 3.98e-12)),
            power_budget=_per_ue("power_budget_mw", doc.get("power_budget_mw", 10.0), K),
            sinr_threshold_linear=parse_threshold(doc.get("sinr_threshold", "10 dB")),
            weights=_per_ue("weights", doc["weights"], K) if doc.get("weights") is not None else (1.0 / K,) * K,
            pathloss_ref_db=float(doc.get("pathloss_ref_db", 30.0)),
            ref_distance_m=float(doc.get("ref_distance_m", 1.0)),
            exponents=_sub(Exponents, "exponents", doc.get("exponents"), float),
            rician_k=float(doc.get("rician_k", 3.0)),
            geometry=_geometry(doc.get("geometry"), K),
            edge_cpu_total=float(doc.get("edge_cpu_total_hz", 5.0e10)),
            epsilon=float(doc.get("epsilon", 1.0e-3)),
            max_iters=_sub(IterationCaps, "max_iters", doc.get("max_iters"), int),
            newton_step=float(doc.get("newton_step", 0.5)),
            newton_eps=float(doc.get("newton_eps", 0.01)),
            rng_seed=int(seed),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    task_doc = {k: doc.get(k, DEFAULT_TASKS[k]) for k in TASK_KEYS}
    tasks = _resolve_tasks(task_doc, K, seed_streams(seed)["tasks"])
    return SystemConfig(**kwargs, **tasks, task_ranges=task_doc)


def load_config(source: str | os.PathLike | None = None, *, text: str | None = None, seed: int | None = None) -> SystemConfig:
    """Load a config from a YAML file path, or from ``text``.

    ``load_config()`` with no arguments returns the reference scenario.
    """
    if text is None and source is not None:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = yaml.safe_load(text) if text else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"parse failure: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, Mapping):
        raise ConfigError(f"parse failure: top level must be a mapping, got {type(doc).__name__}")
    return config_from_dict(doc, seed=seed)


def config_to_dict(cfg: SystemConfig) -> dict:
    """Document form of ``cfg`` with per-UE task values made explicit."""
    return {
        "K": cfg.K,
        "M": cfg.M,
        "N": cfg.N,
        "L": cfg.L,
        "d": cfg.d,
        "bandwidth_hz": cfg.bandwidth_hz,
        "noise_comm_mw": cfg.noise_comm,
        "noise_sense_mw": cfg.noise_sense,
        "power_budget_mw": list(cfg.power_budget),
        "sinr_threshold": cfg.sinr_threshold_linear,
        "weights": list(cfg.weights),
        "pathloss_ref_db": cfg.pathloss_ref_db,
        "ref_distance_m": cfg.ref_distance_m,
        "exponents": dataclasses.asdict(cfg.exponents),
        "rician_k": cfg.rician_k,
        "geometry": {
            "bs": list(cfg.geometry.bs),
            "ris": list(cfg.geometry.ris),
            "ues": [list(p) for p in cfg.geometry.ues],
            "targets": [list(p) for p in cfg.geometry.targets],
        },
        "task_bits": {"values": list(cfg.task_bits)},
        "cycles_per_bit": {"values": list(cfg.cycles_per_bit)},
        "local_cpu_hz": {"values": list(cfg.local_cpu)},
        "edge_cpu_total_hz": cfg.edge_cpu_total,
        "epsilon": cfg.epsilon,
        "max_iters": dataclasses.asdict(cfg.max_iters),
        "newton_step": cfg.newton_step,
        "newton_eps": cfg.newton_eps,
        "seed": cfg.rng_seed,
    }


def dump_config(cfg: SystemConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
