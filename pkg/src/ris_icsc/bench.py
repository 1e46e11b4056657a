"""Benchmark harness: schemes, parameter sweeps, seed ensembles and restarts.

Schemes
-------
``with_ris``      joint optimization (the closed-form single-UE loop when
                  ``K = 1`` and ``d = 1``)
``randphase``     random RIS phases, held fixed
``without_ris``   RIS links blocked
``quant1bit``     ``with_ris`` phases projected to {0, pi}, then filters,
``quant2bit``     weights and compute re-fitted once (resp. 4 levels)
``full_offload``  every bit offloaded, the rest optimized

Command line::

    ris-icsc-bench --config scenario.yaml --spec sweep.yaml --output out.csv \\
        --seed-count 20 --restarts 1 --jobs 4 --traces traces.jsonl

The CSV has a fixed header (:data:`BASE_COLUMNS` plus one ``t_ue_<k>``
column per UE). Data rows have ``kind = row``; per (value, scheme) the
``mean``, ``min`` and ``max`` rows aggregate ``weighted_latency_s`` over
seeds. With restarts, ``min_latency_s`` and ``max_latency_s`` give the
spread over random starts for one seed. Infeasible or failing rows carry a
status and error tag; the sweep continues.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from .beamforming import InfeasibleScenario, initial_state, update_decoders_and_weights, update_radar_rxs
from .channel import ChannelSet, realize_scenario
from .compute_alloc import alternate_compute
from .config import ConfigError, SystemConfig, db_to_linear, load_config
from .driver import RunResult, TraceRecord, algorithm4
from .metrics import latency, wrap_phase
from .single_ue import algorithm5

log = logging.getLogger(__name__)

SCHEMES = ("with_ris", "randphase", "without_ris", "quant1bit", "quant2bit", "full_offload")
PARAMETERS = ("ris_elements", "exponent_ris", "edge_cpu_total", "sinr_threshold_db", "antennas")
BASE_COLUMNS = ("kind", "scheme", "parameter", "value", "seed", "weighted_latency_s", "iterations",
                "restarts", "min_latency_s", "max_latency_s", "status", "error")


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    parameter: str | None
    values: tuple
    seeds: tuple[int, ...]
    schemes: tuple[str, ...] = ("with_ris",)
    restarts: int = 1

    def __post_init__(self):
        if self.parameter is not None and self.parameter not in PARAMETERS:
            raise SpecError(f"unknown sweep parameter {self.parameter!r}; expected one of {', '.join(PARAMETERS)}")
        if not self.values:
            raise SpecError("value list is empty")
        if not self.seeds:
            raise SpecError("seed list is empty")
        if not self.schemes:
            raise SpecError("scheme list is empty")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise SpecError(f"unknown scheme(s): {', '.join(bad)}")
        if self.restarts < 1:
            raise SpecError(f"restarts must be >= 1, got {self.restarts}")


def load_spec(text: str) -> SweepSpec:
    """Parse a YAML sweep document.

    Keys: ``parameter`` (optional), ``values``, ``seeds`` (list) or
    ``seed_count``, ``schemes``, ``restarts``. Antenna values are ``[M, N]``
    pairs.
    """
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise SpecError(f"parse failure: {exc}") from None
    if not isinstance(doc, dict):
        raise SpecError("top level must be a mapping")
    unknown = set(doc) - {"parameter", "values", "seeds", "seed_count", "schemes", "restarts"}
    if unknown:
        raise SpecError(f"unknown keys: {', '.join(sorted(unknown))}")
    parameter = doc.get("parameter")
    values = doc.get("values", [None] if parameter is None else [])
    if parameter == "antennas":
        values = [tuple(int(x) for x in v) for v in values]
    if "seeds" in doc:
        seeds = tuple(int(s) for s in doc["seeds"])
    else:
        seeds = tuple(range(int(doc.get("seed_count", 1))))
    return SweepSpec(parameter=parameter, values=tuple(values), seeds=seeds,
                     schemes=tuple(doc.get("schemes", ["with_ris"])), restarts=int(doc.get("restarts", 1)))


def apply_parameter(cfg: SystemConfig, parameter: str | None, value) -> SystemConfig:
    """Config with one sweep parameter set."""
    if parameter is None:
        return cfg
    if parameter == "ris_elements":
        return cfg.replace(L=int(value))
    if parameter == "exponent_ris":
        ex = cfg.exponents
        return cfg.replace(exponents=type(ex)(**{**ex.__dict__, "r": float(value), "ru": float(value)}))
    if parameter == "edge_cpu_total":
        return cfg.replace(edge_cpu_total=float(value))
    if parameter == "sinr_threshold_db":
        return cfg.replace(sinr_threshold_linear=db_to_linear(float(value)))
    if parameter == "antennas":
        M, N = (int(x) for x in value)
        return cfg.replace(M=M, N=N, d=min(cfg.d, M, N))
    raise SpecError(f"unknown sweep parameter {parameter!r}")


def quantize_phases(theta, bits: int) -> np.ndarray:
    """Nearest point of ``{2 pi m / 2**bits}``, in (0, 2 pi]."""
    step = 2.0 * np.pi / 2**bits
    return wrap_phase(np.round(np.asarray(theta) / step) * step)


def _single(ch: ChannelSet, cfg: SystemConfig) -> bool:
    return ch.K == 1 and cfg.d == 1


def _solve(ch, cfg, rng, *, optimize_theta=True, full_offload=False, theta=None) -> RunResult:
    if _single(ch, cfg):
        return algorithm5(ch, cfg, rng=rng, theta=theta, optimize_theta=optimize_theta, full_offload=full_offload)
    state = initial_state(ch, cfg, rng, theta=theta)
    return algorithm4(ch, cfg, state=state, optimize_theta=optimize_theta, full_offload=full_offload)


def requantize(ch: ChannelSet, cfg: SystemConfig, base: RunResult, bits: int) -> RunResult:
    """Project ``base``'s phases and re-fit filters, weights and compute once."""
    state = base.state.replace(theta=quantize_phases(base.state.theta, bits))
    state = update_radar_rxs(ch, update_decoders_and_weights(ch, state, cfg), cfg)
    compute = alternate_compute(ch, state, cfg)
    rep = latency(ch, state, compute, cfg)
    return RunResult(state, compute, rep, [TraceRecord(0, rep.weighted_total, tuple(float(t) for t in rep.t_ue))])


def run_scheme(ch: ChannelSet, cfg: SystemConfig, scheme: str, *, rng: np.random.Generator | None = None,
               base: RunResult | None = None) -> RunResult:
    """Run one scheme on one realization.

    ``rng`` drives the random start (and the random phases of
    ``randphase``); defaults to the config's init stream. ``base`` reuses a
    ``with_ris`` result for the quantized schemes.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if rng is None:
        rng = cfg.streams()["init"]
    if scheme == "with_ris":
        return _solve(ch, cfg, rng)
    if scheme == "randphase":
        return _solve(ch, cfg, rng, optimize_theta=False)
    if scheme == "without_ris":
        return _solve(ch.without_ris(), cfg, rng, optimize_theta=False)
    if scheme == "full_offload":
        return _solve(ch, cfg, rng, full_offload=True)
    if base is None:
        base = _solve(ch, cfg, rng)
    return requantize(ch, cfg, base, 1 if scheme == "quant1bit" else 2)


@dataclass
class Row:
    scheme: str
    parameter: str | None
    value: object
    seed: int
    status: str = "ok"
    error: str = ""
    result: RunResult | None = None
    restart_latencies: list[float] = field(default_factory=list)

    @property
    def weighted_latency(self) -> float:
        return self.result.report.weighted_total if self.result is not None else math.nan

    def key(self):
        return (str(self.parameter), _value_key(self.value), self.seed, SCHEMES.index(self.scheme))


def _value_key(v):
    return tuple(v) if isinstance(v, (tuple, list)) else (v,)


def _restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(restart), 0x5EED])


def run_cell(cfg: SystemConfig, parameter, value, seed: int, schemes, restarts: int = 1) -> list[Row]:
    """All schemes for one (value, seed). Restart 0 uses the config's init stream."""
    try:
        cfg_v = apply_parameter(cfg, parameter, value).reseed(seed)
        ch = realize_scenario(cfg_v)
    except (ConfigError, ValueError) as exc:
        return [Row(s, parameter, value, seed, status="error", error=f"config: {exc}") for s in schemes]
    rows = []
    base = None
    for scheme in schemes:
        row = Row(scheme, parameter, value, seed)
        try:
            n = restarts if scheme not in ("quant1bit", "quant2bit") else 1
            for r in range(n):
                rng = cfg_v.streams()["init"] if r == 0 else _restart_rng(seed, r)
                res = run_scheme(ch, cfg_v, scheme, rng=rng, base=base if r == 0 else None)
                if r == 0:
                    row.result = res
                    if scheme == "with_ris":
                        base = res
                row.restart_latencies.append(res.report.weighted_total)
        except InfeasibleScenario as exc:
            row.status, row.error = "infeasible", str(exc)
        except Exception as exc:  # noqa: BLE001 - recorded per row, sweep continues
            log.exception("row failed: %s %s=%s seed=%s", scheme, parameter, value, seed)
            row.status, row.error = "error", f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def _cell(args):
    return run_cell(*args)


def run_sweep(spec: SweepSpec, cfg: SystemConfig, *, jobs: int = 1) -> list[Row]:
    """Every (value, seed, scheme) row, sorted by key."""
    tasks = [(cfg, spec.parameter, v, s, spec.schemes, spec.restarts) for v in spec.values for s in spec.seeds]
    rows: list[Row] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for out in pool.map(_cell, tasks):
                rows.extend(out)
    else:
        for t in tasks:
            rows.extend(_cell(t))
    rows.sort(key=Row.key)
    return rows


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    if isinstance(x, (tuple, list)):
        return "x".join(str(v) for v in x)
    return "" if x is None else str(x)


def table(rows: list[Row], K: int) -> tuple[list[str], list[dict]]:
    """CSV header and records, data rows followed by aggregates."""
    header = list(BASE_COLUMNS) + [f"t_ue_{k + 1}" for k in range(K)]
    out = []
    for r in rows:
        rec = dict(kind="row", scheme=r.scheme, parameter=r.parameter or "", value=_fmt(r.value), seed=r.seed,
                   weighted_latency_s=_fmt(r.weighted_latency), status=r.status, error=r.error,
                   iterations=r.result.iterations if r.result is not None else "",
                   restarts=len(r.restart_latencies),
                   min_latency_s=_fmt(min(r.restart_latencies)) if r.restart_latencies else "",
                   max_latency_s=_fmt(max(r.restart_latencies)) if r.restart_latencies else "")
        t_ue = r.result.report.t_ue if r.result is not None else [math.nan] * K
        for k in range(K):
            rec[f"t_ue_{k + 1}"] = _fmt(float(t_ue[k])) if k < len(t_ue) else ""
        out.append(rec)
    groups: dict = {}
    for r in rows:
        groups.setdefault((str(r.parameter), _value_key(r.value), r.scheme), []).append(r)
    for (_, _, scheme), grp in groups.items():
        vals = [g.weighted_latency for g in grp if g.status == "ok"]
        for kind, fn in (("mean", np.mean), ("min", np.min), ("max", np.max)):
            rec = {c: "" for c in header}
            rec.update(kind=kind, scheme=scheme, parameter=grp[0].parameter or "", value=_fmt(grp[0].value),
                       weighted_latency_s=_fmt(float(fn(vals))) if vals else "",
                       status=f"{len(vals)}/{len(grp)} ok")
            out.append(rec)
    return header, out


def write_csv(path_or_file, rows: list[Row], K: int) -> None:
    header, recs = table(rows, K)
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        w.writerows(recs)
    finally:
        if own:
            fh.close()


def write_traces(path: str, rows: list[Row]) -> None:
    """One JSON record per row with the iteration trace and final compute state."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            rec = {"scheme": r.scheme, "parameter": r.parameter, "value": r.value, "seed": r.seed,
                   "status": r.status, "error": r.error, "restart_latencies": r.restart_latencies}
            if r.result is not None:
                rec["trace"] = [t.as_dict() for t in r.result.trace]
                rec["v"] = r.result.compute.v.tolist()
                rec["f_e"] = r.result.compute.f_e.tolist()
                rec["theta"] = r.result.state.theta.tolist()
            fh.write(json.dumps(rec, default=list) + "\n")


def _parse_seeds(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ris-icsc-bench", description="Run latency benchmarks over seeds and sweeps.")
    p.add_argument("--config", help="scenario YAML (defaults to the reference scenario)")
    p.add_argument("--spec", help="sweep YAML (parameter, values, seeds, schemes, restarts)")
    p.add_argument("--output", "-o", help="CSV path (default: stdout)")
    p.add_argument("--traces", help="optional JSON-lines file with per-row traces")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--seeds", type=_parse_seeds, help="comma/space separated seed list")
    g.add_argument("--seed-count", type=int, help="use seeds 0..N-1")
    p.add_argument("--schemes", help="comma separated scheme list (overrides the spec)")
    p.add_argument("--restarts", type=int, help="random restarts per realization (overrides the spec)")
    p.add_argument("--jobs", "-j", type=int, default=1, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.spec:
            with open(args.spec, encoding="utf-8") as fh:
                spec = load_spec(fh.read())
        else:
            spec = SweepSpec(parameter=None, values=(None,), seeds=(cfg.rng_seed,))
        changes = {}
        if args.seeds is not None:
            changes["seeds"] = args.seeds
        elif args.seed_count is not None:
            changes["seeds"] = tuple(range(args.seed_count))
        if args.schemes:
            changes["schemes"] = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
        if args.restarts is not None:
            changes["restarts"] = args.restarts
        if changes:
            spec = SweepSpec(**{**spec.__dict__, **changes})
    except (OSError, ConfigError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    rows = run_sweep(spec, cfg, jobs=max(1, args.jobs))
    try:
        if args.output:
            write_csv(args.output, rows, cfg.K)
        else:
            write_csv(sys.stdout, rows, cfg.K)
        if args.traces:
            write_traces(args.traces, rows)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    failed = [r for r in rows if r.status == "error"]
    for r in failed:
        print(f"row error: {r.scheme} {r.parameter}={_fmt(r.value)} seed={r.seed}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
