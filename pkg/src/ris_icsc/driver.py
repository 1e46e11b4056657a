"""Outer block-coordinate descent: compute allocation against beamforming.

Each outer iteration runs the fractional/beamforming block for the current
offloading volumes, then re-allocates volumes and edge CPU for the new
rates. A block result that would raise the weighted latency, even after
re-allocation, is discarded, so the recorded trace never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beamforming import check_uplinks, initial_state
from .channel import ChannelSet
from .compute_alloc import alternate_compute
from .config import SystemConfig
from .fractional import outer_loop
from .metrics import BeamformingState, ComputeState, LatencyReport, latency, mmse_rates


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    weighted_latency: float
    per_ue_latency: tuple[float, ...]

    def as_dict(self) -> dict:
        return {"iteration": self.iteration, "weighted_latency": self.weighted_latency,
                "per_ue_latency": list(self.per_ue_latency)}


@dataclass
class RunResult:
    state: BeamformingState
    compute: ComputeState
    report: LatencyReport
    trace: list[TraceRecord] = field(default_factory=list)
    # Closed-form precoder cases hit by the single-UE loop; empty otherwise.
    precoder_cases: frozenset[int] = frozenset()

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    def __iter__(self):
        # Allows ``state, compute, report, trace = algorithm4(...)``.
        return iter((self.state, self.compute, self.report, self.trace))


def full_offload_compute(rates, cfg: SystemConfig) -> ComputeState:
    """Everything offloaded; edge CPU split to minimize ``sum xi V c / f``."""
    V = np.asarray(cfg.task_bits, dtype=float)
    share = np.sqrt(np.asarray(cfg.weights) * V * np.asarray(cfg.cycles_per_bit))
    if share.sum() == 0:
        return ComputeState(v=np.zeros(cfg.K, dtype=np.int64), f_e=np.zeros(cfg.K))
    return ComputeState(v=np.asarray(cfg.task_bits, dtype=np.int64), f_e=cfg.edge_cpu_total * share / share.sum())


def _record(it: int, rep: LatencyReport) -> TraceRecord:
    return TraceRecord(it, rep.weighted_total, tuple(float(t) for t in rep.t_ue))


def algorithm4(ch: ChannelSet, cfg: SystemConfig, *, state: BeamformingState | None = None,
               rng: np.random.Generator | None = None, optimize_theta: bool = True,
               full_offload: bool = False) -> RunResult:
    """Joint optimization of offloading, edge CPU, precoders, filters and phases.

    ``state`` overrides the feasible start (built from ``rng`` or the
    config's init stream otherwise). ``optimize_theta=False`` keeps the
    start's phases. ``full_offload`` pins ``v = V``. Raises
    :class:`~ris_icsc.beamforming.InfeasibleScenario` when no start clears
    the sensing thresholds or a UE has no uplink at all.
    """
    if state is None:
        state = initial_state(ch, cfg, rng)
    check_uplinks(ch, state.theta)

    def allocate(st, previous=None):
        if full_offload:
            return full_offload_compute(mmse_rates(ch, st, cfg), cfg)
        return alternate_compute(ch, st, cfg, previous=previous)

    compute = allocate(state)
    rep = latency(ch, state, compute, cfg)
    trace = [_record(0, rep)]
    if rep.weighted_total == 0.0:
        return RunResult(state, compute, rep, trace)

    for it in range(1, cfg.max_iters.outer + 1):
        cand = outer_loop(ch, state, compute, cfg, optimize_theta=optimize_theta)
        # Judge the block after re-allocating for its rates: with v fixed, a
        # lower offload objective can still raise max(local, offload).
        cand_compute = allocate(cand, previous=compute)
        cand_rep = latency(ch, cand, cand_compute, cfg)
        if cand_rep.weighted_total <= rep.weighted_total:
            state, compute, new = cand, cand_compute, cand_rep
        else:
            compute = allocate(state, previous=compute)
            new = latency(ch, state, compute, cfg)
        trace.append(_record(it, new))
        done = abs(rep.weighted_total - new.weighted_total) <= cfg.epsilon * new.weighted_total
        rep = new
        if done:
            break
    return RunResult(state, compute, rep, trace)
