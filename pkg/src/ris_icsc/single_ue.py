"""Closed-form block updates for one UE sending one stream.

With no inter-UE interference, both receivers are matched filters, the
precoder has a two-direction closed form, and the RIS phases co-phase the
reflected paths with the direct one. The loop below alternates these with
the offloading volume.
"""

from __future__ import annotations

import numpy as np

from .beamforming import InfeasibleScenario, check_uplinks
from .channel import ChannelSet
from .compute_alloc import integer_offload
from .config import SystemConfig
from .driver import RunResult, TraceRecord
from .metrics import BeamformingState, ComputeState, effective_channels, latency, mmse_rate, wrap_phase

__all__ = [
    "SensingCaseInfeasible",
    "algorithm5",
    "mrc_decoders",
    "su_offload",
    "su_ris_phase",
    "two_ray_precoder",
]

# Relative size of |h|^2 |g|^2 - |h^H g|^2 below which h and g count as collinear.
COLLINEAR_RTOL = 1e-12


class SensingCaseInfeasible(InfeasibleScenario):
    """The sensing threshold exceeds the Cauchy bound ``P |g|^2``."""

    def __init__(self, bound: float, threshold: float):
        super().__init__(0, bound, threshold)


def su_offload(V, c, f_l, f_total, R) -> int:
    """Integer offloading volume with the whole edge CPU available."""
    return integer_offload(V, c, f_l, f_total, R)


def mrc_decoders(H: np.ndarray, G: np.ndarray, f: np.ndarray):
    """Matched filters ``(w_c, w_s) = (H f, G f)``."""
    f = np.asarray(f)
    if not np.any(f):
        raise ValueError("zero precoder")
    return H @ f, G @ f


def two_ray_precoder(h: np.ndarray, g: np.ndarray, P_t: float, eta: float):
    """Maximize ``|h^H f|^2`` s.t. ``|f|^2 <= P_t`` and ``|g^H f|^2 >= eta``.

    Returns ``(f, case)`` with ``f = a h + b g``:

    * case 1, ``eta <= P_t |g^H h|^2 / |h|^2``: the sensing constraint is
      slack and ``f = sqrt(P_t) h / |h|`` (phase of ``a`` fixed to 0);
    * case 2, up to ``eta <= P_t |g|^2``: both constraints active,
      ``angle(a) - angle(b) = angle(h^H g)``;
    * case 3, beyond the Cauchy bound: raises :class:`SensingCaseInfeasible`.

    Collinear ``h`` and ``g`` collapse case 2 to a point and are resolved
    as case 1 or case 3.
    """
    h = np.asarray(h, dtype=complex)
    g = np.asarray(g, dtype=complex)
    hh = float(np.vdot(h, h).real)
    if hh == 0.0:
        raise ValueError("zero communication direction")
    gg = float(np.vdot(g, g).real)
    hg = complex(np.vdot(h, g))
    bound = P_t * gg
    if eta > bound:
        raise SensingCaseInfeasible(bound, eta)
    den = hh * gg - abs(hg) ** 2
    if eta <= P_t * abs(hg) ** 2 / hh or den <= COLLINEAR_RTOL * hh * gg:
        return np.sqrt(P_t / hh) * h, 1
    a_mag = np.sqrt(max(P_t * gg - eta, 0.0) / den)
    b_mag = max((np.sqrt(eta) - abs(hg) * a_mag) / gg, 0.0)
    # angle(a) = 0, so angle(b) = -angle(h^H g).
    b = b_mag * np.exp(-1j * np.angle(hg))
    return a_mag * h + b * g, 2


def _angle(z) -> np.ndarray:
    z = np.asarray(z)
    return np.where(z == 0, 0.0, np.angle(z))


def su_ris_phase(w_c, h_bu, h_r, h_ru, f) -> np.ndarray:
    """Phases that align every reflected term with the direct term."""
    w_c = np.asarray(w_c)
    direct = np.vdot(w_c, h_bu @ f)
    cascade = (w_c.conj() @ h_r) * (h_ru @ f)
    return wrap_phase(_angle(direct) - _angle(cascade))


def _state(ch: ChannelSet, cfg: SystemConfig, f, w_c, w_s, theta) -> BeamformingState:
    H = effective_channels(ch, theta)[0]
    # WMMSE weight of the matched filter, 1 + SNR, kept so the state is complete.
    snr = float(np.vdot(H @ f, H @ f).real) / cfg.noise_comm
    return BeamformingState(
        f_c=f.reshape(1, -1, 1),
        w_c=w_c.reshape(1, -1, 1),
        w_s=w_s.reshape(1, -1),
        theta=theta,
        d_weight=np.array([[[1.0 + snr]]], dtype=complex),
        frac_delta=np.ones(1),
        frac_lambda=np.zeros(1),
    )


def _directions(ch: ChannelSet, cfg: SystemConfig, H, w_c, w_s):
    G = ch.g_target[0]
    h = H.conj().T @ w_c / (np.sqrt(cfg.noise_comm) * np.linalg.norm(w_c))
    g = G.conj().T @ w_s / (np.sqrt(cfg.noise_sense) * np.linalg.norm(w_s))
    return h, g


def algorithm5(ch: ChannelSet, cfg: SystemConfig, *, rng: np.random.Generator | None = None,
               theta=None, f0=None, optimize_theta: bool = True, full_offload: bool = False) -> RunResult:
    """Single-UE joint optimization of volume, filters, precoder and phases.

    The start draws random phases and a random precoder, then applies the
    closed-form precoder once so the sensing constraint holds. Each pass
    updates ``v``, the matched filters, the precoder and the phases; the
    latency never increases. Stops when its relative change is below
    ``cfg.epsilon`` or after ``max_iters.single_ue`` passes.
    ``optimize_theta=False`` keeps the start's phases; ``full_offload``
    pins ``v = V``. ``precoder_cases`` on the result holds the closed-form
    cases that were used.
    """
    if ch.K != 1 or cfg.d != 1:
        raise ValueError(f"needs K=1 and d=1, got K={ch.K}, d={cfg.d}")
    if rng is None:
        rng = cfg.streams()["init"]
    P = float(np.asarray(cfg.power_budget, dtype=float).reshape(-1)[0])
    eta = cfg.sinr_threshold_linear
    G = ch.g_target[0]
    if theta is None:
        theta = rng.uniform(0.0, 2.0 * np.pi, size=ch.L)
    theta = wrap_phase(theta)
    check_uplinks(ch, theta)
    if f0 is None:
        f0 = rng.standard_normal(ch.N) + 1j * rng.standard_normal(ch.N)
    f0 = np.asarray(f0, dtype=complex)

    # Feasible start: the sensing filter is fixed by the rank-one G, so
    # the closed form turns any direction into a feasible precoder.
    H = effective_channels(ch, theta)[0]
    u, _, _ = np.linalg.svd(G)
    w_s = u[:, 0]
    h, g = _directions(ch, cfg, H, H @ f0 if np.any(H @ f0) else H[:, 0], w_s)
    f, case = two_ray_precoder(h, g, P, eta)
    cases = {case}
    w_c, w_s = mrc_decoders(H, G, f)

    V = float(cfg.task_bits[0])
    c = float(cfg.cycles_per_bit[0])
    f_l = float(cfg.local_cpu[0])
    f_tot = float(cfg.edge_cpu_total)

    def offload(R):
        return int(V) if full_offload else su_offload(V, c, f_l, f_tot, R)

    def evaluate(f, theta, w_c, w_s, v):
        st = _state(ch, cfg, f, w_c, w_s, theta)
        comp = ComputeState(v=np.array([v], dtype=np.int64), f_e=np.array([f_tot]))
        return st, comp, latency(ch, st, comp, cfg)

    R = mmse_rate(ch, _state(ch, cfg, f, w_c, w_s, theta), 0, cfg)
    v = offload(R)
    state, compute, rep = evaluate(f, theta, w_c, w_s, v)
    trace = [TraceRecord(0, rep.weighted_total, tuple(float(t) for t in rep.t_ue))]

    # The volume step runs last in each pass, which is the same cycle
    # (volume, filters, precoder, phases) started one step later.
    for it in range(1, cfg.max_iters.single_ue + 1):
        H = effective_channels(ch, theta)[0]
        w_c, w_s = mrc_decoders(H, G, f)
        h, g = _directions(ch, cfg, H, w_c, w_s)
        f, case = two_ray_precoder(h, g, P, eta)
        cases.add(case)
        if ch.L and optimize_theta:
            theta = su_ris_phase(w_c, ch.h_bu[0], ch.h_r, ch.h_ru[0], f)
        H = effective_channels(ch, theta)[0]
        w_c, w_s = mrc_decoders(H, G, f)
        R = mmse_rate(ch, _state(ch, cfg, f, w_c, w_s, theta), 0, cfg)
        v = offload(R)
        new_state, new_compute, new = evaluate(f, theta, w_c, w_s, v)
        trace.append(TraceRecord(it, new.weighted_total, tuple(float(t) for t in new.t_ue)))
        done = abs(rep.weighted_total - new.weighted_total) <= cfg.epsilon * max(new.weighted_total, 1e-300)
        state, compute, rep = new_state, new_compute, new
        if done:
            break

    R = mmse_rate(ch, state, 0, cfg)
    if R > 0:
        state = state.replace(frac_delta=np.array([1.0 / R]),
                              frac_lambda=np.array([cfg.weights[0] * compute.v[0] / R]))
    return RunResult(state, compute, rep, trace, frozenset(cases))
