"""Rates, MSE matrices, radar SINR and latencies of a candidate state.

Notation: ``H_k`` is UE k's effective uplink channel (M x N), ``F_k`` its
precoder (N x d), ``W_k`` the BS decoder (M x d), ``w_k`` the UE's radar
receive filter (N,), ``G_k`` its target response and ``H_{k,i}`` the
interference channel from UE i into UE k's radar receiver.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .channel import ChannelSet, effective_channel
from .config import SystemConfig

# Relative pivot tolerance for singularity detection.
SINGULAR_RTOL = 1e-12
# Power-budget slack used by invariant checks, relative to P_t.
POWER_TOL = 1e-9


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class BeamformingState:
    """Beamforming variables. Shapes: ``f_c`` (K, N, d), ``w_c`` (K, M, d),
    ``w_s`` (K, N), ``theta`` (L,), ``d_weight`` (K, d, d), ``frac_delta``
    and ``frac_lambda`` (K,)."""

    f_c: np.ndarray
    w_c: np.ndarray
    w_s: np.ndarray
    theta: np.ndarray
    d_weight: np.ndarray
    frac_delta: np.ndarray
    frac_lambda: np.ndarray

    def replace(self, **changes) -> "BeamformingState":
        return dataclasses.replace(self, **changes)

    @property
    def K(self) -> int:
        return self.f_c.shape[0]

    def power(self) -> np.ndarray:
        return np.einsum("knd,knd->k", self.f_c.conj(), self.f_c).real


@dataclass(frozen=True)
class ComputeState:
    """Offloaded bits ``v`` (integers) and edge CPU shares ``f_e`` (cycle/s)."""

    v: np.ndarray
    f_e: np.ndarray

    def replace(self, **changes) -> "ComputeState":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class LatencyReport:
    t_local: np.ndarray
    t_offload: np.ndarray
    t_edge: np.ndarray
    t_ue: np.ndarray
    weighted_total: float


def wrap_phase(theta) -> np.ndarray:
    """Map angles into (0, 2*pi]."""
    t = np.mod(np.asarray(theta, dtype=float), 2.0 * np.pi)
    return np.where(t <= 0.0, 2.0 * np.pi, t)


def effective_channels(ch: ChannelSet, theta) -> np.ndarray:
    """All K effective channels, shape (K, M, N)."""
    if ch.L == 0:
        return ch.h_bu.copy()
    return effective_channel(ch.h_bu, ch.h_r, ch.h_ru, theta)


def _herm(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().swapaxes(-1, -2))


def _cho(a: np.ndarray, what: str):
    try:
        c = sla.cho_factor(_herm(a), lower=True)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(f"{what} is not positive definite") from None
    diag = np.abs(np.diag(c[0]))
    if diag.min() <= SINGULAR_RTOL * diag.max():
        raise SingularMatrixError(f"{what} is singular to relative tolerance {SINGULAR_RTOL:g}")
    return c


def logdet_hpd(a: np.ndarray, what: str = "matrix") -> float:
    """Natural log-determinant of a Hermitian positive definite matrix."""
    c = _cho(a, what)
    return 2.0 * float(np.sum(np.log(np.abs(np.diag(c[0])))))


def _covariances(H: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Per-UE received covariance ``H_i F_i F_i^H H_i^H``, shape (K, M, M)."""
    HF = H @ F
    return HF @ HF.conj().swapaxes(-1, -2)


def interference_plus_noise(ch: ChannelSet, state: BeamformingState, k: int, cfg: SystemConfig,
                            H: np.ndarray | None = None) -> np.ndarray:
    """``J_k``: interference from the other UEs plus receiver noise (M x M)."""
    if H is None:
        H = effective_channels(ch, state.theta)
    cov = _covariances(H, state.f_c)
    J = cov.sum(axis=0) - cov[k]
    return _herm(J) + cfg.noise_comm * np.eye(ch.M)


def offload_rate(ch: ChannelSet, state: BeamformingState, k: int, cfg: SystemConfig,
                 H: np.ndarray | None = None) -> float:
    """Rate (bit/s) achieved with the stored decoder ``W_k``.

    Determinant-ratio form, so any invertible right factor on ``W_k``
    cancels.
    """
    if H is None:
        H = effective_channels(ch, state.theta)
    J = interference_plus_noise(ch, state, k, cfg, H)
    W = state.w_c[k]
    HF = H[k] @ state.f_c[k]
    WJW = W.conj().T @ J @ W
    S = W.conj().T @ HF
    num = logdet_hpd(WJW + S @ S.conj().T, "W^H (J + H F F^H H^H) W")
    den = logdet_hpd(WJW, "W^H J W")
    return cfg.bandwidth_hz * max(num - den, 0.0) / np.log(2.0)


def mmse_rate(ch: ChannelSet, state: BeamformingState, k: int, cfg: SystemConfig,
              H: np.ndarray | None = None) -> float:
    """Rate (bit/s) under the MMSE decoder: ``B log2 det(I + F^H H^H J^-1 H F)``."""
    if H is None:
        H = effective_channels(ch, state.theta)
    J = interference_plus_noise(ch, state, k, cfg, H)
    HF = H[k] @ state.f_c[k]
    c = _cho(J, "J_k")
    X = HF.conj().T @ sla.cho_solve(c, HF)
    return cfg.bandwidth_hz * logdet_hpd(np.eye(X.shape[0]) + X, "I + F^H H^H J^-1 H F") / np.log(2.0)


def mmse_rates(ch: ChannelSet, state: BeamformingState, cfg: SystemConfig) -> np.ndarray:
    H = effective_channels(ch, state.theta)
    return np.array([mmse_rate(ch, state, k, cfg, H) for k in range(ch.K)])


def mse_matrix(ch: ChannelSet, state: BeamformingState, k: int, cfg: SystemConfig,
               H: np.ndarray | None = None) -> np.ndarray:
    """``E_k`` for the stored decoder (d x d)."""
    if H is None:
        H = effective_channels(ch, state.theta)
    W = state.w_c[k]
    d = W.shape[1]
    J = interference_plus_noise(ch, state, k, cfg, H)
    err = W.conj().T @ H[k] @ state.f_c[k] - np.eye(d)
    # J already carries the noise term, so sigma^2 W^H W is included.
    return _herm(err @ err.conj().T + W.conj().T @ J @ W)


def sensing_interference(ch: ChannelSet, state: BeamformingState, k: int, cfg: SystemConfig) -> np.ndarray:
    """``T_k``: echo-side interference plus noise (N x N)."""
    T = cfg.noise_sense * np.eye(ch.N, dtype=complex)
    for i in range(ch.K):
        if i != k:
            A = ch.h_uu[k, i] @ state.f_c[i]
            T += A @ A.conj().T
    return _herm(T)


def radar_sinr(ch: ChannelSet, state: BeamformingState, k: int, cfg: SystemConfig) -> float:
    w = state.w_s[k]
    if not np.any(w):
        raise ValueError(f"radar receive filter of UE {k} is zero")
    T = sensing_interference(ch, state, k, cfg)
    s = w.conj() @ ch.g_target[k] @ state.f_c[k]
    return float(np.vdot(s, s).real / (w.conj() @ T @ w).real)


def radar_sinrs(ch: ChannelSet, state: BeamformingState, cfg: SystemConfig) -> np.ndarray:
    return np.array([radar_sinr(ch, state, k, cfg) for k in range(ch.K)])


def latency_from_rates(rates, compute: ComputeState, cfg: SystemConfig) -> LatencyReport:
    rates = np.asarray(rates, dtype=float)
    V = np.asarray(cfg.task_bits, dtype=float)
    c = np.asarray(cfg.cycles_per_bit, dtype=float)
    fl = np.asarray(cfg.local_cpu, dtype=float)
    v = np.asarray(compute.v, dtype=float)
    fe = np.asarray(compute.f_e, dtype=float)
    if np.any(v < 0) or np.any(v > V):
        raise ValueError(f"offloaded bits out of range: v={v}, V={V}")
    busy = v > 0
    if np.any(busy & (rates <= 0)):
        raise ValueError(f"UE(s) {np.flatnonzero(busy & (rates <= 0)).tolist()} offload with zero rate")
    if np.any(busy & (fe <= 0)):
        raise ValueError(f"UE(s) {np.flatnonzero(busy & (fe <= 0)).tolist()} offload with no edge CPU")
    t_local = (V - v) * c / fl
    t_off = np.zeros_like(v)
    t_edge = np.zeros_like(v)
    t_off[busy] = v[busy] / rates[busy]
    t_edge[busy] = v[busy] * c[busy] / fe[busy]
    t_ue = np.maximum(t_local, t_off + t_edge)
    return LatencyReport(t_local, t_off, t_edge, t_ue, float(np.dot(cfg.weights, t_ue)))


def latency(ch: ChannelSet, state: BeamformingState, compute: ComputeState, cfg: SystemConfig) -> LatencyReport:
    """Per-UE latencies, with rates evaluated under the MMSE decoder."""
    return latency_from_rates(mmse_rates(ch, state, cfg), compute, cfg)


def power_feasible(state: BeamformingState, cfg: SystemConfig) -> bool:
    P = np.asarray(cfg.power_budget)
    return bool(np.all(state.power() <= P * (1.0 + POWER_TOL)))
