"""Random channel synthesis for one scenario realization.

Large-scale gains follow a log-distance law with the reference loss taken as
a loss (``10**(-(PL0 + 10 a log10(d/d0))/10)``). Links touching the RIS are
Rician with ULA line-of-sight components, the direct UE-BS links and the
UE-UE interference links are Rayleigh. All arrays are uniform linear arrays
along the x axis with half-wavelength spacing; a link's steering angle is
measured from the array broadside, so ``sin(angle) = dx / distance``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .config import SystemConfig


@dataclass(frozen=True)
class ChannelSet:
    """All channel matrices of one realization.

    Shapes: ``h_bu`` (K, M, N), ``h_r`` (M, L), ``h_ru`` (K, L, N),
    ``h_uu`` (K, K, N, N) with ``h_uu[k, i]`` the channel from UE i into
    UE k's radar receiver (zero on the diagonal), ``g_target`` (K, N, N),
    ``target_angle`` (K,), ``target_gain`` (K,) complex.
    """

    h_bu: np.ndarray
    h_r: np.ndarray
    h_ru: np.ndarray
    h_uu: np.ndarray
    g_target: np.ndarray
    target_angle: np.ndarray
    target_gain: np.ndarray

    @property
    def K(self) -> int:
        return self.h_bu.shape[0]

    @property
    def M(self) -> int:
        return self.h_bu.shape[1]

    @property
    def N(self) -> int:
        return self.h_bu.shape[2]

    @property
    def L(self) -> int:
        return self.h_r.shape[1]

    def without_ris(self) -> "ChannelSet":
        """Copy with the RIS links blocked (zeroed)."""
        return ChannelSet(
            h_bu=self.h_bu,
            h_r=np.zeros_like(self.h_r),
            h_ru=np.zeros_like(self.h_ru),
            h_uu=self.h_uu,
            g_target=self.g_target,
            target_angle=self.target_angle,
            target_gain=self.target_gain,
        )

    def permuted(self, order) -> "ChannelSet":
        """Relabel the UEs: new UE j is old UE ``order[j]``."""
        order = np.asarray(order)
        return ChannelSet(
            h_bu=self.h_bu[order],
            h_r=self.h_r,
            h_ru=self.h_ru[order],
            h_uu=self.h_uu[np.ix_(order, order)],
            g_target=self.g_target[order],
            target_angle=self.target_angle[order],
            target_gain=self.target_gain[order],
        )


def pathloss_gain(distance_m: float, exponent: float, cfg: SystemConfig | None = None,
                  *, ref_db: float | None = None, ref_distance_m: float | None = None) -> float:
    """Linear power gain of a link of length ``distance_m``."""
    if distance_m <= 0:
        raise ValueError(f"distance must be positive, got {distance_m!r}")
    if ref_db is None:
        ref_db = cfg.pathloss_ref_db if cfg is not None else 30.0
    if ref_distance_m is None:
        ref_distance_m = cfg.ref_distance_m if cfg is not None else 1.0
    loss_db = ref_db + 10.0 * exponent * np.log10(distance_m / ref_distance_m)
    return float(10.0 ** (-loss_db / 10.0))


def steering_vector(angle: float, elements: int) -> np.ndarray:
    """ULA response with half-wavelength spacing."""
    if elements < 1:
        raise ValueError(f"elements must be >= 1, got {elements!r}")
    return np.exp(1j * np.pi * np.arange(elements) * np.sin(angle))


def gen_rayleigh(rows: int, cols: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, gain) entries."""
    if gain < 0:
        raise ValueError(f"gain must be non-negative, got {gain!r}")
    z = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    return np.sqrt(gain / 2.0) * z


# Rician factors at or beyond this are treated as pure line of sight.
PURE_LOS_K = 1.0e6


def gen_rician(rows: int, cols: int, gain: float, k_factor: float, aoa: float, aod: float,
               rng: np.random.Generator) -> np.ndarray:
    if k_factor < 0:
        raise ValueError(f"k_factor must be non-negative, got {k_factor!r}")
    if rows == 0 or cols == 0:  # no RIS elements
        return np.zeros((rows, cols), dtype=complex)
    los = np.outer(steering_vector(aoa, rows), steering_vector(aod, cols).conj())
    # NLoS is drawn even in the pure-LoS limit so the stream position does not
    # depend on k_factor.
    nlos = gen_rayleigh(rows, cols, 1.0, rng)
    if k_factor >= PURE_LOS_K:
        return np.sqrt(gain) * los
    return np.sqrt(gain) * (np.sqrt(k_factor / (1.0 + k_factor)) * los + np.sqrt(1.0 / (1.0 + k_factor)) * nlos)


def target_response(alpha: complex, angle: float, n: int) -> np.ndarray:
    a = steering_vector(angle, n)
    return alpha * np.outer(a, a.conj())


def effective_channel(h_bu: np.ndarray, h_r: np.ndarray, h_ru: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Direct plus reflected channel ``H_bu + H_r diag(e^{j theta}) H_ru``.

    Broadcasts over a leading UE axis of ``h_bu``/``h_ru``.
    """
    theta = np.asarray(theta, dtype=float)
    if h_r.shape[-1] != theta.shape[-1] or h_ru.shape[-2] != theta.shape[-1]:
        raise ValueError(f"dimension mismatch: h_r {h_r.shape}, h_ru {h_ru.shape}, theta {theta.shape}")
    if h_bu.shape[-2] != h_r.shape[-2] or h_bu.shape[-1] != h_ru.shape[-1]:
        raise ValueError(f"dimension mismatch: h_bu {h_bu.shape}, h_r {h_r.shape}, h_ru {h_ru.shape}")
    phi = np.exp(1j * theta)
    return h_bu + (h_r * phi) @ h_ru


def link_angle(src, dst) -> float:
    """Steering angle of the ``src -> dst`` direction for an x-axis ULA."""
    dx, dy = dst[0] - src[0], dst[1] - src[1]
    return float(np.arcsin(dx / np.hypot(dx, dy)))


def _distance(a, b) -> float:
    return float(np.hypot(b[0] - a[0], b[1] - a[1]))


def realize_scenario(cfg: SystemConfig, rng: np.random.Generator | None = None) -> ChannelSet:
    """Draw every channel of one realization.

    With ``rng=None`` the channel stream of ``cfg.rng_seed`` is used, so equal
    configs give bitwise-identical channel sets. Draw order: ``h_r``, then per
    UE ``h_bu``, ``h_ru``, then the ordered UE-UE pairs, then target phases.
    """
    if rng is None:
        rng = cfg.streams()["channels"]
    K, M, N, L = cfg.K, cfg.M, cfg.N, cfg.L
    geo, ex = cfg.geometry, cfg.exponents

    gain_r = pathloss_gain(_distance(geo.ris, geo.bs), ex.r, cfg)
    h_r = gen_rician(M, L, gain_r, cfg.rician_k, link_angle(geo.bs, geo.ris), link_angle(geo.ris, geo.bs), rng)

    h_bu = np.empty((K, M, N), dtype=complex)
    h_ru = np.empty((K, L, N), dtype=complex)
    for k, ue in enumerate(geo.ues):
        h_bu[k] = gen_rayleigh(M, N, pathloss_gain(_distance(ue, geo.bs), ex.bu, cfg), rng)
        gain_ru = pathloss_gain(_distance(ue, geo.ris), ex.ru, cfg)
        h_ru[k] = gen_rician(L, N, gain_ru, cfg.rician_k, link_angle(geo.ris, ue), link_angle(ue, geo.ris), rng)

    h_uu = np.zeros((K, K, N, N), dtype=complex)
    for k in range(K):
        for i in range(K):
            if i != k:
                gain = pathloss_gain(_distance(geo.ues[i], geo.ues[k]), ex.uu, cfg)
                h_uu[k, i] = gen_rayleigh(N, N, gain, rng)

    angles = np.array([link_angle(ue, tg) for ue, tg in zip(geo.ues, geo.targets)])
    phases = rng.uniform(0.0, 2.0 * np.pi, size=K)
    mags = np.array([pathloss_gain(_distance(ue, tg), ex.target, cfg) for ue, tg in zip(geo.ues, geo.targets)])
    alphas = mags * np.exp(1j * phases)  # |alpha|^2 is the two-way gain
    g = np.stack([target_response(alphas[k], angles[k], N) for k in range(K)])
    return ChannelSet(h_bu, h_r, h_ru, h_uu, g, angles, alphas)


def save_channels(path, ch: ChannelSet) -> None:
    """Write ``ch`` as an ``.npz`` archive, one array per field name."""
    np.savez(path, **{f.name: getattr(ch, f.name) for f in fields(ChannelSet)})


def load_channels(path) -> ChannelSet:
    with np.load(path) as data:
        return ChannelSet(**{f.name: data[f.name] for f in fields(ChannelSet)})
