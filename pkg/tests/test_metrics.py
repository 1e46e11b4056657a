import numpy as np
import pytest

from conftest import random_state, scalar_setup, small_config
from ris_icsc.beamforming import update_decoder, update_decoders_and_weights
from ris_icsc.channel import realize_scenario
from ris_icsc.metrics import (
    ComputeState,
    SingularMatrixError,
    effective_channels,
    interference_plus_noise,
    latency,
    latency_from_rates,
    mmse_rate,
    mse_matrix,
    offload_rate,
    power_feasible,
    radar_sinr,
    wrap_phase,
)


@pytest.fixture
def setup(rng):
    cfg = small_config(seed=4)
    ch = realize_scenario(cfg)
    return ch, cfg, random_state(ch, cfg, rng)


def test_wrap_phase_range():
    t = wrap_phase([0.0, -1e-20, 2 * np.pi, 7.0, -3.0])
    assert np.all((t > 0) & (t <= 2 * np.pi))
    assert t[0] == 2 * np.pi and t[2] == 2 * np.pi


def test_interference_single_ue_is_noise():
    ch, cfg, state = scalar_setup(h=3.0, f=2.0, noise=0.7)
    assert np.allclose(interference_plus_noise(ch, state, 0, cfg), 0.7 * np.eye(1))


def test_interference_matches_loop(setup):
    ch, cfg, state = setup
    H = effective_channels(ch, state.theta)
    for k in range(ch.K):
        J = cfg.noise_comm * np.eye(ch.M, dtype=complex)
        for i in range(ch.K):
            if i != k:
                J += H[i] @ state.f_c[i] @ state.f_c[i].conj().T @ H[i].conj().T
        got = interference_plus_noise(ch, state, k, cfg)
        assert np.allclose(got, J, rtol=1e-12, atol=0)
        assert np.allclose(got, got.conj().T)
        assert np.linalg.eigvalsh(got).min() > 0


def test_rate_scalar_example():
    ch, cfg, state = scalar_setup(h=1.0, f=1.0, noise=1.0, bandwidth=1.0)
    state = update_decoders_and_weights(ch, state, cfg)
    assert offload_rate(ch, state, 0, cfg) == pytest.approx(1.0, rel=1e-14)
    assert mmse_rate(ch, state, 0, cfg) == pytest.approx(1.0, rel=1e-14)


def test_zero_precoder_gives_zero_rate():
    ch, cfg, state = scalar_setup(h=1.0, f=0.0)
    state = state.replace(w_c=np.ones((1, 1, 1), dtype=complex))
    assert offload_rate(ch, state, 0, cfg) == 0.0


def test_rate_forms_agree_under_mmse_decoder(setup):
    ch, cfg, state = setup
    for k in range(ch.K):
        a = offload_rate(ch, state, k, cfg)
        b = mmse_rate(ch, state, k, cfg)
        E = mse_matrix(ch, state, k, cfg)
        c = -cfg.bandwidth_hz * np.log2(np.linalg.det(E).real)
        assert a == pytest.approx(b, rel=1e-9)
        assert a == pytest.approx(c, rel=1e-9)


def test_rate_invariant_to_decoder_mixing(setup, rng):
    ch, cfg, state = setup
    A = rng.standard_normal((cfg.d, cfg.d)) + 1j * rng.standard_normal((cfg.d, cfg.d))
    mixed = state.replace(w_c=state.w_c @ A)
    for k in range(ch.K):
        assert offload_rate(ch, mixed, k, cfg) == pytest.approx(offload_rate(ch, state, k, cfg), rel=1e-9)


def test_singular_decoder_is_rejected(setup):
    ch, cfg, state = setup
    W = state.w_c.copy()
    W[0, :, 1] = W[0, :, 0]
    with pytest.raises(SingularMatrixError):
        offload_rate(ch, state.replace(w_c=W), 0, cfg)


def test_mse_matrix_properties(setup):
    ch, cfg, state = setup
    zero = state.replace(w_c=np.zeros_like(state.w_c))
    assert np.allclose(mse_matrix(ch, zero, 0, cfg), np.eye(cfg.d))
    H = effective_channels(ch, state.theta)
    for k in range(ch.K):
        E = mse_matrix(ch, state, k, cfg)
        assert np.allclose(E, E.conj().T)
        assert np.linalg.eigvalsh(E).min() >= -1e-12
        HF = H[k] @ state.f_c[k]
        J = interference_plus_noise(ch, state, k, cfg)
        ident = np.eye(cfg.d) - HF.conj().T @ np.linalg.solve(J + HF @ HF.conj().T, HF)
        assert np.allclose(E, ident, rtol=0, atol=1e-9)


def test_radar_sinr_scalar_and_homogeneity(setup):
    ch1, cfg1, st1 = scalar_setup(g=1.0, f=3.0, noise=1.0)
    assert radar_sinr(ch1, st1, 0, cfg1) == pytest.approx(9.0)
    ch, cfg, state = setup
    base = radar_sinr(ch, state, 0, cfg)
    scaled = state.replace(w_s=state.w_s * (2.0 - 3.0j))
    assert radar_sinr(ch, scaled, 0, cfg) == pytest.approx(base, rel=1e-12)
    with pytest.raises(ValueError):
        radar_sinr(ch, state.replace(w_s=np.zeros_like(state.w_s)), 0, cfg)


def test_radar_sinr_monte_carlo(setup):
    ch, cfg, state = setup
    rng = np.random.default_rng(8)
    n = 200_000
    K, N, d = ch.K, ch.N, cfg.d
    k = 0
    w = state.w_s[k]
    c = (rng.standard_normal((K, d, n)) + 1j * rng.standard_normal((K, d, n))) / np.sqrt(2)
    noise = np.sqrt(cfg.noise_sense / 2) * (rng.standard_normal((N, n)) + 1j * rng.standard_normal((N, n)))
    echo = w.conj() @ ch.g_target[k] @ state.f_c[k] @ c[k]
    interf = w.conj() @ (sum(ch.h_uu[k, i] @ state.f_c[i] @ c[i] for i in range(K) if i != k) + noise)
    mc = np.mean(np.abs(echo) ** 2) / np.mean(np.abs(interf) ** 2)
    assert mc == pytest.approx(radar_sinr(ch, state, k, cfg), rel=0.01)


def test_radar_sinr_falls_with_interferer_power(setup):
    ch, cfg, state = setup
    base = radar_sinr(ch, state, 0, cfg)
    F = state.f_c.copy()
    F[1] *= 1.5
    assert radar_sinr(ch, state.replace(f_c=F), 0, cfg) < base


def test_latency_examples():
    ch, cfg, state = scalar_setup()
    cfg = cfg.replace(task_bits=(200_000,), cycles_per_bit=(500.0,), local_cpu=(1e8,))
    rep = latency(ch, state, ComputeState(v=np.array([0]), f_e=np.array([0.0])), cfg)
    assert rep.t_local[0] == pytest.approx(1.0)
    assert rep.t_offload[0] == 0 and rep.t_edge[0] == 0
    assert rep.weighted_total == pytest.approx(1.0)
    full = latency_from_rates([1e6], ComputeState(v=np.array([200_000]), f_e=np.array([1e9])), cfg)
    assert full.t_local[0] == 0
    assert full.t_ue[0] == pytest.approx(0.2 + 0.1)


def test_latency_errors():
    _, cfg, _ = scalar_setup()
    with pytest.raises(ValueError, match="zero rate"):
        latency_from_rates([0.0], ComputeState(v=np.array([10]), f_e=np.array([1e9])), cfg)
    with pytest.raises(ValueError, match="edge CPU"):
        latency_from_rates([1e6], ComputeState(v=np.array([10]), f_e=np.array([0.0])), cfg)
    with pytest.raises(ValueError, match="range"):
        latency_from_rates([1e6], ComputeState(v=np.array([10**9]), f_e=np.array([1e9])), cfg)


def test_latency_monotone_in_rate_and_cpu():
    _, cfg, _ = scalar_setup()
    comp = ComputeState(v=np.array([800]), f_e=np.array([1e6]))
    vals = [latency_from_rates([r], comp, cfg).weighted_total for r in (1e2, 1e3, 1e4, 1e5)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    vals = [latency_from_rates([1e4], comp.replace(f_e=np.array([f])), cfg).weighted_total
            for f in (1e5, 1e6, 1e7)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_latency_report_invariants(setup):
    ch, cfg, state = setup
    comp = ComputeState(v=np.array([1000, 2000]), f_e=np.array([1e9, 2e9]))
    rep = latency(ch, state, comp, cfg)
    assert np.allclose(rep.t_ue, np.maximum(rep.t_local, rep.t_offload + rep.t_edge))
    assert rep.weighted_total == pytest.approx(float(np.dot(cfg.weights, rep.t_ue)))


def test_power_feasibility(setup):
    ch, cfg, state = setup
    assert power_feasible(state, cfg)
    assert not power_feasible(state.replace(f_c=state.f_c * 1.01), cfg)


def test_decoder_is_mmse(setup):
    ch, cfg, state = setup
    H = effective_channels(ch, state.theta)
    W = update_decoder(ch, state, 0, cfg)
    HF = H[0] @ state.f_c[0]
    S = interference_plus_noise(ch, state, 0, cfg) + HF @ HF.conj().T
    assert np.allclose(S @ W, HF)
