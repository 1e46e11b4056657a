import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_config
from ris_icsc.beamforming import initial_state
from ris_icsc.channel import realize_scenario
from ris_icsc import fractional
from ris_icsc.compute_alloc import alternate_compute
from ris_icsc.fractional import (
    FIXED_POINT_TOL,
    NewtonStagnation,
    init_aux,
    newton_step,
    outer_loop,
    residuals,
    scaled_residual,
)
from ris_icsc.metrics import ComputeState, latency, mmse_rates


def test_init_aux_example():
    delta, lam = init_aux([1, 2], [0.5, 0.5], [4, 4])
    assert np.allclose(delta, [1, 0.5]) and np.allclose(lam, [2, 1])
    _, lam = init_aux([3.0], [1.0], [0])
    assert lam[0] == 0.0
    rates = np.array([3.3, 7e6, 1e-3])
    delta, _ = init_aux(rates, np.ones(3), np.ones(3))
    assert np.allclose(delta * rates, 1.0, rtol=1e-15)
    with pytest.raises(ValueError, match="zero rate"):
        init_aux([1.0, 0.0], [1, 1], [1, 1])


def test_residuals_examples():
    rates, xi, v = np.array([2.0, 5.0]), np.array([1.0, 0.3]), np.array([10.0, 7.0])
    chi, kappa = residuals(*init_aux(rates, xi, v), rates, xi, v)
    assert np.all(chi == 0) and np.all(kappa == 0)
    chi, _ = residuals(2 / rates, np.zeros(2), rates, xi, v)
    assert np.allclose(chi, 1.0)


@settings(max_examples=100, deadline=None)
@given(R=st.floats(1e-3, 1e7), scale=st.floats(0.01, 100))
def test_residual_sign_tracks_offset(R, scale):
    chi, _ = residuals(np.array([scale / R]), np.zeros(1), np.array([R]), np.ones(1), np.ones(1))
    assert np.sign(chi[0]) == np.sign(scale - 1.0) or abs(scale - 1.0) < 1e-12


def test_newton_fixed_point_unchanged():
    rates, xi, v = np.array([2.0]), np.array([1.0]), np.array([3.0])
    d, l = init_aux(rates, xi, v)
    d2, l2, i = newton_step(d, l, rates, xi, v, 0.5, 0.01)
    assert i == 0 and np.array_equal(d, d2) and np.array_equal(l, l2)


def test_newton_full_step_lands_on_fixed_point():
    rates, xi, v = np.array([4.0]), np.array([0.7]), np.array([9.0])
    d, l, i = newton_step(np.array([3.0]), np.array([-2.0]), rates, xi, v, 0.5, 0.01)
    assert i == 0
    assert d[0] == pytest.approx(0.25) and l[0] == pytest.approx(0.7 * 9 / 4)


def test_newton_converges_with_damping_rule():
    rng = np.random.default_rng(0)
    rates = rng.uniform(1e5, 1e7, 3)
    xi, v = rng.uniform(0.1, 1, 3), rng.integers(1000, 10**5, 3).astype(float)
    d, l = rng.uniform(0, 1e-4, 3), rng.uniform(0, 1, 3)
    norms = []
    for _ in range(50):
        c, k = residuals(d, l, rates, xi, v)
        norms.append(np.sqrt(np.sum(c**2) + np.sum(k**2)))
        if norms[-1] < 1e-6:
            break
        zeta, eps3 = 0.5, 0.01
        d_new, l_new, i = newton_step(d, l, rates, xi, v, zeta, eps3)
        c2, k2 = residuals(d_new, l_new, rates, xi, v)
        assert np.sum(c2**2) + np.sum(k2**2) <= (1 - eps3 * zeta**i) ** 2 * norms[-1] ** 2
        d, l = d_new, l_new
    assert norms[-1] < 1e-6
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_newton_input_checks(monkeypatch):
    with pytest.raises(ValueError):
        newton_step([1.0], [1.0], [1.0], [1.0], [1.0], 1.5, 0.01)
    with pytest.raises(ValueError):
        newton_step([1.0], [1.0], [0.0], [1.0], [1.0], 0.5, 0.01)
    # Residuals that grow with every evaluation never pass the damping test.
    calls = itertools.count(1)
    monkeypatch.setattr(fractional, "residuals", lambda *a: (np.full(1, float(next(calls))), np.zeros(1)))
    with pytest.raises(NewtonStagnation):
        newton_step([1.0], [1.0], [2.0], [1.0], [1.0], 0.5, 0.01)


@pytest.fixture(scope="module")
def solved():
    cfg = small_config(seed=1)
    ch = realize_scenario(cfg)
    state = initial_state(ch, cfg, np.random.default_rng(0))
    compute = alternate_compute(ch, state, cfg)
    info = {}
    out = outer_loop(ch, state, compute, cfg, info=info)
    return ch, cfg, state, compute, out, info


def test_outer_loop_fixed_point(solved):
    ch, cfg, _, compute, out, info = solved
    rates = mmse_rates(ch, out, cfg)
    xi, v = np.asarray(cfg.weights), compute.v.astype(float)
    assert np.allclose(out.frac_delta, 1 / rates, rtol=1e-6)
    assert np.allclose(out.frac_lambda, xi * v / rates, rtol=1e-6)
    assert scaled_residual(out.frac_delta, out.frac_lambda, rates, xi, v) < FIXED_POINT_TOL
    assert 1 <= info["passes"] <= cfg.max_iters.newton


def test_outer_loop_epigraph_identity(solved):
    ch, cfg, _, compute, out, _ = solved
    rates = mmse_rates(ch, out, cfg)
    offload_obj = float(np.sum(np.asarray(cfg.weights) * compute.v / rates))
    assert out.frac_lambda.sum() == pytest.approx(offload_obj, rel=1e-9)


def test_outer_loop_lowers_offload_objective(solved):
    ch, cfg, start, compute, out, _ = solved
    xi = np.asarray(cfg.weights)
    before = np.sum(xi * compute.v / mmse_rates(ch, start, cfg))
    after = np.sum(xi * compute.v / mmse_rates(ch, out, cfg))
    assert after <= before
    assert latency(ch, out, compute, cfg).weighted_total <= latency(ch, start, compute, cfg).weighted_total


def test_outer_loop_single_ratio():
    cfg = small_config(seed=2, K=1, d=1)
    ch = realize_scenario(cfg)
    state = initial_state(ch, cfg, np.random.default_rng(0))
    compute = ComputeState(v=np.array([cfg.task_bits[0]]), f_e=np.array([cfg.edge_cpu_total]))
    out = outer_loop(ch, state, compute, cfg)
    R = mmse_rates(ch, out, cfg)[0]
    rep = latency(ch, out, compute, cfg)
    assert rep.t_offload[0] * cfg.weights[0] == pytest.approx(cfg.weights[0] * cfg.task_bits[0] / R, rel=1e-9)
    assert out.frac_lambda[0] == pytest.approx(cfg.weights[0] * cfg.task_bits[0] / R, rel=1e-9)
