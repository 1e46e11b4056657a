import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_config
from ris_icsc.compute_alloc import (
    _shares,
    alternate_compute,
    edge_allocation,
    edge_objective,
    integer_offload,
    kkt_residual,
    optimal_offload_fraction,
    task_latency,
)
from ris_icsc.config import load_config
from ris_icsc.metrics import ComputeState, latency_from_rates


def brute_force(V, c, f_l, f_e, R):
    times = [task_latency(v, V, c, f_l, f_e, R) for v in range(int(V) + 1)]
    return int(np.argmin(times))  # first minimum = smallest v on ties


def test_offload_fraction_examples():
    assert optimal_offload_fraction(1000, 1, 100, 100, 0) == 0.0
    assert optimal_offload_fraction(1000, 1, 0.0, 100, 100) == pytest.approx(1000)
    v = optimal_offload_fraction(1000, 1, 100, 100, 100)
    assert v == pytest.approx(1000 / 3)
    t_l = (1000 - v) * 1 / 100
    t_c = v / 100 + v / 100
    assert abs(t_l - t_c) <= 1e-9 * max(t_l, t_c)


def test_offload_fraction_degenerate():
    with pytest.raises(ValueError):
        optimal_offload_fraction(10, 1, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        optimal_offload_fraction(10, 1, -1.0, 1.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(V=st.integers(1, 10**6), c=st.floats(1, 1e3), f_l=st.floats(1e3, 1e9), f_e=st.floats(1e3, 1e10),
       R=st.floats(1e2, 1e8))
def test_equalization(V, c, f_l, f_e, R):
    v = optimal_offload_fraction(V, c, f_l, f_e, R)
    t_l = (V - v) * c / f_l
    t_c = v / R + v * c / f_e
    # Rounding floor: V - v cancels when nearly everything is offloaded.
    floor = 8 * np.finfo(float).eps * V * c / f_l
    assert abs(t_l - t_c) <= 1e-9 * max(t_l, t_c) + floor


def test_integer_offload_examples():
    assert integer_offload(1000, 1, 100, 100, 100) == 333
    assert integer_offload(1000, 1, 100, 100, 100) == brute_force(1000, 1, 100, 100, 100)
    assert integer_offload(4, 1, 1, 1, 1) == brute_force(4, 1, 1, 1, 1)
    assert integer_offload(0, 1, 1, 1, 1) == 0


def test_integer_offload_tie_goes_to_floor():
    # v_hat = 1.5 with a symmetric kink: T(1) = T(2).
    V, c, f_l, f_e, R = 3, 1.0, 1.0, 1.0, 1.0
    # T(v) = max(3 - v, 2v); T(1) = 2, T(2) = 4, so use a case with equal values.
    assert task_latency(1, V, c, f_l, f_e, R) <= task_latency(2, V, c, f_l, f_e, R)
    # Exact tie: f_e infinite-like, T(v) = max(2 - v, v) at V=2, v_hat = 1 integral.
    assert integer_offload(2, 1.0, 1.0, 1e300, 1.0) == 1
    # Constructed tie: local (V - v), offload 2v/... choose V=1, T(0)=1, T(1)=1.
    assert task_latency(0, 1, 1.0, 1.0, 2.0, 2.0) == task_latency(1, 1, 1.0, 1.0, 2.0, 2.0)
    assert integer_offload(1, 1.0, 1.0, 2.0, 2.0) == 0


def test_integer_offload_exhaustive_oracle():
    rng = np.random.default_rng(21)
    for _ in range(1000):
        V = int(rng.integers(0, 10**4 + 1))
        c = float(rng.uniform(1, 50))
        f_l = float(10 ** rng.uniform(2, 6))
        f_e = float(10 ** rng.uniform(2, 7))
        R = float(10 ** rng.uniform(2, 7))
        got = integer_offload(V, c, f_l, f_e, R)
        times = np.array([task_latency(v, V, c, f_l, f_e, R) for v in range(V + 1)])
        assert times[got] == times.min()
        assert got == int(np.argmin(times))


def test_edge_allocation_trivial():
    f = edge_allocation([1, 1], [1e4, 1e4], [10, 10], [1e6, 1e6], [1e5, 1e5], 2e9)
    assert np.allclose(f, [1e9, 1e9], rtol=1e-12)
    f = edge_allocation([1], [1e4], [10], [1e6], [1e5], 3e9)
    assert f[0] == pytest.approx(3e9, rel=1e-12)
    with pytest.raises(ValueError, match="rate"):
        edge_allocation([1, 1], [1, 1], [1, 1], [1, 1], [1, 0], 1.0)
    with pytest.raises(ValueError):
        edge_allocation([1], [1], [1], [1], [1], 0.0)


def test_edge_allocation_grid_oracle():
    rng = np.random.default_rng(5)
    for _ in range(5):
        xi = rng.uniform(0.2, 1, 2)
        V = rng.uniform(1e3, 1e5, 2)
        c = rng.uniform(100, 1000, 2)
        f_l = rng.uniform(1e7, 1e8, 2)
        R = rng.uniform(1e5, 1e7, 2)
        total = 1e9
        f, (mu, steps) = edge_allocation(xi, V, c, f_l, R, total, return_info=True)
        assert f.sum() == pytest.approx(total, rel=1e-9)
        assert np.all(kkt_residual(f, mu, xi, V, c, f_l, R) <= 1e-8)
        grid = np.linspace(0, total, 10**4 + 1)
        oracle = min(edge_objective([x, total - x], xi, V, c, f_l, R) for x in grid)
        assert edge_objective(f, xi, V, c, f_l, R) <= oracle * (1 + 1e-6)


def test_edge_allocation_clips_weak_ue():
    # The second UE has a tiny weight and a fast local CPU: no share.
    f = edge_allocation([1.0, 1e-9], [1e5, 10], [500, 1], [1e6, 1e10], [1e6, 1e6], 1e9)
    assert f[1] == 0.0
    assert f[0] == pytest.approx(1e9, rel=1e-12)


def test_bisection_bracket_is_monotone():
    rng = np.random.default_rng(2)
    xi, V, c, f_l, R = (rng.uniform(lo, hi, 4) for lo, hi in
                        ((0.1, 1), (1e3, 1e5), (100, 1000), (1e7, 1e8), (1e5, 1e7)))
    a, s = c * R, np.sqrt(xi * V * c)
    mus = np.geomspace(1e-12, ((s / f_l) ** 2).max(), 200)
    sums = [_shares(m, a, s, f_l).sum() for m in mus]
    assert all(y <= x for x, y in zip(sums, sums[1:]))
    _, (_, steps) = edge_allocation(xi, V, c, f_l, R, 1e9, return_info=True)
    assert steps <= 200


def test_alternate_compute_single_ue():
    cfg = load_config(text="K: 1\nd: 1")
    hist = []
    out = alternate_compute(None, None, cfg, rates=[1e6], history=hist)
    assert out.f_e[0] == pytest.approx(cfg.edge_cpu_total)
    assert len(hist) <= 2 and hist[-1] == pytest.approx(hist[0])


def test_alternate_compute_default_scenario(default_cfg):
    hist = []
    rates = np.full(default_cfg.K, 2e6)
    out = alternate_compute(None, None, default_cfg, rates=rates, history=hist)
    assert len(hist) <= default_cfg.max_iters.compute
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))
    assert out.f_e.sum() <= default_cfg.edge_cpu_total * (1 + 1e-9)
    assert np.all(out.f_e >= 0)
    assert np.all((out.v >= 0) & (out.v <= np.asarray(default_cfg.task_bits)))


def test_alternate_compute_empty_tasks():
    cfg = small_config().replace(task_bits=(0, 0))
    hist = []
    out = alternate_compute(None, None, cfg, rates=[1e6, 1e6], history=hist)
    assert np.all(out.v == 0)
    assert hist == [0.0]


def test_alternate_compute_keeps_better_previous():
    cfg = small_config()
    rates = np.array([1e6, 2e6])
    fresh = alternate_compute(None, None, cfg, rates=rates)
    again = alternate_compute(None, None, cfg, rates=rates, previous=fresh)
    assert np.array_equal(again.v, fresh.v) and np.array_equal(again.f_e, fresh.f_e)
    better = ComputeState(v=fresh.v, f_e=fresh.f_e)
    # A previous state that beats a fresh solve under new rates is kept.
    slow = np.array([1e6, 2e6]) * 0.5
    fresh_slow = alternate_compute(None, None, cfg, rates=slow)
    kept = alternate_compute(None, None, cfg, rates=slow, previous=better)
    assert latency_from_rates(slow, kept, cfg).weighted_total <= latency_from_rates(slow, fresh_slow, cfg).weighted_total
    worse = ComputeState(v=np.zeros(2, dtype=np.int64), f_e=fresh.f_e)
    assert alternate_compute(None, None, cfg, rates=rates, previous=worse) is not worse


def test_zero_rate_ue_stays_local():
    cfg = small_config()
    out = alternate_compute(None, None, cfg, rates=[0.0, 1e6])
    assert out.v[0] == 0 and out.f_e[0] == 0.0
    assert math.isclose(out.f_e[1], cfg.edge_cpu_total, rel_tol=1e-9)
