"""Offloading volumes and edge-CPU shares for fixed uplink rates.

With the rate ``R`` of a UE fixed, its latency is
``T(v) = max((V - v) c / f_l, v / R + v c / f_e)``. The continuous minimizer
balances the two branches; the integer optimum is the better of its floor
and ceiling. Substituting the balanced volume gives a convex objective in
the edge shares, solved by bisection on the multiplier of the budget.
"""

from __future__ import annotations

import math

import numpy as np

from .channel import ChannelSet
from .config import SystemConfig
from .metrics import BeamformingState, ComputeState, latency_from_rates, mmse_rates

__all__ = [
    "ComputeState",
    "alternate_compute",
    "edge_allocation",
    "edge_objective",
    "integer_offload",
    "optimal_offload_fraction",
    "task_latency",
]

# Resource-sum residual tolerance, relative to f_total.
SUM_RTOL = 1e-9
MAX_BISECTIONS = 200


def task_latency(v, V, c, f_l, f_e, R) -> float:
    """``T(v)`` for one UE; infinite when a branch has no resource."""
    local = 0.0 if v >= V else ((V - v) * c / f_l if f_l > 0 else math.inf)
    if v <= 0:
        return local
    if R <= 0 or f_e <= 0:
        return math.inf
    return max(local, v / R + v * c / f_e)


def optimal_offload_fraction(V, c, f_l, f_e, R) -> float:
    """Continuous minimizer of ``T``, where local and offload times are equal."""
    if min(V, c, f_l, f_e, R) < 0:
        raise ValueError("inputs must be non-negative")
    if R == 0 or f_e == 0 or V == 0:
        if f_e == 0 and f_l == 0 and R == 0:
            raise ValueError("degenerate denominator: f_e, f_l and R are all zero")
        return 0.0
    den = f_e * f_l + c * R * (f_e + f_l)
    if den == 0:
        raise ValueError("degenerate denominator")
    return float(min(V, V * c * R * f_e / den))


def integer_offload(V, c, f_l, f_e, R) -> int:
    """Better of floor and ceiling of the continuous optimum; ties go to the floor."""
    v_hat = optimal_offload_fraction(V, c, f_l, f_e, R)
    lo = max(0, min(int(V), math.floor(v_hat)))
    hi = max(0, min(int(V), math.ceil(v_hat)))
    if hi == lo:
        return lo
    t_lo = task_latency(lo, V, c, f_l, f_e, R)
    t_hi = task_latency(hi, V, c, f_l, f_e, R)
    return hi if t_hi < t_lo else lo


def edge_objective(f_e, xi, V, c, f_l, R) -> float:
    """Weighted latency with every UE at its balanced (continuous) volume."""
    f_e, xi, V, c, f_l, R = (np.asarray(a, dtype=float) for a in (f_e, xi, V, c, f_l, R))
    num = V * c * c * R + V * c * f_e
    den = f_e * f_l + c * R * (f_e + f_l)
    return float(np.sum(xi * num / den))


def _shares(mu, a, s, f_l):
    # a = c R, s = sqrt(xi V c); stationary share at multiplier mu, clipped.
    return np.maximum((a * s / np.sqrt(mu) - a * f_l) / (f_l + a), 0.0)


def edge_allocation(xi, V, c, f_l, R, f_total: float, *, return_info: bool = False):
    """Split ``f_total`` across UEs to minimize :func:`edge_objective`.

    Bisection on the multiplier ``mu`` of the budget; the bracket's upper end
    ``max_k xi V c / f_l**2`` zeroes every share. The result is polished with
    the exact multiplier of the final active set, so the budget is used
    exactly. With ``return_info`` also returns ``(mu, bisection steps)``.
    """
    xi, V, c, f_l, R = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (xi, V, c, f_l, R))
    if f_total <= 0:
        raise ValueError(f"f_total must be positive, got {f_total!r}")
    if np.any(R <= 0):
        raise ValueError(f"non-positive rate for UE(s) {np.flatnonzero(R <= 0).tolist()}")
    a = c * R
    s = np.sqrt(xi * V * c)
    thresholds = (s / f_l) ** 2
    if not np.any(thresholds > 0):
        out = np.zeros_like(R)
        return (out, (0.0, 0)) if return_info else out

    mu_hi = float(thresholds.max())
    # Lower end: shrink until the budget is exceeded (sum grows like mu^-1/2).
    mu_lo = float(thresholds[thresholds > 0].min())
    while _shares(mu_lo, a, s, f_l).sum() < f_total:
        mu_lo *= 0.25
    steps = 0
    tol = SUM_RTOL * f_total
    while steps < MAX_BISECTIONS:
        mu = math.sqrt(mu_lo * mu_hi)  # geometric midpoint: mu spans decades
        total = _shares(mu, a, s, f_l).sum()
        steps += 1
        if abs(total - f_total) <= tol:
            break
        if total > f_total:
            mu_lo = mu
        else:
            mu_hi = mu
        if mu_hi - mu_lo <= 1e-15 * mu_hi:
            break

    # Closed-form multiplier on the active set.
    active = _shares(mu, a, s, f_l) > 0
    for _ in range(len(R) + 1):
        w = a / (f_l + a)
        inv_sqrt_mu = (f_total + np.sum((w * f_l)[active])) / np.sum((w * s)[active])
        mu = inv_sqrt_mu ** -2
        new_active = _shares(mu, a, s, f_l) > 0
        if np.array_equal(new_active, active):
            break
        active = new_active
    out = np.where(active, (a * s * inv_sqrt_mu - a * f_l) / (f_l + a), 0.0)
    out = np.maximum(out, 0.0)
    return (out, (mu, steps)) if return_info else out


def kkt_residual(f_e, mu, xi, V, c, f_l, R) -> np.ndarray:
    """Relative stationarity residual of each active UE."""
    f_e, xi, V, c, f_l, R = (np.asarray(a, dtype=float) for a in (f_e, xi, V, c, f_l, R))
    grad = xi * V * c**3 * R**2 / (c * R * f_l + (f_l + c * R) * f_e) ** 2
    return np.where(f_e > 0, np.abs(grad - mu) / mu, 0.0)


def alternate_compute(ch: ChannelSet | None, state: BeamformingState | None, cfg: SystemConfig, *,
                      rates=None, previous: ComputeState | None = None,
                      history: list | None = None) -> ComputeState:
    """Alternate offloading and edge-share updates for fixed rates.

    Rates are evaluated from ``state`` unless given. UEs with zero rate keep
    their task local. When ``previous`` is given and scores better under the
    same rates it is returned instead, so the caller's objective never
    increases. ``history`` (if a list) receives the objective of every pass.
    """
    if rates is None:
        rates = mmse_rates(ch, state, cfg)
    rates = np.asarray(rates, dtype=float)
    K = cfg.K
    V = np.asarray(cfg.task_bits, dtype=float)
    c = np.asarray(cfg.cycles_per_bit, dtype=float)
    f_l = np.asarray(cfg.local_cpu, dtype=float)
    xi = np.asarray(cfg.weights, dtype=float)
    ok = rates > 0

    f_e = np.zeros(K)
    if ok.any():
        f_e[ok] = cfg.edge_cpu_total / ok.sum()
    v = np.zeros(K, dtype=np.int64)
    best = None
    prev_obj = None
    for _ in range(cfg.max_iters.compute):
        if ok.any():
            f_e = np.zeros(K)
            f_e[ok] = edge_allocation(xi[ok], V[ok], c[ok], f_l[ok], rates[ok], cfg.edge_cpu_total)
        # The balanced-volume objective does not depend on v, so shares come first.
        v = np.array([integer_offload(V[k], c[k], f_l[k], f_e[k], rates[k]) if ok[k] else 0 for k in range(K)],
                     dtype=np.int64)
        cand = ComputeState(v=v, f_e=f_e)
        obj = latency_from_rates(rates, cand, cfg).weighted_total
        if history is not None:
            history.append(obj)
        if best is None or obj <= best[0]:
            best = (obj, cand)
        if prev_obj is not None and abs(prev_obj - obj) <= cfg.epsilon * max(obj, 1e-300):
            break
        if obj == 0.0:
            break
        prev_obj = obj
    obj, out = best
    if previous is not None:
        try:
            prev_val = latency_from_rates(rates, previous, cfg).weighted_total
        except ValueError:
            prev_val = math.inf
        if prev_val < obj:
            return previous
    return out
