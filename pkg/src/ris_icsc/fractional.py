"""Sum-of-ratios reformulation and the damped Newton update of its auxiliaries.

Minimizing ``sum_k xi_k v_k / R_k`` is handled through auxiliaries
``(delta, lambda)``: at a solution ``delta_k = 1/R_k`` and
``lambda_k = xi_k v_k / R_k``, and the beamformers maximize the weighted
rate ``sum_k delta_k lambda_k R_k``. The outer loop alternates that weighted
problem with a Newton step on the residuals ``chi = delta R - 1`` and
``kappa = lambda R - xi v``.
"""

from __future__ import annotations

import numpy as np

from .beamforming import inner_loop
from .channel import ChannelSet
from .config import SystemConfig
from .metrics import BeamformingState, ComputeState, mmse_rates

MAX_STEP_HALVINGS = 60
FIXED_POINT_TOL = 1e-6


class NewtonStagnation(RuntimeError):
    pass


def init_aux(rates, weights, volumes):
    rates = np.asarray(rates, dtype=float)
    if np.any(rates <= 0):
        raise ValueError(f"zero rate for UE(s) {np.flatnonzero(rates <= 0).tolist()}")
    delta = 1.0 / rates
    lam = np.asarray(weights, dtype=float) * np.asarray(volumes, dtype=float) / rates
    return delta, lam


def residuals(delta, lam, rates, weights, volumes):
    rates = np.asarray(rates, dtype=float)
    chi = np.asarray(delta) * rates - 1.0
    kappa = np.asarray(lam) * rates - np.asarray(weights, dtype=float) * np.asarray(volumes, dtype=float)
    return chi, kappa


def newton_step(delta, lam, rates, weights, volumes, zeta: float, eps3: float):
    """Damped Newton update; returns ``(delta', lambda', i)``.

    ``i`` is the smallest integer with
    ``|res(new)|^2 <= (1 - eps3 zeta^i)^2 |res(old)|^2``, both sides
    evaluated at the same rates. The residuals are affine in the auxiliaries
    with slope ``R``, so ``i = 0`` lands on the fixed point.
    """
    if not 0.0 < zeta < 1.0:
        raise ValueError(f"zeta must lie in (0, 1), got {zeta!r}")
    rates = np.asarray(rates, dtype=float)
    if np.any(rates <= 0):
        raise ValueError("rates must be positive")
    delta = np.asarray(delta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    chi, kappa = residuals(delta, lam, rates, weights, volumes)
    base = float(np.sum(chi**2) + np.sum(kappa**2))
    if base == 0.0:
        return delta.copy(), lam.copy(), 0
    for i in range(MAX_STEP_HALVINGS + 1):
        step = zeta**i
        d_new = delta - step * chi / rates
        l_new = lam - step * kappa / rates
        c2, k2 = residuals(d_new, l_new, rates, weights, volumes)
        if np.sum(c2**2) + np.sum(k2**2) <= (1.0 - eps3 * step) ** 2 * base:
            return d_new, l_new, i
    raise NewtonStagnation(f"no acceptable step within {MAX_STEP_HALVINGS} reductions")


def scaled_residual(delta, lam, rates, weights, volumes) -> float:
    """``max(|chi|, |kappa| / (xi v))``; kappa is relative so the test is unit-free."""
    chi, kappa = residuals(delta, lam, rates, weights, volumes)
    xv = np.asarray(weights, dtype=float) * np.asarray(volumes, dtype=float)
    rel = np.where(xv > 0, np.abs(kappa) / np.where(xv > 0, xv, 1.0), np.abs(kappa))
    return float(max(np.max(np.abs(chi), initial=0.0), np.max(rel, initial=0.0)))


def outer_loop(ch: ChannelSet, state: BeamformingState, compute: ComputeState, cfg: SystemConfig, *,
               optimize_theta: bool = True, info: dict | None = None) -> BeamformingState:
    """Alternate the weighted beamforming solve with Newton updates.

    Stops when the residuals of the previous auxiliaries at the new rates
    fall below ``1e-6`` (rates have stopped moving) or after
    ``max_iters.newton`` passes. The returned state carries auxiliaries at
    the fixed point of its own rates. ``info`` (if a dict) receives the
    pass count and final residual.
    """
    xi = np.asarray(cfg.weights, dtype=float)
    v = np.asarray(compute.v, dtype=float)
    rates = mmse_rates(ch, state, cfg)
    delta, lam = init_aux(rates, xi, v)
    passes = 0
    resid = 0.0
    warm: dict = {}
    for passes in range(1, cfg.max_iters.newton + 1):
        state = inner_loop(ch, state, delta * lam, cfg, optimize_theta=optimize_theta, warm=warm)
        rates = mmse_rates(ch, state, cfg)
        resid = scaled_residual(delta, lam, rates, xi, v)
        delta, lam, _ = newton_step(delta, lam, rates, xi, v, cfg.newton_step, cfg.newton_eps)
        if resid < FIXED_POINT_TOL or not np.any(v > 0):
            break
    if info is not None:
        info.update(passes=passes, residual=resid)
    return state.replace(frac_delta=delta, frac_lambda=lam)
