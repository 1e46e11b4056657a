"""Inner block-descent loop for the weighted-MSE form of the rate problem.

For per-UE weights ``w_k`` the loop minimizes::

    Phi = sum_k w_k [tr(D_k E_k) - ln det D_k]

subject to the power budgets and the radar SINR constraints. The natural
log makes ``D_k = E_k^-1`` the exact minimizer, at which
``Phi = sum_k w_k (d - R_k ln2 / B)``. Blocks, in order: precoders (convex
subproblem with the SINR constraints linearized at the current point),
decoders and weights (closed form), radar receive filters (generalized
eigenvector) and RIS phases (majorization-minimization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import qcqp
from .channel import ChannelSet
from .config import SystemConfig
from .metrics import (
    BeamformingState,
    _herm,
    effective_channels,
    interference_plus_noise,
    logdet_hpd,
    mse_matrix,
    radar_sinrs,
    sensing_interference,
    wrap_phase,
)

MM_MAX_ITERS = 100
MM_RTOL = 1e-8
# Relative slack when checking the SINR constraint of a start point.
SINR_SLACK = 1e-9


class InfeasibleScenario(RuntimeError):
    """No feasible start found: the sensing threshold of ``ue`` is unreachable."""

    def __init__(self, ue: int, sinr: float, threshold: float):
        super().__init__(f"UE {ue} cannot reach the sensing threshold: SINR {sinr:.4g} < {threshold:.4g}")
        self.ue = ue
        self.sinr = sinr
        self.threshold = threshold


class NoUplink(InfeasibleScenario):
    """The effective channel of ``ue`` is identically zero: no rate is possible."""

    def __init__(self, ue: int):
        RuntimeError.__init__(self, f"UE {ue} has no uplink: its effective channel is zero")
        self.ue = ue
        self.sinr = math.nan
        self.threshold = math.nan


def check_uplinks(ch: ChannelSet, theta) -> None:
    """Raise :class:`NoUplink` for the first UE whose effective channel is zero."""
    H = effective_channels(ch, theta)
    for k in range(ch.K):
        if not np.any(H[k]):
            raise NoUplink(k)


# --------------------------------------------------------------------------
# decoder, weight, radar filter


def _receive_cov(ch, state, k, cfg, H):
    J = interference_plus_noise(ch, state, k, cfg, H)
    HF = H[k] @ state.f_c[k]
    return J + HF @ HF.conj().T, HF


def update_decoder(ch: ChannelSet, state: BeamformingState, k: int, cfg: SystemConfig,
                   H: np.ndarray | None = None) -> np.ndarray:
    """MMSE decoder ``(J_k + H F F^H H^H)^-1 H F`` (M x d)."""
    if H is None:
        H = effective_channels(ch, state.theta)
    S, HF = _receive_cov(ch, state, k, cfg, H)
    return sla.solve(S, HF, assume_a="pos")


def mmse_error(ch: ChannelSet, state: BeamformingState, k: int, cfg: SystemConfig,
               H: np.ndarray | None = None) -> np.ndarray:
    """``I - F^H H^H (J + H F F^H H^H)^-1 H F``."""
    if H is None:
        H = effective_channels(ch, state.theta)
    S, HF = _receive_cov(ch, state, k, cfg, H)
    return _herm(np.eye(HF.shape[1]) - HF.conj().T @ sla.solve(S, HF, assume_a="pos"))


def update_weight(ch: ChannelSet, state: BeamformingState, k: int, cfg: SystemConfig,
                  H: np.ndarray | None = None) -> np.ndarray:
    """``D_k``: inverse of the MMSE matrix, Hermitian positive definite."""
    E = mmse_error(ch, state, k, cfg, H)
    return _herm(np.linalg.inv(E))


def update_decoders_and_weights(ch: ChannelSet, state: BeamformingState, cfg: SystemConfig) -> BeamformingState:
    H = effective_channels(ch, state.theta)
    W = np.stack([update_decoder(ch, state, k, cfg, H) for k in range(ch.K)])
    D = np.stack([update_weight(ch, state, k, cfg, H) for k in range(ch.K)])
    return state.replace(w_c=W, d_weight=D)


def update_radar_rx(ch: ChannelSet, state: BeamformingState, k: int, cfg: SystemConfig) -> np.ndarray:
    """Unit-norm filter maximizing the radar SINR quotient."""
    T = sensing_interference(ch, state, k, cfg) / cfg.noise_sense
    GF = ch.g_target[k] @ state.f_c[k] / np.sqrt(cfg.noise_sense)
    A = _herm(GF @ GF.conj().T)
    try:
        evals = np.linalg.eigvalsh(T)
    except np.linalg.LinAlgError:
        raise ValueError(f"sensing covariance of UE {k} is not Hermitian-definite") from None
    if evals.min() <= 0:
        raise ValueError(f"sensing covariance of UE {k} is indefinite (min eigenvalue {evals.min():.3g})")
    n = A.shape[0]
    _, vecs = sla.eigh(A, T, subset_by_index=[n - 1, n - 1])
    w = vecs[:, 0]
    w = w / np.linalg.norm(w)
    j = int(np.argmax(np.abs(w)))
    return w * np.exp(-1j * np.angle(w[j]))


def update_radar_rxs(ch: ChannelSet, state: BeamformingState, cfg: SystemConfig) -> BeamformingState:
    return state.replace(w_s=np.stack([update_radar_rx(ch, state, k, cfg) for k in range(ch.K)]))


# --------------------------------------------------------------------------
# objective


def wmmse_objective(ch: ChannelSet, state: BeamformingState, cfg: SystemConfig, weights) -> float:
    """``sum_k w_k [tr(D_k E_k) - ln det D_k]`` with the stored W and D."""
    H = effective_channels(ch, state.theta)
    total = 0.0
    for k in range(ch.K):
        if weights[k] == 0:
            continue
        E = mse_matrix(ch, state, k, cfg, H)
        Dk = state.d_weight[k]
        total += weights[k] * (np.trace(Dk @ E).real - logdet_hpd(Dk, "D_k"))
    return float(total)


# --------------------------------------------------------------------------
# precoders


def sensing_row(ch: ChannelSet, state: BeamformingState, anchor: np.ndarray, k: int,
                cfg: SystemConfig) -> qcqp.QuadConstraint:
    """Radar constraint of UE ``k`` with the echo term linearized at ``anchor``.

    Exact form: ``eta w^H T_k w - ||F_k^H a||^2 <= 0`` with ``a = G_k^H w``.
    The concave ``-||F^H a||^2`` is replaced by its tangent at ``anchor``,
    ``||A^H a||^2 - 2 Re tr((a a^H A)^H F)``, a global upper bound.
    """
    w = state.w_s[k]
    eta = cfg.sinr_threshold_linear
    a = ch.g_target[k].conj().T @ w
    quad = {}
    for i in range(ch.K):
        if i != k:
            q = ch.h_uu[k, i].conj().T @ w
            quad[i] = eta * np.outer(q, q.conj())
    Ak = anchor[k]
    aA = Ak.conj().T @ a
    lin = {k: np.outer(a, aA.conj())}
    const = eta * cfg.noise_sense * float(np.vdot(w, w).real) + float(np.vdot(aA, aA).real)
    return qcqp.QuadConstraint(quad=quad, lin=lin, const=const)


def sensing_value(ch: ChannelSet, f_c: np.ndarray, w_s: np.ndarray, k: int, cfg: SystemConfig) -> float:
    """Exact left side ``eta w^H T_k w - |w^H G F|^2`` (feasible iff <= 0)."""
    w = w_s[k]
    T = cfg.noise_sense * np.vdot(w, w).real
    for i in range(ch.K):
        if i != k:
            v = f_c[i].conj().T @ (ch.h_uu[k, i].conj().T @ w)
            T += np.vdot(v, v).real
    s = f_c[k].conj().T @ (ch.g_target[k].conj().T @ w)
    return float(cfg.sinr_threshold_linear * T - np.vdot(s, s).real)


def precoder_program(ch: ChannelSet, state: BeamformingState, weights, cfg: SystemConfig) -> qcqp.ConvexQuadraticProgram:
    """Precoder subproblem at the current state (anchor = current precoders)."""
    H = effective_channels(ch, state.theta)
    X = np.einsum("k,kmd,kde,kne->mn", weights, state.w_c, state.d_weight, state.w_c.conj())
    X = _herm(X)
    a = [_herm(H[i].conj().T @ X @ H[i]) for i in range(ch.K)]
    b = [weights[i] * H[i].conj().T @ state.w_c[i] @ state.d_weight[i] for i in range(ch.K)]
    rows = [sensing_row(ch, state, state.f_c, k, cfg) for k in range(ch.K)]
    return qcqp.ConvexQuadraticProgram(a=a, b=b, power_caps=np.asarray(cfg.power_budget, dtype=float),
                                       constraints=rows)


def update_precoders(ch: ChannelSet, state: BeamformingState, weights, cfg: SystemConfig, y0=None):
    """Solve the precoder subproblem; returns ``(f_c, certificate)``.

    ``y0`` warm-starts the solver's multipliers.
    """
    qp = precoder_program(ch, state, weights, cfg)
    viol = qp.violation(list(state.f_c))
    scale = np.array([max(abs(r.const), 1e-300) for r in qp.rows()])
    if np.any(viol > 1e-7 * scale):
        bad = int(np.argmax(viol / scale))
        raise RuntimeError(f"precoder anchor infeasible (row {bad}, violation {viol[bad]:.3g})")
    X, cert = qcqp.solve(qp, list(state.f_c), y0=y0)
    return np.stack(X), cert


# --------------------------------------------------------------------------
# RIS phases


@dataclass(frozen=True)
class RisQuadraticForm:
    """``g(phi) = phi^H Xi phi + 2 Re(phi^T u)`` over unit-modulus ``phi``."""

    xi_mat: np.ndarray
    u_vec: np.ndarray
    lambda_max: float

    def value(self, phi) -> float:
        phi = np.asarray(phi)
        return float(np.vdot(phi, self.xi_mat @ phi).real + 2.0 * np.real(phi @ self.u_vec))

    def surrogate(self, phi, phi_t) -> float:
        """Majorizer of :meth:`value` that touches it at ``phi_t``."""
        phi, phi_t = np.asarray(phi), np.asarray(phi_t)
        R = self.lambda_max * np.eye(len(phi)) - self.xi_mat
        return float(
            self.lambda_max * np.vdot(phi, phi).real
            - 2.0 * np.real(np.vdot(phi, R @ phi_t))
            + np.vdot(phi_t, R @ phi_t).real
            + 2.0 * np.real(phi @ self.u_vec)
        )


def ris_quadratic_form(ch: ChannelSet, state: BeamformingState, weights) -> RisQuadraticForm:
    """Collect the phase-dependent part of ``Phi`` for fixed F, W, D.

    With ``X = sum_k w_k W_k D_k W_k^H`` and ``H_i = H_bu,i + H_r diag(phi)
    H_ru,i``: the quadratic part is ``phi^H (C o B^T) phi`` with ``C = H_r^H
    X H_r`` and ``B = sum_i H_ru,i F_i F_i^H H_ru,i^H``; the linear part
    collects the direct/reflected cross terms and the signal term.
    """
    L = ch.L
    X = _herm(np.einsum("k,kmd,kde,kne->mn", weights, state.w_c, state.d_weight, state.w_c.conj()))
    C = _herm(ch.h_r.conj().T @ X @ ch.h_r)
    RF = ch.h_ru @ state.f_c  # (K, L, d)
    B = _herm(np.einsum("kld,knd->ln", RF, RF.conj()))
    xi = _herm(C * B.T)
    XHr = X @ ch.h_r
    u = np.zeros(L, dtype=complex)
    for i in range(ch.K):
        BF = ch.h_bu[i] @ state.f_c[i]  # (M, d)
        # diag(H_ru,i F_i F_i^H H_bu,i^H X H_r)
        u += np.einsum("ld,ld->l", RF[i], (BF.conj().T @ XHr).T)
        # diag(w_i H_ru,i F_i D_i W_i^H H_r)
        u -= weights[i] * np.einsum("ld,ld->l", RF[i] @ state.d_weight[i], (state.w_c[i].conj().T @ ch.h_r).T)
    lam = float(np.linalg.eigvalsh(xi)[-1]) if L else 0.0
    return RisQuadraticForm(xi_mat=xi, u_vec=u, lambda_max=max(lam, 0.0))


def ris_mm_step(form: RisQuadraticForm, phi_t) -> np.ndarray:
    """One majorization-minimization step; returns phases in (0, 2 pi]."""
    phi_t = np.asarray(phi_t)
    z = form.lambda_max * phi_t - form.xi_mat @ phi_t - form.u_vec.conj()
    return wrap_phase(np.angle(z))


def ris_mm(form: RisQuadraticForm, theta0, max_iter: int = MM_MAX_ITERS, rtol: float = MM_RTOL,
           history: list | None = None) -> np.ndarray:
    theta = wrap_phase(theta0)
    g = form.value(np.exp(1j * theta))
    if history is not None:
        history.append(g)
    for _ in range(max_iter):
        new = ris_mm_step(form, np.exp(1j * theta))
        g_new = form.value(np.exp(1j * new))
        if g_new > g:  # rounding only; majorization forbids real ascent
            break
        theta, g_old, g = new, g, g_new
        if history is not None:
            history.append(g)
        if g_old - g <= rtol * max(abs(g), 1e-300):
            break
    return theta


# --------------------------------------------------------------------------
# loop


def normalized_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    top = w.max(initial=0.0)
    return w / top if top > 0 else w


def inner_loop(ch: ChannelSet, state: BeamformingState, weights, cfg: SystemConfig, *,
               optimize_theta: bool = True, history: list | None = None,
               warm: dict | None = None) -> BeamformingState:
    """Cycle precoder, decoder/weight, radar filter and phase updates.

    ``weights`` are rescaled to max 1 (the minimizers do not depend on the
    scale). ``history`` receives ``(step name, objective)`` after each block.
    ``warm`` (if a dict) carries precoder-solver multipliers between calls.
    """
    w = normalized_weights(weights)
    state = update_decoders_and_weights(ch, state, cfg)
    if not np.any(w > 0):
        return update_radar_rxs(ch, state, cfg)
    optimize_theta = optimize_theta and ch.L > 0 and np.any(ch.h_r)
    obj = wmmse_objective(ch, state, cfg, w)
    if history is not None:
        history.append(("start", obj))
    y = None if warm is None else warm.get("multipliers")
    for _ in range(cfg.max_iters.inner):
        prev = obj
        f_c, cert = update_precoders(ch, state, w, cfg, y0=y)
        y = cert.multipliers
        if warm is not None:
            warm["multipliers"] = y
        state = state.replace(f_c=f_c)
        if history is not None:
            history.append(("precoder", wmmse_objective(ch, state, cfg, w)))
        state = update_decoders_and_weights(ch, state, cfg)
        if history is not None:
            history.append(("decoder", wmmse_objective(ch, state, cfg, w)))
        state = update_radar_rxs(ch, state, cfg)
        if optimize_theta:
            form = ris_quadratic_form(ch, state, w)
            state = state.replace(theta=ris_mm(form, state.theta))
        obj = wmmse_objective(ch, state, cfg, w)
        if history is not None:
            history.append(("phase", obj))
        # Phi can cross zero; sum(w) is its natural scale (one nat per unit weight).
        if abs(prev - obj) <= cfg.epsilon * max(abs(obj), float(w.sum())):
            break
    return update_decoders_and_weights(ch, state, cfg)


# --------------------------------------------------------------------------
# feasible start


def _complete(state: BeamformingState, ch: ChannelSet, cfg: SystemConfig) -> BeamformingState:
    state = update_radar_rxs(ch, state, cfg)
    return update_decoders_and_weights(ch, state, cfg)


def _dominant_directions(ch: ChannelSet) -> np.ndarray:
    """Unit dominant right singular vector of each ``G_k``, shape (K, N)."""
    out = np.empty((ch.K, ch.N), dtype=complex)
    for k in range(ch.K):
        _, _, vh = np.linalg.svd(ch.g_target[k])
        out[k] = vh[0].conj()
    return out


def _expand(ch: ChannelSet, cfg: SystemConfig, main: np.ndarray, minor: float) -> np.ndarray:
    """Precoders with unit main columns ``main`` carrying ``1 - minor`` of P.

    The remaining ``d - 1`` columns share ``minor`` along an orthonormal
    completion of the main direction.
    """
    K, N, d = ch.K, ch.N, cfg.d
    F = np.zeros((K, N, d), dtype=complex)
    for k in range(K):
        P = cfg.power_budget[k]
        f = main[k] / np.linalg.norm(main[k])
        F[k, :, 0] = np.sqrt(P * (1.0 - minor)) * f
        if d > 1:
            q, _ = np.linalg.qr(np.column_stack([f, np.eye(N)]))
            F[k, :, 1:] = np.sqrt(P * minor / (d - 1)) * q[:, 1:d]
    return F


def _rank1_sinrs(ch: ChannelSet, cfg: SystemConfig, f: np.ndarray, k: int, cand: np.ndarray) -> np.ndarray:
    """MVDR SINR of every UE when UE ``k`` uses each row of ``cand``.

    Rank-1 precoders ``f`` (K, N); the MVDR SINR is ``s^H T^-1 s``. Other
    UEs see the candidate as a rank-1 update of their interference, handled
    with the Sherman-Morrison identity. Returns (len(cand), K).
    """
    K, N = f.shape
    out = np.empty((len(cand), K))
    for j in range(K):
        T = cfg.noise_sense * np.eye(N, dtype=complex)
        for i in range(K):
            if i != j and i != k:
                u = ch.h_uu[j, i] @ f[i]
                T += np.outer(u, u.conj())
        Ti = np.linalg.inv(T)
        if j == k:
            s = cand @ ch.g_target[j].T
            out[:, j] = np.einsum("mi,ij,mj->m", s.conj(), Ti, s).real
        else:
            s = ch.g_target[j] @ f[j]
            ts = Ti @ s
            u = cand @ ch.h_uu[j, k].T
            us = u.conj() @ ts
            uu = np.einsum("mi,mi->m", u.conj(), u @ Ti.T).real
            out[:, j] = np.vdot(s, ts).real - np.abs(us) ** 2 / (1.0 + uu)
    return out


def _search_directions(ch: ChannelSet, cfg: SystemConfig, rng: np.random.Generator,
                       candidates: int = 600, sweeps: int = 20, margin: float = 1.02) -> np.ndarray:
    """Rank-1 precoder directions that clear every SINR threshold.

    Coordinate ascent: each UE in turn picks, among random and locally
    perturbed directions, the one maximizing ``sum_j min(log(g_j / m), 0)``
    (plus a small tie-breaker), where ``m`` is the threshold times
    ``margin``. The capped log keeps satisfied UEs from dominating.
    """
    K, N = ch.K, ch.N
    P = np.asarray(cfg.power_budget, dtype=float)
    target = cfg.sinr_threshold_linear * margin
    f = _dominant_directions(ch) * np.sqrt(P)[:, None]
    half = candidates // 2
    radii = np.repeat([0.5, 0.15, 0.05], -(-half // 3))[:half, None]
    for _ in range(sweeps):
        for k in range(K):
            cur = f[k] / np.sqrt(P[k])
            far = rng.standard_normal((half, N)) + 1j * rng.standard_normal((half, N))
            near = cur + radii * (rng.standard_normal((half, N)) + 1j * rng.standard_normal((half, N)))
            cand = np.vstack([cur, far, near])
            cand *= np.sqrt(P[k]) / np.linalg.norm(cand, axis=1, keepdims=True)
            score = np.log(np.maximum(_rank1_sinrs(ch, cfg, f, k, cand), 1e-300) / target)
            f[k] = cand[np.argmax(np.minimum(score, 0.0).sum(1) + 1e-3 * score.sum(1))]
        if _rank1_sinrs(ch, cfg, f, 0, f[:1])[0].min() >= target:
            break
    return f


def _blank_state(ch, cfg, f_c, theta) -> BeamformingState:
    K = ch.K
    return BeamformingState(
        f_c=f_c,
        w_c=np.zeros((K, ch.M, cfg.d), dtype=complex),
        w_s=np.tile(np.eye(ch.N, 1, dtype=complex)[:, 0], (K, 1)),
        theta=theta,
        d_weight=np.tile(np.eye(cfg.d, dtype=complex), (K, 1, 1)),
        frac_delta=np.ones(K),
        frac_lambda=np.zeros(K),
    )


def is_sensing_feasible(ch, state, cfg) -> np.ndarray:
    return radar_sinrs(ch, state, cfg) >= cfg.sinr_threshold_linear * (1.0 + SINR_SLACK)


def initial_state(ch: ChannelSet, cfg: SystemConfig, rng: np.random.Generator | None = None,
                  theta=None) -> BeamformingState:
    """Feasible start: precoders toward each target, random phases, MVDR filters.

    First try: main stream on the dominant direction of ``G_k`` with 90% of
    the budget. When inter-UE leakage breaks a radar constraint, main
    directions come from a coordinate search on the SINR margins and the
    minor streams are weakened until every constraint holds. Raises
    :class:`InfeasibleScenario` naming the worst UE otherwise.
    """
    if rng is None:
        rng = cfg.streams()["init"]
    if theta is None:
        theta = rng.uniform(0.0, 2.0 * np.pi, size=ch.L)
    theta = wrap_phase(theta)
    check_uplinks(ch, theta)
    state = _complete(_blank_state(ch, cfg, _expand(ch, cfg, _dominant_directions(ch), 0.1), theta), ch, cfg)
    if is_sensing_feasible(ch, state, cfg).all():
        return state
    main = _search_directions(ch, cfg, rng)
    for minor in ((0.0,) if cfg.d == 1 else (1e-2, 1e-4, 1e-6, 1e-8, 1e-10)):
        state = _complete(_blank_state(ch, cfg, _expand(ch, cfg, main, minor), theta), ch, cfg)
        if is_sensing_feasible(ch, state, cfg).all():
            return state
    sinr = radar_sinrs(ch, state, cfg)
    k = int(np.argmin(sinr / cfg.sinr_threshold_linear))
    raise InfeasibleScenario(k, float(sinr[k]), cfg.sinr_threshold_linear)
