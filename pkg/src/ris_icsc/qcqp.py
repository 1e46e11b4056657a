"""Small convex QCQP over blocks of complex matrices.

Problem::

    min   sum_i tr(X_i^H A_i X_i) - 2 Re tr(B_i^H X_i)
    s.t.  tr(X_i^H X_i) <= P_i                                  (power caps)
          sum_i tr(X_i^H Q_ji X_i) - 2 Re tr(L_ji^H X_i) + c_j <= 0   (rows j)

with every ``A_i`` and ``Q_ji`` Hermitian PSD. Complex gradients follow the
conjugate-coordinate (Wirtinger) convention: for ``f(X) = tr(X^H A X) -
2 Re tr(B^H X)`` the gradient is ``A X - B``.

Method: Lagrangian duality. For multipliers ``y >= 0`` the Lagrangian has the
closed-form minimizer ``X_i(y) = M_i^-1 N_i`` with ``M_i = A_i + sum_j y_j
Q_ji`` and ``N_i = B_i + sum_j y_j L_ji``; the dual is concave with explicit
gradient (the constraint values at ``X(y)``) and Hessian, so a projected
Newton ascent over the handful of multipliers converges in a few steps. The
primal point is then moved along the segment from the feasible start, which
keeps feasibility and never increases the objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class QuadConstraint:
    """One row: ``sum_i tr(X_i^H Q_i X_i) - 2 Re tr(L_i^H X_i) + const <= 0``.

    ``quad`` and ``lin`` map block index to matrix; absent blocks are zero.
    """

    quad: dict[int, np.ndarray] = field(default_factory=dict)
    lin: dict[int, np.ndarray] = field(default_factory=dict)
    const: float = 0.0

    def value(self, X) -> float:
        v = self.const
        for i, Q in self.quad.items():
            v += np.vdot(X[i], Q @ X[i]).real
        for i, L in self.lin.items():
            v -= 2.0 * np.vdot(L, X[i]).real
        return float(v)


@dataclass
class ConvexQuadraticProgram:
    a: list[np.ndarray]
    b: list[np.ndarray]
    power_caps: np.ndarray | None = None
    constraints: list[QuadConstraint] = field(default_factory=list)

    def objective(self, X) -> float:
        return float(sum(np.vdot(x, A @ x).real - 2.0 * np.vdot(B, x).real for x, A, B in zip(X, self.a, self.b)))

    def rows(self) -> list[QuadConstraint]:
        """All rows, power caps first."""
        out = []
        if self.power_caps is not None:
            for i, P in enumerate(self.power_caps):
                n = self.a[i].shape[0]
                out.append(QuadConstraint(quad={i: np.eye(n)}, const=-float(P)))
        return out + list(self.constraints)

    def violation(self, X) -> np.ndarray:
        return np.array([r.value(X) for r in self.rows()])


@dataclass
class Certificate:
    kkt_residual: float
    iterations: int
    converged: bool
    multipliers: np.ndarray
    step: float  # fraction of the way from the start to the dual minimizer


class _Scaled:
    """Program with variables scaled to the unit ball and rows normalized."""

    def __init__(self, qp: ConvexQuadraticProgram, scale: np.ndarray):
        self.s = scale
        rows = qp.rows()
        self.nblocks = len(qp.a)
        self.A = [qp.a[i] * scale[i] ** 2 for i in range(self.nblocks)]
        self.B = [qp.b[i] * scale[i] for i in range(self.nblocks)]
        obj_norm = max(max(np.linalg.norm(A, 2) + 2 * np.linalg.norm(B) for A, B in zip(self.A, self.B)), 1e-300)
        self.obj_norm = obj_norm
        self.A = [0.5 * (A + A.conj().T) / obj_norm for A in self.A]
        self.B = [B / obj_norm for B in self.B]
        self.Q, self.L, self.c = [], [], []
        for r in rows:
            Q = {i: m * scale[i] ** 2 for i, m in r.quad.items()}
            L = {i: m * scale[i] for i, m in r.lin.items()}
            n = max(abs(r.const), sum(np.linalg.norm(m, 2) for m in Q.values()) + 2 * sum(np.linalg.norm(m) for m in L.values()))
            n = n if n > 0 else 1.0
            self.Q.append({i: 0.5 * (m + m.conj().T) / n for i, m in Q.items()})
            self.L.append({i: m / n for i, m in L.items()})
            self.c.append(r.const / n)
        self.c = np.array(self.c)
        self.m = len(self.c)
        self.ridge = 1e-13

    def primal(self, y):
        X, Minv = [], []
        for i in range(self.nblocks):
            n = self.A[i].shape[0]
            M = self.A[i] + self.ridge * np.eye(n)
            N = self.B[i].copy()
            for j in range(self.m):
                if y[j] == 0:
                    continue
                if i in self.Q[j]:
                    M = M + y[j] * self.Q[j][i]
                if i in self.L[j]:
                    N = N + y[j] * self.L[j][i]
            Mi = np.linalg.inv(M)
            X.append(Mi @ N)
            Minv.append(Mi)
        return X, Minv

    def row_values(self, X) -> np.ndarray:
        out = self.c.copy()
        for j in range(self.m):
            for i, Q in self.Q[j].items():
                out[j] += np.vdot(X[i], Q @ X[i]).real
            for i, L in self.L[j].items():
                out[j] -= 2.0 * np.vdot(L, X[i]).real
        return out

    def objective(self, X) -> float:
        return float(sum(np.vdot(x, A @ x).real - 2.0 * np.vdot(B, x).real for x, A, B in zip(X, self.A, self.B)))

    def dual(self, y):
        X, Minv = self.primal(y)
        g = self.row_values(X)
        val = self.objective(X) + float(y @ g)
        # Hessian: -2 Re sum_i tr(G_li^H M_i^-1 G_ji), G_ji = Q_ji X_i - L_ji.
        G = [[None] * self.nblocks for _ in range(self.m)]
        for j in range(self.m):
            for i in range(self.nblocks):
                t = None
                if i in self.Q[j]:
                    t = self.Q[j][i] @ X[i]
                if i in self.L[j]:
                    t = -self.L[j][i] if t is None else t - self.L[j][i]
                G[j][i] = t
        H = np.zeros((self.m, self.m))
        for i in range(self.nblocks):
            MG = [None if G[j][i] is None else Minv[i] @ G[j][i] for j in range(self.m)]
            for j in range(self.m):
                if G[j][i] is None:
                    continue
                for l in range(j, self.m):
                    if MG[l] is None:
                        continue
                    h = -2.0 * np.vdot(G[j][i], MG[l]).real
                    H[j, l] += h
                    if l != j:
                        H[l, j] += h
        return val, g, H, X

    def stationarity(self, X, y) -> float:
        r = 0.0
        for i in range(self.nblocks):
            grad = self.A[i] @ X[i] - self.B[i]
            for j in range(self.m):
                if i in self.Q[j]:
                    grad = grad + y[j] * (self.Q[j][i] @ X[i])
                if i in self.L[j]:
                    grad = grad - y[j] * self.L[j][i]
            r = max(r, float(np.linalg.norm(grad)))
        return r


def _segment_limit(q: np.ndarray, lin: np.ndarray, c0: np.ndarray) -> float:
    """Largest t in [0, 1] with ``q t^2 + lin t + c0 <= 0`` for every row."""
    t_max = 1.0
    for a, b, c in zip(q, lin, c0):
        if a + b + c <= 0:
            continue
        if a <= 1e-300:
            t = -c / b if b > 0 else 1.0
        else:
            disc = max(b * b - 4 * a * c, 0.0)
            t = (-b + np.sqrt(disc)) / (2 * a)
        t_max = min(t_max, max(t, 0.0))
    return t_max


def solve(qp: ConvexQuadraticProgram, start, tol: float = 1e-7, max_iter: int = 10_000, y0=None):
    """Solve ``qp`` from a feasible ``start``.

    ``y0`` optionally warm-starts the (normalized-row) multipliers, e.g.
    with ``Certificate.multipliers`` from a nearby program.

    Returns ``(X, Certificate)``. The point is feasible whenever ``start``
    is and its objective never exceeds the start's. The KKT residual is the
    max of the stationarity norm, complementary slackness and primal
    violation, all in normalized units.
    """
    X0 = [np.asarray(x, dtype=complex) for x in start]
    nb = len(qp.a)
    if len(X0) != nb:
        raise ValueError(f"start has {len(X0)} blocks, program has {nb}")
    if qp.power_caps is not None:
        scale = np.sqrt(np.maximum(np.asarray(qp.power_caps, dtype=float), 1e-300))
    else:
        scale = np.array([max(np.linalg.norm(x), 1.0) for x in X0])
    sp = _Scaled(qp, scale)
    Z0 = [x / s for x, s in zip(X0, scale)]

    y = np.zeros(sp.m)
    if y0 is not None and np.shape(y0) == (sp.m,) and np.all(np.isfinite(y0)):
        y = np.maximum(np.asarray(y0, dtype=float), 0.0)
    elif qp.power_caps is not None:
        y[: nb] = 1.0
    val, g, H, Z = sp.dual(y)
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        pg = np.where(y > 0, g, np.maximum(g, 0.0))
        if np.max(np.abs(pg), initial=0.0) <= 0.1 * tol and np.max(np.abs(y * g), initial=0.0) <= 0.1 * tol:
            converged = True
            break
        free = (y > 0) | (g > 0)
        step = np.zeros(sp.m)
        if free.any():
            Hf = -H[np.ix_(free, free)]
            Hf = Hf + 1e-14 * (np.trace(Hf) + 1.0) * np.eye(Hf.shape[0])
            try:
                step[free] = np.linalg.solve(Hf, g[free])
            except np.linalg.LinAlgError:
                step[free] = g[free]
        alpha = 1.0
        improved = False
        for _ in range(60):
            y_new = np.maximum(y + alpha * step, 0.0)
            v_new, g_new, H_new, Z_new = sp.dual(y_new)
            if v_new >= val + 1e-4 * float(g @ (y_new - y)) - 1e-15 * abs(val):
                improved = True
                break
            alpha *= 0.5
        if not improved:
            # Newton direction failed; try a projected gradient step.
            y_new = np.maximum(y + 1e-3 * g, 0.0)
            v_new, g_new, H_new, Z_new = sp.dual(y_new)
            if v_new < val:
                break
        if np.allclose(y_new, y, rtol=1e-15, atol=1e-300):
            y, val, g, H, Z = y_new, v_new, g_new, H_new, Z_new
            converged = np.max(np.where(y > 0, np.abs(g), np.maximum(g, 0.0)), initial=0.0) <= tol
            break
        y, val, g, H, Z = y_new, v_new, g_new, H_new, Z_new

    # Move from the start towards Z along the segment, staying feasible.
    D = [z - z0 for z, z0 in zip(Z, Z0)]
    c0 = sp.row_values(Z0)
    qa = np.zeros(sp.m)
    qb = np.zeros(sp.m)
    for j in range(sp.m):
        for i, Q in sp.Q[j].items():
            qa[j] += np.vdot(D[i], Q @ D[i]).real
            qb[j] += 2.0 * np.vdot(D[i], Q @ Z0[i]).real
        for i, L in sp.L[j].items():
            qb[j] -= 2.0 * np.vdot(L, D[i]).real
    t_max = _segment_limit(qa, qb, np.minimum(c0, 0.0))
    oa = sum(np.vdot(d, A @ d).real for d, A in zip(D, sp.A))
    ob = sum(2.0 * np.vdot(d, A @ z0).real - 2.0 * np.vdot(B, d).real for d, z0, A, B in zip(D, Z0, sp.A, sp.B))
    t = t_max
    if oa > 0:
        t = min(max(-ob / (2 * oa), 0.0), t_max)
    elif ob > 0:
        t = 0.0
    Zt = [z0 + t * d for z0, d in zip(Z0, D)]
    if sp.objective(Zt) > sp.objective(Z0):
        Zt, t = Z0, 0.0

    rows = sp.row_values(Zt)
    resid = max(
        sp.stationarity(Zt, y),
        float(np.max(np.abs(y * rows), initial=0.0)),
        float(np.max(np.maximum(rows, 0.0), initial=0.0)),
    )
    X = [z * s for z, s in zip(Zt, scale)]
    return X, Certificate(kkt_residual=resid, iterations=it, converged=bool(converged and resid <= tol),
                          multipliers=y, step=float(t))
