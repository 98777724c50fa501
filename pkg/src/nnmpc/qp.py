"""Dense convex QP solver: dual active-set method with KKT certificates.

Solves   min_z  0.5 z'Hz + f'z   s.t.  Gz <= w   for H symmetric positive
definite.  The iteration starts at the unconstrained minimizer (which is
dual feasible), repeatedly picks the most violated constraint, and moves
it into the active set, dropping blocking constraints whose multipliers
would turn negative.  Every intermediate point solves the equality-
constrained subproblem of its active set, so on termination the KKT
conditions hold to linear-solve accuracy and an infeasible problem is
detected exactly (the dual becomes unbounded).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

# treat directional curvature above -CURV_EPS as zero (constraint normal
# linearly dependent on the active set) and multiplier rates above -DUAL_EPS
# as non-blocking
CURV_EPS = 1e-13
DUAL_EPS = 1e-12


@dataclass(frozen=True)
class QpProblem:
    """0.5 z'Hz + f'z subject to Gz <= w."""

    H: np.ndarray
    f: np.ndarray
    G: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        f = np.asarray(self.f, dtype=float).ravel()
        n = f.size
        G = np.asarray(self.G, dtype=float).reshape(-1, n) if np.size(self.G) else np.zeros((0, n))
        w = np.asarray(self.w, dtype=float).ravel()
        if H.shape != (n, n):
            raise ValueError(f"H must be ({n},{n}) to match f, got {H.shape}")
        if np.max(np.abs(H - H.T), initial=0.0) > 1e-10:
            raise ValueError("H must be symmetric within 1e-10")
        if G.shape[0] != w.size:
            raise ValueError(f"G has {G.shape[0]} rows but w has {w.size} entries")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "w", w)

    @property
    def n(self):
        return self.f.size

    @property
    def m(self):
        return self.w.size


@dataclass(frozen=True)
class KktResiduals:
    stationarity: float
    primal: float
    complementarity: float

    def max(self):
        return max(self.stationarity, self.primal, self.complementarity)


@dataclass(frozen=True)
class QpSolution:
    z_star: np.ndarray
    lam: np.ndarray
    objective: float
    status: str  # "optimal" | "infeasible" | "iteration-limit"
    kkt_residuals: KktResiduals
    iterations: int
    active_set: tuple
    max_violation: float  # primal infeasibility certificate when status != optimal


def _residuals(p: QpProblem, z, lam) -> KktResiduals:
    grad = p.H @ z + p.f
    if p.m:
        grad = grad + p.G.T @ lam
        slack = p.G @ z - p.w
        primal = float(np.max(np.maximum(slack, 0.0), initial=0.0))
        comp = float(np.max(np.abs(lam * slack), initial=0.0))
    else:
        primal = 0.0
        comp = 0.0
    return KktResiduals(float(np.max(np.abs(grad))), primal, comp)


class _Workspace:
    """Per-call state: Cholesky of H plus KKT solves for an active set."""

    def __init__(self, p: QpProblem):
        try:
            self.cho = cho_factor(p.H, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ValueError("Hessian is not positive definite") from exc
        self.p = p

    def solve_h(self, b):
        return cho_solve(self.cho, b)

    def kkt(self, active, r1, r2):
        """Solve [[H, Ga'], [Ga, 0]] (a, b) = (r1, r2) for the active rows."""
        hinv_r1 = self.solve_h(r1)
        if not active:
            return hinv_r1, np.zeros(0)
        Ga = self.p.G[active]
        hinv_gt = self.solve_h(Ga.T)
        S = Ga @ hinv_gt
        b = np.linalg.solve(S, Ga @ hinv_r1 - r2)
        a = hinv_r1 - hinv_gt @ b
        return a, b

    def independent_subset(self, rows):
        """Greedily keep rows whose normals stay independent in the H-metric."""
        kept = []
        for r in rows:
            trial = kept + [int(r)]
            Ga = self.p.G[trial]
            S = Ga @ self.solve_h(Ga.T)
            try:
                L = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                continue
            if np.min(np.diag(L)) < 1e-10:
                continue
            kept = trial
            if len(kept) == self.p.n:
                break
        return kept


def solve(p: QpProblem, tol: float = 1e-8, max_iter: int | None = None,
          warm_active=None) -> QpSolution:
    """Solve the QP; returns a QpSolution with KKT residual certificates.

    warm_active : optional iterable of constraint indices used to seed the
    active set (e.g. from the previous receding-horizon step).  The result
    is independent of the seed; only the iteration count changes.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    ws = _Workspace(p)  # raises before iterating when H is not PD
    if max_iter is None:
        max_iter = 10 * (p.n + p.m)

    iters = 0
    active: list[int] = []
    lam_a: list[float] = []

    def finish(z, status):
        lam = np.zeros(p.m)
        for idx, val in zip(active, lam_a):
            lam[idx] = max(val, 0.0)
        slack = p.G @ z - p.w if p.m else np.zeros(0)
        maxv = float(np.max(slack, initial=0.0))
        return QpSolution(
            z_star=z, lam=lam, objective=float(0.5 * z @ (p.H @ z) + p.f @ z),
            status=status, kkt_residuals=_residuals(p, z, lam),
            iterations=iters, active_set=tuple(active), max_violation=maxv)

    # dual-feasible start: unconstrained minimizer, empty active set
    z = ws.solve_h(-p.f)
    iters += 1

    if warm_active is not None and p.m:
        seed = [i for i in warm_active if 0 <= i < p.m]
        active = ws.independent_subset(seed)
        if active:
            z, lam_vec = ws.kkt(active, -p.f, p.w[active])
            iters += 1
            lam_a = list(lam_vec)
            # restore dual feasibility: drop most negative multiplier until clean
            while lam_a and min(lam_a) < -tol:
                k = int(np.argmin(lam_a))
                active.pop(k)
                lam_a.pop(k)
                if active:
                    z, lam_vec = ws.kkt(active, -p.f, p.w[active])
                    lam_a = list(lam_vec)
                else:
                    z = ws.solve_h(-p.f)
                    lam_a = []
                iters += 1

    if p.m == 0:
        return finish(z, "optimal")

    while True:
        slack = p.G @ z - p.w
        pidx = int(np.argmax(slack))
        if slack[pidx] <= tol:
            return finish(z, "optimal")
        gp = p.G[pidx]
        t_acc = 0.0
        while True:
            if iters >= max_iter:
                return finish(z, "iteration-limit")
            zdot, lamdot = ws.kkt(active, -gp, np.zeros(len(active)))
            iters += 1
            curvature = float(gp @ zdot)  # equals -zdot'H zdot <= 0
            v = float(gp @ z - p.w[pidx])
            t_full = -v / curvature if curvature < -CURV_EPS else np.inf
            t_dual = np.inf
            kdrop = -1
            for j, (lj, dj) in enumerate(zip(lam_a, lamdot)):
                if dj < -DUAL_EPS:
                    tj = -lj / dj
                    if tj < t_dual:
                        t_dual = tj
                        kdrop = j
            if not np.isfinite(t_full) and not np.isfinite(t_dual):
                return finish(z, "infeasible")
            t = min(t_full, t_dual)
            z = z + t * zdot
            lam_a = [lj + t * dj for lj, dj in zip(lam_a, lamdot)]
            t_acc += t
            if t_dual < t_full:
                active.pop(kdrop)
                lam_a.pop(kdrop)
                continue
            active.append(pidx)
            lam_a.append(t_acc)
            break
