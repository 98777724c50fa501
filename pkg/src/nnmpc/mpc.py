"""Condensed MPC: stacked prediction matrices, the QP build, and the
receding-horizon controller.

The regulator works in deviation coordinates around the operating point of
the linear model.  Predicted states are stacked over steps 1..N; the output
cost weighs all of them, state box constraints apply at steps 1..N-1, and
the input bounds apply to every move including the first (the applied action
must be physical).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qp
from .errors import InfeasibleError
from .linearize import LinearModel


@dataclass(frozen=True)
class MpcConfig:
    """Horizon, weights and bounds of the regulator (absolute units)."""

    horizon: int = 50
    q: float = 10.0  # output (c_B deviation) weight
    r: float = 0.15  # input move weight
    x_min: tuple = (0.0, 0.0, 0.0)
    x_max: tuple = (10.0, 14.0, 1.1)
    u_min: float = 0.0
    u_max: float = 10.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.q <= 0 or self.r <= 0:
            raise ValueError("weights q and r must be positive")
        lo, hi = np.asarray(self.x_min, float), np.asarray(self.x_max, float)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(lo >= hi):
            raise ValueError(f"state bounds must satisfy x_min < x_max elementwise, got {self.x_min}, {self.x_max}")
        if self.u_min >= self.u_max:
            raise ValueError(f"input bounds must satisfy u_min < u_max, got [{self.u_min}, {self.u_max}]")

    @classmethod
    def from_dict(cls, d: dict) -> "MpcConfig":
        fields = ("horizon", "q", "r", "x_min", "x_max", "u_min", "u_max")
        extra = set(d) - set(fields)
        if extra:
            raise ValueError(f"unknown mpc parameter(s): {sorted(extra)}")
        kw = {f: d[f] for f in fields if f in d}
        for key in ("x_min", "x_max"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


@dataclass(frozen=True)
class CondensedMpc:
    """Dense QP data for the regulator.

    gamma, phi : stacked free/forced response, x_stack = gamma x0 + phi U
    hessian    : H of 0.5 U'HU + x0'F U
    f_map      : F, so the QP gradient is f = F' x0
    g, w0, e_map : inequality system G U <= w0 + E x0
    """

    model: LinearModel
    cfg: MpcConfig
    gamma: np.ndarray  # (3N, 3)
    phi: np.ndarray  # (3N, N)
    hessian: np.ndarray  # (N, N)
    f_map: np.ndarray  # (3, N)
    g: np.ndarray  # (m, N)
    w0: np.ndarray  # (m,)
    e_map: np.ndarray  # (m, 3)

    @property
    def horizon(self):
        return self.cfg.horizon

    def qp_data(self, x_dev):
        """Gradient and bound vector of the QP at deviation state x_dev."""
        return self.f_map.T @ x_dev, self.w0 + self.e_map @ x_dev

    def shift_active_set(self, active):
        """Map active constraint indices one sampling period into the past.

        Row layout: [u upper (N), u lower (N), x upper (3(N-1)), x lower
        (3(N-1))].  Input rows at step k move to k-1 (k=0 drops out); state
        rows at step k (1..N-1) move to k-1 (k=1 drops out).
        """
        n = self.horizon
        nxc = 3 * (n - 1)
        shifted = []
        for row in active:
            if row < n:  # u <= u_max at step row
                if row >= 1:
                    shifted.append(row - 1)
            elif row < 2 * n:  # u >= u_min
                k = row - n
                if k >= 1:
                    shifted.append(n + k - 1)
            elif row < 2 * n + nxc:  # x upper at step 1 + (row offset)//3
                off = row - 2 * n
                if off >= 3:
                    shifted.append(row - 3)
            else:  # x lower
                off = row - 2 * n - nxc
                if off >= 3:
                    shifted.append(row - 3)
        return shifted


def condense(model: LinearModel, cfg: MpcConfig) -> CondensedMpc:
    """Eliminate the predicted states and build the dense QP matrices."""
    A, B, C = model.A, model.B, model.C
    nx = A.shape[0]
    nu = B.shape[1]
    if nu != 1 or C.shape != (1, nx):
        raise ValueError(f"expected single-input model with row output map, got B {B.shape}, C {C.shape}")
    N = cfg.horizon

    # stacked prediction over steps 1..N: x_stack = gamma x0 + phi U
    gamma = np.zeros((nx * N, nx))
    phi = np.zeros((nx * N, N))
    Ak = np.eye(nx)
    for k in range(N):
        Ak = A @ Ak  # A^(k+1)
        gamma[nx * k:nx * (k + 1)] = Ak
    phi[0:nx, 0] = B[:, 0]
    for k in range(1, N):
        phi[nx * k:nx * (k + 1), 1:] = phi[nx * (k - 1):nx * k, :-1]
        phi[nx * k:nx * (k + 1), 0] = A @ phi[nx * (k - 1):nx * k, 0]

    # output cost on steps 1..N plus input cost on steps 0..N-1
    M = C.T @ (np.atleast_2d(cfg.q)) @ C
    MPhi = np.vstack([M @ phi[nx * k:nx * (k + 1)] for k in range(N)])
    hessian = 2.0 * (phi.T @ MPhi + cfg.r * np.eye(N))
    hessian = 0.5 * (hessian + hessian.T)
    f_map = 2.0 * gamma.T @ MPhi

    # inequalities: inputs at steps 0..N-1, states at steps 1..N-1
    x_lo = np.asarray(cfg.x_min, float) - model.x_s
    x_hi = np.asarray(cfg.x_max, float) - model.x_s
    u_lo = cfg.u_min - model.u_s
    u_hi = cfg.u_max - model.u_s
    phi_c = phi[:nx * (N - 1)]
    gamma_c = gamma[:nx * (N - 1)]
    g = np.vstack([np.eye(N), -np.eye(N), phi_c, -phi_c])
    w0 = np.concatenate([
        np.full(N, u_hi), np.full(N, -u_lo),
        np.tile(x_hi, N - 1), np.tile(-x_lo, N - 1)])
    e_map = np.vstack([
        np.zeros((2 * N, nx)), -gamma_c, gamma_c])

    return CondensedMpc(model=model, cfg=cfg, gamma=gamma, phi=phi,
                        hessian=hessian, f_map=f_map, g=g, w0=w0, e_map=e_map)


@dataclass
class MpcStep:
    """Result of one regulator evaluation."""

    u0: float
    u_sequence: np.ndarray  # absolute units, length N
    solution: qp.QpSolution


def solve_mpc(c: CondensedMpc, x_meas, tol: float = 1e-8,
              warm_active=None) -> MpcStep:
    """Solve the regulator QP at the measured state; returns the applied move.

    Raises InfeasibleError when no input sequence satisfies the constraint
    system from this state.
    """
    x_meas = np.asarray(x_meas, dtype=float)
    if x_meas.shape != (3,) or not np.all(np.isfinite(x_meas)):
        raise ValueError(f"measured state must be a finite 3-vector, got {x_meas!r}")
    x_dev = x_meas - c.model.x_s
    f, w = c.qp_data(x_dev)
    sol = qp.solve(qp.QpProblem(H=c.hessian, f=f, G=c.g, w=w), tol=tol,
                   warm_active=warm_active)
    if sol.status == "infeasible":
        raise InfeasibleError(f"MPC infeasible at state {x_meas.tolist()}",
                              state=x_meas, max_violation=sol.max_violation)
    if sol.status != "optimal":
        raise InfeasibleError(
            f"QP did not reach optimality (status={sol.status}) at state {x_meas.tolist()}",
            state=x_meas, max_violation=sol.max_violation)
    u_seq = sol.z_star + c.model.u_s
    # the QP enforces the bounds up to solver tolerance; snap the remainder
    u_seq = np.clip(u_seq, c.cfg.u_min, c.cfg.u_max)
    u0 = float(u_seq[0])
    assert c.cfg.u_min <= u0 <= c.cfg.u_max
    return MpcStep(u0=u0, u_sequence=u_seq, solution=sol)


class MpcController:
    """Receding-horizon controller: measure, solve, apply the first move.

    Each solve is warm-started from the previous active set shifted by one
    sampling period.  One instance per closed-loop run (the warm-start state
    is per-instance); the underlying CondensedMpc is immutable and shared.
    """

    tag = "mpc"

    def __init__(self, condensed: CondensedMpc, tol: float = 1e-8):
        self.condensed = condensed
        self.tol = tol
        self._warm = None
        self.solve_count = 0
        self.iteration_count = 0

    def reset(self):
        self._warm = None

    def step(self, x_meas) -> float:
        result = solve_mpc(self.condensed, x_meas, tol=self.tol, warm_active=self._warm)
        self._warm = self.condensed.shift_active_set(result.solution.active_set)
        self.solve_count += 1
        self.iteration_count += result.solution.iterations
        return result.u0
