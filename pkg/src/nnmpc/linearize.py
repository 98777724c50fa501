"""Analytic linearization of the reactor and zero-order-hold discretization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericsError
from .plant import PlantParams, find_steady_state

DEFAULT_TS = 0.1  # controller sampling period [s]


@dataclass(frozen=True)
class ContinuousLinearModel:
    """xdot = Ac (x - x_s) + Bc (u - u_s) around the operating point."""

    Ac: np.ndarray  # (3, 3)
    Bc: np.ndarray  # (3, 1)
    x_s: np.ndarray  # (3,)
    u_s: float


@dataclass(frozen=True)
class LinearModel:
    """Discrete model in deviation coordinates, sampled with period ts."""

    A: np.ndarray  # (3, 3)
    B: np.ndarray  # (3, 1)
    C: np.ndarray  # (1, 3)
    D: np.ndarray  # (1, 1)
    ts: float
    x_s: np.ndarray
    u_s: float


def jacobian(x, u, p: PlantParams = PlantParams()) -> ContinuousLinearModel:
    """State/input Jacobians of the reactor balances at (x, u).

    The feed of C enters the third balance linearly with unit coefficient,
    so Bc is (0, 0, 1)^T at every point.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (3,) or not np.all(np.isfinite(x)) or not np.isfinite(u):
        raise ValueError(f"jacobian needs a finite 3-state and finite input, got x={x!r}, u={u!r}")
    fv = p.F / p.V
    cC = x[2]
    Ac = np.array([
        [-p.k1 - fv, 0.0, 2.0 * p.k2 * cC],
        [0.0, -fv, 2.0 * p.k3 * cC],
        [p.k1, 0.0, -fv - 2.0 * (p.k2 + p.k3) * cC],
    ])
    Bc = np.array([[0.0], [0.0], [1.0]])
    return ContinuousLinearModel(Ac=Ac, Bc=Bc, x_s=x.copy(), u_s=float(u))


def expm_taylor(M, tol=1e-12):
    """Matrix exponential by scaling-and-squaring with a truncated Taylor series.

    Scales M by 2^-s until its infinity norm is below 0.5, sums the series
    until the term norm falls below tol, then squares s times.
    """
    M = np.asarray(M, dtype=float)
    norm = np.linalg.norm(M, np.inf)
    s = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0)
    Ms = M / (2.0**s)
    n = M.shape[0]
    E = np.eye(n)
    term = np.eye(n)
    for k in range(1, 60):
        term = term @ Ms / k
        E = E + term
        if np.linalg.norm(term, np.inf) < tol:
            break
    for _ in range(s):
        E = E @ E
    return E


def discretize_zoh(m: ContinuousLinearModel, ts: float = DEFAULT_TS) -> LinearModel:
    """Exact zero-order-hold discretization via the augmented matrix exponential.

    exp([[Ac, Bc], [0, 0]] * ts) carries A in the upper-left block and
    B = int_0^ts exp(Ac tau) dtau Bc in the upper-right block.
    """
    if ts <= 0:
        raise ValueError(f"sampling period must be positive, got {ts}")
    n = m.Ac.shape[0]
    nu = m.Bc.shape[1]
    aug = np.zeros((n + nu, n + nu))
    aug[:n, :n] = m.Ac * ts
    aug[:n, n:] = m.Bc * ts
    E = expm_taylor(aug)
    A = E[:n, :n]
    B = E[:n, n:]
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise NumericsError(f"matrix exponential produced non-finite entries for ts={ts}")
    C = np.array([[0.0, 1.0, 0.0]])  # measured output: c_B deviation
    D = np.zeros((1, 1))
    return LinearModel(A=A, B=B, C=C, D=D, ts=ts, x_s=m.x_s.copy(), u_s=m.u_s)


def nominal_model(p: PlantParams = PlantParams(), u_s: float = 5.0,
                  ts: float = DEFAULT_TS, x_s=None) -> LinearModel:
    """Discrete model at the operating point: computed steady state by default."""
    if x_s is None:
        x_s = find_steady_state(u_s, p=p)
    return discretize_zoh(jacobian(x_s, u_s, p), ts)
