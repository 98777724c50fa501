"""Nonlinear CSTR model: species balances, RK4 integration, steady-state solve.

The reactor runs the reversible dimerization A <=> 2C with the side reaction
2C -> B in a constant-volume stirred tank.  States are the three
concentrations (c_A, c_B, c_C) in mol/m^3; the manipulated variable is the
molar feed rate of component C in mol/s.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError

STATE_NAMES = ("cA", "cB", "cC")


@dataclass(frozen=True)
class PlantParams:
    """Rate constants and flow data of the benchmark reactor."""

    k1: float = 1.0  # A -> 2C forward rate [m^3/(mol s)]
    k2: float = 3.0  # 2C -> A back reaction [m^3/(mol s)]
    k3: float = 5.0  # 2C -> B [m^3/(mol s)]
    F: float = 3.0  # volumetric flow [m^3/s]
    V: float = 3.0  # reactor volume [m^3]
    cA_feed: float = 2.0  # feed concentration of A [mol/m^3]

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "F", "V", "cA_feed"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"plant parameter {name} must be strictly positive, got {value!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "PlantParams":
        known = {f: d[f] for f in ("k1", "k2", "k3", "F", "V", "cA_feed") if f in d}
        extra = set(d) - {"k1", "k2", "k3", "F", "V", "cA_feed"}
        if extra:
            raise ValueError(f"unknown plant parameter(s): {sorted(extra)}")
        return cls(**known)


def rhs(x, u, p: PlantParams = PlantParams()):
    """Time derivatives of the three concentrations.

    x : array-like (3,)      concentrations [mol/m^3]
    u : float                molar feed of C [mol/s]
    Returns ndarray (3,) in mol/(m^3 s).
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (3,) or not np.all(np.isfinite(x)) or not np.isfinite(u):
        raise ValueError(f"rhs needs a finite 3-state and finite input, got x={x!r}, u={u!r}")
    cA, cB, cC = x
    fv = p.F / p.V
    return np.array([
        -p.k1 * cA + fv * (p.cA_feed - cA) + p.k2 * cC**2,
        -fv * cB + p.k3 * cC**2,
        p.k1 * cA - fv * cC - (p.k2 + p.k3) * cC**2 + u,
    ])


def step_rk4(x, u, dt, p: PlantParams = PlantParams()):
    """One classical RK4 step with the input held constant over dt."""
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    x = np.asarray(x, dtype=float)
    if dt == 0.0:
        return x.copy()
    k1 = rhs(x, u, p)
    k2 = rhs(x + 0.5 * dt * k1, u, p)
    k3 = rhs(x + 0.5 * dt * k2, u, p)
    k4 = rhs(x + dt * k3, u, p)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_hold(x, u, dt, substeps, p: PlantParams = PlantParams()):
    """Advance the plant by dt under a zero-order-held input, RK4 substeps."""
    h = dt / substeps
    for _ in range(substeps):
        x = step_rk4(x, u, h, p)
    return x


def find_steady_state(u_s, guess=(2.0, 4.0, 1.0), p: PlantParams = PlantParams(),
                      tol=1e-10, max_iter=100):
    """Newton solve of rhs(x, u_s) = 0 using the analytic state Jacobian.

    Raises ConvergenceError if the infinity-norm residual does not drop
    below tol within max_iter iterations.
    """
    # local import: linearize depends on this module for types
    from .linearize import jacobian

    x = np.asarray(guess, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"steady-state guess must be finite, got {guess!r}")
    for _ in range(max_iter):
        r = rhs(x, u_s, p)
        if np.max(np.abs(r)) < tol:
            return x
        J = jacobian(x, u_s, p).Ac
        try:
            x = x - np.linalg.solve(J, r)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Jacobian during steady-state solve at x={x}") from exc
        if not np.all(np.isfinite(x)):
            raise ConvergenceError(f"steady-state iteration diverged for u_s={u_s}")
    raise ConvergenceError(
        f"steady state did not converge in {max_iter} iterations (u_s={u_s}, residual="
        f"{np.max(np.abs(rhs(x, u_s, p)))})")
