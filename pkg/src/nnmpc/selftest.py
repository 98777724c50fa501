"""Randomized QP self-check against a projected-gradient oracle.

The oracle is deliberately primitive: plain projected gradient descent on
box-constrained problems, run until the iterates stop moving.  It shares no
code with the active-set solver, so agreement certifies both.
"""

from __future__ import annotations

import numpy as np

from .qp import QpProblem, solve


def random_box_problem(rng, n_max=6):
    """Random strictly convex QP with box constraints (contains interior points)."""
    n = int(rng.integers(1, n_max + 1))
    # controlled conditioning: eigenvalues in [0.5, 5]
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = rng.uniform(0.5, 5.0, size=n)
    H = Q @ np.diag(eigs) @ Q.T
    H = 0.5 * (H + H.T)
    f = rng.uniform(-5.0, 5.0, size=n)
    center = rng.uniform(-2.0, 2.0, size=n)
    half = rng.uniform(0.5, 3.0, size=n)
    lo, hi = center - half, center + half
    G = np.vstack([np.eye(n), -np.eye(n)])
    w = np.concatenate([hi, -lo])
    return QpProblem(H=H, f=f, G=G, w=w), lo, hi


def projected_gradient(H, f, lo, hi, max_iter=1_000_000, stall_tol=1e-15):
    """Box-QP minimizer by projected gradient with fixed step 1/L."""
    L = float(np.max(np.linalg.eigvalsh(H)))
    z = np.clip(np.zeros_like(f), lo, hi)
    step = 1.0 / L
    for _ in range(max_iter):
        z_next = np.clip(z - step * (H @ z + f), lo, hi)
        if np.max(np.abs(z_next - z)) < stall_tol:
            return z_next
        z = z_next
    return z


def run_qp_selftest(n_problems=50, seed=0, tol=1e-8, obj_tol=1e-6):
    """Solve random box QPs both ways; returns a pass/fail summary dict."""
    rng = np.random.default_rng(seed)
    passed = 0
    failures = []
    for i in range(n_problems):
        prob, lo, hi = random_box_problem(rng)
        sol = solve(prob, tol=tol)
        z_ref = projected_gradient(prob.H, prob.f, lo, hi)
        obj_ref = float(0.5 * z_ref @ (prob.H @ z_ref) + prob.f @ z_ref)
        obj_gap = abs(sol.objective - obj_ref)
        kkt_max = sol.kkt_residuals.max()
        if sol.status == "optimal" and obj_gap < obj_tol and kkt_max < tol:
            passed += 1
        else:
            failures.append({"problem": i, "status": sol.status,
                             "objective_gap": obj_gap, "kkt_max": kkt_max})
    return {"n_problems": n_problems, "passed": passed,
            "failed": n_problems - passed, "failures": failures}
