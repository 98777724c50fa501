"""Closed-loop simulation against the nonlinear plant, the squared-deviation
performance criterion, and the batch suboptimality study comparing the
network controller with the exact MPC."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from .errors import ConvergenceError, InfeasibleError
from .mlp import Mlp, NeuralController
from .mpc import CondensedMpc, MpcController, MpcConfig, solve_mpc
from .plant import PlantParams, integrate_hold

# below this closed-loop cost a run is treated as the at-equilibrium special
# case (the suboptimality ratio is undefined and reported as 0%)
EQUILIBRIUM_COST_FLOOR = 1e-9


@dataclass(frozen=True)
class DisturbanceSpec:
    """Additive offset applied to the actual c_B at one trigger step."""

    offset_cB: float = -0.5
    step: int = 50

    @classmethod
    def from_dict(cls, d):
        if d is None:
            return None
        extra = set(d) - {"offset_cB", "step"}
        if extra:
            raise ValueError(f"unknown disturbance field(s): {sorted(extra)}")
        return cls(**{k: d[k] for k in ("offset_cB", "step") if k in d})


@dataclass
class SimResult:
    times: np.ndarray  # (steps+1,) sampling instants [s]
    states: np.ndarray  # (steps+1, 3)
    inputs: np.ndarray  # (steps,)
    controller: str
    state_violations: np.ndarray  # (3,) counts of states outside their box
    input_violations: int
    aborted: bool = False
    abort_step: int | None = None


def simulate(controller, x0, steps, *, plant: PlantParams, cfg: MpcConfig,
             ts: float = 0.1, substeps: int = 10,
             disturbance: DisturbanceSpec | None = None) -> SimResult:
    """Run the measure -> control -> hold-input loop on the nonlinear plant.

    The input is held constant over each sampling period and the plant is
    integrated with RK4 substeps.  MPC infeasibility mid-run yields a result
    flagged as aborted with the trajectory up to that point.
    """
    x0 = np.asarray(x0, dtype=float)
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    lo, hi = np.asarray(cfg.x_min, float), np.asarray(cfg.x_max, float)
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError(f"initial state {x0.tolist()} outside the state box")
    controller.reset()
    states = np.empty((steps + 1, 3))
    inputs = np.empty(steps)
    states[0] = x0
    x = x0.copy()
    aborted = False
    abort_step = None
    k = 0
    for k in range(steps):
        if disturbance is not None and k == disturbance.step:
            x = x.copy()
            x[1] += disturbance.offset_cB
            states[k] = x
        try:
            u = controller.step(x)
        except InfeasibleError:
            aborted = True
            abort_step = k
            break
        inputs[k] = u
        x = integrate_hold(x, u, ts, substeps, plant)
        states[k + 1] = x
    n_done = k if aborted else steps
    states = states[:n_done + 1]
    inputs = inputs[:n_done]
    sv = np.sum((states < lo) | (states > hi), axis=0)
    iv = int(np.sum((inputs < cfg.u_min) | (inputs > cfg.u_max)))
    return SimResult(times=np.arange(n_done + 1) * ts, states=states, inputs=inputs,
                     controller=getattr(controller, "tag", "unknown"),
                     state_violations=sv, input_violations=iv,
                     aborted=aborted, abort_step=abort_step)


def performance_index(result: SimResult, x_target) -> float:
    """Sum of squared Euclidean deviations from the target over all recorded
    sampling instants."""
    dev = result.states - np.asarray(x_target, dtype=float)
    return float(np.sum(np.sum(dev * dev, axis=1)))


def suboptimality_pct(j_nn: float, j_mpc: float) -> float:
    """Percent increase of the surrogate cost over the MPC cost (may be negative)."""
    if j_mpc == 0.0:
        raise ZeroDivisionError("suboptimality undefined for j_mpc = 0 (equilibrium case)")
    return 100.0 * (j_nn - j_mpc) / j_mpc


def save_trajectory_csv(result: SimResult, path):
    with open(path, "w") as fh:
        fh.write("t,cA,cB,cC,u,controller\n")
        for i, t in enumerate(result.times):
            u = "%.17g" % result.inputs[i] if i < len(result.inputs) else ""
            fh.write("%.17g,%.17g,%.17g,%.17g,%s,%s\n" % (
                t, result.states[i, 0], result.states[i, 1], result.states[i, 2],
                u, result.controller))


@dataclass
class EvalReport:
    runs: list
    aggregate: dict
    settings: dict

    def to_dict(self):
        return {"settings": self.settings, "aggregate": self.aggregate, "runs": self.runs}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


_EVAL_CTX = {}


def _init_eval_worker(condensed, mlp_dict, plant, steps, disturbance, x_target,
                      seed, x0_list):
    from .mlp import mlp_from_dict
    _EVAL_CTX["condensed"] = condensed
    _EVAL_CTX["mlp"] = mlp_from_dict(mlp_dict)
    _EVAL_CTX["plant"] = plant
    _EVAL_CTX["steps"] = steps
    _EVAL_CTX["disturbance"] = disturbance
    _EVAL_CTX["x_target"] = x_target
    _EVAL_CTX["seed"] = seed
    _EVAL_CTX["x0_list"] = x0_list


def _draw_feasible_x0(rng, condensed, max_tries=100):
    lo = np.asarray(condensed.cfg.x_min, float)
    hi = np.asarray(condensed.cfg.x_max, float)
    for _ in range(max_tries):
        x0 = rng.uniform(lo, hi)
        try:
            solve_mpc(condensed, x0)
            return x0
        except InfeasibleError:
            continue
    raise ConvergenceError(f"no MPC-feasible initial state found in {max_tries} draws")


def _evaluate_one(run_idx):
    condensed = _EVAL_CTX["condensed"]
    plant = _EVAL_CTX["plant"]
    steps = _EVAL_CTX["steps"]
    dist = _EVAL_CTX["disturbance"]
    x_target = _EVAL_CTX["x_target"]
    x0_list = _EVAL_CTX["x0_list"]
    if x0_list is not None and run_idx < len(x0_list):
        x0 = np.asarray(x0_list[run_idx], dtype=float)
    else:
        rng = np.random.default_rng([_EVAL_CTX["seed"], run_idx])
        x0 = _draw_feasible_x0(rng, condensed)
    mpc_res = simulate(MpcController(condensed), x0, steps, plant=plant,
                       cfg=condensed.cfg, ts=condensed.model.ts, disturbance=dist)
    nn_ctrl = NeuralController(_EVAL_CTX["mlp"], condensed.cfg.u_min, condensed.cfg.u_max)
    nn_res = simulate(nn_ctrl, x0, steps, plant=plant, cfg=condensed.cfg,
                      ts=condensed.model.ts, disturbance=dist)
    entry = {"run": run_idx, "x0": x0.tolist(), "aborted": mpc_res.aborted}
    if mpc_res.aborted:
        return entry
    j_mpc = performance_index(mpc_res, x_target)
    j_nn = performance_index(nn_res, x_target)
    equilibrium = j_mpc <= EQUILIBRIUM_COST_FLOOR
    pct = 0.0 if equilibrium else suboptimality_pct(j_nn, j_mpc)
    entry.update({
        "j_mpc": j_mpc, "j_nn": j_nn, "suboptimality_pct": pct,
        "equilibrium": equilibrium,
        "nn_input_violations": nn_res.input_violations,
        "mpc_input_violations": mpc_res.input_violations,
        "final_cB_mpc": float(mpc_res.states[-1, 1]),
        "final_cB_nn": float(nn_res.states[-1, 1]),
    })
    return entry


def batch_evaluate(n_sims: int, steps: int, seed: int, condensed: CondensedMpc,
                   mlp: Mlp, plant: PlantParams, x_target,
                   disturbance: DisturbanceSpec | None = None,
                   jobs: int = 1, x0_list=None) -> EvalReport:
    """Run both controllers from n_sims seeded initial states and aggregate
    the suboptimality statistics.

    Initial states are drawn uniformly from the state box with an MPC
    feasibility pre-check (infeasible draws are redrawn); x0_list pins them
    explicitly instead.  Each run derives its RNG from (seed, run index), so
    the report is byte-identical across repeats and worker counts.
    """
    from .mlp import mlp_to_dict

    init_args = (condensed, mlp_to_dict(mlp), plant, steps, disturbance,
                 np.asarray(x_target, dtype=float), seed, x0_list)
    if jobs > 1:
        with Pool(jobs, initializer=_init_eval_worker, initargs=init_args) as pool:
            runs = pool.map(_evaluate_one, range(n_sims), chunksize=1)
    else:
        _init_eval_worker(*init_args)
        runs = [_evaluate_one(i) for i in range(n_sims)]
    runs.sort(key=lambda e: e["run"])

    included = [e for e in runs if not e["aborted"]]
    pcts = np.array([e["suboptimality_pct"] for e in included])
    aggregate = {
        "n_runs": n_sims,
        "excluded_runs": n_sims - len(included),
        "worst_pct": float(np.max(pcts)) if pcts.size else None,
        "median_pct": float(np.median(pcts)) if pcts.size else None,
        "frac_under_1pct": float(np.mean(pcts < 1.0)) if pcts.size else None,
        "frac_under_5pct": float(np.mean(pcts < 5.0)) if pcts.size else None,
        "total_nn_input_violations": int(sum(e["nn_input_violations"] for e in included)),
    }
    settings = {
        "n_sims": n_sims, "steps": steps, "seed": seed,
        "disturbance": None if disturbance is None else
            {"offset_cB": disturbance.offset_cB, "step": disturbance.step},
        "x_target": np.asarray(x_target, dtype=float).tolist(),
        "ts": condensed.model.ts,
    }
    return EvalReport(runs=runs, aggregate=aggregate, settings=settings)
