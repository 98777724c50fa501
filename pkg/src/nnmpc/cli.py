"""Command-line pipeline: steady state, linearization, dataset generation,
training, single-step queries, closed-loop simulation and the batch study.

Every subcommand prints a JSON summary to stdout.  Exit codes: 0 success,
1 domain error (infeasibility, divergence), 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import dataset as ds
from . import harness, mlp as nn, mpc as mpc_mod
from .config import AppConfig, load_config
from .errors import ConfigError, NnmpcError
from .linearize import discretize_zoh, jacobian, nominal_model
from .plant import find_steady_state, rhs
from .selftest import run_qp_selftest


def _emit(obj):
    json.dump(obj, sys.stdout, indent=1)
    sys.stdout.write("\n")


def _parse_state(text):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"state must be three comma-separated numbers, got {text!r}")
    return np.array(parts)


def _steady_state(cfg: AppConfig, args):
    x_s = find_steady_state(cfg.u_s, p=cfg.plant)
    residual = float(np.max(np.abs(rhs(x_s, cfg.u_s, cfg.plant))))
    _emit({"x_s": x_s.tolist(), "u_s": cfg.u_s, "residual_inf_norm": residual})
    return 0


def _linearize(cfg: AppConfig, args):
    ts = args.ts if args.ts is not None else cfg.ts
    x_s = find_steady_state(cfg.u_s, p=cfg.plant)
    cont = jacobian(x_s, cfg.u_s, cfg.plant)
    disc = discretize_zoh(cont, ts)
    _emit({
        "x_s": x_s.tolist(), "u_s": cfg.u_s, "ts": ts,
        "Ac": cont.Ac.tolist(), "Bc": cont.Bc.tolist(),
        "A": disc.A.tolist(), "B": disc.B.tolist(), "C": disc.C.tolist(),
    })
    return 0


def _gen_dataset(cfg: AppConfig, args):
    model = nominal_model(cfg.plant, cfg.u_s, cfg.ts)
    condensed = mpc_mod.condense(model, cfg.mpc)
    grid = ds.generate_grid((cfg.mpc.x_min, cfg.mpc.x_max), args.nk)
    training = ds.label_with_mpc(grid, condensed, jobs=args.jobs)
    out = args.out or cfg.io.dataset
    ds.save_csv(training, out)
    _emit({"dataset": out, "n_grid": int(grid.shape[0]), "n_kept": len(training),
           "n_dropped": len(training.dropped)})
    return 0


def _train(cfg: AppConfig, args):
    training = ds.load_csv(args.dataset or cfg.io.dataset)
    train_cfg = cfg.train if args.seed is None else \
        nn.TrainConfig(max_epochs=cfg.train.max_epochs, loss_tolerance=cfg.train.loss_tolerance,
                       damping=cfg.train.damping, validation_fraction=cfg.train.validation_fraction,
                       seed=args.seed)
    model, history = nn.train(training, train_cfg,
                              input_bounds=(cfg.mpc.x_min, cfg.mpc.x_max),
                              output_bounds=(cfg.mpc.u_min, cfg.mpc.u_max))
    out = args.out or cfg.io.model
    model.save(out)
    _emit({"model": out, "epochs_run": model.metadata["epochs_run"],
           "final_train_loss": model.metadata["final_train_loss"],
           "best_val_loss": model.metadata["best_val_loss"],
           "best_epoch": model.metadata["best_epoch"]})
    return 0


def _eval_latency(fn, repeats=50):
    """Median wall-clock time of one controller evaluation, in microseconds."""
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return 1e6 * sorted(samples)[repeats // 2]


def _mpc_step(cfg: AppConfig, args):
    model = nominal_model(cfg.plant, cfg.u_s, cfg.ts)
    condensed = mpc_mod.condense(model, cfg.mpc)
    x = _parse_state(args.state)
    result = mpc_mod.solve_mpc(condensed, x)
    sol = result.solution
    _emit({"u0": result.u0, "status": sol.status, "iterations": sol.iterations,
           "objective": sol.objective,
           "kkt_residuals": {"stationarity": sol.kkt_residuals.stationarity,
                             "primal": sol.kkt_residuals.primal,
                             "complementarity": sol.kkt_residuals.complementarity},
           "eval_latency_us": _eval_latency(lambda: mpc_mod.solve_mpc(condensed, x))})
    return 0


def _nn_step(cfg: AppConfig, args):
    model = nn.Mlp.load(args.model or cfg.io.model)
    ctrl = nn.NeuralController(model, cfg.mpc.u_min, cfg.mpc.u_max)
    x = _parse_state(args.state)
    _emit({"u0": ctrl.step(x), "raw": model.forward(x),
           "eval_latency_us": _eval_latency(lambda: ctrl.step(x))})
    return 0


def _simulate(cfg: AppConfig, args):
    model = nominal_model(cfg.plant, cfg.u_s, cfg.ts)
    condensed = mpc_mod.condense(model, cfg.mpc)
    if args.controller == "mpc":
        controller = mpc_mod.MpcController(condensed)
    else:
        controller = nn.NeuralController(nn.Mlp.load(args.model or cfg.io.model),
                                         cfg.mpc.u_min, cfg.mpc.u_max)
    x0 = _parse_state(args.x0) if args.x0 else model.x_s
    steps = args.steps or cfg.harness.steps
    dist = cfg.harness.disturbance if args.disturb else None
    result = harness.simulate(controller, x0, steps, plant=cfg.plant, cfg=cfg.mpc,
                              ts=cfg.ts, disturbance=dist)
    out = args.out or cfg.io.trajectory
    harness.save_trajectory_csv(result, out)
    j = harness.performance_index(result, model.x_s)
    _emit({"trajectory": out, "controller": result.controller, "steps": len(result.inputs),
           "aborted": result.aborted, "performance_index": j,
           "final_state": result.states[-1].tolist(),
           "input_violations": result.input_violations,
           "state_violations": result.state_violations.tolist()})
    return 0


def _evaluate(cfg: AppConfig, args):
    model = nominal_model(cfg.plant, cfg.u_s, cfg.ts)
    condensed = mpc_mod.condense(model, cfg.mpc)
    trained = nn.Mlp.load(args.model or cfg.io.model)
    seed = args.seed if args.seed is not None else cfg.seed
    dist = cfg.harness.disturbance if args.disturb else None
    report = harness.batch_evaluate(
        args.n, args.steps or cfg.harness.steps, seed, condensed, trained,
        cfg.plant, model.x_s, disturbance=dist, jobs=args.jobs)
    out = args.out or cfg.io.report
    report.save(out)
    _emit({"report": out, **report.aggregate})
    return 0


def _qp_selftest(cfg: AppConfig, args):
    summary = run_qp_selftest(n_problems=args.n, seed=args.seed or 0)
    _emit(summary)
    return 0 if summary["failed"] == 0 else 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")

    parser = argparse.ArgumentParser(
        prog="nnmpc",
        description="MPC for a three-species reactor, distilled into a neural controller")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("steady-state", parents=[common],
                   help="solve and print the operating point")

    p = sub.add_parser("linearize", parents=[common],
                       help="print the continuous and discretized model")
    p.add_argument("--ts", type=float, default=None, help="sampling period [s]")

    p = sub.add_parser("gen-dataset", parents=[common],
                       help="grid the state box and label with MPC actions")
    p.add_argument("--nk", type=int, default=10000, help="requested number of grid points")
    p.add_argument("--out", help="output CSV path")

    p = sub.add_parser("train", parents=[common],
                       help="fit the network controller to a dataset")
    p.add_argument("--dataset", help="input CSV path")
    p.add_argument("--out", help="output model JSON path")

    p = sub.add_parser("mpc-step", parents=[common],
                       help="one MPC evaluation at a given state")
    p.add_argument("--state", required=True, help="cA,cB,cC")

    p = sub.add_parser("nn-step", parents=[common],
                       help="one network evaluation at a given state")
    p.add_argument("--state", required=True, help="cA,cB,cC")
    p.add_argument("--model", help="model JSON path")

    p = sub.add_parser("simulate", parents=[common],
                       help="closed-loop run on the nonlinear plant")
    p.add_argument("--controller", choices=["mpc", "nn"], default="mpc")
    p.add_argument("--x0", help="initial state cA,cB,cC (default: steady state)")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--model", help="model JSON path (nn controller)")
    p.add_argument("--out", help="trajectory CSV path")
    p.add_argument("--disturb", action="store_true", help="apply the configured disturbance")

    p = sub.add_parser("evaluate", parents=[common],
                       help="batch suboptimality study of NN vs MPC")
    p.add_argument("--n", type=int, default=600, help="number of simulations")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--model", help="model JSON path")
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--disturb", action="store_true", help="apply the configured disturbance")

    p = sub.add_parser("qp-selftest", parents=[common],
                       help="random QP suite vs the projected-gradient oracle")
    p.add_argument("--n", type=int, default=50)
    return parser


_COMMANDS = {
    "steady-state": _steady_state,
    "linearize": _linearize,
    "gen-dataset": _gen_dataset,
    "train": _train,
    "mpc-step": _mpc_step,
    "nn-step": _nn_step,
    "simulate": _simulate,
    "evaluate": _evaluate,
    "qp-selftest": _qp_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        _emit({"error": "config", "message": str(exc)})
        return 2
    try:
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        _emit({"error": "config", "message": str(exc)})
        return 2
    except (ValueError, FileNotFoundError) as exc:
        _emit({"error": "usage", "message": str(exc)})
        return 2
    except NnmpcError as exc:
        _emit({"error": type(exc).__name__, "message": str(exc)})
        return 1


if __name__ == "__main__":
    sys.exit(main())
