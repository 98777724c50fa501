"""Acceptance suite: runs every gate at its pinned tolerance and prints one
pass/fail line per criterion (use pytest -s to see them live)."""

import json
import time

import numpy as np
import pytest

from nnmpc import qp
from nnmpc.dataset import load_csv
from nnmpc.harness import DisturbanceSpec, batch_evaluate
from nnmpc.linearize import nominal_model
from nnmpc.mlp import (AffineScaler, Mlp, NeuralController, TrainConfig, _pack,
                       _unpack, activation, fit_mlp, forward_batch, init_mlp,
                       loss_and_gradient)
from nnmpc.mpc import MpcConfig, condense, solve_mpc
from nnmpc.plant import PlantParams, find_steady_state, rhs
from nnmpc.selftest import run_qp_selftest

from conftest import closed_form_steady_state, report_line
from test_mpc import recursion_qp

BENCH_SS = np.array([2.18, 3.93, 0.87])
BENCH_A = np.array([[0.83, 0.0, 0.24], [0.03, 0.90, 0.43], [0.05, 0.0, 0.23]])
BENCH_B = np.array([[0.02], [0.03], [0.05]])


def test_a1_steady_state():
    t0 = time.time()
    x_s = find_steady_state(5.0)
    elapsed = time.time() - t0
    residual = np.max(np.abs(rhs(x_s, 5.0)))
    component_gap = np.max(np.abs(x_s - BENCH_SS))
    ok = residual < 1e-10 and component_gap < 0.02 and elapsed < 1.0
    report_line("A1 steady-state", ok,
                f"(residual {residual:.2e}, gap {component_gap:.4f}, {elapsed:.3f}s)")


def test_a2_discretization():
    t0 = time.time()
    model = nominal_model(ts=0.1)
    elapsed = time.time() - t0
    gap_a = np.max(np.abs(model.A - BENCH_A))
    gap_b = np.max(np.abs(model.B - BENCH_B))
    ok = gap_a <= 0.02 and gap_b <= 0.02 and elapsed < 1.0
    report_line("A2 discretization", ok,
                f"(max|dA| {gap_a:.4f}, max|dB| {gap_b:.4f}, {elapsed:.3f}s)")


def test_a3_qp_correctness():
    t0 = time.time()
    summary = run_qp_selftest(n_problems=50, seed=0, tol=1e-8, obj_tol=1e-6)
    elapsed = time.time() - t0
    ok = summary["failed"] == 0 and elapsed < 30.0
    report_line("A3 qp-correctness", ok,
                f"({summary['passed']}/50 vs oracle, {elapsed:.2f}s)")


def test_a4_mpc_sanity(model, condensed):
    u0 = solve_mpc(condensed, model.x_s).u0
    eq_ok = abs(u0 - 5.0) < 1e-6

    rng = np.random.default_rng(3)
    oracle_gap = 0.0
    for N in (2, 3, 5):
        cfg = MpcConfig(horizon=N)
        c = condense(model, cfg)
        for _ in range(4):
            x = model.x_s + rng.uniform(-0.8, 0.8, size=3)
            f, w = c.qp_data(x - model.x_s)
            mine = qp.solve(qp.QpProblem(H=c.hessian, f=f, G=c.g, w=w))
            oracle = qp.solve(recursion_qp(model, cfg, x - model.x_s))
            oracle_gap = max(oracle_gap, np.max(np.abs(mine.z_star - oracle.z_star)))
    oracle_ok = oracle_gap < 1e-7

    c1 = condense(model, MpcConfig(horizon=20))
    c2 = condense(model, MpcConfig(horizon=20, q=10.0 * 7.7, r=0.15 * 7.7))
    scale_gap = 0.0
    for _ in range(5):
        x = rng.uniform([0, 0, 0], [10, 14, 1.1])
        scale_gap = max(scale_gap, np.max(np.abs(
            solve_mpc(c1, x).u_sequence - solve_mpc(c2, x).u_sequence)))
    scale_ok = scale_gap < 1e-6

    ok = eq_ok and oracle_ok and scale_ok
    report_line("A4 mpc-sanity", ok,
                f"(u0(x_s)={u0:.8f}, oracle gap {oracle_gap:.2e}, scaling gap {scale_gap:.2e})")


def test_a5_nn_math():
    ins = AffineScaler.from_bounds(np.zeros(3), np.array([10.0, 14.0, 1.1]))
    outs = AffineScaler.from_bounds(0.0, 10.0)

    worst_rel = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        m = init_mlp(rng, ins, outs)
        X = rng.uniform([0, 0, 0], [10, 14, 1.1], size=(10, 3))
        U = rng.uniform(0, 10, size=10)
        _, grads = loss_and_gradient(m, X, U)
        flat = _pack(grads[0::2], grads[1::2])
        theta = _pack(m.weights, m.biases)

        def loss_at(t):
            w, b = _unpack(t, m.layer_sizes)
            return loss_and_gradient(Mlp(weights=w, biases=b, input_scaler=ins,
                                         output_scaler=outs), X, U)[0]

        h = 1e-6
        for i in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += h
            tm[i] -= h
            fd = (loss_at(tp) - loss_at(tm)) / (2.0 * h)
            worst_rel = max(worst_rel, abs(fd - flat[i]) / max(1.0, abs(fd), abs(flat[i])))
    grad_ok = worst_rel < 1e-6

    z = np.linspace(-30.0, 30.0, 6001)
    ident_gap = np.max(np.abs(activation(1.0, z) + np.tanh(z / 2.0)))
    ident_ok = ident_gap < 1e-12

    rng = np.random.default_rng(7)
    teacher = init_mlp(rng, ins, outs)
    for w in teacher.weights:
        w *= 2.0
    X = rng.uniform([0, 0, 0], [10, 14, 1.1], size=(2500, 3))
    X_hold = rng.uniform([0, 0, 0], [10, 14, 1.1], size=(500, 3))
    student, _ = fit_mlp(X, forward_batch(teacher, X),
                         TrainConfig(max_epochs=300, seed=3), ins, outs)
    rmse = np.sqrt(np.mean(
        ((forward_batch(student, X_hold) - forward_batch(teacher, X_hold)) / 5.0) ** 2))
    teach_ok = rmse < 1e-3

    ok = grad_ok and ident_ok and teach_ok
    report_line("A5 nn-math", ok,
                f"(fd rel {worst_rel:.2e}, identity {ident_gap:.2e}, teacher rmse {rmse:.2e})")


def test_a6_end_to_end_study(pipeline, model, condensed):
    with open(pipeline["report"]) as fh:
        report = json.load(fh)
    agg = report["aggregate"]
    frac5_ok = agg["frac_under_5pct"] >= 0.90
    median_ok = agg["median_pct"] < 2.0
    clamp_ok = agg["total_nn_input_violations"] == 0

    trained = Mlp.load(pipeline["model"])
    rmse = np.sqrt(trained.metadata["best_val_loss"] / trained.metadata["n_val"])
    rmse_ok = rmse < 0.02
    at_ss = trained.forward(model.x_s)
    ss_ok = abs(at_ss - 5.0) < 0.25

    # stored labels reproduce when re-solved through the MPC
    ds = load_csv(pipeline["dataset"])
    rng = np.random.default_rng(0)
    rows = rng.choice(len(ds.U), size=100, replace=False)
    label_gap = max(abs(solve_mpc(condensed, ds.X[i]).u0 - ds.U[i]) for i in rows)
    label_ok = label_gap < 1e-8

    budget_ok = (pipeline["t_dataset"] <= 900.0 and pipeline["t_train"] <= 300.0
                 and pipeline["t_evaluate"] <= 300.0)

    ok = frac5_ok and median_ok and clamp_ok and rmse_ok and ss_ok and label_ok and budget_ok
    report_line(
        "A6 end-to-end", ok,
        f"(<5%: {agg['frac_under_5pct']:.2f}, median {agg['median_pct']:.3f}%, "
        f"nn clamp viol {agg['total_nn_input_violations']}, val rmse {rmse:.4f}, "
        f"u(x_s)={at_ss:.3f}, label gap {label_gap:.1e}, "
        f"times {pipeline['t_dataset']:.0f}/{pipeline['t_train']:.0f}/{pipeline['t_evaluate']:.0f}s)")


def test_a7_determinism(pipeline):
    ds_ok = pipeline["dataset"].read_bytes() == pipeline["dataset_rerun"].read_bytes()
    model_ok = pipeline["model"].read_bytes() == pipeline["model_rerun"].read_bytes()
    rep_ok = pipeline["report"].read_bytes() == pipeline["report_rerun"].read_bytes()
    ok = ds_ok and model_ok and rep_ok
    report_line("A7 determinism", ok,
                f"(dataset {ds_ok}, model {model_ok}, report {rep_ok})")


def test_a8_disturbance_rejection(pipeline, model, condensed):
    trained = Mlp.load(pipeline["model"])
    rep = batch_evaluate(50, 100, 42, condensed, trained, PlantParams(), model.x_s,
                         disturbance=DisturbanceSpec(offset_cB=-0.5, step=50), jobs=2)
    runs = [e for e in rep.runs if not e["aborted"]]
    mpc_back = np.mean([abs(e["final_cB_mpc"] - 3.933) < 0.05 for e in runs])
    nn_back = np.mean([abs(e["final_cB_nn"] - 3.933) < 0.05 for e in runs])
    ok = len(runs) == 50 and mpc_back >= 0.95 and nn_back >= 0.95
    report_line("A8 disturbance-rejection", ok,
                f"(mpc {mpc_back:.2f}, nn {nn_back:.2f}, runs {len(runs)}/50)")
