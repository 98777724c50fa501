"""Supervised set for the controller fit: equidistant state grid labeled with
optimal MPC actions."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from .errors import InfeasibleError
from .mpc import CondensedMpc, solve_mpc

CSV_HEADER = "cA,cB,cC,u"


@dataclass
class TrainingSet:
    """Kept samples with their labels plus the indices that were dropped."""

    X: np.ndarray  # (n, 3) states, absolute units
    U: np.ndarray  # (n,) control actions, absolute units
    dropped: list  # grid indices whose MPC problem was infeasible
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return self.X.shape[0]


def generate_grid(bounds, n_k: int):
    """Cartesian grid over the state box with round(n_k^(1/3)) points per axis.

    Axis points are equidistant and include both endpoints; the total count
    is the nearest cube to n_k.  Returns an (m^3, 3) array; the first axis
    varies slowest.
    """
    if n_k < 8:
        raise ValueError(f"need at least 2^3 grid points, got n_k={n_k}")
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    m = int(round(float(np.cbrt(n_k))))
    axes = [np.linspace(lo[i], hi[i], m) for i in range(3)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def _label_one(args):
    idx, x = args
    try:
        return idx, solve_mpc(_worker_mpc, x).u0
    except InfeasibleError:
        return idx, None


def _init_worker(condensed):
    global _worker_mpc
    _worker_mpc = condensed


def label_with_mpc(samples, condensed: CondensedMpc, jobs: int = 1) -> TrainingSet:
    """Solve the MPC at every sample; infeasible points are dropped.

    Labeling is independent per sample (no warm starts), so the result does
    not depend on the worker count.  Raises when more than half the grid is
    infeasible, which indicates misconfigured bounds.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    if jobs > 1:
        with Pool(jobs, initializer=_init_worker, initargs=(condensed,)) as pool:
            results = pool.map(_label_one, ((i, samples[i]) for i in range(n)),
                               chunksize=max(1, n // (8 * jobs)))
    else:
        _init_worker(condensed)
        results = [_label_one((i, samples[i])) for i in range(n)]
    results.sort(key=lambda t: t[0])
    kept = [(i, u) for i, u in results if u is not None]
    dropped = [i for i, u in results if u is None]
    if len(dropped) > n // 2:
        raise InfeasibleError(
            f"{len(dropped)}/{n} grid points infeasible; check state/input bounds")
    X = samples[[i for i, _ in kept]]
    U = np.array([u for _, u in kept])
    meta = {
        "n_requested": n,
        "n_kept": len(kept),
        "bounds": {"x_min": list(condensed.cfg.x_min), "x_max": list(condensed.cfg.x_max)},
        "mpc_config_hash": mpc_config_hash(condensed.cfg),
    }
    return TrainingSet(X=X, U=U, dropped=dropped, metadata=meta)


def mpc_config_hash(cfg) -> str:
    payload = json.dumps({
        "horizon": cfg.horizon, "q": cfg.q, "r": cfg.r,
        "x_min": list(cfg.x_min), "x_max": list(cfg.x_max),
        "u_min": cfg.u_min, "u_max": cfg.u_max}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def split(ts: TrainingSet, validation_fraction: float, seed: int):
    """Seeded shuffle-and-split into disjoint (train, validation) sets."""
    if not 0.0 < validation_fraction <= 0.5:
        raise ValueError(f"validation fraction must be in (0, 0.5], got {validation_fraction}")
    n = len(ts)
    if n == 0:
        raise ValueError("cannot split an empty training set")
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(validation_fraction * n))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    mk = lambda idx: TrainingSet(X=ts.X[idx], U=ts.U[idx], dropped=list(ts.dropped),
                                 metadata=dict(ts.metadata))
    return mk(train_idx), mk(val_idx)


def save_csv(ts: TrainingSet, path):
    """CSV with 17 significant digits plus a JSON metadata sidecar."""
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row, u in zip(ts.X, ts.U):
            fh.write("%.17g,%.17g,%.17g,%.17g\n" % (row[0], row[1], row[2], u))
    with open(sidecar_path(path), "w") as fh:
        json.dump({"metadata": ts.metadata, "dropped": list(ts.dropped)}, fh, indent=1)
        fh.write("\n")


def load_csv(path) -> TrainingSet:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    try:
        with open(sidecar_path(path)) as fh:
            side = json.load(fh)
    except FileNotFoundError:
        side = {"metadata": {}, "dropped": []}
    return TrainingSet(X=data[:, :3], U=data[:, 3], dropped=side["dropped"],
                       metadata=side["metadata"])


def sidecar_path(path):
    return str(path) + ".meta.json"
