import numpy as np
import pytest

from nnmpc.linearize import nominal_model
from nnmpc.mpc import MpcConfig, condense


def closed_form_steady_state():
    """Independent oracle: eliminate cA and cB from the balance equations at
    u = 5; the remaining quadratic 6.5 cC^2 + cC - 6 = 0 has one positive root."""
    cc = (-1.0 + np.sqrt(157.0)) / 13.0
    ca = 1.0 + 1.5 * cc**2
    cb = 5.0 * cc**2
    return np.array([ca, cb, cc])


@pytest.fixture(scope="session")
def model():
    return nominal_model()


@pytest.fixture(scope="session")
def default_cfg():
    return MpcConfig()


@pytest.fixture(scope="session")
def condensed(model, default_cfg):
    return condense(model, default_cfg)


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """Full default pipeline run twice (different worker counts) for the
    end-to-end acceptance checks.  Built once per session."""
    import time
    from nnmpc.cli import main

    root = tmp_path_factory.mktemp("pipeline")
    art = {"dir": root}
    d1, d2 = root / "dataset.csv", root / "dataset_j1.csv"
    m1, m2 = root / "model.json", root / "model_rerun.json"
    r1, r2 = root / "report.json", root / "report_j1.json"

    t0 = time.time()
    assert main(["gen-dataset", "--nk", "10000", "--out", str(d1), "--jobs", "2"]) == 0
    art["t_dataset"] = time.time() - t0
    t0 = time.time()
    assert main(["train", "--dataset", str(d1), "--out", str(m1)]) == 0
    art["t_train"] = time.time() - t0
    t0 = time.time()
    assert main(["evaluate", "--n", "100", "--steps", "100", "--seed", "0",
                 "--model", str(m1), "--out", str(r1), "--jobs", "2"]) == 0
    art["t_evaluate"] = time.time() - t0

    # identical settings, different worker counts / fresh training run
    assert main(["gen-dataset", "--nk", "10000", "--out", str(d2), "--jobs", "1"]) == 0
    assert main(["train", "--dataset", str(d1), "--out", str(m2)]) == 0
    assert main(["evaluate", "--n", "100", "--steps", "100", "--seed", "0",
                 "--model", str(m1), "--out", str(r2), "--jobs", "1"]) == 0

    art.update(dataset=d1, dataset_rerun=d2, model=m1, model_rerun=m2,
               report=r1, report_rerun=r2)
    return art


def report_line(name, ok, detail=""):
    print(f"{name} {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"{name}: {detail}"
