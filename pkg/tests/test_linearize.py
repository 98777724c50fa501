import numpy as np
import pytest
from scipy.linalg import expm as scipy_expm

from nnmpc.linearize import (ContinuousLinearModel, discretize_zoh, expm_taylor,
                             jacobian, nominal_model)
from nnmpc.plant import PlantParams, find_steady_state, rhs

from conftest import closed_form_steady_state


def fd_jacobian(x, u, h=1e-6):
    """Central finite differences of the plant right-hand side."""
    J = np.zeros((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        J[:, j] = (rhs(x + e, u) - rhs(x - e, u)) / (2.0 * h)
    return J


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


def test_jacobian_third_column_vanishes_at_zero_cc():
    m = jacobian(np.array([1.0, 2.0, 0.0]), 3.0)
    assert m.Ac[0, 2] == 0.0
    assert m.Ac[1, 2] == 0.0


def test_input_jacobian_is_unit_third_axis_everywhere():
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.uniform([0, 0, 0], [10, 14, 1.1])
        m = jacobian(x, rng.uniform(0, 10))
        assert np.array_equal(m.Bc, np.array([[0.0], [0.0], [1.0]]))


def test_jacobian_at_steady_state_matches_analytic_and_fd():
    x_s = closed_form_steady_state()
    m = jacobian(x_s, 5.0)
    cc = x_s[2]
    expected = np.array([
        [-2.0, 0.0, 6.0 * cc],
        [0.0, -1.0, 10.0 * cc],
        [1.0, 0.0, -1.0 - 16.0 * cc],
    ])
    assert np.max(np.abs(m.Ac - expected)) < 1e-12
    assert np.max(rel_err(m.Ac, fd_jacobian(x_s, 5.0))) < 1e-6


def test_jacobian_matches_fd_at_random_points():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = rng.uniform([0, 0, 0], [10, 14, 1.1])
        u = rng.uniform(0, 10)
        m = jacobian(x, u)
        assert np.max(rel_err(m.Ac, fd_jacobian(x, u))) < 1e-6


def test_expm_taylor_against_scipy():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = rng.integers(1, 6)
        M = rng.standard_normal((n, n)) * rng.uniform(0.1, 3.0)
        assert np.max(np.abs(expm_taylor(M) - scipy_expm(M))) < 1e-11


def test_discretize_zero_dynamics():
    m = ContinuousLinearModel(Ac=np.zeros((3, 3)), Bc=np.array([[0.0], [0.0], [1.0]]),
                              x_s=np.zeros(3), u_s=0.0)
    d = discretize_zoh(m, 0.1)
    assert np.allclose(d.A, np.eye(3), atol=1e-15)
    assert np.allclose(d.B, [[0.0], [0.0], [0.1]], atol=1e-15)


def test_discretize_matches_full_exponential_oracle():
    x_s = find_steady_state(5.0)
    cont = jacobian(x_s, 5.0)
    d = discretize_zoh(cont, 0.1)
    aug = np.zeros((4, 4))
    aug[:3, :3] = cont.Ac * 0.1
    aug[:3, 3:] = cont.Bc * 0.1
    ref = scipy_expm(aug)
    assert np.max(np.abs(d.A - ref[:3, :3])) < 1e-12
    assert np.max(np.abs(d.B - ref[:3, 3:])) < 1e-12
    # the c_B diagonal decouples: exact one-state exponential
    assert abs(d.A[1, 1] - np.exp(-0.1)) < 1e-12


def test_discretize_matches_benchmark_model_constants():
    d = nominal_model()
    A_ref = np.array([[0.83, 0.0, 0.24], [0.03, 0.90, 0.43], [0.05, 0.0, 0.23]])
    B_ref = np.array([[0.02], [0.03], [0.05]])
    assert np.max(np.abs(d.A - A_ref)) < 0.02
    assert np.max(np.abs(d.B - B_ref)) < 0.02
    assert np.array_equal(d.C, np.array([[0.0, 1.0, 0.0]]))
    assert np.array_equal(d.D, np.zeros((1, 1)))


def test_semigroup_property():
    cont = jacobian(find_steady_state(5.0), 5.0)
    d1 = discretize_zoh(cont, 0.1)
    d2 = discretize_zoh(cont, 0.2)
    assert np.max(np.abs(d2.A - d1.A @ d1.A)) < 1e-9
    assert np.max(np.abs(d2.B - (d1.A + np.eye(3)) @ d1.B)) < 1e-9


def test_nominal_spectral_radius_below_one(model):
    assert np.max(np.abs(np.linalg.eigvals(model.A))) < 1.0


def test_discretize_rejects_bad_ts():
    cont = jacobian(np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        discretize_zoh(cont, 0.0)


def test_forward_euler_cross_check_at_tiny_step():
    # e^(Ac h) ~ I + Ac h for small h
    cont = jacobian(find_steady_state(5.0), 5.0)
    d = discretize_zoh(cont, 1e-6)
    assert np.max(np.abs(d.A - (np.eye(3) + cont.Ac * 1e-6))) < 1e-9
