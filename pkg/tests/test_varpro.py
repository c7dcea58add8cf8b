import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specdmd.errors import DivergentBasisError, ValidationError
from specdmd.gridstore import SnapshotMatrix, TimeGrid
from specdmd.model import multiset_distance
from specdmd.varpro import (EigConstraint, VarProOptions, eval_basis, project_eigs,
                            solve_varpro, varpro_jacobian, varpro_residual)

LHP = EigConstraint.LEFT_HALF_PLANE
IMAG = EigConstraint.IMAGINARY_AXIS
FREE = EigConstraint.UNCONSTRAINED


def test_eval_basis_examples():
    np.testing.assert_array_equal(eval_basis([0], [0, 1, 2]), np.ones((3, 1)))
    np.testing.assert_allclose(eval_basis([1j * np.pi], [0, 1]).ravel(), [1, -1], atol=1e-15)
    alpha, t = [-1, 2j], [0, 0.5, 1.0]
    T = eval_basis(alpha, t)
    for k, tk in enumerate(t):
        for j, a in enumerate(alpha):
            assert T[k, j] == pytest.approx(np.exp(a * tk), abs=1e-15)


def test_eval_basis_overflow():
    with pytest.raises(DivergentBasisError):
        eval_basis([1.0], [0, 800])


def test_project_examples():
    assert project_eigs([0.5 + 2j], LHP)[0] == 2j
    assert project_eigs([-0.3 + 1j], LHP)[0] == -0.3 + 1j
    assert project_eigs([-0.3 + 1j], IMAG)[0] == 1j
    assert project_eigs([0.7 - 1j], FREE)[0] == 0.7 - 1j
    assert EigConstraint.parse("LeftHalfPlane") is LHP


def test_options_validation():
    with pytest.raises(ValidationError):
        VarProOptions(lm_scale_up=0.9)
    with pytest.raises(ValidationError):
        VarProOptions(residual_tol=0)


def test_single_decaying_exponential():
    t = np.round(np.arange(0, 2.0001, 0.1), 12)
    X = np.exp(-t)[None, :]
    alpha, B, info = solve_varpro(X, t, [-0.5], FREE)
    assert abs(alpha[0] + 1) < 1e-6
    assert abs(B[0, 0] - 1) < 1e-6
    assert info.converged


def _pair_data(t, seed=0):
    rng = np.random.default_rng(seed)
    w = np.array([-0.1 + 2j * np.pi, -0.1 - 2j * np.pi])
    b = rng.standard_normal((3,)) + 1j * rng.standard_normal(3)
    # real data: second mode is the conjugate of the first
    X = 2 * np.real(np.outer(b, np.exp(w[0] * t)))
    return X, w


def test_planted_pair_nonuniform():
    rng = np.random.default_rng(11)
    t = np.sort(rng.uniform(0, 3, 20))
    X, w = _pair_data(t)
    alpha, _, info = solve_varpro(X, t, w * 1.1, FREE)
    assert multiset_distance(alpha, w) < 1e-4
    assert info.converged


def test_lhp_clamps_growing_mode():
    t = np.linspace(0, 3, 40)
    w = np.array([0.2 + 1j, 0.2 - 1j])
    X = 2 * np.real(np.outer([1.0, 0.5 - 0.2j], np.exp(w[0] * t)))
    a_free, _, i_free = solve_varpro(X, t, w * 0.9, FREE)
    a_lhp, _, i_lhp = solve_varpro(X, t, w * 0.9, LHP)
    assert np.all(a_lhp.real <= 0)
    assert i_lhp.final_relative_residual > i_free.final_relative_residual
    assert i_lhp.constraint_active_count >= 1


def _small_instance(seed):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(1, 5), rng.integers(8, 31)
    r = min(rng.integers(1, 4), n)
    t = np.sort(rng.uniform(0, 2, m))
    X = rng.standard_normal((n, m))
    alpha = rng.uniform(-1, 0.3, r) + 1j * rng.uniform(-4, 4, r)
    return X, t, alpha


def _fd_jacobian(alpha, t, X, h=1e-6):
    cols = []
    for part in (1.0, 1j):
        for j in range(alpha.size):
            e = np.zeros(alpha.size, dtype=complex)
            e[j] = part * h
            d = (varpro_residual(alpha + e, t, X) - varpro_residual(alpha - e, t, X)) / (2 * h)
            cols.append(np.concatenate([d.real.ravel(), d.imag.ravel()]))
    return np.stack(cols, axis=1)


@pytest.mark.parametrize("seed", range(10))
def test_jacobian_matches_finite_differences(seed):
    X, t, alpha = _small_instance(seed)
    J = varpro_jacobian(alpha, t, X)
    F = _fd_jacobian(alpha, t, X)
    err = np.linalg.norm(J - F, axis=0) / np.maximum(np.linalg.norm(F, axis=0), 1e-12)
    assert err.max() < 1e-4


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([FREE, LHP, IMAG]))
def test_feasible_and_monotone(seed, c):
    X, t, alpha0 = _small_instance(seed)
    alpha, B, info = solve_varpro(X, t, alpha0, c, VarProOptions(max_outer_iters=40))
    np.testing.assert_array_equal(project_eigs(alpha, c), alpha)
    h = np.array(info.residual_history)
    assert np.all(np.diff(h) <= 0)
    assert info.iterations <= 40
    assert B.shape == (alpha.size, X.shape[0])


def test_imaginary_axis_has_zero_real_part():
    t = np.linspace(0, 2, 50)
    X, w = _pair_data(t, seed=4)
    alpha, _, info = solve_varpro(X, t, w, IMAG)
    assert np.all(alpha.real == 0)
    assert info.constraint_active_count == 2


def test_uniform_and_jittered_grids_agree():
    rng = np.random.default_rng(5)
    tu = np.linspace(0, 3, 20)
    tj = np.sort(tu + rng.uniform(-0.04, 0.04, 20))
    Xu, w = _pair_data(tu)
    Xj, _ = _pair_data(tj)
    au, _, _ = solve_varpro(Xu, tu, w * 1.05, FREE)
    aj, _, _ = solve_varpro(Xj, tj, w * 1.05, FREE)
    assert multiset_distance(au, aj) < 1e-3


def test_iteration_cap_reports_nonconvergence():
    X, t, alpha0 = _small_instance(2)
    _, _, info = solve_varpro(X, t, alpha0, FREE,
                              VarProOptions(max_outer_iters=1, residual_tol=1e-300,
                                            step_tol=1e-300))
    assert not info.converged
    assert info.iterations == 1


def test_bad_inputs():
    t = np.linspace(0, 1, 5)
    with pytest.raises(ValidationError):
        solve_varpro(np.zeros((2, 5)), t, [-1.0])
    with pytest.raises(ValidationError):
        solve_varpro(np.ones((2, 5)), t[:4], [-1.0])
    with pytest.raises(ValidationError):
        solve_varpro(np.ones((2, 5)), t, [np.nan])
    X = SnapshotMatrix(np.ones((2, 5)), TimeGrid(t))
    alpha, _, _ = solve_varpro(X, X.time, [-0.3])
    assert abs(alpha[0]) < 1e-6
