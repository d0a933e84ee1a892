"""Testes dos kernels intra-fidelidade e da composição de corregionalização."""

import math

import numpy as np
import pytest

from src.synth.errors import ConditioningError, InputShapeError, UsageError
from src.synth.kernel import (
    KernelHyperparams,
    TaskMatrix,
    cholesky_with_jitter,
    core_gradients,
    eval_core,
    eval_coreg,
    raw_factor_gradients,
)


def sm_params(n_dims: int = 2) -> KernelHyperparams:
    rng = np.random.default_rng(3)
    return KernelHyperparams.spectral_mixture(
        weights=[0.7, 0.4, 0.2],
        means=rng.uniform(0.1, 2.0, size=(3, n_dims)),
        variances=rng.uniform(0.05, 1.0, size=(3, n_dims)),
    )


def scalar_sm(params: KernelHyperparams, a, b) -> float:
    total = 0.0
    for q in range(params.n_mixtures):
        term = params.weights[q]
        for d in range(params.n_dims):
            tau = a[d] - b[d]
            term *= math.exp(-2.0 * math.pi ** 2 * tau ** 2 * params.variances[q, d])
            term *= math.cos(2.0 * math.pi * tau * params.means[q, d])
        total += term
    return total


def scalar_rbf(params: KernelHyperparams, a, b) -> float:
    r2 = sum(((a[d] - b[d]) / params.lengthscales[d]) ** 2 for d in range(params.n_dims))
    return params.signal_variance * math.exp(-0.5 * r2)


def test_rbf_single_point_returns_signal_variance() -> None:
    params = KernelHyperparams.rbf([0.5], 2.5)
    X = np.array([[0.3]])

    K = eval_core(params, X, X).values

    assert K.shape == (1, 1)
    assert K[0, 0] == pytest.approx(2.5)


def test_spectral_mixture_at_zero_lag_sums_weights() -> None:
    params = sm_params()
    X = np.array([[0.2, 0.7]])

    K = eval_core(params, X, X).values

    assert K[0, 0] == pytest.approx(0.7 + 0.4 + 0.2)


def test_rbf_unit_distance_matches_closed_form() -> None:
    params = KernelHyperparams.rbf([1.0], 1.0)

    K = eval_core(params, np.array([[0.0]]), np.array([[1.0]])).values

    assert K[0, 0] == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert K[0, 0] == pytest.approx(scalar_rbf(params, [0.0], [1.0]), abs=1e-15)
    assert K[0, 0] == pytest.approx(0.6065, abs=1e-4)


def test_eval_core_matches_scalar_kernels() -> None:
    rng = np.random.default_rng(0)
    A = rng.uniform(size=(5, 2))
    B = rng.uniform(size=(4, 2))
    for params, scalar in ((sm_params(), scalar_sm), (KernelHyperparams.rbf([0.3, 0.8], 1.7), scalar_rbf)):
        K = eval_core(params, A, B).values
        expected = np.array([[scalar(params, a, b) for b in B] for a in A])
        np.testing.assert_allclose(K, expected, rtol=1e-12, atol=1e-14)


def test_eval_core_symmetric_when_same_points() -> None:
    X = np.random.default_rng(1).uniform(size=(7, 2))

    K = eval_core(sm_params(), X, X).values

    np.testing.assert_array_equal(K, K.T)


def test_spectral_mixture_is_stationary() -> None:
    rng = np.random.default_rng(2)
    A = rng.uniform(size=(6, 2))
    B = rng.uniform(size=(5, 2))
    shift = np.array([3.7, -1.2])

    K = eval_core(sm_params(), A, B).values
    shifted = eval_core(sm_params(), A + shift, B + shift).values

    np.testing.assert_allclose(K, shifted, atol=1e-10)


def test_eval_core_rejects_dimension_mismatch() -> None:
    params = KernelHyperparams.rbf([0.5], 1.0)

    with pytest.raises(InputShapeError):
        eval_core(params, np.zeros((3, 2)), np.zeros((3, 2)))
    assert issubclass(InputShapeError, UsageError)


def test_hyperparams_reject_invalid_values() -> None:
    with pytest.raises(InputShapeError):
        KernelHyperparams.rbf([-1.0], 1.0)
    with pytest.raises(InputShapeError):
        KernelHyperparams.spectral_mixture([1.0], [[0.1, 0.2]], [[0.1]])
    with pytest.raises(InputShapeError):
        KernelHyperparams.rbf([1.0], 1.0, noise_variance=-1e-3)


def test_coreg_with_identity_task_is_block_diagonal() -> None:
    params = KernelHyperparams.rbf([0.4], 1.0, noise_variance=0.01)
    X = np.linspace(0, 1, 5)[:, None]
    core = eval_core(params, X, X).values

    K = eval_coreg(params, TaskMatrix.identity(2), X).values

    expected = core + 0.01 * np.eye(5)
    np.testing.assert_allclose(K[:5, :5], expected, atol=1e-15)
    np.testing.assert_allclose(K[5:, 5:], expected, atol=1e-15)
    np.testing.assert_array_equal(K[:5, 5:], np.zeros((5, 5)))


def test_coreg_single_task_is_core_plus_noise() -> None:
    params = KernelHyperparams.rbf([0.4], 1.0, noise_variance=0.05)
    X = np.linspace(0, 1, 4)[:, None]

    K = eval_coreg(params, TaskMatrix.identity(1), X).values

    np.testing.assert_allclose(K, eval_core(params, X, X).values + 0.05 * np.eye(4), atol=1e-15)


@pytest.mark.parametrize("n_tasks", [1, 2, 3])
def test_coreg_matches_entrywise_definition(n_tasks: int) -> None:
    rng = np.random.default_rng(10 + n_tasks)
    params = sm_params().with_noise(rng.uniform(0.01, 0.1, size=n_tasks))
    X = rng.uniform(size=(6, 2))
    A = rng.normal(size=(n_tasks, n_tasks))
    task = TaskMatrix.from_covariance(A @ A.T + 0.1 * np.eye(n_tasks))
    sigma = task.covariance
    noise = params.noise_for(n_tasks)

    K = eval_coreg(params, task, X).values

    n = X.shape[0]
    for k in range(n_tasks):
        for i in range(n):
            for l in range(n_tasks):
                for j in range(n):
                    expected = sigma[k, l] * scalar_sm(params, X[i], X[j])
                    if k == l and i == j:
                        expected += noise[k]
                    assert K[k * n + i, l * n + j] == pytest.approx(expected, rel=1e-12, abs=1e-14)


def test_task_matrix_is_psd_with_positive_diagonal() -> None:
    task = TaskMatrix.from_raw(np.array([-3.0, 2.5, -10.0]), 2)

    eigenvalues = np.linalg.eigvalsh(task.covariance)

    assert np.all(np.diag(task.covariance) > 0)
    assert eigenvalues.min() >= 0
    np.testing.assert_allclose(TaskMatrix.from_raw(task.raw(), 2).factor, task.factor, rtol=1e-10)


def test_raw_factor_gradients_match_finite_differences() -> None:
    raw = np.array([0.3, -0.7, 1.1, 0.2, -0.4, 0.9])
    grads = raw_factor_gradients(raw, 3)
    h = 1e-6

    for j in range(raw.size):
        step = np.zeros_like(raw)
        step[j] = h
        plus = TaskMatrix.from_raw(raw + step, 3).covariance
        minus = TaskMatrix.from_raw(raw - step, 3).covariance
        np.testing.assert_allclose(grads[j], (plus - minus) / (2 * h), atol=1e-8)


@pytest.mark.parametrize("params", [sm_params(), KernelHyperparams.rbf([0.3, 0.9], 1.4)])
def test_core_gradients_match_finite_differences(params: KernelHyperparams) -> None:
    X = np.random.default_rng(4).uniform(size=(5, 2))
    grads = core_gradients(params, X)
    base = params.log_params()
    h = 1e-5

    assert grads.shape == (base.size, 5, 5)
    for p in range(base.size):
        step = np.zeros_like(base)
        step[p] = h
        plus = eval_core(params.with_log_params(base + step), X, X).values
        minus = eval_core(params.with_log_params(base - step), X, X).values
        np.testing.assert_allclose(grads[p], (plus - minus) / (2 * h), rtol=1e-4, atol=1e-6)


def test_cholesky_escalates_jitter_for_singular_matrix() -> None:
    singular = np.ones((3, 3))

    factor, jitter = cholesky_with_jitter(singular)

    assert jitter > 0
    np.testing.assert_allclose(factor @ factor.T, singular + jitter * np.eye(3), atol=1e-12)


def test_cholesky_fails_beyond_max_jitter() -> None:
    with pytest.raises(ConditioningError) as info:
        cholesky_with_jitter(-np.eye(2))

    assert info.value.jitter > 0
    assert info.value.exit_code == 3
