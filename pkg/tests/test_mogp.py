"""Testes da verossimilhança, do ajuste e das posteriores do MOGP."""

import math

import numpy as np
import pytest

import src.synth.mogp as mogp
from src.synth.dataset import FidelityDataset
from src.synth.errors import ConditioningError, FitError, InvalidTaskCovarianceError
from src.synth.kernel import KernelHyperparams, TaskMatrix, eval_core
from src.synth.mogp import (
    FitSettings,
    MogpModel,
    NegativeLogLikelihood,
    ParameterLayout,
    fit,
    lml_from_covariance,
    log_marginal_likelihood,
    posterior,
    synthetic_task_posterior,
)


def rbf_scalar(lengthscale: float, variance: float, a: float, b: float) -> float:
    return variance * math.exp(-0.5 * ((a - b) / lengthscale) ** 2)


def dense_lml(K: np.ndarray, y: np.ndarray) -> float:
    _, logdet = np.linalg.slogdet(K)
    return float(-0.5 * y @ np.linalg.solve(K, y) - 0.5 * logdet - 0.5 * y.size * math.log(2 * math.pi))


def test_lml_of_unit_variance_zero_observation() -> None:
    assert lml_from_covariance(np.array([[1.0]]), np.array([0.0])) == pytest.approx(-0.5 * math.log(2 * math.pi))
    assert lml_from_covariance(np.array([[1.0]]), np.array([0.0])) == pytest.approx(-0.9189, abs=1e-4)


def test_lml_of_unit_variance_unit_observation() -> None:
    value = lml_from_covariance(np.array([[1.0]]), np.array([1.0]))

    assert value == pytest.approx(-0.5 - 0.5 * math.log(2 * math.pi))
    assert value == pytest.approx(-1.4189, abs=1e-4)


def test_lml_matches_entrywise_dense_oracle(two_task_data: FidelityDataset, two_task_task: TaskMatrix) -> None:
    params = KernelHyperparams.rbf([0.3], 1.2, noise_variance=[0.01, 0.02])
    sigma = two_task_task.covariance
    X, Y = two_task_data.X[:, 0], two_task_data.Y
    n = X.size

    K = np.empty((2 * n, 2 * n))
    y = np.empty(2 * n)
    for k in range(2):
        for i in range(n):
            y[k * n + i] = Y[i, k]
            for l in range(2):
                for j in range(n):
                    K[k * n + i, l * n + j] = sigma[k, l] * rbf_scalar(0.3, 1.2, X[i], X[j])
            K[k * n + i, k * n + i] += params.noise_variance[k]

    value = log_marginal_likelihood(two_task_data, params, two_task_task)

    assert value == pytest.approx(dense_lml(K, y), abs=1e-9)


def test_cached_factor_reproduces_covariance(two_task_model: MogpModel) -> None:
    from src.synth.kernel import eval_coreg

    K = eval_coreg(two_task_model.params, two_task_model.task, two_task_model.data.X).values
    L = two_task_model.factor

    np.testing.assert_allclose(L @ L.T, K + two_task_model.jitter * np.eye(K.shape[0]), atol=1e-8)


def test_noise_free_posterior_interpolates_training_data(two_task_data: FidelityDataset, two_task_task: TaskMatrix) -> None:
    model = MogpModel.build(two_task_data, KernelHyperparams.rbf([0.3], 1.0), two_task_task)

    result = posterior(model, two_task_data.X)

    for k, (mean, cov) in enumerate(result):
        np.testing.assert_allclose(mean, two_task_data.Y[:, k], atol=1e-6)
        assert np.max(np.diag(cov)) <= 1e-6


def test_posterior_far_from_data_reverts_to_prior(two_task_model: MogpModel) -> None:
    sigma = two_task_model.task.covariance

    result = posterior(two_task_model, np.array([[10.0], [12.0]]))

    for k, (mean, cov) in enumerate(result):
        np.testing.assert_allclose(np.diag(cov), sigma[k, k] * 1.0, atol=1e-3)
        np.testing.assert_allclose(mean, 0.0, atol=1e-3)


def test_posterior_matches_dense_augmented_gp() -> None:
    rng = np.random.default_rng(5)
    X = np.sort(rng.uniform(size=9))[:, None]
    Y = rng.normal(size=(9, 3))
    A = rng.normal(size=(3, 3))
    task = TaskMatrix.from_covariance(A @ A.T + 0.2 * np.eye(3))
    params = KernelHyperparams.rbf([0.2], 0.8, noise_variance=0.05)
    model = MogpModel.build(FidelityDataset(X=X, Y=Y), params, task)
    Xs = np.array([[0.05], [0.5], [1.3]])
    sigma = task.covariance

    def k_aug(a, ta, b, tb):
        return sigma[ta, tb] * rbf_scalar(0.2, 0.8, a, b)

    train = [(X[i, 0], k) for k in range(3) for i in range(9)]
    K = np.array([[k_aug(a, ta, b, tb) for b, tb in train] for a, ta in train]) + 0.05 * np.eye(27)
    y = Y.T.reshape(-1)

    result = posterior(model, Xs)

    for k in range(3):
        test = [(x, k) for x in Xs[:, 0]]
        Ks = np.array([[k_aug(a, ta, b, tb) for b, tb in test] for a, ta in train])
        Kss = np.array([[k_aug(a, ta, b, tb) for b, tb in test] for a, ta in test])
        mean = Ks.T @ np.linalg.solve(K, y)
        cov = Kss - Ks.T @ np.linalg.solve(K, Ks)
        np.testing.assert_allclose(result[k][0], mean, atol=1e-8)
        np.testing.assert_allclose(result[k][1], cov, atol=1e-8)


def test_synthetic_task_duplicating_fidelity(two_task_model: MogpModel) -> None:
    sigma = two_task_model.task.covariance
    for k in range(2):
        result = synthetic_task_posterior(two_task_model, sigma[:, k], sigma[k, k])

        np.testing.assert_allclose(result.mean, two_task_model.data.Y[:, k], atol=1e-10)
        assert result.task_variance == pytest.approx(0.0, abs=1e-10)


def test_uncorrelated_synthetic_task_is_pure_prior(two_task_model: MogpModel) -> None:
    result = synthetic_task_posterior(two_task_model, np.zeros(2), 2.0)

    np.testing.assert_array_equal(result.mean, np.zeros(8))
    np.testing.assert_allclose(result.covariance, 2.0 * two_task_model.core_matrix(), atol=1e-15)


@pytest.mark.parametrize("n_tasks", [1, 2, 3])
def test_compact_synthetic_posterior_matches_dense_gp(n_tasks: int) -> None:
    rng = np.random.default_rng(100 + n_tasks)
    for _ in range(17):
        n_x = int(rng.integers(2, 13))
        X = np.sort(rng.uniform(size=n_x))[:, None]
        Y = rng.normal(size=(n_x, n_tasks))
        A = rng.normal(size=(n_tasks + 1, n_tasks + 1))
        expanded = A @ A.T + 0.1 * np.eye(n_tasks + 1)
        task = TaskMatrix.from_covariance(expanded[:n_tasks, :n_tasks])
        cross, var = expanded[:n_tasks, n_tasks], expanded[n_tasks, n_tasks]
        params = KernelHyperparams.rbf([0.05], 1.0)
        model = MogpModel.build(FidelityDataset(X=X, Y=Y), params, task)
        core = eval_core(params, X, X).values

        K_obs = np.kron(task.covariance, core)
        K_cross = np.kron(cross[:, None], core)
        y = Y.T.reshape(-1)
        dense_mean = K_cross.T @ np.linalg.solve(K_obs, y)
        dense_cov = var * core - K_cross.T @ np.linalg.solve(K_obs, K_cross)

        result = synthetic_task_posterior(model, cross, var)

        np.testing.assert_allclose(result.mean, dense_mean, atol=1e-8)
        np.testing.assert_allclose(result.covariance, dense_cov, atol=1e-8)
        assert result.task_variance >= 0


def test_invalid_expanded_task_matrix_reports_min_eigenvalue(two_task_model: MogpModel) -> None:
    with pytest.raises(InvalidTaskCovarianceError) as info:
        synthetic_task_posterior(two_task_model, np.array([5.0, 5.0]), 0.1)

    assert info.value.min_eigenvalue < 0
    assert info.value.exit_code == 3


@pytest.mark.parametrize("noise_layout", [0, 1, 2])
def test_analytic_gradient_matches_finite_differences(two_task_data: FidelityDataset, noise_layout: int) -> None:
    params = KernelHyperparams.spectral_mixture(
        weights=[0.6, 0.3],
        means=[[0.8], [2.1]],
        variances=[[0.5], [1.5]],
        noise_variance=[0.02, 0.03][:max(noise_layout, 1)],
    )
    task = TaskMatrix.from_covariance([[1.0, 0.4], [0.4, 0.8]])
    layout = ParameterLayout(params, n_tasks=2, n_noise=noise_layout, fixed_noise=0.02)
    objective = NegativeLogLikelihood(two_task_data, layout)
    x = layout.pack(params, task)

    value, grad = objective.value_and_grad(x)

    assert value == pytest.approx(objective.value(x), rel=1e-12)
    h = 1e-5
    numeric = np.empty_like(x)
    for j in range(x.size):
        step = np.zeros_like(x)
        step[j] = h
        numeric[j] = (objective.value(x + step) - objective.value(x - step)) / (2 * h)
    np.testing.assert_allclose(grad, numeric, rtol=1e-4, atol=1e-6)


def test_single_fidelity_fit_matches_single_output_oracle() -> None:
    X = np.linspace(0, 1, 15)[:, None]
    Y = np.sin(4 * X)
    data = FidelityDataset(X=X, Y=Y)

    model = fit(data, FitSettings(kernel="rbf", restarts=2, max_iter=50, seed=1, noise="fixed", noise_value=1e-4))

    assert model.task.n_tasks == 1
    K = model.task.covariance[0, 0] * eval_core(model.params, X, X).values
    K += 1e-4 * np.eye(15)
    assert model.diagnostics.log_marginal_likelihood == pytest.approx(dense_lml(K, Y[:, 0]), abs=1e-6)


def test_fit_recovers_rbf_lengthscale_and_beats_true_lml() -> None:
    X = np.linspace(0, 1, 50)[:, None]
    true_params = KernelHyperparams.rbf([0.2], 1.0, noise_variance=1e-6)
    K = eval_core(true_params, X, X).values + 1e-6 * np.eye(50)
    y = np.linalg.cholesky(K) @ np.random.default_rng(7).standard_normal(50)
    data = FidelityDataset(X=X, Y=y)

    settings = FitSettings(kernel="rbf", restarts=4, max_iter=200, seed=0, noise="fixed", noise_value=1e-6)
    model = fit(data, settings)

    true_lml = log_marginal_likelihood(data, true_params, TaskMatrix.identity(1))
    assert model.diagnostics.log_marginal_likelihood >= true_lml - 1e-6
    assert 0.1 <= model.params.lengthscales[0] <= 0.4


def test_duplicate_fidelities_fit_to_full_correlation() -> None:
    X = np.linspace(0, 1, 12)[:, None]
    column = np.sin(5 * X[:, 0]) + X[:, 0]
    data = FidelityDataset(X=X, Y=np.column_stack([column, column]))

    model = fit(data, FitSettings(kernel="rbf", restarts=3, max_iter=150, seed=2))

    assert model.task.correlation(0, 1) >= 0.99


def test_fit_is_deterministic_and_keeps_best_restart(two_task_data: FidelityDataset) -> None:
    settings = FitSettings(kernel="spectral-mixture", mixtures=2, restarts=3, max_iter=30, seed=11)

    first = fit(two_task_data, settings)
    second = fit(two_task_data, settings)
    parallel = fit(two_task_data, settings.model_copy(update={"workers": 3}))

    assert first.diagnostics == second.diagnostics
    assert first.diagnostics == parallel.diagnostics
    np.testing.assert_array_equal(first.task.factor, second.task.factor)
    finite_initial = [v for v in first.diagnostics.initial_lml if np.isfinite(v)]
    assert first.diagnostics.log_marginal_likelihood >= max(finite_initial)
    assert first.diagnostics.log_marginal_likelihood == pytest.approx(first.log_marginal_likelihood(), abs=1e-8)


def test_fit_error_lists_causes_when_every_restart_fails(
    two_task_data: FidelityDataset, monkeypatch: pytest.MonkeyPatch
) -> None:
    def failing(*args, **kwargs):
        raise ConditioningError(1e-4)

    monkeypatch.setattr(mogp, "log_marginal_likelihood", failing)

    with pytest.raises(FitError) as info:
        fit(two_task_data, FitSettings(kernel="rbf", restarts=2, max_iter=5))

    assert len(info.value.causes) == 2
    assert info.value.exit_code == 3


def test_shared_noise_lml_uses_spectrum_and_matches_dense_oracle(
    two_task_data: FidelityDataset, two_task_task: TaskMatrix
) -> None:
    params = KernelHyperparams.spectral_mixture([0.7, 0.4], [[0.5], [1.8]], [[0.9], [2.5]], noise_variance=0.01)
    core = eval_core(params, two_task_data.X, two_task_data.X).values
    K = np.kron(two_task_task.covariance, core) + 0.01 * np.eye(16)

    spectrum = mogp.kronecker_spectrum(core, two_task_task.covariance, params.noise_for(2), two_task_data.Y)

    assert spectrum is not None
    assert spectrum.lml() == pytest.approx(dense_lml(K, two_task_data.stacked_targets()), abs=1e-9)
    assert log_marginal_likelihood(two_task_data, params, two_task_task) == pytest.approx(spectrum.lml(), abs=1e-12)
    np.testing.assert_allclose(
        spectrum.alpha_matrix().T.reshape(-1),
        np.linalg.solve(K, two_task_data.stacked_targets()),
        atol=1e-8,
    )


@pytest.mark.parametrize("noise_layout", [0, 1, 2])
def test_spectral_gradient_matches_dense_gradient(
    two_task_data: FidelityDataset, noise_layout: int, monkeypatch: pytest.MonkeyPatch
) -> None:
    params = KernelHyperparams.spectral_mixture(
        weights=[0.6, 0.3],
        means=[[0.8], [2.1]],
        variances=[[0.5], [1.5]],
        noise_variance=[0.02, 0.02][:max(noise_layout, 1)],
    )
    task = TaskMatrix.from_covariance([[1.0, 0.4], [0.4, 0.8]])
    layout = ParameterLayout(params, n_tasks=2, n_noise=noise_layout, fixed_noise=0.02)
    objective = NegativeLogLikelihood(two_task_data, layout)
    x = layout.pack(params, task)

    spectral_value, spectral_grad = objective.value_and_grad(x)
    monkeypatch.setattr(mogp, "kronecker_spectrum", lambda *args: None)
    dense_value, dense_grad = objective.value_and_grad(x)

    assert spectral_value == pytest.approx(dense_value, abs=1e-9)
    np.testing.assert_allclose(spectral_grad, dense_grad, rtol=1e-7, atol=1e-9)


def test_spectrum_falls_back_for_distinct_noise_or_singular_core() -> None:
    X = np.linspace(0.0, 1.0, 6)[:, None]
    Y = np.column_stack([np.sin(3 * X[:, 0]), np.cos(3 * X[:, 0])])
    sigma = np.array([[1.0, 0.3], [0.3, 1.0]])
    core = eval_core(KernelHyperparams.rbf([0.4], 1.0), X, X).values
    duplicated = np.ones((6, 6))

    assert mogp.kronecker_spectrum(core, sigma, np.array([0.01, 0.02]), Y) is None
    assert mogp.kronecker_spectrum(duplicated, sigma, np.array([0.0]), Y) is None
    assert mogp.kronecker_spectrum(core, sigma, np.array([0.01]), Y) is not None
