"""
Regressão GP multi-saída com kernel de corregionalização: verossimilhança
marginal, ajuste de hiperparâmetros, posterior padrão e a posterior compacta
de uma fidelidade sintética sem dados.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Literal, Optional, Tuple

from loguru import logger
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg
from scipy.optimize import minimize

from .dataset import FidelityDataset
from .errors import (
    ConditioningError,
    FitError,
    InputShapeError,
    InvalidTaskCovarianceError,
)
from .kernel import (
    KernelHyperparams,
    TaskMatrix,
    cholesky_with_jitter,
    core_gradients,
    eval_coreg,
    eval_core,
    raw_factor_gradients,
    raw_to_factor,
)


LOG_2PI = np.log(2.0 * np.pi)

# Valor devolvido ao otimizador quando a covariância não fatora
_FAILED_OBJECTIVE = 1e25

_KERNEL_LOG_BOUNDS = (-30.0, 12.0)
_TASK_RAW_BOUNDS = (-50.0, 50.0)
_NOISE_FLOOR = 1e-8
# Menor razão aceita entre autovalores extremos na forma espectral
_SPECTRUM_MIN_RATIO = 1e-12


class FitSettings(BaseModel):
    """Configuração do ajuste por máxima verossimilhança marginal."""

    model_config = ConfigDict(frozen=True)

    kernel: Literal["rbf", "spectral-mixture"] = "spectral-mixture"
    mixtures: int = Field(4, ge=1)
    restarts: int = Field(8, ge=1)
    max_iter: int = Field(200, ge=1)
    seed: int = 0
    noise: Literal["learned", "fixed"] = "learned"
    noise_value: float = Field(0.0, ge=0.0)
    shared_noise: bool = True
    analytic_gradients: bool = False
    workers: int = Field(1, ge=1)


@dataclass(frozen=True)
class FitDiagnostics:
    """Resumo do ajuste."""

    log_marginal_likelihood: float
    iterations: int
    restarts_used: int
    restart_lml: Tuple[float, ...] = ()
    initial_lml: Tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class MogpModel:
    """MOGP ajustado: θ, Σ_T, dados de treino e o fator de Σ_T ⊗ K_c + ruído."""

    params: KernelHyperparams
    task: TaskMatrix
    data: FidelityDataset
    factor: np.ndarray
    jitter: float = 0.0
    diagnostics: Optional[FitDiagnostics] = None

    @classmethod
    def build(
        cls,
        data: FidelityDataset,
        params: KernelHyperparams,
        task: TaskMatrix,
        diagnostics: Optional[FitDiagnostics] = None,
    ) -> "MogpModel":
        if params.n_dims != data.n_dims:
            raise InputShapeError(
                f"kernel com {params.n_dims} dimensões para dados com {data.n_dims}"
            )
        if task.n_tasks != data.n_tasks:
            raise InputShapeError(
                f"matriz de tarefas {task.n_tasks}x{task.n_tasks} para {data.n_tasks} fidelidades"
            )
        covariance = eval_coreg(params, task, data.X).values
        factor, jitter = cholesky_with_jitter(covariance)
        factor.setflags(write=False)
        return cls(params, task, data, factor, jitter, diagnostics)

    def core_matrix(self) -> np.ndarray:
        """K_c avaliada nos pontos de treino (sem ruído)."""
        return eval_core(self.params, self.data.X, self.data.X).values

    def log_marginal_likelihood(self) -> float:
        return log_marginal_likelihood(self.data, self.params, self.task)


@dataclass(frozen=True, eq=False)
class SyntheticTaskPosterior:
    """Posterior sobre uma fidelidade sintética avaliada em x_* = X."""

    contribution: np.ndarray
    task_variance: float
    mean: np.ndarray
    covariance: np.ndarray


def lml_from_covariance(covariance: np.ndarray, targets: np.ndarray) -> float:
    """
    Log verossimilhança marginal de y ~ N(0, K).

    Args:
        covariance: Matriz K (já com ruído)
        targets: Vetor y

    Returns:
        -½ yᵀK⁻¹y - ½ log|K| - (n/2) log 2π
    """
    K = np.atleast_2d(np.asarray(covariance, dtype=float))
    y = np.asarray(targets, dtype=float).reshape(-1)
    factor, _ = cholesky_with_jitter(K)
    alpha = linalg.cho_solve((factor, True), y)
    return float(
        -0.5 * y @ alpha - np.sum(np.log(np.diag(factor))) - 0.5 * y.size * LOG_2PI
    )


@dataclass(frozen=True, eq=False)
class KroneckerSpectrum:
    """
    Σ_T ⊗ K_c + σ²I diagonalizada por eigh(Σ_T) ⊗ eigh(K_c).

    Com Σ_T = U diag(a) Uᵀ e K_c = V diag(b) Vᵀ, os autovalores são
    D_ij = b_i a_j + σ² e os alvos rotacionados são Vᵀ Y U.
    """

    task_values: np.ndarray
    task_vectors: np.ndarray
    core_values: np.ndarray
    core_vectors: np.ndarray
    denominators: np.ndarray
    rotated: np.ndarray

    def lml(self) -> float:
        return float(
            -0.5 * np.sum(self.rotated ** 2 / self.denominators)
            - 0.5 * np.sum(np.log(self.denominators))
            - 0.5 * self.denominators.size * LOG_2PI
        )

    def alpha_matrix(self) -> np.ndarray:
        """(Σ_T ⊗ K_c + σ²I)⁻¹ y como matriz n_x x n_t (coluna k = fidelidade k)."""
        return self.core_vectors @ (self.rotated / self.denominators) @ self.task_vectors.T


def kronecker_spectrum(
    core: np.ndarray,
    sigma: np.ndarray,
    noise: np.ndarray,
    Y: np.ndarray,
) -> Optional[KroneckerSpectrum]:
    """
    Forma espectral da covariância quando o ruído é o mesmo em todas as
    fidelidades.

    Returns:
        None se o ruído variar entre fidelidades ou se o espectro for mal
        condicionado (o chamador usa então o Cholesky denso com jitter)
    """
    noise = np.asarray(noise, dtype=float)
    if noise.size == 0 or np.ptp(noise) > 0:
        return None

    task_values, task_vectors = linalg.eigh(sigma)
    core_values, core_vectors = linalg.eigh(core)
    task_values = np.maximum(task_values, 0.0)
    core_values = np.maximum(core_values, 0.0)
    denominators = np.outer(core_values, task_values) + noise[0]
    if not denominators.min() > _SPECTRUM_MIN_RATIO * denominators.max():
        return None

    rotated = core_vectors.T @ Y @ task_vectors
    return KroneckerSpectrum(task_values, task_vectors, core_values, core_vectors, denominators, rotated)


def log_marginal_likelihood(data: FidelityDataset, params: KernelHyperparams, task: TaskMatrix) -> float:
    """LML dos dados empilhados sob Σ_T ⊗ K_c + ruído."""
    core = eval_core(params, data.X, data.X).values
    spectrum = kronecker_spectrum(core, task.covariance, params.noise_for(task.n_tasks), data.Y)
    if spectrum is not None:
        return spectrum.lml()
    covariance = eval_coreg(params, task, data.X).values
    return lml_from_covariance(covariance, data.stacked_targets())


@dataclass(frozen=True)
class ParameterLayout:
    """Empacotamento dos parâmetros no vetor irrestrito do otimizador."""

    template: KernelHyperparams
    n_tasks: int
    n_noise: int
    fixed_noise: float

    @property
    def n_kernel(self) -> int:
        return int(self.template.log_params().size)

    @property
    def n_task(self) -> int:
        return self.n_tasks * (self.n_tasks + 1) // 2

    def pack(self, params: KernelHyperparams, task: TaskMatrix) -> np.ndarray:
        parts = [params.log_params(), task.raw()]
        if self.n_noise:
            noise = params.noise_for(self.n_tasks)[: self.n_noise]
            parts.append(np.log(np.maximum(noise, _NOISE_FLOOR)))
        return np.concatenate(parts)

    def unpack(self, vector: np.ndarray) -> Tuple[KernelHyperparams, TaskMatrix]:
        kernel_end = self.n_kernel
        task_end = kernel_end + self.n_task
        if self.n_noise:
            noise = np.exp(vector[task_end:task_end + self.n_noise])
        else:
            noise = np.array([self.fixed_noise])
        params = self.template.with_log_params(vector[:kernel_end]).with_noise(noise)
        task = TaskMatrix(raw_to_factor(vector[kernel_end:task_end], self.n_tasks))
        return params, task

    def bounds(self) -> List[Tuple[Optional[float], Optional[float]]]:
        bounds = [_KERNEL_LOG_BOUNDS] * self.n_kernel
        bounds += [_TASK_RAW_BOUNDS] * self.n_task
        bounds += [(float(np.log(_NOISE_FLOOR)), None)] * self.n_noise
        return bounds


class NegativeLogLikelihood:
    """-LML (e gradiente analítico opcional) como função do vetor irrestrito."""

    def __init__(self, data: FidelityDataset, layout: ParameterLayout):
        self.data = data
        self.layout = layout
        self.targets = data.stacked_targets()

    def value(self, vector: np.ndarray) -> float:
        params, task = self.layout.unpack(vector)
        return -log_marginal_likelihood(self.data, params, task)

    def safe_value(self, vector: np.ndarray) -> float:
        try:
            return self.value(vector)
        except (ConditioningError, ValueError):
            return _FAILED_OBJECTIVE

    def value_and_grad(self, vector: np.ndarray) -> Tuple[float, np.ndarray]:
        params, task = self.layout.unpack(vector)
        n_x, n_t = self.data.n_points, self.data.n_tasks
        core = eval_core(params, self.data.X, self.data.X).values
        sigma = task.covariance

        spectrum = kronecker_spectrum(core, sigma, params.noise_for(n_t), self.data.Y)
        if spectrum is not None:
            return self._spectral_value_and_grad(spectrum, vector, params, core, sigma)

        covariance = eval_coreg(params, task, self.data.X).values
        factor, _ = cholesky_with_jitter(covariance)
        alpha = linalg.cho_solve((factor, True), self.targets)
        lml = -0.5 * self.targets @ alpha - np.sum(np.log(np.diag(factor))) - 0.5 * alpha.size * LOG_2PI

        inverse = linalg.cho_solve((factor, True), np.eye(alpha.size))
        W = np.outer(alpha, alpha) - inverse
        W4 = W.reshape(n_t, n_x, n_t, n_x)

        # ½ tr(W (A ⊗ B)) = ½ Σ W4[k,i,l,j] A[l,k] B[j,i]
        kernel_weight = np.einsum("kilj,lk->ij", W4, sigma)
        grad_kernel = 0.5 * np.einsum("ij,pji->p", kernel_weight, core_gradients(params, self.data.X))

        task_weight = np.einsum("kilj,ji->kl", W4, core)
        raw = vector[self.layout.n_kernel:self.layout.n_kernel + self.layout.n_task]
        grad_task = 0.5 * np.einsum("kl,rlk->r", task_weight, raw_factor_gradients(raw, n_t))

        parts = [grad_kernel, grad_task]
        if self.layout.n_noise:
            noise = params.noise_for(n_t)
            block_traces = np.einsum("kiki->k", W4)
            if self.layout.n_noise == 1:
                parts.append(np.array([0.5 * noise[0] * block_traces.sum()]))
            else:
                parts.append(0.5 * noise * block_traces)

        return float(-lml), -np.concatenate(parts)

    def _spectral_value_and_grad(
        self,
        spectrum: KroneckerSpectrum,
        vector: np.ndarray,
        params: KernelHyperparams,
        core: np.ndarray,
        sigma: np.ndarray,
    ) -> Tuple[float, np.ndarray]:
        """
        Gradiente pela forma espectral: ½[αᵀ(A ⊗ B)α - tr(K⁻¹(A ⊗ B))], com os
        traços reduzidos a uma matriz n_x x n_x (kernel) e uma n_t x n_t (tarefas).
        """
        n_t = self.data.n_tasks
        alpha = spectrum.alpha_matrix()
        inverse = 1.0 / spectrum.denominators
        U, V = spectrum.task_vectors, spectrum.core_vectors

        # tr(K⁻¹(Σ_T ⊗ C)) = Σ_ik C_ik [V diag(Σ_j a_j / D_ij) Vᵀ]_ik
        core_trace = (V * (inverse @ spectrum.task_values)) @ V.T
        kernel_weight = alpha @ (alpha @ sigma).T - core_trace
        grad_kernel = 0.5 * np.einsum("ik,pik->p", kernel_weight, core_gradients(params, self.data.X))

        task_trace = (U * (spectrum.core_values @ inverse)) @ U.T
        task_weight = alpha.T @ core @ alpha - task_trace
        raw = vector[self.layout.n_kernel:self.layout.n_kernel + self.layout.n_task]
        grad_task = 0.5 * np.einsum("kl,rlk->r", task_weight, raw_factor_gradients(raw, n_t))

        parts = [grad_kernel, grad_task]
        if self.layout.n_noise:
            noise = params.noise_for(n_t)
            block_traces = np.sum(alpha ** 2, axis=0) - (U ** 2) @ inverse.sum(axis=0)
            if self.layout.n_noise == 1:
                parts.append(np.array([0.5 * noise[0] * block_traces.sum()]))
            else:
                parts.append(0.5 * noise * block_traces)

        return -spectrum.lml(), -np.concatenate(parts)

    def safe_value_and_grad(self, vector: np.ndarray) -> Tuple[float, np.ndarray]:
        try:
            return self.value_and_grad(vector)
        except (ConditioningError, ValueError):
            return _FAILED_OBJECTIVE, np.zeros_like(vector)


@dataclass(frozen=True)
class _RestartResult:
    index: int
    vector: Optional[np.ndarray]
    lml: float
    initial_lml: float
    iterations: int
    cause: str = ""


def _domain_spans(X: np.ndarray) -> np.ndarray:
    spans = np.ptp(X, axis=0)
    return np.where(spans > 0, spans, 1.0)


def _initial_params(data: FidelityDataset, settings: FitSettings, rng: np.random.Generator) -> KernelHyperparams:
    spans = _domain_spans(data.X)
    n_d = data.n_dims

    def random_lengthscales(size) -> np.ndarray:
        return spans * np.exp(rng.uniform(np.log(0.01), np.log(2.0), size=size))

    if settings.kernel == "rbf":
        return KernelHyperparams.rbf(random_lengthscales(n_d), 1.0)

    Q = settings.mixtures
    means = np.empty((Q, n_d))
    for d in range(n_d):
        distances = np.abs(data.X[:, None, d] - data.X[None, :, d])
        distances = distances[distances > 0]
        if distances.size == 0:
            distances = np.array([spans[d]])
        means[:, d] = rng.uniform(0.0, 0.5, size=Q) / rng.choice(distances, size=Q)
    scales = random_lengthscales((Q, n_d))
    variances = 1.0 / (2.0 * np.pi * scales) ** 2
    return KernelHyperparams.spectral_mixture(np.full(Q, 1.0 / Q), means, variances)


def _initial_task(data: FidelityDataset) -> TaskMatrix:
    variances = data.Y.var(axis=0)
    scale = float(np.mean(variances))
    if not scale > 0:
        return TaskMatrix.identity(data.n_tasks)
    covariance = np.atleast_2d(np.cov(data.Y, rowvar=False, bias=True))
    covariance = covariance + 0.05 * scale * np.eye(data.n_tasks)
    return TaskMatrix.from_covariance(covariance)


def _layout_for(data: FidelityDataset, settings: FitSettings, template: KernelHyperparams) -> ParameterLayout:
    if settings.noise == "fixed":
        n_noise = 0
    else:
        n_noise = 1 if settings.shared_noise else data.n_tasks
    return ParameterLayout(template, data.n_tasks, n_noise, settings.noise_value)


def _initial_noise(data: FidelityDataset, settings: FitSettings) -> float:
    if settings.noise == "fixed":
        return settings.noise_value
    return max(1e-3 * float(np.mean(data.Y.var(axis=0))), _NOISE_FLOOR)


def _run_restart(
    index: int,
    seed: np.random.SeedSequence,
    data: FidelityDataset,
    settings: FitSettings,
) -> _RestartResult:
    rng = np.random.default_rng(seed)
    params = _initial_params(data, settings, rng).with_noise(_initial_noise(data, settings))
    task = _initial_task(data)
    layout = _layout_for(data, settings, params)
    objective = NegativeLogLikelihood(data, layout)
    x0 = layout.pack(params, task)

    try:
        initial_lml = -objective.value(x0)
    except (ConditioningError, ValueError) as exc:
        initial_lml = -np.inf
        logger.debug("Reinício {}: ponto inicial não fatorável ({})", index, exc)

    if settings.analytic_gradients:
        fun, jac = objective.safe_value_and_grad, True
    else:
        fun, jac = objective.safe_value, None

    result = minimize(
        fun,
        x0,
        jac=jac,
        method="L-BFGS-B",
        bounds=layout.bounds(),
        options={"maxiter": settings.max_iter},
    )
    if not result.success:
        logger.debug("Reinício {}: otimizador terminou com '{}'", index, result.message)

    try:
        final_lml = -objective.value(result.x)
    except (ConditioningError, ValueError) as exc:
        final_lml = -np.inf
        cause = str(exc)
    else:
        cause = ""

    if final_lml >= initial_lml:
        vector, lml = result.x, final_lml
    else:
        vector, lml = x0, initial_lml

    if not np.isfinite(lml):
        return _RestartResult(index, None, -np.inf, initial_lml, int(result.nit), cause or "não fatorável")

    logger.debug("Reinício {}: LML inicial {:.6f}, final {:.6f}", index, initial_lml, lml)
    return _RestartResult(index, vector, lml, initial_lml, int(result.nit))


def fit(data: FidelityDataset, settings: Optional[FitSettings] = None) -> MogpModel:
    """
    Ajusta θ e Σ_T maximizando a LML com múltiplas reinicializações.

    Args:
        data: Conjunto de dados em desenho de blocos
        settings: Configuração do ajuste (padrão: FitSettings())

    Returns:
        MogpModel com a melhor LML entre as reinicializações

    Raises:
        FitError: se todas as reinicializações falharem
    """
    settings = settings or FitSettings()
    seeds = np.random.SeedSequence(settings.seed).spawn(settings.restarts)

    def run(index: int) -> _RestartResult:
        return _run_restart(index, seeds[index], data, settings)

    if settings.workers > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            results = list(pool.map(run, range(settings.restarts)))
    else:
        results = [run(i) for i in range(settings.restarts)]

    succeeded = [r for r in results if r.vector is not None]
    if not succeeded:
        raise FitError([r.cause for r in results])

    best = max(succeeded, key=lambda r: (r.lml, -r.index))
    template = _initial_params(data, settings, np.random.default_rng(0))
    layout = _layout_for(data, settings, template)
    params, task = layout.unpack(best.vector)

    diagnostics = FitDiagnostics(
        log_marginal_likelihood=float(best.lml),
        iterations=best.iterations,
        restarts_used=len(succeeded),
        restart_lml=tuple(float(r.lml) for r in results),
        initial_lml=tuple(float(r.initial_lml) for r in results),
    )
    logger.info(
        "Ajuste concluído: LML={:.6f} (reinício {} de {})",
        best.lml, best.index, settings.restarts,
    )
    return MogpModel.build(data, params, task, diagnostics)


def _as_query_points(Xstar, n_dims: int) -> np.ndarray:
    points = np.asarray(Xstar, dtype=float)
    if points.ndim == 1:
        points = points[:, None] if n_dims == 1 else points[None, :]
    if points.ndim != 2 or points.shape[1] != n_dims:
        raise InputShapeError(f"Xstar com forma {np.shape(Xstar)}, esperado (m, {n_dims})")
    return points


def posterior(model: MogpModel, Xstar) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Posterior GP padrão no domínio aumentado (ponto, fidelidade).

    Returns:
        Lista com (média, covariância) para cada fidelidade
    """
    points = _as_query_points(Xstar, model.data.n_dims)
    n_t, m = model.data.n_tasks, points.shape[0]
    sigma = model.task.covariance

    cross = np.kron(sigma, eval_core(model.params, model.data.X, points).values)
    alpha = linalg.cho_solve((model.factor, True), model.data.stacked_targets())
    mean = (cross.T @ alpha).reshape(n_t, m)

    V = linalg.solve_triangular(model.factor, cross, lower=True)
    prior = np.kron(sigma, eval_core(model.params, points, points).values)
    covariance = prior - V.T @ V

    result = []
    for k in range(n_t):
        block = covariance[k * m:(k + 1) * m, k * m:(k + 1) * m]
        result.append((mean[k], 0.5 * (block + block.T)))
    return result


def synthetic_task_posterior(model: MogpModel, task_cross, task_var: float) -> SyntheticTaskPosterior:
    """
    Posterior compacta de uma tarefa adicional sem dados, em x_* = X.

    μ_p = Y (Σ_T⁻¹ Σ_T*) e σ_p = (Σ_T** - Σ_T*ᵀ Σ_T⁻¹ Σ_T*) K_c, tratando as
    colunas de treino como observações sem ruído das tarefas latentes.

    Raises:
        InvalidTaskCovarianceError: se a matriz de tarefas expandida não for PSD
    """
    sigma = model.task.covariance
    n_t = model.task.n_tasks
    cross = np.asarray(task_cross, dtype=float).reshape(-1)
    if cross.size != n_t:
        raise InputShapeError(f"Σ_T* com {cross.size} entradas para {n_t} fidelidades")

    expanded = np.empty((n_t + 1, n_t + 1))
    expanded[:n_t, :n_t] = sigma
    expanded[:n_t, n_t] = cross
    expanded[n_t, :n_t] = cross
    expanded[n_t, n_t] = float(task_var)
    eigenvalues = np.linalg.eigvalsh(expanded)
    tolerance = 1e-10 * max(1.0, float(np.max(np.abs(eigenvalues))))
    if eigenvalues[0] < -tolerance:
        raise InvalidTaskCovarianceError(float(eigenvalues[0]))

    contribution = linalg.cho_solve((model.task.factor, True), cross)
    task_variance = max(float(task_var - cross @ contribution), 0.0)
    mean = model.data.Y @ contribution
    covariance = task_variance * model.core_matrix()
    return SyntheticTaskPosterior(contribution, task_variance, mean, covariance)
