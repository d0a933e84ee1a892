"""
Kernels intra-fidelidade (RBF e mistura espectral) e a composição de
corregionalização Σ_T ⊗ K_c.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

from loguru import logger
import numpy as np
from scipy import linalg
from scipy.special import expit

from .errors import ConditioningError, InputShapeError, SynthFidError


KERNEL_KINDS = ("rbf", "spectral-mixture")

# Política de jitter: relativo à média da diagonal, escalonado x10
JITTER_START = 1e-10
JITTER_MAX = 1e-4

# Piso para médias espectrais no espaço log
_MEAN_FLOOR = 1e-12


def _frozen(values, ndim: int) -> np.ndarray:
    array = np.array(values, dtype=float, ndmin=ndim)
    array.setflags(write=False)
    return array


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def inverse_softplus(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


@dataclass(frozen=True, eq=False)
class KernelHyperparams:
    """
    Hiperparâmetros θ do kernel intra-fidelidade.

    Para ``rbf``: ``lengthscales`` (n_d,) e ``signal_variance``.
    Para ``spectral-mixture``: ``weights`` (Q,), ``means`` e ``variances`` (Q, n_d).
    ``noise_variance`` tem tamanho 1 (compartilhado) ou n_t.
    """

    kind: str
    lengthscales: Optional[np.ndarray] = None
    signal_variance: float = 1.0
    weights: Optional[np.ndarray] = None
    means: Optional[np.ndarray] = None
    variances: Optional[np.ndarray] = None
    noise_variance: np.ndarray = field(default_factory=lambda: _frozen([0.0], 1))

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise SynthFidError(f"kernel desconhecido: {self.kind}")

        noise = _frozen(self.noise_variance, 1)
        if noise.ndim != 1 or np.any(noise < 0) or not np.all(np.isfinite(noise)):
            raise InputShapeError("variância de ruído deve ser um vetor não negativo")
        object.__setattr__(self, "noise_variance", noise)

        if self.kind == "rbf":
            if self.lengthscales is None:
                raise InputShapeError("kernel RBF exige comprimentos de escala")
            scales = _frozen(self.lengthscales, 1)
            if scales.ndim != 1 or np.any(scales <= 0):
                raise InputShapeError("comprimentos de escala devem ser positivos")
            if not self.signal_variance > 0:
                raise InputShapeError("variância do sinal deve ser positiva")
            object.__setattr__(self, "lengthscales", scales)
            object.__setattr__(self, "signal_variance", float(self.signal_variance))
            return

        if self.weights is None or self.means is None or self.variances is None:
            raise InputShapeError("mistura espectral exige pesos, médias e variâncias")
        weights = _frozen(self.weights, 1)
        means = _frozen(self.means, 2)
        variances = _frozen(self.variances, 2)
        if weights.ndim != 1 or weights.size < 1:
            raise InputShapeError("mistura espectral exige Q >= 1 componentes")
        if means.shape != variances.shape or means.shape[0] != weights.size:
            raise InputShapeError(
                f"formas incompatíveis: pesos {weights.shape}, médias {means.shape}, "
                f"variâncias {variances.shape}"
            )
        if np.any(weights <= 0) or np.any(variances <= 0) or np.any(means < 0):
            raise InputShapeError("pesos e variâncias positivos, médias não negativas")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @classmethod
    def rbf(cls, lengthscales, signal_variance: float = 1.0, noise_variance=0.0) -> "KernelHyperparams":
        return cls(
            kind="rbf",
            lengthscales=np.atleast_1d(lengthscales),
            signal_variance=signal_variance,
            noise_variance=np.atleast_1d(noise_variance),
        )

    @classmethod
    def spectral_mixture(cls, weights, means, variances, noise_variance=0.0) -> "KernelHyperparams":
        return cls(
            kind="spectral-mixture",
            weights=np.atleast_1d(weights),
            means=np.atleast_2d(means),
            variances=np.atleast_2d(variances),
            noise_variance=np.atleast_1d(noise_variance),
        )

    @property
    def n_dims(self) -> int:
        if self.kind == "rbf":
            return int(self.lengthscales.size)
        return int(self.means.shape[1])

    @property
    def n_mixtures(self) -> int:
        return 0 if self.kind == "rbf" else int(self.weights.size)

    def noise_for(self, n_tasks: int) -> np.ndarray:
        """Ruído por fidelidade, expandindo o valor compartilhado."""
        if self.noise_variance.size == 1:
            return np.full(n_tasks, self.noise_variance[0])
        if self.noise_variance.size != n_tasks:
            raise InputShapeError(
                f"ruído com {self.noise_variance.size} entradas para {n_tasks} fidelidades"
            )
        return np.array(self.noise_variance)

    def with_noise(self, noise_variance) -> "KernelHyperparams":
        return KernelHyperparams(
            kind=self.kind,
            lengthscales=self.lengthscales,
            signal_variance=self.signal_variance,
            weights=self.weights,
            means=self.means,
            variances=self.variances,
            noise_variance=np.atleast_1d(noise_variance),
        )

    def log_params(self) -> np.ndarray:
        """Parâmetros do kernel (sem ruído) em escala log, na ordem canônica."""
        if self.kind == "rbf":
            return np.concatenate([np.log(self.lengthscales), [np.log(self.signal_variance)]])
        blocks = []
        for q in range(self.n_mixtures):
            blocks.append([np.log(self.weights[q])])
            blocks.append(np.log(np.maximum(self.means[q], _MEAN_FLOOR)))
            blocks.append(np.log(self.variances[q]))
        return np.concatenate(blocks)

    def with_log_params(self, vector: np.ndarray) -> "KernelHyperparams":
        """Inverso de :meth:`log_params`, preservando o ruído."""
        values = np.exp(np.asarray(vector, dtype=float))
        n_d = self.n_dims
        if self.kind == "rbf":
            return KernelHyperparams.rbf(values[:n_d], values[n_d], self.noise_variance)
        block = 1 + 2 * n_d
        per_q = values.reshape(self.n_mixtures, block)
        return KernelHyperparams.spectral_mixture(
            per_q[:, 0], per_q[:, 1:1 + n_d], per_q[:, 1 + n_d:], self.noise_variance
        )


@dataclass(frozen=True, eq=False)
class TaskMatrix:
    """
    Matriz de tarefas Σ_T = L Lᵀ, guardada pelo fator triangular inferior L
    com diagonal positiva (PSD por construção).
    """

    factor: np.ndarray

    def __post_init__(self) -> None:
        factor = np.array(self.factor, dtype=float, ndmin=2)
        if factor.ndim != 2 or factor.shape[0] != factor.shape[1]:
            raise InputShapeError("fator da matriz de tarefas deve ser quadrado")
        factor = np.tril(factor)
        if np.any(np.diag(factor) <= 0):
            raise InputShapeError("diagonal do fator da matriz de tarefas deve ser positiva")
        factor.setflags(write=False)
        object.__setattr__(self, "factor", factor)

    @classmethod
    def identity(cls, n_tasks: int) -> "TaskMatrix":
        return cls(np.eye(n_tasks))

    @classmethod
    def from_covariance(cls, covariance) -> "TaskMatrix":
        covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
        try:
            factor = linalg.cholesky(covariance, lower=True)
        except linalg.LinAlgError as exc:
            raise InputShapeError("matriz de tarefas não é definida positiva") from exc
        return cls(factor)

    @classmethod
    def from_raw(cls, raw: np.ndarray, n_tasks: int) -> "TaskMatrix":
        """Constrói a partir do vetor irrestrito (diagonal via softplus)."""
        return cls(raw_to_factor(raw, n_tasks))

    @property
    def n_tasks(self) -> int:
        return int(self.factor.shape[0])

    @property
    def covariance(self) -> np.ndarray:
        return self.factor @ self.factor.T

    def raw(self) -> np.ndarray:
        rows, cols = np.tril_indices(self.n_tasks)
        values = self.factor[rows, cols].copy()
        on_diagonal = rows == cols
        values[on_diagonal] = inverse_softplus(values[on_diagonal])
        return values

    def correlation(self, k: int, l: int) -> float:
        sigma = self.covariance
        return float(sigma[k, l] / np.sqrt(sigma[k, k] * sigma[l, l]))


def raw_to_factor(raw: np.ndarray, n_tasks: int) -> np.ndarray:
    rows, cols = np.tril_indices(n_tasks)
    factor = np.zeros((n_tasks, n_tasks))
    values = np.asarray(raw, dtype=float)
    factor[rows, cols] = np.where(rows == cols, softplus(values), values)
    return factor


def raw_factor_gradients(raw: np.ndarray, n_tasks: int) -> np.ndarray:
    """Derivadas dΣ_T/d(raw_j), uma matriz n_t x n_t por parâmetro."""
    factor = raw_to_factor(raw, n_tasks)
    rows, cols = np.tril_indices(n_tasks)
    grads = np.zeros((rows.size, n_tasks, n_tasks))
    for j, (r, c) in enumerate(zip(rows, cols)):
        unit = np.zeros((n_tasks, n_tasks))
        unit[r, c] = expit(raw[j]) if r == c else 1.0
        grads[j] = unit @ factor.T + factor @ unit.T
    return grads


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Matriz de covariância densa e o jitter efetivamente somado à diagonal."""

    values: np.ndarray
    jitter: float = 0.0

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape


def _as_points(points, n_dims: int, name: str) -> np.ndarray:
    array = np.asarray(points, dtype=float)
    if array.ndim == 1:
        array = array[:, None] if n_dims == 1 else array[None, :]
    if array.ndim != 2 or array.shape[1] != n_dims:
        raise InputShapeError(
            f"{name} tem forma {np.shape(points)}, esperado (n, {n_dims})"
        )
    return array


def _differences(params: KernelHyperparams, A, B) -> Tuple[np.ndarray, bool]:
    same = A is B
    A = _as_points(A, params.n_dims, "A")
    B = A if same else _as_points(B, params.n_dims, "B")
    return A[:, None, :] - B[None, :, :], same


def _symmetrize(K: np.ndarray) -> np.ndarray:
    return 0.5 * (K + K.T)


def eval_core(params: KernelHyperparams, A, B) -> CovarianceMatrix:
    """
    Avalia K_ij = k_f(A_i, B_j, θ). O ruído não é somado aqui.

    Args:
        params: Hiperparâmetros do kernel
        A: Matriz de pontos n x n_d
        B: Matriz de pontos m x n_d (passe o mesmo objeto de ``A`` para
           obter a matriz simétrica)

    Returns:
        CovarianceMatrix n x m
    """
    tau, same = _differences(params, A, B)

    if params.kind == "rbf":
        scaled = tau / params.lengthscales
        K = params.signal_variance * np.exp(-0.5 * np.sum(scaled ** 2, axis=-1))
    else:
        tau2 = tau ** 2
        K = np.zeros(tau.shape[:2])
        for q in range(params.n_mixtures):
            envelope = np.exp(-2.0 * np.pi ** 2 * (tau2 @ params.variances[q]))
            cosine = np.prod(np.cos(2.0 * np.pi * tau * params.means[q]), axis=-1)
            K += params.weights[q] * envelope * cosine

    if same:
        K = _symmetrize(K)
    return CovarianceMatrix(K)


def core_gradients(params: KernelHyperparams, X) -> np.ndarray:
    """
    Derivadas de K_c(X, X) em relação a cada parâmetro de :meth:`log_params`.

    Returns:
        Array (P, n, n)
    """
    tau, _ = _differences(params, X, X)

    if params.kind == "rbf":
        scaled2 = (tau / params.lengthscales) ** 2
        K = params.signal_variance * np.exp(-0.5 * np.sum(scaled2, axis=-1))
        grads = [K * scaled2[..., d] for d in range(params.n_dims)]
        grads.append(K)
        return np.stack(grads)

    tau2 = tau ** 2
    two_pi_tau = 2.0 * np.pi * tau
    grads = []
    for q in range(params.n_mixtures):
        w = params.weights[q]
        means = params.means[q]
        variances = params.variances[q]
        envelope = np.exp(-2.0 * np.pi ** 2 * (tau2 @ variances))
        cosines = np.cos(two_pi_tau * means)
        term = w * envelope * np.prod(cosines, axis=-1)

        grads.append(term)
        for d in range(params.n_dims):
            others = np.prod(np.delete(cosines, d, axis=-1), axis=-1)
            sine = np.sin(two_pi_tau[..., d] * means[d])
            grads.append(-w * envelope * others * sine * two_pi_tau[..., d] * means[d])
        for d in range(params.n_dims):
            grads.append(term * (-2.0 * np.pi ** 2 * tau2[..., d] * variances[d]))
    return np.stack(grads)


def eval_coreg(params: KernelHyperparams, task: TaskMatrix, X) -> CovarianceMatrix:
    """
    Matriz completa Σ_T ⊗ K_c com o ruído de cada fidelidade na diagonal.

    O vetor de alvos correspondente empilha as fidelidades: bloco (k, l) = t_kl · K_c.
    """
    core = eval_core(params, X, X).values
    n_x = core.shape[0]
    sigma = task.covariance
    K = np.kron(sigma, core)
    K[np.diag_indices_from(K)] += np.repeat(params.noise_for(task.n_tasks), n_x)
    return CovarianceMatrix(_symmetrize(K))


def cholesky_with_jitter(matrix: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Fator de Cholesky inferior, somando jitter crescente se necessário.

    Tenta sem jitter; depois 1e-10 x média da diagonal, multiplicando por 10
    até 1e-4.

    Returns:
        Tuple com (fator L, jitter absoluto somado)

    Raises:
        ConditioningError: se nem o jitter máximo permitir a fatoração
    """
    try:
        return linalg.cholesky(matrix, lower=True), 0.0
    except linalg.LinAlgError:
        pass

    scale = float(np.mean(np.diag(matrix)))
    if not scale > 0:
        scale = 1.0

    relative = JITTER_START
    jitter = relative * scale
    while relative <= JITTER_MAX * (1 + 1e-9):
        jitter = relative * scale
        try:
            factor = linalg.cholesky(matrix + jitter * np.eye(matrix.shape[0]), lower=True)
        except linalg.LinAlgError:
            relative *= 10.0
            continue
        if relative > JITTER_START:
            logger.warning("Cholesky exigiu jitter de {:.1e} (relativo)", relative)
        else:
            logger.debug("Cholesky com jitter {:.3e}", jitter)
        return factor, jitter

    raise ConditioningError(jitter)
