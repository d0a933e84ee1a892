"""
Geração de uma fidelidade sintética com correlações de Pearson exatas.

A amostra é uma combinação linear s = Y'c das colunas da base (fidelidades
existentes mais uma amostra a priori). Os coeficientes resolvem
(Ỹ'ᵀỸ') c = σ_s, em que σ_s converte as correlações pedidas em covariâncias
usando uma variância heurística σ_h.
"""

from dataclasses import dataclass
from typing import Literal, Optional, Tuple

from loguru import logger
import numpy as np
from scipy import linalg

from .corrbounds import CorrelationSpec
from .errors import (
    DegenerateFidelityError,
    IllConditionedBasisError,
    InputShapeError,
    ProtocolError,
    SamplingRefusedError,
)
from .kernel import cholesky_with_jitter
from .mogp import MogpModel, synthetic_task_posterior


PriorDraw = Literal["matrix", "cholesky"]
HeuristicMode = Literal["variance", "std"]

DEFAULT_MAX_CONDITION = 1e12


def _is_constant(column: np.ndarray, std: float) -> bool:
    scale = max(1.0, float(np.max(np.abs(column))))
    return std <= 1e-12 * scale


@dataclass(frozen=True, eq=False)
class SampleBasis:
    """
    Colunas da base e suas estatísticas (convenção populacional, 1/n).

    ``expanded`` é Y' (n_x x (n_t+1)), ``centered`` é Ỹ'. A última coluna é
    a amostra a priori já reescalada; ``prior_scale`` é o fator aplicado a
    ela e ``noise`` é o vetor r que a gerou.
    """

    expanded: np.ndarray
    centered: np.ndarray
    means: np.ndarray
    covariance: np.ndarray
    stds: np.ndarray
    correlation: np.ndarray
    noise: np.ndarray
    seed: int
    prior_draw: str = "matrix"
    prior_scale: float = 1.0

    @classmethod
    def from_columns(
        cls,
        expanded: np.ndarray,
        seed: int = 0,
        noise: Optional[np.ndarray] = None,
        prior_draw: str = "matrix",
        prior_scale: float = 1.0,
    ) -> "SampleBasis":
        """Calcula médias, covariância e correlação de colunas já montadas."""
        expanded = np.array(expanded, dtype=float)
        if expanded.ndim != 2 or expanded.shape[1] < 1:
            raise InputShapeError(f"base com forma {expanded.shape}")
        n_x = expanded.shape[0]

        means = expanded.mean(axis=0)
        centered = expanded - means
        covariance = centered.T @ centered / n_x
        covariance = 0.5 * (covariance + covariance.T)
        stds = np.sqrt(np.diag(covariance))
        for i in range(expanded.shape[1]):
            if _is_constant(expanded[:, i], stds[i]):
                raise DegenerateFidelityError(i)

        correlation = covariance / np.outer(stds, stds)
        correlation = 0.5 * (correlation + correlation.T)
        np.fill_diagonal(correlation, 1.0)

        noise = np.zeros(n_x) if noise is None else np.asarray(noise, dtype=float)
        for array in (expanded, centered, means, covariance, stds, correlation, noise):
            array.setflags(write=False)
        return cls(
            expanded, centered, means, covariance, stds, correlation,
            noise, seed, prior_draw, prior_scale,
        )

    @property
    def size(self) -> int:
        return int(self.expanded.shape[1])

    @property
    def n_points(self) -> int:
        return int(self.expanded.shape[0])

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.covariance)


@dataclass(frozen=True)
class CovarianceTargets:
    """Correlações pedidas convertidas em covariâncias alvo."""

    correlations: np.ndarray
    weights: np.ndarray
    heuristic_variance: float
    covariances: np.ndarray


@dataclass(frozen=True, eq=False)
class SyntheticSample:
    """Fidelidade sintética gerada, com a sua proveniência."""

    values: np.ndarray
    coefficients: np.ndarray
    achieved: np.ndarray
    task_cross: np.ndarray
    seed: int
    basis: SampleBasis
    targets: Optional[CovarianceTargets] = None
    spec: Optional[CorrelationSpec] = None

    @property
    def requested(self) -> Optional[np.ndarray]:
        return None if self.spec is None else self.spec.values

    @property
    def realized_variance(self) -> float:
        return float(np.var(self.values))


def _prior_draw_raw(model: MogpModel, noise: np.ndarray, prior_draw: str) -> np.ndarray:
    core = model.core_matrix()
    if prior_draw == "matrix":
        return core @ noise
    if prior_draw == "cholesky":
        factor, _ = cholesky_with_jitter(core)
        return factor @ noise
    raise InputShapeError(f"modo de amostra a priori desconhecido: {prior_draw}")


def build_basis(model: MogpModel, seed: int, prior_draw: PriorDraw = "matrix") -> SampleBasis:
    """
    Monta a base Y' = [Y | y_n] a partir do modelo e da semente.

    y_n = K_c r (ou L r no modo ``cholesky``) com r ~ N(0, I), reescalada
    para que seu desvio padrão seja a média dos desvios padrão de Y. Não
    depende da matriz de tarefas.
    """
    data = model.data
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(data.n_points)
    raw = _prior_draw_raw(model, noise, prior_draw)

    fidelity_stds = data.Y.std(axis=0)
    for k, std in enumerate(fidelity_stds):
        if _is_constant(data.Y[:, k], std):
            raise DegenerateFidelityError(k)
    raw_std = float(raw.std())
    if _is_constant(raw, raw_std):
        raise DegenerateFidelityError(data.n_tasks)

    prior_scale = float(np.mean(fidelity_stds)) / raw_std
    expanded = np.column_stack([data.Y, raw * prior_scale])
    logger.debug("Base montada: semente {}, escala a priori {:.6g}", seed, prior_scale)
    return SampleBasis.from_columns(expanded, seed, noise, prior_draw, prior_scale)


def heuristic_variance(
    basis: SampleBasis, pc, mode: HeuristicMode = "variance"
) -> Tuple[np.ndarray, float]:
    """
    Pesos heurísticos e variância σ_h da amostra.

    A cada rodada escolhe a linha de C com maior sobreposição |C_i·P_c|
    (empate: menor índice), acumula a sobreposição no peso dessa linha e
    remove de P_c a sua projeção sobre a linha normalizada.

    Returns:
        Tuple com (pesos w, σ_h)
    """
    remaining = np.array(pc, dtype=float).reshape(-1)
    if remaining.size != basis.size:
        raise InputShapeError(f"vetor de correlações com {remaining.size} entradas para base de {basis.size}")
    C = basis.correlation
    weights = np.zeros(basis.size)

    for step in range(basis.size):
        overlaps = C @ remaining
        selected = int(np.argmax(np.abs(overlaps)))
        weights[selected] += abs(overlaps[selected])
        direction = C[selected] / np.linalg.norm(C[selected])
        remaining = remaining - (remaining @ direction) * direction
        logger.debug("Heurística rodada {}: linha {}, sobreposição {:.6g}", step, selected, overlaps[selected])

    if mode == "variance":
        sigma_h = float(weights @ basis.variances)
    elif mode == "std":
        sigma_h = float(weights @ basis.stds) ** 2
    else:
        raise InputShapeError(f"modo heurístico desconhecido: {mode}")
    return weights, sigma_h


def covariance_targets(basis: SampleBasis, pc, mode: HeuristicMode = "variance") -> CovarianceTargets:
    """σ_s_i = √σ_h · std(ỹ_i) · P_c_i."""
    correlations = np.array(pc, dtype=float).reshape(-1)
    weights, sigma_h = heuristic_variance(basis, correlations, mode)
    if not sigma_h > 0:
        raise SamplingRefusedError(
            "variância heurística nula: o vetor de correlações não se sobrepõe à base"
        )
    covariances = np.sqrt(sigma_h) * basis.stds * correlations
    return CovarianceTargets(correlations, weights, sigma_h, covariances)


def solve_coefficients(
    basis: SampleBasis,
    targets: CovarianceTargets,
    max_condition: float = DEFAULT_MAX_CONDITION,
) -> np.ndarray:
    """
    Resolve (Ỹ'ᵀỸ') c = σ_s por fatoração de Cholesky.

    Raises:
        IllConditionedBasisError: se cond(C) passar de ``max_condition``
    """
    condition = float(np.linalg.cond(basis.correlation))
    if not np.isfinite(condition) or condition > max_condition:
        raise IllConditionedBasisError(condition, max_condition)
    try:
        factor = linalg.cho_factor(basis.covariance, lower=True)
    except linalg.LinAlgError as exc:
        raise IllConditionedBasisError(float("inf"), max_condition) from exc
    return linalg.cho_solve(factor, np.asarray(targets.covariances, dtype=float))


def achieved_correlations(basis: SampleBasis, values: np.ndarray) -> np.ndarray:
    """Correlação de Pearson de ``values`` com cada coluna da base."""
    centered = np.asarray(values, dtype=float) - np.mean(values)
    norm = np.linalg.norm(centered)
    if norm == 0:
        return np.zeros(basis.size)
    return (basis.centered.T @ centered) / (np.linalg.norm(basis.centered, axis=0) * norm)


def draw(
    model: MogpModel,
    spec: CorrelationSpec,
    seed: int,
    prior_draw: PriorDraw = "matrix",
    heuristic: HeuristicMode = "variance",
    max_condition: float = DEFAULT_MAX_CONDITION,
) -> SyntheticSample:
    """
    Gera a amostra sintética para um vetor de correlações validado.

    Args:
        model: Modelo ajustado
        spec: Vetor validado contra a base desta semente
        seed: Semente da amostra a priori

    Returns:
        SyntheticSample com s = Y'c (médias restauradas)

    Raises:
        SamplingRefusedError: σ_h nula ou vetor irrealizável
        ProtocolError: vetor validado contra outra base
    """
    basis = build_basis(model, seed, prior_draw)
    if spec.values.size != basis.size:
        raise InputShapeError(f"vetor de correlações com {spec.values.size} entradas para base de {basis.size}")
    if np.max(np.abs(spec.reference - basis.correlation)) > 1e-8:
        raise ProtocolError("vetor de correlações validado contra outra base (semente ou modelo diferente)")
    if not spec.realizable:
        lower, upper = spec.bounds[-1]
        raise SamplingRefusedError(
            f"vetor irrealizável (resíduo {spec.residual:.3e}); a correlação com a amostra "
            f"a priori deve ser {lower:.6f} ou {upper:.6f}"
        )

    targets = covariance_targets(basis, spec.values, heuristic)
    coefficients = solve_coefficients(basis, targets, max_condition)
    values = basis.expanded @ coefficients
    achieved = achieved_correlations(basis, values)
    task_cross = model.task.covariance @ coefficients[:model.data.n_tasks]

    logger.debug(
        "Amostra semente {}: σ_h={:.6g}, variância realizada={:.6g}, erro máximo de correlação={:.3e}",
        seed, targets.heuristic_variance, float(np.var(values)),
        float(np.max(np.abs(achieved - spec.values))),
    )
    return SyntheticSample(values, coefficients, achieved, task_cross, seed, basis, targets, spec)


def draw_from_task_covariance(
    model: MogpModel,
    task_cross,
    task_var: float,
    seed: int,
    prior_draw: PriorDraw = "matrix",
) -> SyntheticSample:
    """
    Amostra direta da posterior da tarefa sintética a partir de Σ_T* e Σ_T**.

    No modo ``matrix``: s = μ_p + σ_p r. No modo ``cholesky``:
    s = μ_p + √(variância da tarefa) · L r, com K_c = L Lᵀ.
    """
    posterior = synthetic_task_posterior(model, task_cross, task_var)
    basis = build_basis(model, seed, prior_draw)

    if prior_draw == "matrix":
        prior_weight = posterior.task_variance
    else:
        prior_weight = float(np.sqrt(posterior.task_variance))
    coefficients = np.concatenate([posterior.contribution, [prior_weight / basis.prior_scale]])
    values = basis.expanded @ coefficients
    achieved = achieved_correlations(basis, values)

    return SyntheticSample(
        values, coefficients, achieved, np.asarray(task_cross, dtype=float).reshape(-1), seed, basis
    )
