"""
Pares de funções multi-fidelidade de referência (Liu 1-D e Currin 2-D) e
construção de grades uniformes.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Literal, Tuple

import numpy as np

from .dataset import FidelityDataset
from .errors import DomainError, InputShapeError, UsageError

Evaluator = Callable[[np.ndarray], np.ndarray]

# Tolerância na verificação da caixa de domínio
_DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class BenchmarkPair:
    """Par (alta, baixa) fidelidade sobre uma caixa de domínio."""

    name: str
    n_dims: int
    domain: Tuple[Tuple[float, float], ...]
    high: Evaluator
    low: Evaluator
    description: str


def currin_high(X: np.ndarray) -> np.ndarray:
    x1, x2 = X[:, 0], X[:, 1]
    with np.errstate(divide="ignore"):
        decay = np.where(x2 > 0, 1.0 - np.exp(-1.0 / (2.0 * np.where(x2 > 0, x2, 1.0))), 1.0)
    numerator = 2300 * x1 ** 3 + 1900 * x1 ** 2 + 2092 * x1 + 60
    denominator = 100 * x1 ** 3 + 500 * x1 ** 2 + 4 * x1 + 20
    return decay * numerator / denominator


def currin_low(X: np.ndarray) -> np.ndarray:
    """Média da alta fidelidade em quatro pontos deslocados de ±0.05."""
    total = np.zeros(X.shape[0])
    for dx, dy in ((0.05, 0.05), (0.05, -0.05), (-0.05, 0.05), (-0.05, -0.05)):
        shifted = X + np.array([dx, dy])
        shifted[:, 1] = np.maximum(shifted[:, 1], 0.0)
        total += currin_high(shifted)
    return total / 4.0


def liu_high(X: np.ndarray) -> np.ndarray:
    x = X[:, 0]
    return (6 * x - 2) ** 2 * np.sin(12 * x - 4)


def liu_low(X: np.ndarray) -> np.ndarray:
    x = X[:, 0]
    return 0.5 * liu_high(X) + 10.0 * (x - 0.5) - 5.0


BENCHMARKS: Dict[str, BenchmarkPair] = {
    "liu": BenchmarkPair(
        name="liu",
        n_dims=1,
        domain=((0.0, 1.0),),
        high=liu_high,
        low=liu_low,
        description="Forrester 1-D: alta (6x-2)² sin(12x-4), baixa 0.5·alta + 10(x-0.5) - 5",
    ),
    "currin": BenchmarkPair(
        name="currin",
        n_dims=2,
        domain=((0.0, 1.0), (0.0, 1.0)),
        high=currin_high,
        low=currin_low,
        description="Currin 2-D: baixa é a média da alta em quatro pontos deslocados",
    ),
}


def get_benchmark(name: str) -> BenchmarkPair:
    try:
        return BENCHMARKS[name]
    except KeyError:
        known = ", ".join(sorted(BENCHMARKS))
        raise UsageError(f"benchmark desconhecido: '{name}' (disponíveis: {known})") from None


def evaluate(pair: BenchmarkPair, fidelity: Literal["low", "high"], X) -> np.ndarray:
    """
    Avalia uma fidelidade linha a linha.

    Args:
        pair: Par de referência
        fidelity: ``low`` ou ``high``
        X: Matriz de pontos n x n_d dentro da caixa de domínio

    Returns:
        Vetor com n valores

    Raises:
        DomainError: com a primeira linha fora da caixa
    """
    points = np.asarray(X, dtype=float)
    if points.ndim == 1:
        points = points[:, None] if pair.n_dims == 1 else points[None, :]
    if points.ndim != 2 or points.shape[1] != pair.n_dims:
        raise InputShapeError(f"X com forma {np.shape(X)} para benchmark de {pair.n_dims} dimensões")

    lower = np.array([b[0] for b in pair.domain])
    upper = np.array([b[1] for b in pair.domain])
    outside = np.any((points < lower - _DOMAIN_SLACK) | (points > upper + _DOMAIN_SLACK), axis=1)
    if np.any(outside):
        row = int(np.argmax(outside))
        raise DomainError(row, points[row])

    if fidelity == "high":
        return pair.high(points)
    if fidelity == "low":
        return pair.low(points)
    raise UsageError(f"fidelidade desconhecida: {fidelity}")


def grid(pair: BenchmarkPair, points_per_dim: int) -> FidelityDataset:
    """
    Grade tensorial uniforme sobre a caixa de domínio, em ordem lexicográfica.

    Colunas de Y: [baixa, alta], com a alta fidelidade como verdade de referência.
    """
    if points_per_dim < 2:
        raise UsageError("a grade exige pelo menos 2 pontos por dimensão")
    axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in pair.domain]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.column_stack([m.reshape(-1) for m in mesh])
    Y = np.column_stack([evaluate(pair, "low", X), evaluate(pair, "high", X)])
    return FidelityDataset(
        X=X,
        Y=Y,
        labels=("low", "high"),
        metadata={"generator": pair.name, "points_per_dim": str(points_per_dim)},
    )
