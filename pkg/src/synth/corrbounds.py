"""
Limites sequenciais para vetores de correlação de Pearson.

Cada entrada do vetor P_c (uma por coluna da base, a última contra a amostra
a priori) é escolhida dentro de um intervalo calculado a partir da
decomposição de Cholesky da matriz de correlação da base, de modo que a
matriz expandida

    C' = [[C,    P_c],
          [P_cᵀ, 1  ]]

permaneça PSD com diagonal unitária.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from loguru import logger
import numpy as np

from .errors import CorrelationRangeError, InvalidCorrelationMatrixError, ProtocolError


# Folga de aceitação de valores nas extremidades
CHOICE_SLACK = 1e-12
# Radicando negativo até este valor é tratado como arredondamento
RADICAND_FLOOR = -1e-12
# Pivô abaixo deste valor zera a coluna do fator
PIVOT_TOLERANCE = 1e-12
# Resíduo máximo para que a amostra seja realizável pela base
REALIZABLE_RESIDUAL = 1e-9


def tolerant_cholesky(matrix: np.ndarray) -> np.ndarray:
    """
    Cholesky inferior que aceita matrizes semidefinidas.

    Pivôs nulos (até ``PIVOT_TOLERANCE``) zeram a coluna correspondente, de
    forma que colunas duplicadas produzem linhas dependentes no fator.

    Raises:
        InvalidCorrelationMatrixError: se a matriz não for PSD
    """
    A = np.asarray(matrix, dtype=float)
    n = A.shape[0]
    L = np.zeros_like(A)

    for i in range(n):
        pivot = A[i, i] - L[i, :i] @ L[i, :i]
        if pivot > PIVOT_TOLERANCE:
            L[i, i] = np.sqrt(pivot)
            L[i + 1:, i] = (A[i + 1:, i] - L[i + 1:, :i] @ L[i, :i]) / L[i, i]
            continue
        if pivot < -1e-8:
            raise InvalidCorrelationMatrixError(
                f"matriz de correlação não é PSD (pivô {pivot:.3e} na coluna {i})"
            )
        remainder = A[i + 1:, i] - L[i + 1:, :i] @ L[i, :i]
        if remainder.size and np.max(np.abs(remainder)) > 1e-6:
            raise InvalidCorrelationMatrixError(
                f"matriz de correlação não é PSD (coluna {i} dependente e inconsistente)"
            )

    return L


def _validate_correlation(matrix) -> np.ndarray:
    C = np.atleast_2d(np.asarray(matrix, dtype=float))
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] < 1:
        raise InvalidCorrelationMatrixError(f"matriz de correlação com forma {C.shape}")
    if not np.all(np.isfinite(C)):
        raise InvalidCorrelationMatrixError("matriz de correlação contém NaN ou Inf")
    if np.max(np.abs(C - C.T)) > 1e-10:
        raise InvalidCorrelationMatrixError("matriz de correlação não é simétrica")
    if np.max(np.abs(np.diag(C) - 1.0)) > 1e-10:
        raise InvalidCorrelationMatrixError("diagonal da matriz de correlação deve ser 1")
    if np.max(np.abs(C)) > 1.0 + CHOICE_SLACK:
        raise InvalidCorrelationMatrixError("entrada de correlação com módulo maior que 1")
    return C


@dataclass
class BoundsSession:
    """
    Estado da escolha sequencial.

    ``factor`` é o fator de C permutado pela ordem de escolha; ``row`` é a
    linha nova do fator expandido, preenchida à medida que os valores são
    escolhidos. ``values`` e ``bounds`` ficam na ordem de escolha.
    """

    reference: np.ndarray
    order: Tuple[int, ...]
    factor: np.ndarray
    row: np.ndarray
    cursor: int = 0
    values: List[float] = field(default_factory=list)
    bounds: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.order)

    @property
    def exhausted(self) -> bool:
        return self.cursor >= self.size

    @property
    def next_index(self) -> int:
        """Índice na base da próxima entrada a escolher."""
        if self.exhausted:
            raise ProtocolError("todas as entradas já foram escolhidas")
        return self.order[self.cursor]

    @property
    def is_final_entry(self) -> bool:
        return self.cursor == self.size - 1


@dataclass(frozen=True, eq=False)
class CorrelationSpec:
    """
    Vetor de correlações validado.

    ``values`` e ``bounds`` estão na ordem da base (fidelidades e, por
    último, a amostra a priori). ``residual`` é 1 - ‖ℓ‖², a parte da
    amostra fora do espaço gerado pela base.
    """

    values: np.ndarray
    order: Tuple[int, ...]
    factor: np.ndarray
    bounds: Tuple[Tuple[float, float], ...]
    reference: np.ndarray
    residual: float

    @property
    def realizable(self) -> bool:
        return self.residual <= REALIZABLE_RESIDUAL

    def expanded_correlation(self) -> np.ndarray:
        """Matriz C' de tamanho (m+1) x (m+1), na ordem da base."""
        m = self.values.size
        expanded = np.eye(m + 1)
        expanded[:m, :m] = self.reference
        expanded[:m, m] = self.values
        expanded[m, :m] = self.values
        return expanded


def begin(C, order: Optional[Sequence[int]] = None) -> BoundsSession:
    """
    Inicia uma sessão de limites para a matriz de correlação da base C.

    Args:
        C: Matriz de correlação (m x m), a última linha é a amostra a priori
        order: Permutação dos índices das fidelidades 0..m-2 que fixa a ordem
            de escolha (padrão: ordem natural). A amostra a priori é sempre a
            última entrada.

    Returns:
        BoundsSession com o cursor na primeira entrada
    """
    reference = _validate_correlation(C)
    m = reference.shape[0]

    if order is None:
        fidelities = list(range(m - 1))
    else:
        fidelities = [int(i) for i in order]
        if sorted(fidelities) != list(range(m - 1)):
            raise ProtocolError(
                f"ordem de escolha deve ser uma permutação de 0..{m - 2}, recebido {fidelities}"
            )
    full_order = tuple(fidelities + [m - 1])

    permuted = reference[np.ix_(full_order, full_order)]
    factor = tolerant_cholesky(permuted)
    logger.debug("Sessão de limites iniciada: m={}, ordem={}", m, full_order)
    return BoundsSession(reference, full_order, factor, np.zeros(m))


def _partial_and_radius(session: BoundsSession) -> Tuple[float, float, float]:
    k = session.cursor
    previous = session.row[:k]
    partial = float(session.factor[k, :k] @ previous)
    radicand = 1.0 - float(previous @ previous)
    if radicand < 0:
        if radicand < RADICAND_FLOOR:
            logger.debug("Radicando negativo {:.3e} limitado a zero", radicand)
        radicand = 0.0
    return partial, float(session.factor[k, k]), np.sqrt(radicand)


def bounds_for_next(session: BoundsSession) -> Tuple[float, float]:
    """
    Intervalo válido da próxima entrada.

    Returns:
        (inferior, superior) = parcial ∓ U'_kk · √(1 - ‖ℓ_{<k}‖²)

    Raises:
        ProtocolError: se a sessão estiver esgotada
    """
    if session.exhausted:
        raise ProtocolError("sessão de limites esgotada")
    partial, diagonal, radius = _partial_and_radius(session)
    half_width = diagonal * radius
    lower = max(partial - half_width, -1.0)
    upper = min(partial + half_width, 1.0)
    return lower, upper


def choose(session: BoundsSession, value: float) -> BoundsSession:
    """
    Fixa a próxima entrada e avança o cursor.

    Raises:
        CorrelationRangeError: se o valor estiver fora do intervalo
    """
    lower, upper = bounds_for_next(session)
    value = float(value)
    index = session.next_index
    if not (np.isfinite(value) and lower - CHOICE_SLACK <= value <= upper + CHOICE_SLACK):
        raise CorrelationRangeError(index, value, lower, upper)

    partial, diagonal, radius = _partial_and_radius(session)
    if diagonal > 0:
        component = float(np.clip((value - partial) / diagonal, -radius, radius))
    else:
        component = 0.0

    session.row[session.cursor] = component
    session.values.append(value)
    session.bounds.append((lower, upper))
    session.cursor += 1
    return session


def finalize(session: BoundsSession) -> CorrelationSpec:
    """
    Fecha a sessão e devolve o vetor na ordem da base.

    Raises:
        ProtocolError: se ainda houver entradas por escolher
    """
    if not session.exhausted:
        raise ProtocolError(
            f"sessão incompleta: {session.cursor} de {session.size} entradas escolhidas"
        )
    m = session.size
    values = np.empty(m)
    bounds: List[Tuple[float, float]] = [(0.0, 0.0)] * m
    for position, index in enumerate(session.order):
        values[index] = session.values[position]
        bounds[index] = session.bounds[position]

    residual = max(1.0 - float(session.row @ session.row), 0.0)
    factor = np.zeros((m + 1, m + 1))
    factor[:m, :m] = session.factor
    factor[m, :m] = session.row
    factor[m, m] = np.sqrt(residual)
    factor.setflags(write=False)
    values.setflags(write=False)

    return CorrelationSpec(
        values=values,
        order=session.order,
        factor=factor,
        bounds=tuple(bounds),
        reference=session.reference,
        residual=residual,
    )


def complete(session: BoundsSession) -> CorrelationSpec:
    """
    Preenche as entradas restantes e finaliza.

    Fidelidades restantes recebem o centro do intervalo; a entrada final
    (contra a amostra a priori) recebe o extremo superior, o que torna o
    vetor realizável.
    """
    while not session.exhausted:
        lower, upper = bounds_for_next(session)
        if session.is_final_entry:
            choose(session, upper)
        else:
            choose(session, 0.5 * (lower + upper))
    return finalize(session)


def sample_random(session: BoundsSession, seed: int) -> CorrelationSpec:
    """
    Sorteia as entradas restantes uniformemente dentro dos limites vivos.

    A entrada final é sorteada entre os dois extremos do seu intervalo, os
    únicos valores realizáveis por uma combinação linear da base.
    """
    rng = np.random.default_rng(seed)
    while not session.exhausted:
        lower, upper = bounds_for_next(session)
        if session.is_final_entry:
            choose(session, upper if rng.random() < 0.5 else lower)
        else:
            choose(session, rng.uniform(lower, upper))
    return finalize(session)
