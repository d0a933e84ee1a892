"""Hierarquia de erros do gerador, cada classe com seu código de saída."""

from typing import Sequence


class SynthFidError(Exception):
    """Erro base. ``exit_code`` é usado pela CLI."""

    exit_code = 1


class UsageError(SynthFidError):
    """Uso incorreto ou entrada inválida (código 2)."""

    exit_code = 2


class InputShapeError(UsageError):
    """Dimensões incompatíveis entre matrizes de pontos e hiperparâmetros."""


class DatasetFormatError(UsageError):
    """Arquivo de dados malformado."""

    def __init__(self, message: str, line: int):
        super().__init__(f"linha {line}: {message}")
        self.line = line


class DomainError(UsageError):
    """Ponto fora da caixa de domínio de um benchmark."""

    def __init__(self, row: int, point: Sequence[float]):
        coords = ", ".join(f"{v:.6g}" for v in point)
        super().__init__(f"ponto fora do domínio na linha {row}: ({coords})")
        self.row = row


class ProtocolError(UsageError):
    """Uso fora de ordem de uma sessão de limites de correlação."""


class CorrelationRangeError(UsageError):
    """Valor de correlação fora do intervalo válido."""

    def __init__(self, index: int, value: float, lower: float, upper: float):
        super().__init__(
            f"correlação {value:.6f} para a entrada {index} fora do intervalo "
            f"válido [{lower:.6f}, {upper:.6f}]"
        )
        self.index = index
        self.value = value
        self.lower = lower
        self.upper = upper


class NumericalError(SynthFidError):
    """Falha numérica (código 3)."""

    exit_code = 3


class ConditioningError(NumericalError):
    """Fatoração de Cholesky falhou mesmo com o jitter máximo."""

    def __init__(self, jitter: float):
        super().__init__(f"fatoração de Cholesky falhou (jitter tentado: {jitter:.3e})")
        self.jitter = jitter


class FitError(NumericalError):
    """Todas as reinicializações do ajuste falharam."""

    def __init__(self, causes: Sequence[str]):
        detail = "; ".join(f"#{i}: {c}" for i, c in enumerate(causes))
        super().__init__(f"todas as reinicializações falharam ({detail})")
        self.causes = list(causes)


class InvalidTaskCovarianceError(NumericalError):
    """Matriz de tarefas expandida não é PSD."""

    def __init__(self, min_eigenvalue: float):
        super().__init__(
            f"matriz de tarefas expandida não é PSD (menor autovalor {min_eigenvalue:.3e})"
        )
        self.min_eigenvalue = min_eigenvalue


class InvalidCorrelationMatrixError(NumericalError):
    """Matriz de correlação da base inválida."""


class DegenerateFidelityError(NumericalError):
    """Coluna da base com desvio padrão nulo."""

    def __init__(self, column: int):
        super().__init__(f"fidelidade {column} é constante (desvio padrão nulo)")
        self.column = column


class IllConditionedBasisError(NumericalError):
    """Base de amostragem mal condicionada."""

    def __init__(self, condition_number: float, threshold: float):
        super().__init__(
            f"base mal condicionada (número de condição {condition_number:.3e} > "
            f"{threshold:.1e}); tente outra semente ou menos fidelidades"
        )
        self.condition_number = condition_number


class SamplingRefusedError(NumericalError):
    """Amostragem recusada (variância heurística nula ou vetor irrealizável)."""
