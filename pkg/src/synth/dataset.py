"""
Conjunto de dados multi-fidelidade em desenho de blocos e o formato CSV
canônico ``x0,...,x{d-1},fidelity,y``.

Os nomes das fidelidades vão numa linha opcional ``# labels: a,b,...`` antes
do cabeçalho; sem ela as fidelidades se chamam ``f0, f1, ...``.
"""

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DatasetFormatError, InputShapeError, UsageError

FLOAT_FORMAT = ".17g"
LABELS_PREFIX = "# labels:"


def format_float(value: float) -> str:
    return format(float(value), FLOAT_FORMAT)


def default_labels(n_tasks: int) -> Tuple[str, ...]:
    return tuple(f"f{k}" for k in range(n_tasks))


def _parse_labels(line: str) -> Tuple[str, ...]:
    if not line.startswith(LABELS_PREFIX):
        raise DatasetFormatError(f"comentário inesperado; use '{LABELS_PREFIX} a,b,...'", line=1)
    labels = tuple(item.strip() for item in line[len(LABELS_PREFIX):].split(","))
    if not all(labels):
        raise DatasetFormatError("rótulo de fidelidade vazio", line=1)
    if len(set(labels)) != len(labels):
        raise DatasetFormatError("rótulos de fidelidade repetidos", line=1)
    return labels


@dataclass(frozen=True, eq=False)
class FidelityDataset:
    """
    Pontos X (n_x x n_d) e alvos Y (n_x x n_t), coluna i = fidelidade i.

    Por convenção a última fidelidade (índice n_t-1) é a verdade de referência.
    """

    X: np.ndarray
    Y: np.ndarray
    labels: Tuple[str, ...] = ()
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=float)
        Y = np.array(self.Y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise InputShapeError(f"X {X.shape} e Y {Y.shape} incompatíveis")
        if X.shape[0] < 2:
            raise InputShapeError("são necessários pelo menos 2 pontos")
        if Y.shape[1] < 1 or X.shape[1] < 1:
            raise InputShapeError("dados sem dimensões ou sem fidelidades")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InputShapeError("dados contêm NaN ou Inf")

        labels = tuple(self.labels) or default_labels(Y.shape[1])
        if len(labels) != Y.shape[1] or len(set(labels)) != len(labels):
            raise InputShapeError("rótulos de fidelidade devem ser únicos, um por coluna")

        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def n_points(self) -> int:
        return int(self.X.shape[0])

    @property
    def n_dims(self) -> int:
        return int(self.X.shape[1])

    @property
    def n_tasks(self) -> int:
        return int(self.Y.shape[1])

    @property
    def ground_truth(self) -> int:
        return self.n_tasks - 1

    def stacked_targets(self) -> np.ndarray:
        """Vetor y empilhado por fidelidade (compatível com Σ_T ⊗ K_c)."""
        return self.Y.T.reshape(-1)

    def with_fidelity(self, values: np.ndarray, label: str) -> "FidelityDataset":
        """Retorna uma cópia com uma fidelidade adicional."""
        column = np.asarray(values, dtype=float).reshape(-1, 1)
        return FidelityDataset(
            X=self.X,
            Y=np.hstack([self.Y, column]),
            labels=self.labels + (label,),
            metadata=self.metadata,
        )


def parse_csv(text: str, source: Optional[str] = None) -> FidelityDataset:
    """
    Lê o formato canônico e valida a completude do desenho de blocos.

    Args:
        text: Conteúdo do arquivo
        source: Nome do arquivo de origem (metadado)

    Returns:
        FidelityDataset com X na ordem de primeira aparição dos pontos
    """
    labels: Tuple[str, ...] = ()
    offset = 0
    if text.startswith("#"):
        first, _, text = text.partition("\n")
        labels = _parse_labels(first.rstrip("\r"))
        offset = 1

    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise DatasetFormatError("arquivo vazio", line=1 + offset)

    header = [cell.strip() for cell in rows[0]]
    n_dims = len(header) - 2
    expected = [f"x{d}" for d in range(n_dims)] + ["fidelity", "y"]
    if n_dims < 1 or header != expected:
        raise DatasetFormatError(f"cabeçalho esperado {','.join(expected)}", line=1 + offset)

    point_index: Dict[Tuple[float, ...], int] = {}
    points: List[Tuple[float, ...]] = []
    values: Dict[Tuple[int, int], float] = {}
    max_fidelity = -1

    for line, row in enumerate(rows[1:], start=2 + offset):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != n_dims + 2:
            raise DatasetFormatError(f"esperadas {n_dims + 2} colunas, lidas {len(row)}", line)
        try:
            point = tuple(float(cell) for cell in row[:n_dims])
            fidelity = int(row[n_dims])
            y = float(row[n_dims + 1])
        except ValueError as exc:
            raise DatasetFormatError(f"valor inválido ({exc})", line) from exc
        if fidelity < 0:
            raise DatasetFormatError("índice de fidelidade negativo", line)
        if not (np.all(np.isfinite(point)) and np.isfinite(y)):
            raise DatasetFormatError("valor não finito", line)

        if point not in point_index:
            point_index[point] = len(points)
            points.append(point)
        key = (fidelity, point_index[point])
        if key in values:
            raise DatasetFormatError("ponto repetido para a mesma fidelidade", line)
        values[key] = y
        max_fidelity = max(max_fidelity, fidelity)

    if not points:
        raise DatasetFormatError("nenhuma linha de dados", line=2 + offset)

    n_tasks = max_fidelity + 1
    Y = np.empty((len(points), n_tasks))
    for k in range(n_tasks):
        for i in range(len(points)):
            if (k, i) not in values:
                raise DatasetFormatError(
                    f"desenho de blocos incompleto: fidelidade {k} sem o ponto {points[i]}",
                    line=len(rows) + offset,
                )
            Y[i, k] = values[(k, i)]

    if labels and len(labels) != n_tasks:
        raise DatasetFormatError(f"{len(labels)} rótulos para {n_tasks} fidelidades", line=1)

    metadata = {"source": source} if source else {}
    return FidelityDataset(X=np.array(points), Y=Y, labels=labels, metadata=metadata)


def to_csv_text(dataset: FidelityDataset) -> str:
    """Serializa agrupando por fidelidade, com 17 dígitos significativos."""
    lines = []
    if dataset.labels != default_labels(dataset.n_tasks):
        for label in dataset.labels:
            if "," in label or "\n" in label or label != label.strip():
                raise InputShapeError(f"rótulo '{label}' não cabe na linha de rótulos do CSV")
        lines.append(f"{LABELS_PREFIX} {','.join(dataset.labels)}")
    header = [f"x{d}" for d in range(dataset.n_dims)] + ["fidelity", "y"]
    lines.append(",".join(header))
    for k in range(dataset.n_tasks):
        for i in range(dataset.n_points):
            cells = [format_float(v) for v in dataset.X[i]]
            cells += [str(k), format_float(dataset.Y[i, k])]
            lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def read_csv(path: Union[str, Path]) -> FidelityDataset:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"não foi possível ler {path}: {exc.strerror or exc}") from exc
    return parse_csv(text, source=path.name)


def write_csv(dataset: FidelityDataset, path: Union[str, Path]) -> None:
    try:
        Path(path).write_text(to_csv_text(dataset), encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"não foi possível gravar {path}: {exc.strerror or exc}") from exc


def columns_to_csv_text(header: Sequence[str], columns: Sequence[np.ndarray]) -> str:
    """CSV largo (uma coluna por série), usado na exportação de dados de gráfico."""
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(format_float(v) for v in row))
    return "\n".join(lines) + "\n"
