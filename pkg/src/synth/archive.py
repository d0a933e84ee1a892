"""
Esquemas pydantic dos artefatos em disco: configuração de execução, arquivo
do modelo ajustado e relatório de amostra.
"""

import json
import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from loguru import logger
import numpy as np
from pydantic import BaseModel, Field, ValidationError

from .corrbounds import CorrelationSpec
from .dataset import FidelityDataset
from .errors import UsageError
from .kernel import KernelHyperparams, TaskMatrix
from .mogp import FitDiagnostics, FitSettings, MogpModel
from .sampler import SyntheticSample


SCHEMA_VERSION = 1


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if math.isfinite(value) else None


class RunConfig(BaseModel):
    """Descrição serializável de uma execução: (config, dados) reproduzem tudo."""

    fit: FitSettings = Field(default_factory=FitSettings)
    prior_draw: Literal["matrix", "cholesky"] = "matrix"
    heuristic: Literal["variance", "std"] = "variance"
    max_condition: float = 1e12
    correlation_mode: Literal["interactive", "explicit", "random", "task-covariance"] = "random"
    correlations: List[float] = Field(default_factory=list)
    task_cross: List[float] = Field(default_factory=list)
    task_variance: Optional[float] = None
    sample_seeds: List[int] = Field(default_factory=lambda: [0])
    output_dir: str = "saida"


class KernelRecord(BaseModel):
    kind: Literal["rbf", "spectral-mixture"]
    lengthscales: Optional[List[float]] = None
    signal_variance: Optional[float] = None
    weights: Optional[List[float]] = None
    means: Optional[List[List[float]]] = None
    variances: Optional[List[List[float]]] = None
    noise_variance: List[float]

    @classmethod
    def from_params(cls, params: KernelHyperparams) -> "KernelRecord":
        if params.kind == "rbf":
            return cls(
                kind="rbf",
                lengthscales=params.lengthscales.tolist(),
                signal_variance=params.signal_variance,
                noise_variance=params.noise_variance.tolist(),
            )
        return cls(
            kind="spectral-mixture",
            weights=params.weights.tolist(),
            means=params.means.tolist(),
            variances=params.variances.tolist(),
            noise_variance=params.noise_variance.tolist(),
        )

    def to_params(self) -> KernelHyperparams:
        if self.kind == "rbf":
            return KernelHyperparams.rbf(self.lengthscales, self.signal_variance, self.noise_variance)
        return KernelHyperparams.spectral_mixture(self.weights, self.means, self.variances, self.noise_variance)


class TaskRecord(BaseModel):
    covariance: List[List[float]]
    factor: List[List[float]]


class DiagnosticsRecord(BaseModel):
    log_marginal_likelihood: float
    iterations: int
    restarts_used: int
    restart_lml: List[Optional[float]] = Field(default_factory=list)

    @classmethod
    def from_diagnostics(cls, diagnostics: FitDiagnostics) -> "DiagnosticsRecord":
        return cls(
            log_marginal_likelihood=diagnostics.log_marginal_likelihood,
            iterations=diagnostics.iterations,
            restarts_used=diagnostics.restarts_used,
            restart_lml=[_finite_or_none(v) for v in diagnostics.restart_lml],
        )

    def to_diagnostics(self) -> FitDiagnostics:
        return FitDiagnostics(
            log_marginal_likelihood=self.log_marginal_likelihood,
            iterations=self.iterations,
            restarts_used=self.restarts_used,
            restart_lml=tuple(-math.inf if v is None else v for v in self.restart_lml),
        )


class DatasetRecord(BaseModel):
    X: List[List[float]]
    Y: List[List[float]]
    labels: List[str]
    metadata: Dict[str, str] = Field(default_factory=dict)

    @classmethod
    def from_dataset(cls, data: FidelityDataset) -> "DatasetRecord":
        return cls(X=data.X.tolist(), Y=data.Y.tolist(), labels=list(data.labels), metadata=data.metadata)

    def to_dataset(self) -> FidelityDataset:
        return FidelityDataset(X=np.array(self.X), Y=np.array(self.Y), labels=tuple(self.labels), metadata=self.metadata)


class ModelArchive(BaseModel):
    """Arquivo ``modelo.json``: hiperparâmetros, matriz de tarefas, diagnóstico e dados."""

    schema_version: int = SCHEMA_VERSION
    kernel: KernelRecord
    task_matrix: TaskRecord
    diagnostics: Optional[DiagnosticsRecord] = None
    run_config: RunConfig = Field(default_factory=RunConfig)
    dataset: DatasetRecord

    @classmethod
    def from_model(cls, model: MogpModel, run_config: Optional[RunConfig] = None) -> "ModelArchive":
        diagnostics = None
        if model.diagnostics is not None:
            diagnostics = DiagnosticsRecord.from_diagnostics(model.diagnostics)
        return cls(
            kernel=KernelRecord.from_params(model.params),
            task_matrix=TaskRecord(
                covariance=model.task.covariance.tolist(),
                factor=model.task.factor.tolist(),
            ),
            diagnostics=diagnostics,
            run_config=run_config or RunConfig(),
            dataset=DatasetRecord.from_dataset(model.data),
        )

    def to_model(self) -> MogpModel:
        diagnostics = self.diagnostics.to_diagnostics() if self.diagnostics else None
        return MogpModel.build(
            self.dataset.to_dataset(),
            self.kernel.to_params(),
            TaskMatrix(np.array(self.task_matrix.factor)),
            diagnostics,
        )


class SampleReport(BaseModel):
    """Relatório de uma amostra: pedido vs obtido e a proveniência."""

    seed: int
    labels: List[str]
    requested: Optional[List[float]] = None
    achieved: List[float]
    bounds: List[Tuple[float, float]] = Field(default_factory=list)
    residual: Optional[float] = None
    heuristic_weights: List[float] = Field(default_factory=list)
    heuristic_variance: Optional[float] = None
    realized_variance: float
    coefficients: List[float]
    task_cross: List[float]
    prior_draw: str
    heuristic: str
    run_config: RunConfig

    @classmethod
    def from_sample(cls, sample: SyntheticSample, labels: List[str], run_config: RunConfig) -> "SampleReport":
        spec: Optional[CorrelationSpec] = sample.spec
        targets = sample.targets
        return cls(
            seed=sample.seed,
            labels=list(labels),
            requested=None if spec is None else spec.values.tolist(),
            achieved=sample.achieved.tolist(),
            bounds=[] if spec is None else [tuple(b) for b in spec.bounds],
            residual=None if spec is None else spec.residual,
            heuristic_weights=[] if targets is None else targets.weights.tolist(),
            heuristic_variance=None if targets is None else targets.heuristic_variance,
            realized_variance=sample.realized_variance,
            coefficients=sample.coefficients.tolist(),
            task_cross=sample.task_cross.tolist(),
            prior_draw=sample.basis.prior_draw,
            heuristic=run_config.heuristic,
            run_config=run_config,
        )


def _write_json(payload: BaseModel, path: Union[str, Path]) -> None:
    try:
        Path(path).write_text(payload.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"não foi possível gravar {path}: {exc.strerror or exc}") from exc
    logger.info("Arquivo salvo: {}", path)


def save_archive(archive: ModelArchive, path: Union[str, Path]) -> None:
    _write_json(archive, path)


def load_archive(path: Union[str, Path]) -> ModelArchive:
    """
    Lê e valida um ``modelo.json``.

    Raises:
        UsageError: arquivo ausente, JSON inválido ou esquema incompatível
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except FileNotFoundError as exc:
        raise UsageError(f"arquivo de modelo não encontrado: {path}") from exc
    except OSError as exc:
        raise UsageError(f"não foi possível ler {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"arquivo de modelo inválido ({exc})") from exc

    if not isinstance(payload, dict) or payload.get("schema_version") != SCHEMA_VERSION:
        version = payload.get("schema_version") if isinstance(payload, dict) else None
        raise UsageError(
            f"versão de esquema {version} não suportada (esperada {SCHEMA_VERSION})"
        )
    try:
        return ModelArchive.model_validate(payload)
    except ValidationError as exc:
        raise UsageError(f"arquivo de modelo inválido: {exc.error_count()} erro(s) de esquema") from exc


def save_report(report: SampleReport, path: Union[str, Path]) -> None:
    _write_json(report, path)
