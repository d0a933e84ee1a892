"""Fixtures compartilhadas: dados pequenos e modelos construídos sem ajuste."""

import numpy as np
import pytest

from src.config import SynthFidConfig
from src.synth.benchfns import get_benchmark, grid
from src.synth.dataset import FidelityDataset
from src.synth.kernel import KernelHyperparams, TaskMatrix
from src.synth.mogp import MogpModel


@pytest.fixture()
def two_task_data() -> FidelityDataset:
    X = np.linspace(0.0, 1.0, 8)[:, None]
    low = np.sin(6.0 * X[:, 0])
    high = np.sin(6.0 * X[:, 0]) + 0.3 * X[:, 0] ** 2
    return FidelityDataset(X=X, Y=np.column_stack([low, high]), labels=("low", "high"))


@pytest.fixture()
def two_task_task() -> TaskMatrix:
    return TaskMatrix.from_covariance([[1.0, 0.6], [0.6, 1.5]])


@pytest.fixture()
def two_task_model(two_task_data: FidelityDataset, two_task_task: TaskMatrix) -> MogpModel:
    params = KernelHyperparams.rbf([0.3], 1.0, noise_variance=1e-6)
    return MogpModel.build(two_task_data, params, two_task_task)


@pytest.fixture(scope="session")
def liu_data() -> FidelityDataset:
    return grid(get_benchmark("liu"), 50)


@pytest.fixture(scope="session")
def liu_model(liu_data: FidelityDataset) -> MogpModel:
    covariance = np.cov(liu_data.Y, rowvar=False, bias=True) + 1e-3 * np.eye(2)
    params = KernelHyperparams.rbf([0.1], 1.0, noise_variance=1e-4)
    return MogpModel.build(liu_data, params, TaskMatrix.from_covariance(covariance))


@pytest.fixture()
def restore_config(monkeypatch: pytest.MonkeyPatch):
    """Garante que SynthFidConfig volte aos valores do ambiente após o teste."""
    yield monkeypatch
    monkeypatch.undo()
    SynthFidConfig.reload()
