"""Módulo público do gerador de fidelidades sintéticas."""

from .benchfns import BENCHMARKS, BenchmarkPair, evaluate, get_benchmark, grid
from .corrbounds import (
    BoundsSession,
    CorrelationSpec,
    begin,
    bounds_for_next,
    choose,
    complete,
    finalize,
    sample_random,
)
from .dataset import FidelityDataset, parse_csv, read_csv, to_csv_text, write_csv
from .kernel import CovarianceMatrix, KernelHyperparams, TaskMatrix, eval_core, eval_coreg
from .mogp import (
    FitSettings,
    MogpModel,
    SyntheticTaskPosterior,
    fit,
    log_marginal_likelihood,
    posterior,
    synthetic_task_posterior,
)
from .sampler import (
    CovarianceTargets,
    SampleBasis,
    SyntheticSample,
    build_basis,
    draw,
    draw_from_task_covariance,
    heuristic_variance,
    solve_coefficients,
)

__all__ = [
    "BENCHMARKS",
    "BenchmarkPair",
    "BoundsSession",
    "CorrelationSpec",
    "CovarianceMatrix",
    "CovarianceTargets",
    "FidelityDataset",
    "FitSettings",
    "KernelHyperparams",
    "MogpModel",
    "SampleBasis",
    "SyntheticSample",
    "SyntheticTaskPosterior",
    "TaskMatrix",
    "begin",
    "bounds_for_next",
    "build_basis",
    "choose",
    "complete",
    "draw",
    "draw_from_task_covariance",
    "eval_core",
    "eval_coreg",
    "evaluate",
    "finalize",
    "fit",
    "get_benchmark",
    "grid",
    "heuristic_variance",
    "log_marginal_likelihood",
    "parse_csv",
    "posterior",
    "read_csv",
    "sample_random",
    "solve_coefficients",
    "synthetic_task_posterior",
    "to_csv_text",
    "write_csv",
]
