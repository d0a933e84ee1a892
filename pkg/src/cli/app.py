"""
Interface de linha de comando: ajuste, amostragem, limites, benchmarks e
validação de arquivos de dados.
"""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

from jinja2 import Environment, FileSystemLoader
from loguru import logger
import numpy as np
from pydantic import ValidationError

from ..config import SynthFidConfig
from ..logging_setup import configure_logging
from ..synth import benchfns
from ..synth.archive import ModelArchive, RunConfig, SampleReport, load_archive, save_archive, save_report
from ..synth.corrbounds import BoundsSession, CorrelationSpec, begin, bounds_for_next, choose, complete, finalize, sample_random
from ..synth.dataset import FidelityDataset, columns_to_csv_text, read_csv, write_csv
from ..synth.errors import SynthFidError, UsageError
from ..synth.mogp import FitSettings, MogpModel, fit, posterior
from ..synth.sampler import SyntheticSample, build_basis, draw, draw_from_task_covariance


TEMPLATES_DIR = Path(__file__).resolve().parent / "templates"

# Correlações com a verdade de referência usadas pelo bench sem lista explícita
SWEEP_TARGETS = (0.99, 0.9, 0.75, 0.5, 0.25, 0.0)

DEFAULT_POINTS = {"liu": 50, "currin": 20}

InputFn = Callable[[str], str]

_templates = Environment(
    loader=FileSystemLoader(str(TEMPLATES_DIR)),
    keep_trailing_newline=True,
    trim_blocks=False,
)


def parse_float_list(text: Optional[str], name: str = "--correlations") -> List[float]:
    if text is None or not text.strip():
        return []
    try:
        return [float(item) for item in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"{name}: lista de números inválida '{text}'") from exc


def parse_int_list(text: Optional[str], name: str = "--seeds") -> List[int]:
    if text is None or not text.strip():
        return []
    try:
        return [int(item) for item in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"{name}: lista de inteiros inválida '{text}'") from exc


def choice_order(n_tasks: int) -> List[int]:
    """Verdade de referência primeiro, depois as demais fidelidades em ordem."""
    return [n_tasks - 1] + list(range(n_tasks - 1))


def resolve_seed(args: argparse.Namespace) -> int:
    return args.seed if args.seed is not None else SynthFidConfig.SEED


def fit_settings_from_args(args: argparse.Namespace) -> FitSettings:
    def pick(value, default):
        return default if value is None else value

    try:
        return _build_fit_settings(args, pick)
    except ValidationError as exc:
        raise UsageError(f"configuração de ajuste inválida: {exc.errors()[0]['msg']}") from exc


def _build_fit_settings(args: argparse.Namespace, pick) -> FitSettings:
    return FitSettings(
        kernel=pick(args.kernel, SynthFidConfig.KERNEL),
        mixtures=pick(args.mixtures, SynthFidConfig.MIXTURES),
        restarts=pick(args.restarts, SynthFidConfig.RESTARTS),
        max_iter=pick(args.max_iter, SynthFidConfig.MAX_ITER),
        seed=resolve_seed(args),
        noise=args.noise,
        noise_value=args.noise_value,
        shared_noise=not args.per_fidelity_noise,
        analytic_gradients=args.analytic_gradients,
        workers=pick(args.workers, SynthFidConfig.WORKERS),
    )


def base_run_config(args: argparse.Namespace, fit_settings: Optional[FitSettings] = None) -> RunConfig:
    return RunConfig(
        fit=fit_settings or FitSettings(seed=resolve_seed(args)),
        prior_draw=getattr(args, "prior_draw", None) or SynthFidConfig.PRIOR_DRAW,
        heuristic=getattr(args, "heuristic", None) or SynthFidConfig.HEURISTIC,
        max_condition=SynthFidConfig.MAX_CONDITION,
    )


def basis_labels(data: FidelityDataset) -> List[str]:
    return list(data.labels) + ["a priori"]


def _session_for(model: MogpModel, seed: int, run_config: RunConfig) -> BoundsSession:
    basis = build_basis(model, seed, run_config.prior_draw)
    return begin(basis.correlation, order=choice_order(model.data.n_tasks))


def explicit_spec(session: BoundsSession, values: Sequence[float]) -> CorrelationSpec:
    """Aplica uma lista (na ordem de escolha) e completa as entradas restantes."""
    if len(values) > session.size:
        raise UsageError(f"{len(values)} correlações informadas, no máximo {session.size} entradas")
    for value in values:
        choose(session, value)
    return complete(session)


def prompt_spec(
    session: BoundsSession,
    labels: Sequence[str],
    input_fn: InputFn,
    output: Callable[[str], None] = print,
) -> CorrelationSpec:
    """
    Pede cada entrada mostrando os limites vivos, recusando valores fora do
    intervalo. A entrada final aceita apenas um dos dois extremos.
    """
    while not session.exhausted:
        lower, upper = bounds_for_next(session)
        label = labels[session.next_index]
        if session.is_final_entry:
            prompt = f"Correlação com '{label}': escolha {lower:.6f} ou {upper:.6f} [{upper:.6f}]: "
        else:
            prompt = f"Correlação com '{label}' em [{lower:.6f}, {upper:.6f}]: "

        try:
            answer = input_fn(prompt).strip()
        except EOFError as exc:
            raise UsageError("entrada encerrada antes de completar o vetor de correlações") from exc

        if session.is_final_entry and not answer:
            choose(session, upper)
            continue
        try:
            value = float(answer)
        except ValueError:
            output(f"⚠️ Valor inválido: '{answer}'")
            continue

        if session.is_final_entry:
            if abs(value - lower) <= 1e-6:
                choose(session, lower)
            elif abs(value - upper) <= 1e-6:
                choose(session, upper)
            else:
                output(f"⚠️ Apenas {lower:.6f} ou {upper:.6f} são realizáveis")
            continue
        if not lower - 1e-6 <= value <= upper + 1e-6:
            output(f"⚠️ Fora do intervalo [{lower:.6f}, {upper:.6f}]")
            continue
        choose(session, min(max(value, lower), upper))

    return finalize(session)


def render_report(report: SampleReport, tag: str) -> str:
    labels = report.labels
    rows = []
    for i, label in enumerate(labels):
        requested = "-" if report.requested is None else f"{report.requested[i]:.6f}"
        interval = "-"
        if report.bounds:
            lower, upper = report.bounds[i]
            interval = f"[{lower:.6f}, {upper:.6f}]"
        rows.append({
            "label": label,
            "requested": requested,
            "achieved": report.achieved[i],
            "interval": interval,
            "coefficient": report.coefficients[i],
        })
    task_cross = list(zip(labels[:-1], report.task_cross))
    template = _templates.get_template("relatorio.md.j2")
    return template.render(report=report, tag=tag, rows=rows, task_cross=task_cross)


def _ensure_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"não foi possível criar {path}: {exc.strerror or exc}") from exc


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"não foi possível gravar {path}: {exc.strerror or exc}") from exc


def write_sample_outputs(
    out_dir: Path,
    tag: str,
    data: FidelityDataset,
    sample: SyntheticSample,
    run_config: RunConfig,
) -> SampleReport:
    """Grava ``amostra_<tag>.csv``, ``relatorio_<tag>.json`` e ``relatorio_<tag>.md``."""
    _ensure_dir(out_dir)
    augmented = data.with_fidelity(sample.values, "sintetica")
    write_csv(augmented, out_dir / f"amostra_{tag}.csv")

    report = SampleReport.from_sample(sample, basis_labels(data), run_config)
    save_report(report, out_dir / f"relatorio_{tag}.json")
    _write_text(out_dir / f"relatorio_{tag}.md", render_report(report, tag))
    return report


def _format_vector(values: Sequence[float]) -> str:
    return "[" + ", ".join(f"{v:.6f}" for v in values) + "]"


def _print_sample(tag: str, sample: SyntheticSample) -> None:
    if sample.requested is not None:
        print(f"✅ {tag}: pedido {_format_vector(sample.requested)}")
    print(f"   {tag}: obtido {_format_vector(sample.achieved)}")


def cmd_fit(args: argparse.Namespace) -> int:
    data = read_csv(args.data)
    settings = fit_settings_from_args(args)
    model = fit(data, settings)

    archive = ModelArchive.from_model(model, base_run_config(args, settings))
    save_archive(archive, args.output)
    print(f"LML final: {model.diagnostics.log_marginal_likelihood:.6f}")
    print(f"Matriz de tarefas {data.n_tasks}x{data.n_tasks} salva em {args.output}")
    return 0


def _sample_one(
    model: MogpModel,
    seed: int,
    run_config: RunConfig,
    input_fn: Optional[InputFn],
) -> SyntheticSample:
    if run_config.correlation_mode == "task-covariance":
        return draw_from_task_covariance(
            model, run_config.task_cross, run_config.task_variance, seed, prior_draw=run_config.prior_draw
        )
    session = _session_for(model, seed, run_config)
    if run_config.correlation_mode == "interactive":
        spec = prompt_spec(session, basis_labels(model.data), input_fn)
    elif run_config.correlation_mode == "explicit":
        spec = explicit_spec(session, run_config.correlations)
    else:
        spec = sample_random(session, seed)
    return draw(
        model,
        spec,
        seed,
        prior_draw=run_config.prior_draw,
        heuristic=run_config.heuristic,
        max_condition=run_config.max_condition,
    )


def _correlation_mode(args: argparse.Namespace, correlations: List[float], task_cross: List[float]) -> str:
    if task_cross:
        if correlations or args.mode:
            raise UsageError("--task-cross não combina com --correlations nem com --mode")
        if args.task_variance is None:
            raise UsageError("--task-cross exige --task-variance")
        return "task-covariance"
    if args.task_variance is not None:
        raise UsageError("--task-variance exige --task-cross")
    if args.mode:
        if args.mode == "explicit" and not correlations:
            raise UsageError("modo explícito exige --correlations")
        return args.mode
    return "explicit" if correlations else "random"


def cmd_sample(args: argparse.Namespace) -> int:
    archive = load_archive(args.archive)
    model = archive.to_model()
    seed = resolve_seed(args)
    seeds = parse_int_list(args.seeds) or [seed]
    correlations = parse_float_list(args.correlations)
    task_cross = parse_float_list(args.task_cross, "--task-cross")
    mode = _correlation_mode(args, correlations, task_cross)

    input_fn = getattr(args, "input_fn", None)
    if mode == "interactive" and input_fn is None:
        if not sys.stdin.isatty():
            raise UsageError("modo interativo exige um terminal; use --correlations ou --mode random")
        input_fn = input

    run_config = archive.run_config.model_copy(update={
        "prior_draw": args.prior_draw or SynthFidConfig.PRIOR_DRAW,
        "heuristic": args.heuristic or SynthFidConfig.HEURISTIC,
        "correlation_mode": mode,
        "correlations": correlations,
        "task_cross": task_cross,
        "task_variance": args.task_variance,
        "sample_seeds": seeds,
        "output_dir": str(args.output_dir),
    })
    out_dir = Path(args.output_dir)

    def run(sample_seed: int) -> SyntheticSample:
        return _sample_one(model, sample_seed, run_config, input_fn)

    workers = args.workers if args.workers is not None else SynthFidConfig.WORKERS
    if mode != "interactive" and workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(run, seeds))
    else:
        samples = [run(s) for s in seeds]

    for sample_seed, sample in zip(seeds, samples):
        tag = f"seed{sample_seed}"
        write_sample_outputs(out_dir, tag, model.data, sample, run_config)
        _print_sample(tag, sample)
    return 0


def cmd_bounds(args: argparse.Namespace) -> int:
    archive = load_archive(args.archive)
    model = archive.to_model()
    run_config = archive.run_config.model_copy(
        update={"prior_draw": args.prior_draw or SynthFidConfig.PRIOR_DRAW}
    )
    session = _session_for(model, resolve_seed(args), run_config)
    for value in parse_float_list(args.correlations):
        if session.exhausted:
            raise UsageError(f"mais correlações do que as {session.size} entradas")
        choose(session, value)

    lower, upper = bounds_for_next(session)
    label = basis_labels(model.data)[session.next_index]
    print(f"Entrada {session.next_index} ({label}): [{lower:.6f}, {upper:.6f}]")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    data = read_csv(args.data)
    print(f"✅ Arquivo válido: n_x={data.n_points}, n_d={data.n_dims}, n_t={data.n_tasks}")
    return 0


def _bench_jobs(
    model: MogpModel,
    args: argparse.Namespace,
    seed: int,
    correlations: List[float],
    run_config: RunConfig,
) -> List[Tuple[str, int, CorrelationSpec]]:
    """Trios (rótulo, semente, vetor) das amostras do benchmark."""
    jobs = []
    if correlations:
        seeds = parse_int_list(args.seeds) or [seed]
        for sample_seed in seeds:
            session = _session_for(model, sample_seed, run_config)
            jobs.append((f"seed{sample_seed}", sample_seed, explicit_spec(session, correlations)))
    elif args.mode == "random":
        for sample_seed in range(seed, seed + len(SWEEP_TARGETS)):
            session = _session_for(model, sample_seed, run_config)
            jobs.append((f"seed{sample_seed}", sample_seed, sample_random(session, sample_seed)))
    else:
        for j, target in enumerate(SWEEP_TARGETS):
            session = _session_for(model, seed, run_config)
            jobs.append((f"alvo{j}", seed, explicit_spec(session, [target])))
    return jobs


def plot_columns(
    model: MogpModel,
    samples: Sequence[Tuple[str, SyntheticSample]],
) -> Tuple[List[str], List[np.ndarray]]:
    """
    Colunas de ``plot_dados.csv``: pontos, fidelidades, média e desvio padrão
    da posterior do MOGP por fidelidade, a amostra a priori reescalada da
    primeira amostra e uma coluna por amostra sintética.
    """
    data = model.data
    header = [f"x{d}" for d in range(data.n_dims)] + [f"y_f{k}" for k in range(data.n_tasks)]
    columns = [data.X[:, d] for d in range(data.n_dims)] + [data.Y[:, k] for k in range(data.n_tasks)]

    fidelity_posterior = posterior(model, data.X)
    header += [f"mu_f{k}" for k in range(data.n_tasks)] + [f"sd_f{k}" for k in range(data.n_tasks)]
    columns += [mean for mean, _ in fidelity_posterior]
    columns += [np.sqrt(np.clip(np.diag(cov), 0.0, None)) for _, cov in fidelity_posterior]

    if samples:
        header.append("y_prior")
        columns.append(samples[0][1].basis.expanded[:, -1])
    for tag, sample in samples:
        header.append(f"s_{tag}")
        columns.append(sample.values)
    return header, columns


def cmd_bench(args: argparse.Namespace) -> int:
    pair = benchfns.get_benchmark(args.name)
    points = args.points or DEFAULT_POINTS[pair.name]
    seed = resolve_seed(args)
    out_dir = Path(args.output_dir)
    _ensure_dir(out_dir)

    data = benchfns.grid(pair, points)
    write_csv(data, out_dir / "dados.csv")
    print(f"📊 {pair.name}: {data.n_points} pontos, {data.n_tasks} fidelidades")

    settings = fit_settings_from_args(args)
    model = fit(data, settings)
    correlations = parse_float_list(args.correlations)
    run_config = base_run_config(args, settings).model_copy(update={
        "correlation_mode": "explicit" if correlations or args.mode != "random" else "random",
        "correlations": correlations,
        "output_dir": str(out_dir),
    })
    save_archive(ModelArchive.from_model(model, run_config), out_dir / "modelo.json")
    print(f"LML final: {model.diagnostics.log_marginal_likelihood:.6f}")

    samples = []
    for tag, sample_seed, spec in _bench_jobs(model, args, seed, correlations, run_config):
        sample = draw(
            model,
            spec,
            sample_seed,
            prior_draw=run_config.prior_draw,
            heuristic=run_config.heuristic,
            max_condition=run_config.max_condition,
        )
        write_sample_outputs(out_dir, tag, data, sample, run_config)
        _print_sample(tag, sample)
        samples.append((tag, sample))

    header, columns = plot_columns(model, samples)
    _write_text(out_dir / "plot_dados.csv", columns_to_csv_text(header, columns))
    logger.info("Dados de gráfico salvos em {}", out_dir / "plot_dados.csv")
    return 0


def _add_fit_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kernel", choices=["rbf", "spectral-mixture"], default=None)
    parser.add_argument("--mixtures", type=int, default=None, help="Número de misturas Q")
    parser.add_argument("--restarts", type=int, default=None)
    parser.add_argument("--max-iter", type=int, default=None)
    parser.add_argument("--noise", choices=["learned", "fixed"], default="learned")
    parser.add_argument("--noise-value", type=float, default=0.0, help="Variância do ruído no modo fixed")
    parser.add_argument("--per-fidelity-noise", action="store_true", help="Ruído aprendido por fidelidade")
    parser.add_argument("--analytic-gradients", action="store_true")
    parser.add_argument("--workers", type=int, default=None)


def _add_sampling_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--prior-draw", choices=["matrix", "cholesky"], default=None)
    parser.add_argument("--heuristic", choices=["variance", "std"], default=None)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Semente global (padrão: SYNTHFID_SEED)")
    common.add_argument(
        "--log-level", type=str.upper, choices=["DEBUG", "INFO", "WARNING", "ERROR"], default=None
    )

    parser = argparse.ArgumentParser(
        prog="synthfid",
        description="Gerador de fidelidades sintéticas com correlação controlada",
    )
    verbs = parser.add_subparsers(dest="command", required=True)

    fit_parser = verbs.add_parser("fit", parents=[common], help="Ajusta o MOGP a um CSV de dados")
    fit_parser.add_argument("data")
    fit_parser.add_argument("--output", default="modelo.json")
    _add_fit_options(fit_parser)
    fit_parser.set_defaults(handler=cmd_fit)

    sample_parser = verbs.add_parser("sample", parents=[common], help="Gera amostras sintéticas")
    sample_parser.add_argument("archive")
    sample_parser.add_argument("--mode", choices=["interactive", "explicit", "random"], default=None)
    sample_parser.add_argument("--correlations", default=None, help="Lista a,b,... começando pela verdade de referência")
    sample_parser.add_argument("--seeds", default=None, help="Sementes separadas por vírgula")
    sample_parser.add_argument("--output-dir", default="saida")
    sample_parser.add_argument("--task-cross", default=None, help="Σ_T* explícito (uma covariância por fidelidade)")
    sample_parser.add_argument("--task-variance", type=float, default=None, help="Σ_T** da fidelidade sintética")
    sample_parser.add_argument("--workers", type=int, default=None)
    _add_sampling_options(sample_parser)
    sample_parser.set_defaults(handler=cmd_sample)

    bounds_parser = verbs.add_parser("bounds", parents=[common], help="Mostra o intervalo da próxima entrada")
    bounds_parser.add_argument("archive")
    bounds_parser.add_argument("--correlations", default=None)
    bounds_parser.add_argument("--prior-draw", choices=["matrix", "cholesky"], default=None)
    bounds_parser.set_defaults(handler=cmd_bounds)

    bench_parser = verbs.add_parser("bench", parents=[common], help="Executa um benchmark de ponta a ponta")
    bench_parser.add_argument("name", choices=sorted(benchfns.BENCHMARKS))
    bench_parser.add_argument("--points", type=int, default=None, help="Pontos por dimensão")
    bench_parser.add_argument("--correlations", default=None)
    bench_parser.add_argument("--seeds", default=None)
    bench_parser.add_argument("--mode", choices=["sweep", "random"], default="sweep")
    bench_parser.add_argument("--output-dir", default="saida_bench")
    _add_fit_options(bench_parser)
    bench_parser.add_argument(
        "--numeric-gradients", dest="analytic_gradients", action="store_false",
        help="Usa diferenças finitas no otimizador (padrão do bench: gradientes analíticos)",
    )
    _add_sampling_options(bench_parser)
    bench_parser.set_defaults(handler=cmd_bench, analytic_gradients=True)

    validate_parser = verbs.add_parser("validate", parents=[common], help="Valida um CSV de dados")
    validate_parser.add_argument("data")
    validate_parser.set_defaults(handler=cmd_validate)

    return parser


def main(argv: Optional[Sequence[str]] = None, input_fn: Optional[InputFn] = None) -> int:
    """
    Ponto de entrada da CLI.

    Returns:
        Código de saída (0 sucesso, 2 uso/leitura, 3 falha numérica)
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0

    args.input_fn = input_fn

    try:
        SynthFidConfig.reload()
        configure_logging(args.log_level or SynthFidConfig.LOG_LEVEL)
        return args.handler(args)
    except SynthFidError as exc:
        print(f"⚠️ Erro: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("\n👋 Encerrando.", file=sys.stderr)
        return 130
