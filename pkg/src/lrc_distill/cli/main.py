import argparse
import sys
from pathlib import Path
from typing import Callable, Sequence

from dotenv import load_dotenv
from loguru import logger
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from lrc_distill.distiller import Ablation
from lrc_distill.errors import (
    CheckpointError,
    ComparisonError,
    ConfigError,
    GradientCheckError,
    InputError,
    LrcError,
)
from lrc_distill.services import (
    Comparison,
    GradCheckScope,
    RunConfig,
    RunManifest,
    apply_overrides,
    bench,
    compare,
    get_run_service,
    load_rows,
    load_run_config,
    run_grad_check,
    stage2_weight_grid,
    write_comparison_csv,
)
from lrc_distill.settings import settings

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

console = Console()


def configure_logging(level: str) -> None:
    logger.remove()
    logger.add(
        sys.stderr,
        format=(
            "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | "
            "{name}:{function}:{line} - {message}"
        ),
        level=level,
    )


def _metrics_table(title: str, manifest: RunManifest) -> Table:
    table = Table(title=title)
    table.add_column("metric")
    table.add_column("value", justify="right")
    for name, value in manifest.metrics.items():
        table.add_row(name, f"{value:.4f}")
    return table


def _comparison_table(comparison: Comparison, title: str) -> Table:
    table = Table(title=title)
    table.add_column("run")
    for column in comparison.columns:
        table.add_column(column, justify="right")
    for row in comparison.rows:
        table.add_row(row.run, *(comparison.cell(row, c) for c in comparison.columns))
    return table


def _config(args: argparse.Namespace, overrides: dict[str, object]) -> RunConfig:
    config = load_run_config(args.config)
    if getattr(args, "output_dir", None) is not None:
        overrides = {**overrides, "output_dir": args.output_dir}
    return apply_overrides(config, overrides)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------
def cmd_train_teacher(args: argparse.Namespace) -> int:
    config = _config(args, {"teacher.seed": args.seed, "teacher.steps": args.steps})
    manifest = get_run_service().train_teacher(config)
    console.print(_metrics_table(f"teacher {manifest.run_name}", manifest))
    console.print(f"manifest: {manifest.artifacts['manifest']}")
    return EXIT_OK


def cmd_distill(args: argparse.Namespace) -> int:
    config = _config(
        args,
        {
            "distill.seed": args.seed,
            "distill.total_steps": args.total_steps,
            "distill.stage_split": args.stage_split,
            "distill.ablation": args.ablation,
            "distill.perturbation_enabled": False if args.no_perturbation else None,
            "teacher_checkpoint": args.teacher_checkpoint,
        },
    )
    manifest = get_run_service().distill(config)
    console.print(_metrics_table(f"student {manifest.run_name}", manifest))
    console.print(f"manifest: {manifest.artifacts['manifest']}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config(args, {})
    manifest = get_run_service().evaluate(config, args.checkpoint, args.reference)
    console.print(_metrics_table(manifest.run_name, manifest))
    if args.min_agreement is not None:
        agreement = manifest.metrics.get("agreement")
        if agreement is None:
            raise ConfigError("--min-agreement needs --reference", fields=["reference"])
        if agreement < args.min_agreement:
            logger.error(f"Agreement {agreement:.4f} below required {args.min_agreement:.4f}")
            return EXIT_FAILED
    return EXIT_OK


def cmd_grad_check(args: argparse.Namespace) -> int:
    scopes = list(GradCheckScope) if args.scope == "all" else [GradCheckScope(args.scope)]
    table = Table(title=f"gradient check (seed {args.seed})")
    for column in ("op", "input", "max rel. error", "index", "analytic", "numeric", "ok"):
        table.add_column(column)

    failures = 0
    for scope in scopes:
        for result in run_grad_check(scope, args.seed, corrupt_op=args.corrupt_op):
            failures += not result.passed
            table.add_row(
                result.op,
                result.input_name,
                f"{result.max_error:.3e}",
                str(result.index),
                f"{result.analytic:.6e}",
                f"{result.numeric:.6e}",
                "yes" if result.passed else "[bold red]NO[/bold red]",
            )
    console.print(table)
    if failures:
        raise GradientCheckError(f"{failures} gradient check(s) exceeded tolerance")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    comparison = compare(load_rows(args.inputs))
    console.print(_comparison_table(comparison, f"task {comparison.task}"))
    if args.output is not None:
        write_comparison_csv(comparison, args.output)
        console.print(f"table: {args.output}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    report = bench(_config(args, {}), get_run_service(), repeats=args.repeats)
    table = Table(title="inference throughput")
    for column in ("model", "parameters", "tokens/s"):
        table.add_column(column, justify="right")
    for result in (report.teacher, report.student):
        table.add_row(result.role, f"{result.parameters:,}", f"{result.tokens_per_second:,.0f}")
    console.print(table)
    console.print(f"student speedup: {report.speedup:.2f}x")
    return EXIT_OK


def _weights(text: str) -> tuple[float, float, float]:
    """Parse ``alpha,beta,gamma`` into a weight triple."""
    parts = text.split(",")
    try:
        values = tuple(float(p) for p in parts)
    except ValueError:
        values = ()
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected alpha,beta,gamma, got {text!r}")
    return values[0], values[1], values[2]


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _config(args, {"distill.total_steps": args.total_steps})
    weights = list(args.stage2_weights or [])
    if args.stage2_grid:
        weights += stage2_weight_grid(args.stage2_grid)
    report = get_run_service().sweep(
        config,
        ablations=[Ablation(a) for a in args.ablations],
        seeds=args.seeds,
        stage_splits=args.stage_splits,
        stage2_weights=weights or None,
    )
    comparison = compare(load_rows([Path(m.artifacts["manifest"]) for m in report.manifests]))
    console.print(_comparison_table(comparison, f"sweep on {comparison.task}"))
    output = get_run_service().output_dir(config) / "sweep.csv"
    write_comparison_csv(comparison, output)

    # Weight and split grids are reported, not judged
    if weights or args.stage_splits:
        best = report.best(args.rank_by)
        if best is not None:
            console.print(f"best {args.rank_by}: {best.run_name} ({best.metrics[args.rank_by]:.4f})")
        return EXIT_OK

    passed = report.direction_passed
    if passed is None:
        return EXIT_OK
    console.print(
        f"full > drop-cosnce on agreement: {report.direction_wins}/{report.direction_seeds} seeds"
    )
    return EXIT_OK if passed else EXIT_FAILED


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------
def _add_config(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", type=Path, help="YAML/JSON run config or a run manifest")
    parser.add_argument("--output-dir", type=Path, default=None, help="Override output_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrc-distill",
        description="Contrastive layer-wise distillation of small transformer encoders.",
    )
    parser.add_argument("--log-level", default=None, help="Override LRC_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train-teacher", help="Train the teacher from scratch")
    _add_config(train)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--steps", type=int, default=None)
    train.set_defaults(handler=cmd_train_teacher)

    distill = commands.add_parser("distill", help="Distill a student from the teacher")
    _add_config(distill)
    distill.add_argument("--seed", type=int, default=None)
    distill.add_argument("--total-steps", type=int, default=None)
    distill.add_argument("--stage-split", type=float, default=None)
    distill.add_argument("--ablation", choices=[a.value for a in Ablation], default=None)
    distill.add_argument("--no-perturbation", action="store_true")
    distill.add_argument("--teacher-checkpoint", type=Path, default=None)
    distill.set_defaults(handler=cmd_distill)

    evaluate = commands.add_parser("eval", help="Evaluate a checkpoint on the eval split")
    _add_config(evaluate)
    evaluate.add_argument("--checkpoint", type=Path, default=None)
    evaluate.add_argument("--reference", type=Path, default=None, help="Teacher checkpoint")
    evaluate.add_argument("--min-agreement", type=float, default=None)
    evaluate.set_defaults(handler=cmd_eval)

    grad = commands.add_parser("grad-check", help="Finite-difference gradient verification")
    grad.add_argument(
        "--scope", choices=[*(s.value for s in GradCheckScope), "all"], default="all"
    )
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--corrupt-op", default=None, help=argparse.SUPPRESS)
    grad.set_defaults(handler=cmd_grad_check)

    comp = commands.add_parser("compare", help="Tabulate run manifests or comparison CSVs")
    comp.add_argument("inputs", type=Path, nargs="+")
    comp.add_argument("--output", type=Path, default=None, help="Write the table as CSV")
    comp.set_defaults(handler=cmd_compare)

    bench_cmd = commands.add_parser("bench", help="Teacher vs student inference throughput")
    _add_config(bench_cmd)
    bench_cmd.add_argument("--repeats", type=int, default=3)
    bench_cmd.set_defaults(handler=cmd_bench)

    sweep = commands.add_parser("sweep", help="Distill across ablations, stage splits or stage-2 weights and seeds")
    _add_config(sweep)
    sweep.add_argument(
        "--ablations",
        nargs="+",
        choices=[a.value for a in Ablation],
        default=[Ablation.FULL.value, Ablation.DROP_COS_NCE.value],
    )
    sweep.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    grids = sweep.add_mutually_exclusive_group()
    grids.add_argument("--stage-splits", nargs="+", type=float, default=None)
    grids.add_argument(
        "--stage2-weights",
        nargs="+",
        type=_weights,
        default=None,
        metavar="A,B,G",
        help="Second-stage (alpha, beta, gamma) triples, e.g. 1,1,3 1,2,3",
    )
    grids.add_argument(
        "--stage2-grid",
        nargs="+",
        type=float,
        default=None,
        metavar="W",
        help="Sweep every weight triple over these values, e.g. 1 2 3 4",
    )
    sweep.add_argument("--rank-by", default="agreement", help="Metric that picks the best grid point")
    sweep.add_argument("--total-steps", type=int, default=None)
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv(override=False)
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level.upper() if args.log_level else settings.log_level)

    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except (ConfigError, InputError, ComparisonError, CheckpointError) as e:
        logger.error(str(e))
        console.print(f"[bold red]error:[/bold red] {escape(str(e))}", highlight=False)
        return EXIT_CONFIG
    except LrcError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
