#!/usr/bin/env python3
"""
sawstrip CLI - transfer-matrix enumeration of adsorbing walks in strips.

Commands:
  sawstrip enumerate        - Build A_T (and B_T) for one strip width
  sawstrip cross            - Crossings y_c(T) of consecutive widths
  sawstrip extrapolate      - Accelerate a y_c(T) (or A) sequence
  sawstrip verify-identity  - Honeycomb patch identity and edge/site maps
  sawstrip reproduce        - Compare against the published tables
  sawstrip plot-data        - (y, A_T(x_c, y)) grids as CSV
  sawstrip version          - Show sawstrip version
"""

import csv
import functools
import io
import json
import logging
from pathlib import Path
from typing import List, Optional

import mpmath
import typer
from mpmath import mpf
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from ..analysis import reference
from ..analysis.crossing import (
    CrossingEstimate,
    crossing_sequence,
    default_bracket,
    fixed,
    monotone_direction,
)
from ..analysis.extrapolation import Algorithm, ExtrapolationParams, estimate_limit
from ..analysis.identity import (
    SCHEMA_VERSION,
    HoneycombConstants,
    build_patch,
    build_patch_exhaustive,
    check_edge_site_maps,
    default_grid,
    patch_residual_grid,
)
from ..core.geometry import LatticeKind, StripSpec, WeightingMode
from ..core.poly import CSV_DIGITS, ContactPolynomial
from ..core.transfer import build_A, estimate_cost
from ..errors import (
    BudgetExceededError,
    CheckpointError,
    ConfigError,
    ConstantTermError,
    CountOverflowError,
    CrossingError,
    DensityUndefinedError,
    ExtrapolationError,
    IdentityError,
    ReferenceDataError,
    ResourceError,
    SawStripError,
    TruncationMismatchError,
)
from ..utils.config import RunConfig, build_config, parse_widths
from ..utils.logger import setup_logger

app = typer.Typer(help="sawstrip - surface-interacting walks in strips")
console = Console()
err_console = Console(stderr=True)
logger = logging.getLogger(__name__)

EXIT_CODES = {
    "ok": 0,
    "unexpected": 1,
    "config": 2,
    "resource": 3,
    "numerical": 4,
}

# First matching family wins
_ERROR_FAMILIES = [
    ((ConfigError, CheckpointError, ReferenceDataError), "config"),
    ((ResourceError,), "resource"),
    (
        (
            CrossingError,
            ExtrapolationError,
            IdentityError,
            DensityUndefinedError,
            CountOverflowError,
            ConstantTermError,
            TruncationMismatchError,
        ),
        "numerical",
    ),
]


def exit_code_for(error: BaseException) -> int:
    for families, name in _ERROR_FAMILIES:
        if isinstance(error, families):
            return EXIT_CODES[name]
    return EXIT_CODES["unexpected"]


def _guarded(command):
    """Turn sawstrip errors into one red message and a family exit code."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (typer.Exit, typer.Abort):
            raise
        except ValidationError as e:
            err_console.print(f"[red]❌ Invalid configuration: {e}[/red]")
            raise typer.Exit(EXIT_CODES["config"])
        except BudgetExceededError as e:
            err_console.print(f"[red]❌ {e}[/red]")
            if e.estimate:
                table = Table(title="Cost estimate", show_header=False)
                table.add_column("Property", style="cyan")
                table.add_column("Value")
                for key, value in e.estimate.items():
                    table.add_row(str(key), str(value))
                err_console.print(table)
            raise typer.Exit(exit_code_for(e))
        except SawStripError as e:
            err_console.print(f"[red]❌ {e}[/red]")
            raise typer.Exit(exit_code_for(e))
        except Exception as e:
            logger.exception("Unexpected failure")
            err_console.print(f"[red]Error: {e}[/red]")
            raise typer.Exit(EXIT_CODES["unexpected"])

    return wrapper


# ---------------------------------------------------------------------------
# Shared options and helpers
# ---------------------------------------------------------------------------

LATTICE = typer.Option(None, "--lattice", help="honeycomb | square | triangular")
MODE = typer.Option(None, "--mode", help="alternate-site | all-site | edge")
WIDTHS = typer.Option(None, "--widths", "-w", help="Widths, e.g. '3', '1..4' or '1,2,5'")
HALF_LENGTH = typer.Option(None, "--half-length", "-L", help="Strip half-length L")
DEGREE = typer.Option(None, "--degree", "-M", help="Truncation degree M in y")
WORKING_DIGITS = typer.Option(None, "--working-digits", help="<=15 float64, <=31 double-double")
ANALYSIS_DIGITS = typer.Option(None, "--analysis-digits", help="mpmath digits for analysis")
THREADS = typer.Option(None, "--threads", "-j", help="Worker threads (default SAWSTRIP_THREADS or all cores)")
OUTPUT = typer.Option(None, "--output", "-o", help="Write the result here instead of stdout")
FORMAT = typer.Option(None, "--format", "-f", help="csv | json")
BUDGET = typer.Option(None, "--budget-mb", help="Refuse builds estimated above this many MB")


def _config(ctx: typer.Context, widths: Optional[str] = None, **overrides) -> RunConfig:
    path = ctx.obj.get("config") if ctx.obj else None
    if widths is not None:
        overrides["widths"] = parse_widths(widths)
    return build_config(path, **overrides)


def _spec(cfg: RunConfig, T: int) -> StripSpec:
    return StripSpec(
        lattice=cfg.lattice,
        width_T=T,
        half_length_L=cfg.half_length_L,
        mode=cfg.mode,
        trunc_M=cfg.degree_M,
    )


def _emit(text: str, output: Optional[Path]) -> None:
    if output is None:
        typer.echo(text, nl=False)
        return
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(text)
    console.print(f"[green]✓ Wrote {output}[/green]")


def _json(document: dict) -> str:
    return json.dumps({"schema_version": SCHEMA_VERSION, **document}, indent=2, default=str) + "\n"


def _csv(header: List[str], rows: List[list]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _check_budget(cfg: RunConfig, widths: List[int], with_b: bool = False) -> None:
    """Refuse the whole run up front if any width is estimated above budget."""
    for T in widths:
        estimate = estimate_cost(_spec(cfg, T), cfg.working_digits, with_b)
        if estimate["megabytes"] > cfg.budget_mb:
            raise BudgetExceededError(
                f"width {T} is estimated at {estimate['megabytes']} MB, "
                f"above the {cfg.budget_mb:g} MB budget",
                estimate=estimate,
            )


def _build_series(cfg: RunConfig, widths: List[int]) -> dict[int, ContactPolynomial]:
    _check_budget(cfg, widths)
    series = {}
    for T in widths:
        result = build_A(
            _spec(cfg, T),
            threads=cfg.threads,
            working_digits=cfg.working_digits,
            budget_mb=cfg.budget_mb,
        )
        series[T] = result.A
    return series


def _crossings(cfg: RunConfig) -> list[CrossingEstimate]:
    needed = sorted(set(cfg.widths) | {T + 1 for T in cfg.widths})
    series = _build_series(cfg, needed)
    estimates = crossing_sequence(series, cfg.lattice, dps=cfg.analysis_digits)
    return [e for e in estimates if e.T in cfg.widths]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@app.callback()
def main(
    ctx: typer.Context,
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
    log_file: Optional[Path] = typer.Option(None, "--log-file", help="Also log to this file"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML settings (default ./sawstrip.yml)"),
):
    """Exact enumeration and critical-point analysis of adsorbing walks."""
    setup_logger("sawstrip", logging.DEBUG if verbose else logging.INFO, log_file)
    ctx.obj = {"config": config}


@app.command("enumerate")
@_guarded
def enumerate_cmd(
    ctx: typer.Context,
    width: Optional[int] = typer.Option(None, "--width", "-T", help="Strip width T"),
    lattice: Optional[LatticeKind] = LATTICE,
    mode: Optional[WeightingMode] = MODE,
    half_length: Optional[int] = HALF_LENGTH,
    degree: Optional[int] = DEGREE,
    working_digits: Optional[int] = WORKING_DIGITS,
    threads: Optional[int] = THREADS,
    with_b: bool = typer.Option(False, "--with-b", help="Also collect walks ending on the weighted surface"),
    output: Optional[Path] = OUTPUT,
    format: Optional[str] = FORMAT,
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Save/resume the sweep here"),
    budget_mb: Optional[float] = BUDGET,
):
    """Build the generating function(s) of one strip width."""
    cfg = _config(
        ctx,
        widths=None if width is None else str(width),
        lattice=lattice, mode=mode, half_length_L=half_length, degree_M=degree,
        working_digits=working_digits, threads=threads, output=output,
        format=format, checkpoint=checkpoint, budget_mb=budget_mb,
    )
    if len(cfg.widths) != 1:
        raise ConfigError("enumerate builds one width; pass --width")
    spec = _spec(cfg, cfg.widths[0])
    _check_budget(cfg, cfg.widths, with_b)

    result = build_A(
        spec,
        with_b=with_b,
        threads=cfg.threads,
        working_digits=cfg.working_digits,
        budget_mb=cfg.budget_mb,
        checkpoint=cfg.checkpoint,
    )

    if cfg.format == "json":
        series = {"A": result.A, "B": result.B, "E": result.E}
        text = _json({
            "spec": spec.key(),
            "stats": result.stats,
            "series": {
                name: [mpmath.nstr(c, CSV_DIGITS) for c in poly.to_mpf()]
                for name, poly in series.items()
                if poly is not None
            },
        })
    else:
        text = result.to_csv()
    _emit(text, cfg.output)


@app.command()
@_guarded
def cross(
    ctx: typer.Context,
    widths: Optional[str] = WIDTHS,
    lattice: Optional[LatticeKind] = LATTICE,
    mode: Optional[WeightingMode] = MODE,
    half_length: Optional[int] = HALF_LENGTH,
    degree: Optional[int] = DEGREE,
    working_digits: Optional[int] = WORKING_DIGITS,
    analysis_digits: Optional[int] = ANALYSIS_DIGITS,
    threads: Optional[int] = THREADS,
    output: Optional[Path] = OUTPUT,
    format: Optional[str] = FORMAT,
    budget_mb: Optional[float] = BUDGET,
):
    """Crossings y_c(T) of A_T and A_{T+1} at the critical step fugacity."""
    cfg = _config(
        ctx, widths=widths,
        lattice=lattice, mode=mode, half_length_L=half_length, degree_M=degree,
        working_digits=working_digits, analysis_digits=analysis_digits,
        threads=threads, output=output, format=format, budget_mb=budget_mb,
    )
    estimates = _crossings(cfg)
    rows = [e.to_row() for e in estimates]
    direction = monotone_direction([e.y_cross for e in estimates])

    if cfg.format == "json":
        text = _json({
            "lattice": cfg.lattice.value,
            "mode": cfg.mode.value,
            "M": cfg.degree_M,
            "L": cfg.half_length_L,
            "rows": rows,
            "monotone": direction,
        })
    else:
        text = _csv(["T", "y_c", "A"], [[r["T"], r["y_c"], r["A"]] for r in rows])
    _emit(text, cfg.output)

    if cfg.output is not None:
        table = Table(title=f"y_c(T), {cfg.lattice.value} {cfg.mode.value}")
        table.add_column("T", justify="right")
        table.add_column("y_c(T)", style="cyan")
        table.add_column("A(x_c, y_c(T))")
        for r in rows:
            table.add_row(str(r["T"]), r["y_c"], r["A"])
        console.print(table)


def _read_sequence(path: Path, column: str) -> tuple[list[mpf], Optional[list[int]]]:
    if not path.exists():
        raise ConfigError(f"input file {path} not found")
    rows = list(csv.DictReader(path.read_text().splitlines()))
    if not rows or column not in rows[0]:
        raise ConfigError(f"{path} has no column {column!r}")
    values = [mpf(r[column]) for r in rows]
    widths = [int(r["T"]) for r in rows] if "T" in rows[0] else None
    return values, widths


@app.command()
@_guarded
def extrapolate(
    ctx: typer.Context,
    input: Optional[Path] = typer.Option(None, "--input", "-i", help="CSV with columns T, y_c[, A]"),
    dataset: Optional[str] = typer.Option(None, "--dataset", help="Use a shipped crossing table instead"),
    column: str = typer.Option("y_c", "--column", help="y_c | A"),
    algorithm: Optional[List[Algorithm]] = typer.Option(None, "--algorithm", "-a", help="Repeat to select; default all"),
    w: float = typer.Option(1.0, "--w", help="Abscissa exponent, h = 1/T**w"),
    theta: float = typer.Option(1.0, "--theta", help="Leading correction exponent (Barber-Hamer)"),
    seed: str = typer.Option("richardson", "--seed", help="Bulirsch-Stoer seed: richardson | zero"),
    analysis_digits: Optional[int] = ANALYSIS_DIGITS,
    output: Optional[Path] = OUTPUT,
    format: Optional[str] = FORMAT,
):
    """Estimate the limit of a finite-width sequence by several accelerators."""
    cfg = _config(ctx, analysis_digits=analysis_digits, output=output, format=format)
    if column not in ("y_c", "A"):
        raise ConfigError("--column must be y_c or A")
    if (input is None) == (dataset is None):
        raise ConfigError("give exactly one of --input and --dataset")

    if dataset is not None:
        rows = reference.crossing_table(dataset)
        values = [mpf(getattr(r, column)) for r in rows]
        widths = [r.T for r in rows]
        source = dataset
    else:
        values, widths = _read_sequence(input, column)
        source = str(input)

    params = ExtrapolationParams(w=w, theta=theta, widths=widths, seed=seed, dps=cfg.analysis_digits)
    report = estimate_limit(values, algorithm or None, params)

    if cfg.format == "json":
        text = _json({"source": source, "column": column, "terms": len(values), **report.to_dict()})
    else:
        rows_out = [
            [name, *(summary[key] for key in ("best", "spread", "best_column", "settled", "stability"))]
            for name, summary in report.per_algorithm.items()
        ]
        consensus = mpmath.nstr(report.consensus, 20)
        rows_out.append(["consensus", consensus, mpmath.nstr(report.max_disagreement, 5), "", consensus, ""])
        text = _csv(["algorithm", "best", "spread", "best_column", "settled", "stability"], rows_out)
    _emit(text, cfg.output)

    if cfg.output is not None:
        table = Table(title=f"Limit of {column} from {source}")
        table.add_column("Algorithm", style="cyan")
        table.add_column("Best")
        table.add_column("Spread")
        table.add_column("Settled")
        table.add_column("Stability")
        for name, summary in report.per_algorithm.items():
            table.add_row(name, summary["best"], summary["spread"], summary["settled"], summary["stability"])
        table.add_row(
            "[bold]consensus[/bold]", "", mpmath.nstr(report.max_disagreement, 5),
            mpmath.nstr(report.consensus, 20), "",
        )
        console.print(table)


@app.command("verify-identity")
@_guarded
def verify_identity(
    ctx: typer.Context,
    width: int = typer.Option(1, "--width", "-T", help="Patch width T"),
    length: int = typer.Option(1, "--length", help="Patch size L (>= 1)"),
    exhaustive: bool = typer.Option(False, "--exhaustive", help="Enumerate the patch by depth-first search"),
    maps: bool = typer.Option(False, "--maps", help="Also check the edge/alternate-site strip maps"),
    points: int = typer.Option(16, "--points", help="y grid points in (0, 3]"),
    half_length: Optional[int] = HALF_LENGTH,
    degree: Optional[int] = DEGREE,
    threads: Optional[int] = THREADS,
    output: Optional[Path] = OUTPUT,
    format: Optional[str] = FORMAT,
):
    """Check the honeycomb A/B/E identity on a patch at x_c."""
    cfg = _config(
        ctx, half_length_L=half_length, degree_M=degree, threads=threads,
        output=output, format=format,
    )
    if exhaustive:
        patch = build_patch_exhaustive(width, length)
    else:
        patch = build_patch(width, length, threads=cfg.threads)
    report = patch_residual_grid(patch, default_grid(points))
    document = {
        "identity": report.model_dump(),
        "constants_check": {
            k: mpmath.nstr(v, 5) for k, v in HoneycombConstants.compute().check().items()
        },
    }
    passed = report.passed
    if maps:
        map_report = check_edge_site_maps(
            width, half_length_L=cfg.half_length_L, trunc_M=cfg.degree_M, threads=cfg.threads
        )
        document["maps"] = map_report.model_dump()
        passed = passed and map_report.passed

    if cfg.format == "json":
        text = _json(document)
    else:
        text = _csv(["y", "residual"], [[r.y, r.residual] for r in report.rows])
    _emit(text, cfg.output)

    style = "green" if passed else "red"
    err_console.print(
        f"[{style}]Patch T={width}, L={length}: max residual {report.max_residual}, "
        f"corollary {report.corollary_residual}[/{style}]"
    )
    if not passed:
        raise IdentityError("identity residual above tolerance")


def _digits_row(T: int, computed: CrossingEstimate, published: reference.CrossingRow) -> list:
    return [
        T,
        fixed(computed.y_cross), published.y_c, reference.agreeing_digits(computed.y_cross, published.y_c),
        fixed(computed.A_at_cross), published.A, reference.agreeing_digits(computed.A_at_cross, published.A),
    ]


@app.command()
@_guarded
def reproduce(
    ctx: typer.Context,
    dataset: str = typer.Argument(..., help=f"One of: {', '.join(reference.ALL_DATASETS)}"),
    cell: Optional[str] = typer.Option(None, "--cell", help="Convergence cell, e.g. 'M=100,L=100'"),
    widths: Optional[str] = WIDTHS,
    half_length: Optional[int] = HALF_LENGTH,
    degree: Optional[int] = DEGREE,
    working_digits: Optional[int] = WORKING_DIGITS,
    threads: Optional[int] = THREADS,
    output: Optional[Path] = OUTPUT,
    format: Optional[str] = FORMAT,
    budget_mb: Optional[float] = BUDGET,
):
    """Recompute a published table and count agreeing digits."""
    status = reference.verify_checksums()
    if not status.get(dataset, True):
        raise ReferenceDataError(f"reference dataset {dataset} does not match its checksum")

    if dataset == reference.CONVERGENCE_DATASET:
        if cell is None:
            raise ConfigError("reproduce square-convergence needs --cell M=..,L=..")
        M, L = reference.parse_cell(cell)
        published = reference.convergence_cell(M, L)
        T = reference.CONVERGENCE_WIDTH
        cfg = _config(
            ctx, widths=str(T), lattice=LatticeKind.SQUARE, mode=WeightingMode.ALL_SITE,
            half_length_L=L, degree_M=M, working_digits=working_digits, threads=threads,
            output=output, format=format, budget_mb=budget_mb,
        )
        (estimate,) = _crossings(cfg)
        header = ["M", "L", "y_c", "published", "digits"]
        rows = [[M, L, fixed(estimate.y_cross, 12), published.y_c,
                 reference.agreeing_digits(estimate.y_cross, published.y_c)]]

    elif dataset == reference.HEADLINE_DATASET:
        cfg = _config(ctx, output=output, format=format)
        header = ["lattice", "mode", "y_c", "published", "digits", "spread"]
        rows = []
        for h in reference.headlines():
            name = reference.dataset_for(h.lattice, h.mode)
            if name is None or h.exact:
                continue
            table = reference.crossing_table(name)
            params = ExtrapolationParams(widths=[r.T for r in table], dps=cfg.analysis_digits)
            report = estimate_limit([mpf(r.y_c) for r in table], params=params)
            rows.append([
                h.lattice.value, h.mode.value, mpmath.nstr(report.consensus, 10), h.y_c_text,
                reference.agreeing_digits(report.consensus, h.y_c_text),
                mpmath.nstr(report.max_disagreement, 3),
            ])

    elif dataset in reference.CROSSING_DATASETS:
        lattice, mode = reference.CROSSING_DATASETS[dataset]
        cfg = _config(
            ctx, widths=widths or "1..4", lattice=lattice, mode=mode,
            half_length_L=half_length, degree_M=degree, working_digits=working_digits,
            threads=threads, output=output, format=format, budget_mb=budget_mb,
        )
        published = {r.T: r for r in reference.crossing_table(dataset)}
        missing = [T for T in cfg.widths if T not in published]
        if missing:
            raise ConfigError(f"{dataset} has no published rows for T={missing}")
        header = ["T", "y_c", "published_y_c", "digits_y_c", "A", "published_A", "digits_A"]
        rows = [_digits_row(e.T, e, published[e.T]) for e in _crossings(cfg)]

    else:
        raise ConfigError(f"unknown dataset {dataset!r}; choose from {', '.join(reference.ALL_DATASETS)}")

    if cfg.format == "json":
        text = _json({"dataset": dataset, "rows": [dict(zip(header, r)) for r in rows]})
    else:
        text = _csv(header, rows)
    _emit(text, cfg.output)

    if cfg.output is not None:
        table = Table(title=f"{dataset}: computed vs published")
        for name in header:
            table.add_column(name, style="cyan" if name.startswith("digits") else None)
        for r in rows:
            table.add_row(*[str(v) for v in r])
        console.print(table)


@app.command("plot-data")
@_guarded
def plot_data(
    ctx: typer.Context,
    widths: Optional[str] = WIDTHS,
    lattice: Optional[LatticeKind] = LATTICE,
    mode: Optional[WeightingMode] = MODE,
    y_min: Optional[float] = typer.Option(None, "--y-min", help="Default 1"),
    y_max: Optional[float] = typer.Option(None, "--y-max", help="Default mu**2"),
    points: int = typer.Option(101, "--points", help="Grid points"),
    half_length: Optional[int] = HALF_LENGTH,
    degree: Optional[int] = DEGREE,
    working_digits: Optional[int] = WORKING_DIGITS,
    threads: Optional[int] = THREADS,
    output: Optional[Path] = OUTPUT,
    budget_mb: Optional[float] = BUDGET,
):
    """Write A_T(x_c, y) on a y grid for each width (CSV)."""
    cfg = _config(
        ctx, widths=widths,
        lattice=lattice, mode=mode, half_length_L=half_length, degree_M=degree,
        working_digits=working_digits, threads=threads, output=output, budget_mb=budget_mb,
    )
    if points < 2:
        raise ConfigError("--points must be at least 2")
    lo, hi = default_bracket(cfg.lattice)
    lo = mpf(y_min) if y_min is not None else lo
    hi = mpf(y_max) if y_max is not None else hi
    if not lo < hi:
        raise ConfigError(f"empty y range [{y_min}, {y_max}]")

    series = _build_series(cfg, cfg.widths)
    rows = []
    with mpmath.workdps(cfg.analysis_digits):
        for k in range(points):
            y = lo + (hi - lo) * k / (points - 1)
            rows.append([fixed(y, 6)] + [fixed(series[T].eval(y), 12) for T in cfg.widths])
    _emit(_csv(["y"] + [f"A_{T}" for T in cfg.widths], rows), cfg.output)


@app.command()
def version():
    """Show sawstrip version."""
    from sawstrip import __version__
    console.print(f"sawstrip version {__version__}")


if __name__ == "__main__":
    app()
