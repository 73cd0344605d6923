#!/usr/bin/env python3
"""
Porous Convection FEM - Main Entry
Runs the coupled stream function / temperature solver and its studies:

    solve        one Newton solve, field files, newton.log, diagnostics.txt
    convergence  manufactured-solution errors and rates over refined meshes
    sweep-ra     warm-started solves over a list of Rayleigh numbers
    diagnostics  one solve plus the existence / uniqueness / stability values,
                 optionally a source-scale stability sweep

Exit codes: 0 success, 2 config error, 3 solver failure, 4 I/O error.
"""

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Optional

from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from tqdm import tqdm

from analysis import (
    CONTINUUM_POINCARE,
    RATE_COLUMNS,
    RateTable,
    TheoremDiagnostics,
    convergence_study,
    exact_params,
    interpolation_study,
    poincare_estimate,
    stability_sweep,
    theorem_diagnostics,
    validate_levels,
)
from assembly import CoupledState, CoupledSystem
from errors import ConfigError, ConvergenceStudyError, FemError, NewtonDivergenceError, SingularTangentError
from field_io import FORMATS, write_field
from linalg import write_matrix_market
from mesh import DEFAULT_MAX_SUBDIVISIONS, build_structured_mesh
from mms import VARIANTS, error_h1_semi, error_l2, h1_seminorm
from newton import NewtonConfig, newton_solve

# Add shared modules to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent.parent / "shared"))
from config_loader import LayeredConfig, merge_configs, validate_config
from utils import atomic_write_text, ensure_dir, save_json, timestamp

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

COMMANDS = ("solve", "convergence", "sweep-ra", "diagnostics")
SINGLE_RA_COMMANDS = ("solve", "convergence", "diagnostics")

DEFAULTS: dict[str, Any] = {
    "n": 32,
    "ra": [10.0],
    "levels": [8, 16, 32, 64],
    "epsilon": 1e-8,
    "max_iterations": 25,
    "output_dir": "results",
    "format": "vtk",
    "source_scale": 1.0,
    "sobolev_a": 1.0,
    "data_bound_l": None,
    "warm_start": True,
    "max_subdivisions": DEFAULT_MAX_SUBDIVISIONS,
    "workers": 1,
    "solution": "coupled",
    "dump_matrix": False,
    "stability_scales": [],
}

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "n": {"type": "integer", "minimum": 1},
        "ra": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "levels": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "max_iterations": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string", "minLength": 1},
        "format": {"enum": list(FORMATS)},
        "source_scale": {"type": "number", "minimum": 0},
        "sobolev_a": {"type": "number", "exclusiveMinimum": 0},
        "data_bound_l": {"type": ["number", "null"], "minimum": 0},
        "warm_start": {"type": "boolean"},
        "max_subdivisions": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1},
        "solution": {"enum": sorted(VARIANTS)},
        "dump_matrix": {"type": "boolean"},
        "stability_scales": {"type": "array", "items": {"type": "number", "minimum": 0}},
    },
    "required": ["command"],
    "additionalProperties": False,
}

_INT_KEYS = {"n", "max_iterations", "max_subdivisions", "workers"}
_FLOAT_KEYS = {"epsilon", "source_scale", "sobolev_a", "data_bound_l"}
_BOOL_KEYS = {"warm_start", "dump_matrix"}
_LIST_KEYS = {"ra": float, "levels": int, "stability_scales": float}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def coerce_value(key: str, value: Any) -> Any:
    """Turn text from env vars, key = value files and flags into typed values"""
    if key in _LIST_KEYS:
        kind = _LIST_KEYS[key]
        if isinstance(value, str):
            return [kind(part) for part in value.split(",") if part.strip()]
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return [value]
        return list(value) if isinstance(value, tuple) else value
    if not isinstance(value, str):
        return value
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return None if value.strip().lower() in ("", "none", "null") else float(value)
    if key in _BOOL_KEYS:
        return _parse_bool(value)
    return value


def coerce_config(raw: dict[str, Any]) -> dict[str, Any]:
    result = {}
    for key, value in raw.items():
        try:
            result[key] = coerce_value(key, value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: cannot parse {value!r} ({exc})") from exc
    return result


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one CLI run"""
    command: str
    n: int = 32
    ra: tuple[float, ...] = (10.0,)
    levels: tuple[int, ...] = (8, 16, 32, 64)
    epsilon: float = 1e-8
    max_iterations: int = 25
    output_dir: Path = Path("results")
    output_format: str = "vtk"
    source_scale: float = 1.0
    sobolev_a: float = 1.0
    data_bound_l: Optional[float] = None
    warm_start: bool = True
    max_subdivisions: int = DEFAULT_MAX_SUBDIVISIONS
    workers: int = 1
    solution: str = "coupled"
    dump_matrix: bool = False
    stability_scales: tuple[float, ...] = ()

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"Unknown command {self.command!r}; choose from {COMMANDS}")
        if not self.ra:
            raise ConfigError("Ra list must not be empty")
        if any(not math.isfinite(ra) or ra < 0.0 for ra in self.ra):
            raise ConfigError(f"Rayleigh numbers must be finite and >= 0, got {list(self.ra)}")
        if self.command in SINGLE_RA_COMMANDS and len(self.ra) != 1:
            raise ConfigError(f"{self.command} takes a single Ra, got {list(self.ra)}")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if not (math.isfinite(self.source_scale) and self.source_scale >= 0.0):
            raise ConfigError(f"source_scale must be finite and >= 0, got {self.source_scale}")
        if self.output_format not in FORMATS:
            raise ConfigError(f"Unknown format {self.output_format!r}; choose from {FORMATS}")
        if self.solution not in VARIANTS:
            raise ConfigError(f"Unknown solution {self.solution!r}; choose from {sorted(VARIANTS)}")
        if self.command == "convergence":
            try:
                validate_levels(self.levels)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            if max(self.levels) > self.max_subdivisions:
                raise ConfigError(f"Level {max(self.levels)} exceeds max_subdivisions={self.max_subdivisions}")
        else:
            if self.n < 2:
                raise ConfigError(f"n must be >= 2, got {self.n}")
            if self.n > self.max_subdivisions:
                raise ConfigError(f"n={self.n} exceeds max_subdivisions={self.max_subdivisions}")

    @property
    def Ra(self) -> float:
        return self.ra[0]

    def newton_config(self) -> NewtonConfig:
        return NewtonConfig(epsilon=self.epsilon, max_iterations=self.max_iterations)

    def ignored_settings(self) -> list[str]:
        """Non-default settings the chosen command does not read"""
        ignored = []
        if self.command == "convergence" and self.source_scale != 1.0:
            ignored.append("source_scale")
        if self.command != "diagnostics" and self.stability_scales:
            ignored.append("stability_scales")
        if self.command in ("convergence", "sweep-ra") and self.dump_matrix:
            ignored.append("dump_matrix")
        return ignored

    @classmethod
    def from_mapping(cls, values: dict[str, Any]) -> "RunConfig":
        return cls(
            command=values["command"],
            n=int(values["n"]),
            ra=tuple(float(r) for r in values["ra"]),
            levels=tuple(int(n) for n in values["levels"]),
            epsilon=float(values["epsilon"]),
            max_iterations=int(values["max_iterations"]),
            output_dir=Path(values["output_dir"]),
            output_format=values["format"],
            source_scale=float(values["source_scale"]),
            sobolev_a=float(values["sobolev_a"]),
            data_bound_l=None if values["data_bound_l"] is None else float(values["data_bound_l"]),
            warm_start=values["warm_start"],
            max_subdivisions=int(values["max_subdivisions"]),
            workers=int(values["workers"]),
            solution=values["solution"],
            dump_matrix=values["dump_matrix"],
            stability_scales=tuple(float(s) for s in values["stability_scales"]),
        )


def load_run_config(
    command: str,
    cli_values: Optional[dict[str, Any]] = None,
    config_path: Optional[Path] = None,
) -> RunConfig:
    """defaults < FEM_* environment < config file < CLI flags, then schema check"""
    try:
        layered = LayeredConfig(DEFAULTS, config_path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"Cannot read config file {config_path}: {exc}") from exc

    merged = merge_configs(layered.as_dict(), cli_values or {})
    merged["command"] = command
    merged = coerce_config(merged)
    try:
        validate_config(merged, CONFIG_SCHEMA)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig.from_mapping(merged)


def error_record(exc: BaseException) -> str:
    """One-line machine-readable failure record"""
    return json.dumps({"status": "error", "kind": type(exc).__name__, "message": str(exc)})


def _fail(code: int, exc: BaseException) -> int:
    print(error_record(exc), file=sys.stderr)
    return code


def _ra_tag(Ra: float) -> str:
    return f"{Ra:g}"


def _banner(console: Console, title: str, config: RunConfig) -> None:
    console.print(Panel.fit(
        f"[bold]{title}[/bold]\nOutput: {config.output_dir}\nStarted: {timestamp()}",
        border_style="blue",
    ))


def _diagnostics_table(diagnostics: TheoremDiagnostics) -> Table:
    table = Table(title="Well-posedness diagnostics")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right")
    for name, value in diagnostics.to_rows():
        table.add_row(name, value or "-")
    return table


def _rates_table(rates: RateTable) -> Table:
    table = Table(title=f"Convergence ({rates.kind}, Ra={rates.Ra:g})")
    table.add_column("n", justify="right")
    for column in RATE_COLUMNS:
        table.add_column(column, justify="right")
        table.add_column("rate", justify="right", style="green")
    padded = {c: [math.nan] + rates.rates(c) for c in RATE_COLUMNS}
    for i, row in enumerate(rates.rows):
        cells = [str(row.n)]
        for column in RATE_COLUMNS:
            rate = padded[column][i]
            cells.append(f"{getattr(row, column):.4e}")
            cells.append("" if math.isnan(rate) else f"{rate:.3f}")
        table.add_row(*cells)
    return table


def _newton_log(lines: list[str]) -> str:
    return "".join(line + "\n" for line in lines)


def _solve_once(config: RunConfig, console: Console):
    """Shared by solve and diagnostics; newton.log is written even on failure"""
    mesh = build_structured_mesh(config.n, config.max_subdivisions)
    exact = VARIANTS[config.solution]
    params = exact_params(exact, config.Ra, config.source_scale)
    system = CoupledSystem(mesh, params)
    lines: list[str] = []

    def log(line: str) -> None:
        lines.append(line)
        console.print(line, markup=False, highlight=False)

    try:
        state, report = newton_solve(
            CoupledState.zeros(mesh), params, mesh, config.newton_config(), log=log, system=system
        )
    finally:
        atomic_write_text(config.output_dir / "newton.log", _newton_log(lines))

    if not report.converged:
        raise NewtonDivergenceError(f"Newton did not converge: {report.divergence_reason}", report)
    console.print(f"[green]Converged[/green] in {report.iterations} iterations")

    if config.dump_matrix:
        path = write_matrix_market(
            system.tangent(state),
            config.output_dir / "tangent.mtx",
            comment=f"Newton tangent, n={config.n}, Ra={config.Ra:g}",
        )
        console.print(f"Tangent written to: {path}")
    return mesh, exact, params, state


def _error_summary(config: RunConfig, exact, state: CoupledState) -> str:
    # sources are only compatible with the exact pair when unscaled
    if config.source_scale != 1.0:
        return ""
    mesh = state.mesh
    lines = [
        "",
        f"Errors against the exact solution ({exact.name})",
        f"psi_l2    {error_l2(state.psi, exact.psi, mesh)!r}",
        f"psi_h1    {error_h1_semi(state.psi, exact.psi_grad, mesh)!r}",
        f"theta_l2  {error_l2(state.theta, exact.theta, mesh)!r}",
        f"theta_h1  {error_h1_semi(state.theta, exact.theta_grad, mesh)!r}",
    ]
    return "\n".join(lines) + "\n"


def run_solve(config: RunConfig, console: Console) -> int:
    _banner(console, f"SOLVE n={config.n} Ra={config.Ra:g}", config)
    mesh, exact, params, state = _solve_once(config, console)

    ext = config.output_format
    for name, field in (("psi", state.psi), ("theta", state.theta)):
        path = write_field(field, config.output_dir / f"{name}.{ext}", name=name)
        console.print(f"Saved to: {path}")

    diagnostics = theorem_diagnostics(params, state, mesh, A=config.sobolev_a, L=config.data_bound_l)
    text = diagnostics.to_text() + _error_summary(config, exact, state)
    atomic_write_text(config.output_dir / "diagnostics.txt", text)
    console.print(_diagnostics_table(diagnostics))
    return EXIT_OK


def run_diagnostics(config: RunConfig, console: Console) -> int:
    _banner(console, f"DIAGNOSTICS n={config.n} Ra={config.Ra:g}", config)
    mesh, exact, params, state = _solve_once(config, console)

    poincare = poincare_estimate(mesh)
    console.print(
        f"Poincare estimate C_h={poincare:.6f} (continuum {CONTINUUM_POINCARE:.6f}, "
        f"ratio {poincare / CONTINUUM_POINCARE:.4f})"
    )
    diagnostics = theorem_diagnostics(
        params, state, mesh, A=config.sobolev_a, L=config.data_bound_l, poincare=poincare
    )
    atomic_write_text(config.output_dir / "diagnostics.txt",
                      diagnostics.to_text() + _error_summary(config, exact, state))
    atomic_write_text(config.output_dir / "diagnostics.csv", diagnostics.to_csv())
    console.print(_diagnostics_table(diagnostics))

    if config.stability_scales:
        scales = list(config.stability_scales)
        progress = tqdm(total=len(scales), desc="scales", unit="scale", disable=console.quiet)

        def log(line: str) -> None:
            console.print(line, markup=False, highlight=False)
            progress.update(1)

        try:
            report = stability_sweep(
                scales, config.Ra, mesh, config.newton_config(), exact=exact,
                A=config.sobolev_a, poincare=poincare, log=log,
            )
        finally:
            progress.close()
        atomic_write_text(config.output_dir / "stability.csv", report.to_csv())
        atomic_write_text(config.output_dir / "stability.txt", report.to_text() + "\n")
        console.print(report.to_text(), markup=False, highlight=False)
    return EXIT_OK


def run_convergence(config: RunConfig, console: Console) -> int:
    levels = list(config.levels)
    exact = VARIANTS[config.solution]
    _banner(console, f"CONVERGENCE levels={levels} Ra={config.Ra:g}", config)
    rates_path = config.output_dir / "rates.csv"

    progress = tqdm(total=len(levels), desc="levels", unit="level", disable=console.quiet)

    def log(line: str) -> None:
        console.print(line, markup=False, highlight=False)
        progress.update(1)

    try:
        table = convergence_study(
            levels,
            config.Ra,
            config.newton_config(),
            exact=exact,
            workers=config.workers,
            max_subdivisions=config.max_subdivisions,
            log=log,
        )
    except ConvergenceStudyError as exc:
        if exc.partial.rows:
            exc.partial.write_csv(rates_path)
        raise
    finally:
        progress.close()

    table.write_csv(rates_path)
    atomic_write_text(config.output_dir / "rates.txt", table.to_text() + "\n")
    interpolant = interpolation_study(levels, exact, config.max_subdivisions)
    interpolant.write_csv(config.output_dir / "rates_interpolant.csv")

    console.print(_rates_table(table))
    console.print(_rates_table(interpolant))
    console.print(f"Saved to: {rates_path}")
    return EXIT_OK


@dataclass
class SweepRow:
    """Outcome of one Ra in a sweep"""
    Ra: float
    converged: bool
    iterations: int
    warm_started: bool
    psi_gradient_norm: Optional[float] = None
    theta_gradient_norm: Optional[float] = None
    error: Optional[str] = None


def sweep_csv(rows: list[SweepRow]) -> str:
    names = [f.name for f in fields(SweepRow)]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(names)
    for row in rows:
        values = asdict(row)
        writer.writerow(["" if values[n] is None else values[n] for n in names])
    return buffer.getvalue()


def run_sweep(config: RunConfig, console: Console) -> int:
    _banner(console, f"RA SWEEP n={config.n} Ra={list(config.ra)}", config)
    mesh = build_structured_mesh(config.n, config.max_subdivisions)
    exact = VARIANTS[config.solution]
    newton_config = config.newton_config()
    ext = config.output_format

    previous: Optional[CoupledState] = None
    rows: list[SweepRow] = []
    for Ra in tqdm(config.ra, desc="Ra sweep", unit="Ra", disable=console.quiet):
        tag = _ra_tag(Ra)
        params = exact_params(exact, Ra, config.source_scale)
        warm = config.warm_start and previous is not None
        initial = previous if warm else CoupledState.zeros(mesh)
        lines: list[str] = []
        try:
            state, report = newton_solve(initial, params, mesh, newton_config, log=lines.append)
        except SingularTangentError as exc:
            rows.append(SweepRow(Ra, False, exc.iteration, warm, error=str(exc)))
            console.print(f"[red]Ra={tag}: {exc}[/red]")
            continue
        finally:
            atomic_write_text(config.output_dir / f"newton_Ra{tag}.log", _newton_log(lines))

        if not report.converged:
            rows.append(SweepRow(Ra, False, report.iterations, warm, error=report.divergence_reason))
            console.print(f"[red]Ra={tag}: {report.divergence_reason}[/red]")
            continue

        previous = state
        write_field(state.psi, config.output_dir / f"psi_Ra{tag}.{ext}", name="psi")
        write_field(state.theta, config.output_dir / f"theta_Ra{tag}.{ext}", name="theta")
        rows.append(SweepRow(
            Ra, True, report.iterations, warm,
            psi_gradient_norm=h1_seminorm(state.psi),
            theta_gradient_norm=h1_seminorm(state.theta),
        ))
        console.print(f"Ra={tag}: {report.iterations} iterations" + (" (warm start)" if warm else ""))

    atomic_write_text(config.output_dir / "sweep.csv", sweep_csv(rows))

    summary = Table(title="Ra sweep")
    summary.add_column("Ra", justify="right")
    summary.add_column("Iterations", justify="right")
    summary.add_column("|grad psi|", justify="right")
    summary.add_column("|grad theta|", justify="right")
    summary.add_column("Status")
    for row in rows:
        summary.add_row(
            _ra_tag(row.Ra),
            str(row.iterations),
            "-" if row.psi_gradient_norm is None else f"{row.psi_gradient_norm:.4e}",
            "-" if row.theta_gradient_norm is None else f"{row.theta_gradient_norm:.4e}",
            "[green]ok[/green]" if row.converged else f"[red]{row.error}[/red]",
        )
    console.print(summary)

    failed = [row.Ra for row in rows if not row.converged]
    if failed:
        raise NewtonDivergenceError(
            f"Newton failed for Ra = {', '.join(_ra_tag(r) for r in failed)}", rows
        )
    return EXIT_OK


COMMAND_HANDLERS = {
    "solve": run_solve,
    "convergence": run_convergence,
    "sweep-ra": run_sweep,
    "diagnostics": run_diagnostics,
}


def run(config: RunConfig, console: Optional[Console] = None) -> int:
    """Execute one command; returns the process exit code"""
    console = console or Console(stderr=True)
    try:
        for key in config.ignored_settings():
            console.print(f"[yellow]Warning:[/yellow] {key} has no effect on {config.command}")
        ensure_dir(config.output_dir)
        started = timestamp()
        code = COMMAND_HANDLERS[config.command](config, console)
        save_json({
            "command": config.command,
            "status": "ok",
            "started_at": started,
            "finished_at": timestamp(),
            "config": asdict(config),
        }, config.output_dir / "run.json")
        return code
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    except FemError as exc:
        return _fail(EXIT_SOLVER, exc)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run file: JSON, or key = value lines")
    common.add_argument("--n", type=int, help="Subdivisions per side of the unit square")
    common.add_argument("--ra", help="Rayleigh number (comma list for sweep-ra)")
    common.add_argument("--levels", help="Comma list of mesh levels, e.g. 8,16,32,64")
    common.add_argument("--epsilon", type=float, help="Newton correction tolerance")
    common.add_argument("--max-iterations", type=int, help="Newton iteration cap")
    common.add_argument("--output-dir", "-o", help="Output directory")
    common.add_argument("--format", choices=FORMATS, help="Field file format")
    common.add_argument("--source-scale", type=float, help="Multiply f1 and f2 by this factor")
    common.add_argument("--solution", choices=sorted(VARIANTS), help="Manufactured solution variant")
    common.add_argument("--sobolev-a", type=float, help="Sobolev embedding constant A")
    common.add_argument("--data-bound-l", type=float, help="Data bound L (measured when omitted)")
    common.add_argument("--no-warm-start", dest="warm_start", action="store_false", default=None,
                        help="Start every Ra of a sweep from zero")
    common.add_argument("--max-subdivisions", type=int, help="Largest allowed n")
    common.add_argument("--workers", type=int, help="Parallel levels in a convergence study")
    common.add_argument("--dump-matrix", action="store_true", default=None,
                        help="Write the final Newton tangent as MatrixMarket")
    common.add_argument("--stability-scales", help="Comma list of source scales for a stability sweep (diagnostics)")
    common.add_argument("--quiet", "-q", action="store_true", help="No console output")

    parser = argparse.ArgumentParser(description="Porous Convection FEM - stream function / temperature solver")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("solve", parents=[common], help="Solve once and write fields")
    commands.add_parser("convergence", parents=[common], help="Mesh convergence study")
    commands.add_parser("sweep-ra", parents=[common], help="Warm-started sweep over Ra")
    commands.add_parser("diagnostics", parents=[common], help="Well-posedness condition values")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    console = Console(stderr=True, quiet=args.quiet)

    cli_values = {key: getattr(args, key) for key in DEFAULTS}
    config_path = Path(args.config) if args.config else None
    try:
        config = load_run_config(args.command, cli_values, config_path)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    return run(config, console)


if __name__ == "__main__":
    sys.exit(main())
