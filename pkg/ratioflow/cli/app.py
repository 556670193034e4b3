from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import typer
from rich.console import Console
from rich.table import Table

from ..backtest.runner import ACCURACY_COLUMNS, dump_predictions
from ..book.events import EventColumns
from ..book.fast import replay_columns
from ..book.reader import read_events, session_summary, write_events
from ..book.replay import DepthPanel
from ..errors import (
    BookError,
    EstimationError,
    InputFormatError,
    InsufficientHistoryError,
    MixedTError,
    ModelNotFoundError,
    RatioflowError,
    ScheduleError,
    SimulationError,
    WindowFitFailure,
)
from ..features.dataset import export_dataset
from ..features.descriptors import ModelSpec
from ..log import logger, set_level
from ..report import Provenance, collect_outputs, read_csv, write_csv, \
    write_json
from ..selection.criteria import (
    CRITERIA,
    criteria,
    criteria_frame,
    join_with_accuracy,
    rank_models,
    selection_counts,
)
from ..simulation.config import SimConfig
from ..simulation.labels import EVENT_TIMES, simulate_labels_only
from ..simulation.montecarlo import monte_carlo_normality
from ..simulation.simulate import (
    bayes_accuracy,
    combine,
    simulate,
    write_ground_truth,
)
from .config import RunConfig, resolve_run_config
from .tasks import (
    BacktestTask,
    fit_tasks,
    run_backtest_task,
    run_fit,
    run_tasks,
)


app = typer.Typer(
    name="ratioflow",
    help="Market-order side prediction from order-book imbalance.",
    no_args_is_help=True,
    add_completion=False,
)
console = Console()
err_console = Console(stderr=True)


EXIT_INPUT = 2
EXIT_ESTIMATION = 3
EXIT_COMPARISON = 4


def exit_code(exc: RatioflowError) -> int:
    if isinstance(exc, MixedTError):
        return EXIT_COMPARISON
    if isinstance(exc, (EstimationError, WindowFitFailure)):
        return EXIT_ESTIMATION
    if isinstance(exc, (InputFormatError, BookError, ScheduleError,
                        SimulationError, ModelNotFoundError,
                        InsufficientHistoryError)):
        return EXIT_INPUT
    return 1


@contextmanager
def _exit_on_error():
    try:
        yield
    except RatioflowError as exc:
        err_console.print(f"[red]{type(exc).__name__}[/red]: {exc}")
        raise typer.Exit(code=exit_code(exc))


@app.callback()
def main(
    log_level: Optional[str] = typer.Option(
        None, "--log-level", help="Overrides RATIOFLOW_LOG."),
):
    if log_level:
        set_level(log_level)


'''OPTIONS'''

def _parse_inputs(values: List[str], instrument: Optional[str]) \
        -> Dict[str, List[str]]:
    """`NAME=GLOB` entries go to NAME, bare globs to `instrument`."""
    default = instrument or RunConfig.model_fields["instrument"].default
    out: Dict[str, List[str]] = {}
    for value in values:
        name, sep, pattern = value.partition("=")
        if not sep:
            name, pattern = default, value
        out.setdefault(name, []).append(pattern)
    return out


def _run_config(
    config: Optional[Path] = None,
    inputs: Optional[List[str]] = None,
    instrument: Optional[str] = None,
    models: Optional[str] = None,
    lookback: Optional[int] = None,
    jobs: Optional[int] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    audit: bool = False,
) -> RunConfig:
    overrides: Dict[str, Any] = {
        "instrument": instrument, "jobs": jobs, "seed": seed, "out": out,
    }
    if models:
        overrides["models"] = [m.strip() for m in models.split(",")
                               if m.strip()]
    if inputs:
        overrides["inputs"] = _parse_inputs(inputs, instrument)
    schedule: Dict[str, Any] = {}
    if lookback is not None:
        schedule["lookback_days"] = lookback
    if audit:
        schedule["audit"] = True
    if schedule:
        overrides["schedule"] = schedule
    cfg = resolve_run_config(config, overrides)
    logger.info(f"Run config {cfg.hash}.")
    return cfg


ConfigOpt = typer.Option(None, "--config", help="YAML, JSON or TOML file.")
InputOpt = typer.Option(None, "--input", "-i",
                        help="Event file or glob, optionally NAME=GLOB.")
InstrumentOpt = typer.Option(None, "--instrument")
ModelsOpt = typer.Option(None, "--models",
                         help="NAME[,NAME...] or catalog.")
LookbackOpt = typer.Option(None, "--lookback", min=1,
                           help="Calibration span in sessions.")
JobsOpt = typer.Option(None, "--jobs", min=1)
SeedOpt = typer.Option(None, "--seed", min=0)
OutOpt = typer.Option(None, "--out", help="Output directory.")
AuditOpt = typer.Option(False, "--audit",
                        help="Check predictions for look-ahead.")


'''LOADING'''

@dataclass
class LoadedInstrument:
    name: str
    columns: EventColumns
    panel: DepthPanel


def _load(cfg: RunConfig) -> List[LoadedInstrument]:
    paths = cfg.input_paths()
    if not paths:
        raise InputFormatError("No input files configured.")
    loaded = []
    for name, files in paths.items():
        columns = read_events(files)
        panel = replay_columns(columns, clock=cfg.clock)
        logger.info(f"{name}: {len(columns)} events, {len(panel)} market "
                    f"orders in {len(panel.sessions())} sessions.")
        loaded.append(LoadedInstrument(name, columns, panel))
    return loaded


def _min_history(cfg: RunConfig, specs: List[ModelSpec]) -> int:
    if not cfg.schedule.shared_mask:
        return 0
    return max(s.required_history for s in specs)


def _config_payload(cfg: RunConfig) -> Dict[str, Any]:
    return {"config": cfg.model_dump(mode="json")}


def _in_price(cfg: RunConfig, ticks: Optional[float]) -> Optional[float]:
    """Spread in price units, None where it is undefined."""
    if ticks is None or np.isnan(ticks):
        return None
    return float(ticks) * cfg.tick_size


def _with_prices(cfg: RunConfig, report: Dict[str, Any]) -> Dict[str, Any]:
    for window in report.get("windows", []):
        window["spread_mean_price"] = _in_price(cfg, window["spread_mean"])
    return report


'''COMMANDS'''

@app.command("ingest-check")
def ingest_check(
    config: Optional[Path] = ConfigOpt,
    inputs: Optional[List[str]] = InputOpt,
    instrument: Optional[str] = InstrumentOpt,
    out: Optional[str] = OutOpt,
):
    """Read and replay the inputs, then summarize every session."""
    with _exit_on_error():
        cfg = _run_config(config, inputs, instrument, out=out)
        loaded = _load(cfg)
        provenance = Provenance.for_hash(cfg.hash)
        table = Table(title="Sessions")
        for column in ("instrument", "session", "events", "market orders",
                       "inserts", "cancels", "first ts", "last ts",
                       "mean spread"):
            table.add_column(column, justify="right")
        report: Dict[str, Any] = {}
        for inst in loaded:
            summary = session_summary(inst.columns)
            spread = pd.Series(inst.panel.spread(),
                               index=inst.panel.session_id)
            mean_spread = spread.groupby(level=0).mean() * cfg.tick_size
            summary["mean_spread"] = summary["session_id"].map(mean_spread)
            for row in summary.itertuples(index=False):
                table.add_row(
                    inst.name, str(row.session_id), str(row.events),
                    str(row.market_orders), str(row.inserts),
                    str(row.cancels), str(row.first_ts), str(row.last_ts),
                    f"{row.mean_spread:.4g}",
                )
            report[inst.name] = {
                "sessions": summary.to_dict(orient="records"),
                "market_orders_in_window": len(inst.panel),
                "two_sided_share": float(np.mean(inst.panel.two_sided()))
                if len(inst.panel) else None,
            }
        console.print(table)
        write_json(cfg.out_dir() / "ingest.json",
                   {"instruments": report, **_config_payload(cfg)},
                   provenance)


@app.command()
def fit(
    config: Optional[Path] = ConfigOpt,
    inputs: Optional[List[str]] = InputOpt,
    instrument: Optional[str] = InstrumentOpt,
    models: Optional[str] = ModelsOpt,
    lookback: Optional[int] = LookbackOpt,
    jobs: Optional[int] = JobsOpt,
    out: Optional[str] = OutOpt,
    progress: bool = typer.Option(False, "--progress"),
):
    """Fit every model on every calibration window of every instrument."""
    with _exit_on_error():
        cfg = _run_config(config, inputs, instrument, models, lookback,
                          jobs, out=out)
        specs = cfg.specs(include_lday=False)
        loaded = _load(cfg)
        min_history = _min_history(cfg, specs)
        tasks = []
        for inst in loaded:
            tasks += fit_tasks(inst.name, inst.panel, specs, cfg.estimator,
                               cfg.schedule.lookback_days, min_history)
        outcomes = run_tasks(run_fit, tasks, cfg.jobs, "fits", progress)

        provenance = Provenance.for_hash(cfg.hash)
        out_dir = cfg.out_dir()
        table = Table(title="Fits")
        for column in ("instrument", "model", "window", "T", "d", "H",
                       "converged", "boundary"):
            table.add_column(column)
        failures = []
        for o in outcomes:
            if o.fit is None:
                failures.append(f"{o.instrument}/{o.model} window "
                                f"{o.window}: {o.error}")
                continue
            if not o.ok:
                failures.append(f"{o.instrument}/{o.model} window "
                                f"{o.window}: did not converge")
            folder = out_dir / "fits" / o.instrument
            folder.mkdir(parents=True, exist_ok=True)
            write_json(folder / f"{o.model}__w{o.window}.json", {
                "instrument": o.instrument,
                "window": o.window,
                "sessions": list(o.sessions),
                "fit": o.fit.to_dict(),
                "spread_mean_price": _in_price(cfg, o.fit.spread_mean),
                **_config_payload(cfg),
            }, provenance)
            table.add_row(o.instrument, o.model, str(o.window),
                          str(o.fit.T), str(o.fit.d),
                          f"{o.fit.objective:.6g}", str(o.fit.converged),
                          str(o.fit.boundary_hit))
        console.print(table)
        if failures:
            for line in failures:
                err_console.print(f"[red]failed[/red] {line}")
            raise typer.Exit(code=EXIT_ESTIMATION)


@app.command()
def select(
    config: Optional[Path] = ConfigOpt,
    inputs: Optional[List[str]] = InputOpt,
    instrument: Optional[str] = InstrumentOpt,
    models: Optional[str] = ModelsOpt,
    jobs: Optional[int] = JobsOpt,
    out: Optional[str] = OutOpt,
    progress: bool = typer.Option(False, "--progress"),
):
    """
    Fit every model on all sessions, rank by QAIC, QCAIC and QBIC, and
    count first places across instruments.
    """
    with _exit_on_error():
        cfg = _run_config(config, inputs, instrument, models, jobs=jobs,
                          out=out)
        specs = cfg.specs(include_lday=False)
        lday = [s.name for s in specs if s.is_lday]
        if lday:
            raise MixedTError(
                f"l-day models {lday} are calibrated over a different number "
                "of sessions and cannot be ranked with the others."
            )
        loaded = _load(cfg)
        min_history = _min_history(cfg, specs)
        tasks = []
        for inst in loaded:
            tasks += fit_tasks(inst.name, inst.panel, specs, cfg.estimator,
                               None, min_history)
        outcomes = run_tasks(run_fit, tasks, cfg.jobs, "fits", progress)

        by_instrument: Dict[str, list] = {inst.name: [] for inst in loaded}
        for o in outcomes:
            if o.fit is None:
                logger.warning(f"{o.instrument}/{o.model}: {o.error}")
                continue
            by_instrument[o.instrument].append(
                criteria(o.fit, instrument=o.instrument))
        reports = [r for name in sorted(by_instrument)
                   for r in by_instrument[name]]
        rankings = {
            name: {c.value: [r.model for r in rank_models(rs, c)]
                   for c in CRITERIA}
            for name, rs in sorted(by_instrument.items())
        }
        counts = selection_counts(by_instrument)

        provenance = Provenance.for_hash(cfg.hash)
        out_dir = cfg.out_dir()
        write_csv(out_dir / "criteria.csv", criteria_frame(reports),
                  provenance)
        write_json(out_dir / "selection.json", {
            "counts": counts,
            "rankings": rankings,
            "instruments": len(by_instrument),
            "single_session": any(r.single_session for r in reports),
            **_config_payload(cfg),
        }, provenance)
        accuracy_path = out_dir / "accuracy.csv"
        if accuracy_path.exists():
            write_csv(out_dir / "criteria_accuracy.csv",
                      join_with_accuracy(reports, read_csv(accuracy_path)),
                      provenance)

        table = Table(title="Times selected")
        table.add_column("model")
        for c in CRITERIA:
            table.add_column(c.value, justify="right")
        selected = sorted({m for column in counts.values() for m in column})
        for model in selected:
            table.add_row(model, *[str(counts[c.value].get(model, 0))
                                   for c in CRITERIA])
        console.print(table)


@app.command()
def backtest(
    config: Optional[Path] = ConfigOpt,
    inputs: Optional[List[str]] = InputOpt,
    instrument: Optional[str] = InstrumentOpt,
    models: Optional[str] = ModelsOpt,
    lookback: Optional[int] = LookbackOpt,
    jobs: Optional[int] = JobsOpt,
    out: Optional[str] = OutOpt,
    audit: bool = AuditOpt,
    sweep: bool = typer.Option(
        False, "--sweep",
        help="Recalibration study over the configured l values."),
    progress: bool = typer.Option(False, "--progress"),
):
    """Rolling calibrate-then-predict accuracy of every model."""
    with _exit_on_error():
        cfg = _run_config(config, inputs, instrument, models, lookback,
                          jobs, out=out, audit=audit)
        specs = cfg.specs(include_lday=True)
        loaded = _load(cfg)
        min_history = _min_history(cfg, specs)
        l_values = tuple(cfg.schedule.l_values) if sweep else None
        tasks = [
            BacktestTask(
                instrument=inst.name, spec=spec,
                events=inst.columns if cfg.schedule.audit else inst.panel,
                options=cfg.estimator, clock=cfg.clock,
                lookback=cfg.schedule.lookback_days, l_values=l_values,
                min_history=min_history, audit=cfg.schedule.audit,
            )
            for inst in loaded for spec in specs
            if not (sweep and spec.is_lday)
        ]
        outcomes = run_tasks(run_backtest_task, tasks, cfg.jobs,
                             "backtests", progress)

        provenance = Provenance.for_hash(cfg.hash)
        out_dir = cfg.out_dir()
        reports = [r for o in outcomes for r in o.reports]
        rows = pd.DataFrame([r.row() for r in reports],
                            columns=ACCURACY_COLUMNS)
        write_csv(out_dir / "accuracy.csv", rows, provenance)
        write_json(out_dir / "backtest.json", {
            "reports": [_with_prices(cfg, r.to_dict()) for r in reports],
            "errors": {f"{o.instrument}/{o.model}": o.errors
                       for o in outcomes if o.errors},
            **_config_payload(cfg),
        }, provenance)
        if cfg.schedule.dump_predictions:
            folder = out_dir / "predictions"
            folder.mkdir(parents=True, exist_ok=True)
            for r in reports:
                dump_predictions(
                    r.predictions,
                    folder / f"{r.instrument}__{r.model}__l{r.l}.ndjson",
                    meta=provenance.as_dict(),
                )

        table = Table(title="Accuracy")
        for column in ("instrument", "model", "l", "n", "accuracy",
                       "by session", "alternation"):
            table.add_column(column)
        for r in reports:
            table.add_row(r.instrument, r.model, str(r.l),
                          str(r.n_predictions), _pct(r.accuracy),
                          _pct(r.session_accuracy),
                          _pct(r.alternation_accuracy))
        console.print(table)
        failed = [o for o in outcomes if not o.reports]
        for o in failed:
            err_console.print(f"[red]failed[/red] {o.instrument}/{o.model}: "
                              f"{'; '.join(o.errors)}")
        if failed:
            raise typer.Exit(code=EXIT_ESTIMATION)


def _pct(value: Optional[float]) -> str:
    return "-" if value is None else f"{100.0 * value:.2f}%"


@app.command("simulate")
def simulate_cmd(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[int] = SeedOpt,
    out: Optional[str] = OutOpt,
    replication: int = typer.Option(0, "--replication", min=0),
    labels_only: bool = typer.Option(
        False, "--labels-only",
        help="Draw sides given OU covariates, no event stream."),
    normality: Optional[int] = typer.Option(
        None, "--normality", min=1,
        help="Run a Monte-Carlo normality study with this many "
             "replications."),
    jobs: Optional[int] = JobsOpt,
    progress: bool = typer.Option(False, "--progress"),
):
    """Simulate a synthetic order flow with known parameters."""
    with _exit_on_error():
        cfg = _run_config(config, jobs=jobs, seed=seed, out=out)
        if cfg.simulation is None:
            raise InputFormatError("No simulation section in the config.",
                                   path=config)
        data = dict(cfg.simulation)
        if seed is not None or "seed" not in data:
            data["seed"] = cfg.seed
        sim = SimConfig.parse(data)
        provenance = Provenance.for_hash(cfg.hash)
        out_dir = cfg.out_dir()
        manifest: Dict[str, Any] = {
            "seed": sim.seed,
            "replication": replication,
            "simulation": sim.model_dump(mode="json"),
            "theta_star": sim.theta_star().tolist(),
            **_config_payload(cfg),
        }

        if normality is not None:
            try:
                study = monte_carlo_normality(sim, normality, cfg.estimator,
                                              jobs=cfg.jobs,
                                              progress=progress)
            except ValueError as exc:
                raise InputFormatError(str(exc), path=config)
            manifest["normality"] = study.to_dict()
            manifest["event_times"] = EVENT_TIMES
            _print_normality(study)
        elif labels_only:
            samples = simulate_labels_only(sim, replication=replication)
            export_dataset(samples.dataset, out_dir / "dataset.npz")
            manifest["samples"] = len(samples.dataset)
            manifest["bayes_accuracy"] = bayes_accuracy(samples.r_ma)
            manifest["event_times"] = EVENT_TIMES
        else:
            sessions = simulate(sim, replication, progress=progress)
            columns, truth = combine(sessions, sim.spec.dimension)
            write_events(columns, out_dir / "events.csv")
            write_ground_truth(truth, out_dir / "truth.ndjson",
                               meta=provenance.as_dict())
            manifest["events"] = len(columns)
            manifest["market_orders"] = len(truth)
            manifest["event_times"] = "thinned"
            manifest["bayes_accuracy"] = bayes_accuracy(truth.r_ma) \
                if len(truth) else None
        write_json(out_dir / "manifest.json", manifest, provenance)
        console.print(f"Wrote {out_dir} (config {cfg.hash}).")


def _print_normality(study):
    table = Table(title=f"Standardized errors, {study.used} replications")
    for column in ("covariate", "mean", "variance", "skewness", "KS",
                   "KS p", f"coverage {study.level:.0%}"):
        table.add_column(column, justify="right")
    for j, label in enumerate(study.labels):
        table.add_row(label, f"{study.mean[j]:.3f}",
                      f"{study.variance[j]:.3f}", f"{study.skewness[j]:.3f}",
                      f"{study.ks_statistic[j]:.3f}",
                      f"{study.ks_pvalue[j]:.3f}",
                      f"{study.coverage[j]:.3f}")
    console.print(table)


@app.command()
def report(
    out: str = typer.Option("out", "--out", help="Run directory."),
):
    """Collect fit, criteria, selection and accuracy outputs."""
    with _exit_on_error():
        out_dir = Path(out)
        if not out_dir.is_dir():
            raise InputFormatError("Not a directory.", path=out_dir)
        summary = collect_outputs(out_dir)
        if len(summary["config_hashes"]) > 1:
            logger.warning(f"Outputs come from {len(summary['config_hashes'])}"
                           " different configurations.")
        provenance = Provenance.for_hash(
            ",".join(summary["config_hashes"]) or "none")
        write_json(out_dir / "summary.json", summary, provenance)

        if "accuracy" in summary:
            table = Table(title="Accuracy")
            for column in ("instrument", "model", "l", "n", "accuracy",
                           "alternation"):
                table.add_column(column)
            for row in summary["accuracy"]:
                table.add_row(str(row["instrument"]), str(row["model"]),
                              str(row["l"]), str(row["n_pred"]),
                              _pct(_number(row["accuracy"])),
                              _pct(_number(row["alternation_accuracy"])))
            console.print(table)
        if "selection" in summary:
            table = Table(title="Times selected")
            table.add_column("criterion")
            table.add_column("model")
            table.add_column("count", justify="right")
            for criterion, column in summary["selection"].items():
                for model, count in column.items():
                    table.add_row(criterion, model, str(count))
            console.print(table)
        if "fits" in summary:
            n_bad = sum(not (f["converged"] or f["boundary_hit"])
                        for f in summary["fits"])
            console.print(f"{len(summary['fits'])} fits, {n_bad} unusable.")


def _number(value) -> Optional[float]:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return None
    return float(value)
