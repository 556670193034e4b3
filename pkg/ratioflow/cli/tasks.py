from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
from tqdm import tqdm

from ..backtest.runner import (
    AccuracyReport,
    StudyRow,
    recalibration_study,
    run_backtest,
)
from ..backtest.schedule import CalibrationSchedule
from ..book.events import EventColumns
from ..book.replay import DepthPanel
from ..config import EstimatorOptions, SessionClock
from ..errors import InsufficientSessionsError, RatioflowError
from ..estimation.qmle import FitResult, fit_qmle
from ..features.dataset import build_dataset
from ..features.descriptors import ModelSpec
from ..log import logger


Task = TypeVar("Task")
Outcome = TypeVar("Outcome")


def run_tasks(fn: Callable[[Task], Outcome], tasks: Sequence[Task],
              jobs: int = 1, desc: str = "tasks",
              progress: bool = False) -> List[Outcome]:
    """
    Run `fn` over `tasks` on a process pool when jobs > 1. Outcomes come
    back in task order whatever the completion order.
    """
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(tqdm(pool.map(fn, tasks), total=len(tasks),
                             desc=desc, disable=not progress))
    return [fn(t) for t in tqdm(tasks, desc=desc, disable=not progress)]


def fit_windows(n_sessions: int, span: Optional[int]) \
        -> List[Tuple[int, ...]]:
    """
    Consecutive blocks of `span` session positions; the whole sample when
    span is None. A trailing partial block is dropped.

    Raises:
        InsufficientSessionsError: If not even one block fits.
    """
    if span is None:
        return [tuple(range(n_sessions))]
    if n_sessions < span:
        raise InsufficientSessionsError(
            f"{n_sessions} sessions, need {span} per calibration window."
        )
    return [tuple(range(k, k + span))
            for k in range(0, n_sessions - span + 1, span)]


'''FIT'''

@dataclass(frozen=True)
class FitTask:
    instrument: str
    spec: ModelSpec
    window: int
    sessions: Tuple[int, ...]
    panel: DepthPanel
    options: EstimatorOptions
    min_history: int = 0


@dataclass
class FitOutcome:
    instrument: str
    model: str
    window: int
    sessions: Tuple[int, ...]
    fit: Optional[FitResult] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.fit is not None and self.fit.usable


def run_fit(task: FitTask) -> FitOutcome:
    outcome = FitOutcome(instrument=task.instrument, model=task.spec.name,
                         window=task.window, sessions=task.sessions)
    try:
        data = build_dataset(task.spec, task.panel,
                             n_sessions=len(task.sessions),
                             min_history=task.min_history)
        outcome.fit = fit_qmle(data, task.options)
    except RatioflowError as exc:
        logger.warning(f"{task.instrument}/{task.spec.name} window "
                       f"{task.window}: {exc}")
        outcome.error = f"{type(exc).__name__}: {exc}"
    return outcome


def fit_tasks(instrument: str, panel: DepthPanel, specs: Sequence[ModelSpec],
              options: EstimatorOptions, lookback: Optional[int] = None,
              min_history: int = 0) -> List[FitTask]:
    """
    One task per (model, calibration window). l-day models without an
    explicit lookback use their own span.
    """
    session_ids = panel.sessions()
    tasks = []
    for spec in specs:
        span = lookback if lookback is not None else (
            spec.recalibration_days if spec.is_lday else None)
        for w, positions in enumerate(fit_windows(len(session_ids), span)):
            ids = tuple(int(s) for s in session_ids[list(positions)])
            tasks.append(FitTask(
                instrument=instrument, spec=spec, window=w, sessions=ids,
                panel=panel.select_sessions(np.asarray(ids)),
                options=options, min_history=min_history,
            ))
    return tasks


'''BACKTEST'''

@dataclass(frozen=True)
class BacktestTask:
    instrument: str
    spec: ModelSpec
    events: Union[EventColumns, DepthPanel]
    options: EstimatorOptions
    clock: SessionClock
    lookback: Optional[int] = None
    l_values: Optional[Tuple[int, ...]] = None
    min_history: int = 0
    audit: bool = False


@dataclass
class BacktestOutcome:
    instrument: str
    model: str
    reports: List[AccuracyReport]
    errors: List[str]


def run_backtest_task(task: BacktestTask) -> BacktestOutcome:
    """
    A single rolling backtest, or a recalibration study when `l_values`
    is set. Failures become error strings on the outcome.
    """
    events = task.events
    outcome = BacktestOutcome(task.instrument, task.spec.name, [], [])
    try:
        if task.l_values is not None:
            rows: List[StudyRow] = recalibration_study(
                events, task.spec, task.l_values, options=task.options,
                instrument=task.instrument, clock=task.clock,
                min_history=task.min_history, audit=task.audit,
            )
            for row in rows:
                if row.report is not None:
                    outcome.reports.append(row.report)
                else:
                    outcome.errors.append(f"l = {row.l}: {row.error}")
        else:
            span = task.lookback if task.lookback is not None \
                else task.spec.recalibration_days
            outcome.reports.append(run_backtest(
                events, task.spec, CalibrationSchedule(span),
                options=task.options, instrument=task.instrument,
                clock=task.clock, min_history=task.min_history,
                audit=task.audit,
            ))
    except InsufficientSessionsError as exc:
        logger.warning(f"{task.instrument}/{task.spec.name}: {exc}")
        outcome.errors.append(str(exc))
    return outcome
