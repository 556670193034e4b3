from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import orjson
import pandas as pd

from ..book.events import EventColumns, Side, SIDE_FROM_CODE
from ..book.fast import replay_columns
from ..book.replay import DepthPanel, replay
from ..book.state import BookSnapshot
from ..config import EstimatorOptions, SessionClock
from ..errors import (
    EstimationError,
    InsufficientSessionsError,
    LookAheadError,
    WindowFitFailure,
)
from ..estimation.qmle import FitResult, fit_qmle
from ..estimation.ratio import ratio_ma
from ..features.covariates import FeatureStream
from ..features.dataset import MA_CODE, Dataset, build_dataset
from ..features.descriptors import ModelSpec
from ..log import logger
from .schedule import CalibrationSchedule, CalibrationWindow


def predict_side(theta: np.ndarray, features: np.ndarray) -> Side:
    """MA when r^MA > 0.5, MB otherwise (a tie goes to MB)."""
    return Side.ASK if float(ratio_ma(theta, features)) > 0.5 else Side.BID


@dataclass(frozen=True)
class PredictionRecord:
    session_id: int
    timestamp: int
    event_index: int
    predicted: Side
    actual: Side
    r_ma: float
    previous: Optional[Side]

    @property
    def correct(self) -> bool:
        return self.predicted is self.actual

    @property
    def alternation(self) -> bool:
        return self.previous is not None and self.actual is not self.previous

    def to_dict(self) -> Dict[str, Any]:
        return {
            "session_id": self.session_id,
            "timestamp_ns": self.timestamp,
            "event_index": self.event_index,
            "predicted": self.predicted.label,
            "actual": self.actual.label,
            "r_ma": self.r_ma,
            "previous": None if self.previous is None else self.previous.label,
        }


@dataclass
class PredictionTable:
    """Scored market orders of one window, in columns."""
    session_id: np.ndarray
    timestamp: np.ndarray
    event_index: np.ndarray
    r_ma: np.ndarray
    predicted_ma: np.ndarray
    actual_ma: np.ndarray
    prev_side: np.ndarray

    def __len__(self) -> int:
        return int(self.r_ma.shape[0])

    @classmethod
    def score(cls, theta: np.ndarray, data: Dataset) -> "PredictionTable":
        r = ratio_ma(theta, data.X) if len(data) else np.zeros(0)
        return cls(
            session_id=data.session_id,
            timestamp=data.timestamp,
            event_index=data.event_index,
            r_ma=r,
            predicted_ma=r > 0.5,
            actual_ma=data.is_ma == 1,
            prev_side=data.prev_side,
        )

    @classmethod
    def concat(cls, parts: Sequence["PredictionTable"]) -> "PredictionTable":
        if len(parts) == 0:
            i64 = np.zeros(0, dtype=np.int64)
            return cls(i64, i64, i64, np.zeros(0), np.zeros(0, dtype=bool),
                       np.zeros(0, dtype=bool), np.zeros(0, dtype=np.int8))
        return cls(*[
            np.concatenate([getattr(p, name) for p in parts])
            for name in ("session_id", "timestamp", "event_index", "r_ma",
                         "predicted_ma", "actual_ma", "prev_side")
        ])

    @property
    def correct(self) -> np.ndarray:
        return self.predicted_ma == self.actual_ma

    @property
    def alternation(self) -> np.ndarray:
        actual_code = np.where(self.actual_ma, MA_CODE, 1 - MA_CODE)
        return (self.prev_side >= 0) & (actual_code != self.prev_side)

    def records(self) -> Iterator[PredictionRecord]:
        for i in range(len(self)):
            prev = int(self.prev_side[i])
            yield PredictionRecord(
                session_id=int(self.session_id[i]),
                timestamp=int(self.timestamp[i]),
                event_index=int(self.event_index[i]),
                predicted=Side.ASK if self.predicted_ma[i] else Side.BID,
                actual=Side.ASK if self.actual_ma[i] else Side.BID,
                r_ma=float(self.r_ma[i]),
                previous=None if prev < 0 else SIDE_FROM_CODE[prev],
            )


def alternation_accuracy(records: Sequence[PredictionRecord]) \
        -> Optional[float]:
    """
    Accuracy over market orders whose side differs from the previous one of
    the same session. None when there is no such order.
    """
    flips = [r for r in records if r.alternation]
    if len(flips) == 0:
        return None
    return sum(r.correct for r in flips) / len(flips)


def _fraction(hits: np.ndarray) -> Optional[float]:
    if hits.shape[0] == 0:
        return None
    return float(np.count_nonzero(hits)) / hits.shape[0]


def session_weighted_accuracy(table: PredictionTable) -> Optional[float]:
    """Mean of the per-session accuracies, each session weighing the same."""
    if len(table) == 0:
        return None
    _, inverse = np.unique(table.session_id, return_inverse=True)
    hits = np.bincount(inverse, weights=table.correct.astype(np.float64))
    totals = np.bincount(inverse)
    return float(np.mean(hits / totals))


@dataclass
class WindowReport:
    index: int
    calibration_sessions: List[int]
    prediction_sessions: List[int]
    theta: Optional[List[float]] = None
    spread_mean: Optional[float] = None
    n_calibration: int = 0
    n_predictions: int = 0
    accuracy: Optional[float] = None
    boundary_hit: bool = False
    error: Optional[str] = None

    @property
    def skipped(self) -> bool:
        return self.error is not None


@dataclass
class AccuracyReport:
    """
    Out-of-sample accuracy of one model over a rolling schedule.

    Attributes:
        model (str): ModelSpec name.
        instrument (str): Instrument label.
        l (int): Calibration span in sessions.
        n_predictions (int): Scored market orders.
        n_correct (int): Correctly predicted ones.
        accuracy (float | None): n_correct / n_predictions.
        session_accuracy (float | None): Mean of per-session accuracies.
        n_alternations (int): Scored orders whose side differs from the
            previous order's.
        alternation_accuracy (float | None): Accuracy over those, None
            when there are none.
        windows (list): Per-window breakdown, skipped windows included.
    """
    model: str
    instrument: str
    l: int
    n_predictions: int
    n_correct: int
    accuracy: Optional[float]
    session_accuracy: Optional[float]
    n_alternations: int
    alternation_accuracy: Optional[float]
    windows: List[WindowReport] = field(default_factory=list)
    predictions: Optional[PredictionTable] = field(default=None, repr=False)

    @classmethod
    def from_table(cls, model: str, instrument: str, l: int,
                   table: PredictionTable, windows: List[WindowReport]) \
            -> "AccuracyReport":
        flips = table.alternation
        return cls(
            model=model,
            instrument=instrument,
            l=l,
            n_predictions=len(table),
            n_correct=int(np.count_nonzero(table.correct)),
            accuracy=_fraction(table.correct),
            session_accuracy=session_weighted_accuracy(table),
            n_alternations=int(np.count_nonzero(flips)),
            alternation_accuracy=_fraction(table.correct[flips]),
            windows=windows,
            predictions=table,
        )

    def row(self) -> Dict[str, Any]:
        return {
            "instrument": self.instrument,
            "model": self.model,
            "l": self.l,
            "n_pred": self.n_predictions,
            "accuracy": self.accuracy,
            "alternation_accuracy": self.alternation_accuracy,
            "session_accuracy": self.session_accuracy,
            "n_alternations": self.n_alternations,
            "skipped_windows": sum(w.skipped for w in self.windows),
        }

    def to_dict(self) -> Dict[str, Any]:
        out = self.row()
        out["windows"] = [dict(vars(w)) for w in self.windows]
        return out


ACCURACY_COLUMNS = ["instrument", "model", "l", "n_pred", "accuracy",
                    "alternation_accuracy", "session_accuracy",
                    "n_alternations", "skipped_windows"]


def write_accuracy_csv(reports: Sequence[AccuracyReport],
                       path: Union[str, Path]):
    df = pd.DataFrame([r.row() for r in reports], columns=ACCURACY_COLUMNS)
    df.to_csv(path, index=False, float_format="%.10g")


def dump_predictions(table: PredictionTable, path: Union[str, Path],
                     meta: Optional[Dict[str, Any]] = None):
    """
    One JSON object per scored market order, after an optional
    `{"meta": ...}` first line.
    """
    with open(path, "wb") as f:
        if meta is not None:
            f.write(orjson.dumps({"meta": meta}, option=orjson.OPT_SORT_KEYS))
            f.write(b"\n")
        for record in table.records():
            f.write(orjson.dumps(record.to_dict()))
            f.write(b"\n")


'''AUDIT'''


def _window_stream(
    events: EventColumns,
    levels: int,
    session_ids: Sequence[int],
    clock: Optional[SessionClock],
) -> Iterator[Tuple[int, int, Side, BookSnapshot]]:
    """
    (event_index, session_id, side, pre-event book) for every market order
    of the given sessions, replayed one event at a time.
    """
    index = np.flatnonzero(np.isin(events.session_id, session_ids))
    for emission in replay(events.take(index).iter_events(), clock=clock,
                           levels=levels):
        a = emission.arrival
        yield int(index[a.event_index]), a.session_id, a.side, emission.book


def audit_window(
    spec: ModelSpec,
    data: Dataset,
    stream: Iterator[Tuple[int, int, Side, BookSnapshot]],
    window: CalibrationWindow,
    session_ids: np.ndarray,
    min_history: int = 0,
) -> int:
    """
    Recompute the prediction features incrementally, each from the stream
    truncated right before its market order, and compare.

    Returns:
        int: Number of checked samples.

    Raises:
        LookAheadError: On any disagreement, or when a calibration session
            does not precede every predicted one.
    """
    calib = session_ids[list(window.calibration)]
    pred = session_ids[list(window.prediction)]
    if calib.max() >= pred.min():
        raise LookAheadError(
            f"Window {window.index}: calibration session {calib.max()} is "
            f"not before prediction session {pred.min()}."
        )
    expected = {int(e): i for i, e in enumerate(data.event_index)}
    features = FeatureStream(spec, spread_threshold=data.spread_mean)
    checked = 0
    for event_index, session_id, side, book in stream:
        features.start_session(session_id)
        x = features.features(book)
        if features.lags.count < min_history:
            x = None
        row = expected.pop(event_index, None)
        if (x is None) != (row is None) or \
                (row is not None and not np.array_equal(x, data.X[row])):
            raise LookAheadError(
                f"Window {window.index}: features of event {event_index} "
                "differ from their recomputation on the truncated stream."
            )
        checked += row is not None
        features.record(book, side)
    if expected:
        raise LookAheadError(
            f"Window {window.index}: {len(expected)} samples have no "
            "counterpart in the replayed stream."
        )
    return checked


'''BACKTEST'''


def _as_panel(events: Union[EventColumns, DepthPanel],
              clock: Optional[SessionClock]) \
        -> Tuple[Optional[EventColumns], DepthPanel, np.ndarray]:
    if isinstance(events, DepthPanel):
        return None, events, events.sessions()
    return events, replay_columns(events, clock=clock), events.session_ids()


def _run_window(
    spec: ModelSpec,
    panel: DepthPanel,
    session_ids: np.ndarray,
    window: CalibrationWindow,
    options: EstimatorOptions,
    min_history: int,
) -> Tuple[FitResult, Dataset]:
    calib_ids = session_ids[list(window.calibration)]
    calib = build_dataset(
        spec, panel.select_sessions(calib_ids),
        n_sessions=len(calib_ids), min_history=min_history,
    )
    try:
        fit = fit_qmle(calib, options).raise_for_status()
    except EstimationError as exc:
        raise WindowFitFailure(
            f"Window {window.index} of {spec.name}: {exc}"
        ) from exc
    pred_ids = session_ids[list(window.prediction)]
    pred = build_dataset(
        spec, panel.select_sessions(pred_ids), spread_mean=fit.spread_mean,
        n_sessions=len(pred_ids), min_history=min_history,
    )
    return fit, pred


def run_backtest(
    events: Union[EventColumns, DepthPanel],
    spec: ModelSpec,
    schedule: Optional[CalibrationSchedule] = None,
    options: Optional[EstimatorOptions] = None,
    instrument: str = "",
    clock: Optional[SessionClock] = None,
    min_history: int = 0,
    audit: bool = False,
) -> AccuracyReport:
    """
    Fit on each calibration window, freeze theta and the spread mean, and
    score every qualifying market order of the following prediction window.

    Lags and last signs in prediction sessions are rebuilt from those
    sessions' own market orders; only theta and the spread threshold come
    from calibration.

    Args:
        events: Event stream, or its already replayed depth panel.
        spec (ModelSpec): The model.
        schedule (CalibrationSchedule, optional): Defaults to a lookback of
            `spec.recalibration_days`.
        options (EstimatorOptions, optional): Fit options.
        instrument (str, optional): Label carried to the report.
        clock (SessionClock, optional): Trading window used in replay.
        min_history (int, optional): Shared minimum session position.
        audit (bool, optional): Check every prediction feature against a
            streaming recomputation. Needs event columns.

    Returns:
        AccuracyReport: Aggregated accuracies and the window breakdown.

    Raises:
        InsufficientSessionsError: If the data hold no predictable session.
        ValueError: If `audit` is set and `events` is a depth panel.
    """
    options = options if options is not None else EstimatorOptions()
    if schedule is None:
        schedule = CalibrationSchedule(spec.recalibration_days)
    if audit and isinstance(events, DepthPanel):
        raise ValueError(
            "Audit mode replays the raw event stream, pass event columns."
        )
    columns, panel, session_ids = _as_panel(events, clock)
    windows = schedule.windows(len(session_ids))
    logger.info(f"{spec.name}: {len(windows)} windows, lookback "
                f"{schedule.lookback_days}.")

    tables: List[PredictionTable] = []
    breakdown: List[WindowReport] = []
    for window in windows:
        report = WindowReport(
            index=window.index,
            calibration_sessions=[int(s) for s in
                                  session_ids[list(window.calibration)]],
            prediction_sessions=[int(s) for s in
                                 session_ids[list(window.prediction)]],
        )
        breakdown.append(report)
        try:
            fit, pred = _run_window(spec, panel, session_ids, window,
                                    options, min_history)
        except WindowFitFailure as exc:
            report.error = str(exc)
            logger.warning(f"Skipping window: {exc}")
            continue
        if audit:
            stream = _window_stream(columns, panel.levels,
                                    report.prediction_sessions, clock)
            audit_window(spec, pred, stream, window, session_ids,
                         min_history)
        table = PredictionTable.score(fit.theta, pred)
        tables.append(table)
        report.theta = [float(v) for v in fit.theta]
        report.spread_mean = None if np.isnan(fit.spread_mean) \
            else float(fit.spread_mean)
        report.n_calibration = fit.n_samples
        report.n_predictions = len(table)
        report.accuracy = _fraction(table.correct)
        report.boundary_hit = fit.boundary_hit
        logger.debug(
            f"{spec.name} window {window.index}: {len(table)} predictions, "
            f"accuracy {report.accuracy}."
        )
    return AccuracyReport.from_table(
        spec.name, instrument, schedule.lookback_days,
        PredictionTable.concat(tables), breakdown,
    )


@dataclass
class StudyRow:
    l: int
    report: Optional[AccuracyReport] = None
    error: Optional[str] = None


def recalibration_study(
    events: Union[EventColumns, DepthPanel],
    spec: ModelSpec,
    l_values: Sequence[int],
    options: Optional[EstimatorOptions] = None,
    instrument: str = "",
    clock: Optional[SessionClock] = None,
    min_history: int = 0,
    audit: bool = False,
) -> List[StudyRow]:
    """
    One backtest per calibration span l, all predicting the same sessions:
    the first predicted session is the largest feasible l.

    Spans that the sample cannot support are reported with an error.
    """
    columns, panel, session_ids = _as_panel(events, clock)
    source = columns if (audit and columns is not None) else panel
    n = len(session_ids)
    feasible = [l for l in l_values if l < n]
    start = max(feasible) if feasible else None
    rows = []
    for l in l_values:
        if l not in feasible:
            exc = InsufficientSessionsError(
                f"{n} sessions, cannot calibrate on {l}."
            )
            logger.warning(f"{spec.name}, l = {l}: {exc}")
            rows.append(StudyRow(l=l, error=str(exc)))
            continue
        schedule = CalibrationSchedule(l, first_prediction=start)
        report = run_backtest(
            source, spec.with_recalibration(l), schedule, options,
            instrument=instrument, clock=clock, min_history=min_history,
            audit=audit,
        )
        rows.append(StudyRow(l=l, report=report))
    return rows
