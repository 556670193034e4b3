import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import pandas as pd

from ..errors import MixedTError
from ..estimation.qmle import FitResult
from ..log import logger


class Criterion(str, Enum):
    QAIC = "qaic"
    QCAIC = "qcaic"
    QBIC = "qbic"

    @classmethod
    def parse(cls, value: Union[str, "Criterion"]) -> "Criterion":
        return value if isinstance(value, cls) else cls(value.lower())


CRITERIA = (Criterion.QAIC, Criterion.QCAIC, Criterion.QBIC)


@dataclass(frozen=True)
class CriterionReport:
    """
    Quasi-information criteria of one fitted model.

    Attributes:
        instrument (str): Instrument the data came from.
        model (str): ModelSpec name.
        d (int): Number of parameters.
        T (int): Number of calibration sessions.
        objective (float): H_T at the estimate.
        qaic (float): -2 H_T + 2 d.
        qcaic (float): -2 H_T + (log T + 1) d.
        qbic (float): -2 H_T + (log T) d.
        converged (bool): Whether the fit is usable for ranking.
        boundary_hit (bool): Propagated from the fit.
    """
    instrument: str
    model: str
    d: int
    T: int
    objective: float
    qaic: float
    qcaic: float
    qbic: float
    converged: bool = True
    boundary_hit: bool = False

    @property
    def single_session(self) -> bool:
        """log T = 0: QBIC carries no penalty and equals -2 H_T."""
        return self.T == 1

    def value(self, criterion: Union[str, Criterion]) -> float:
        return getattr(self, Criterion.parse(criterion).value)


def criterion_values(objective: float, T: int, d: int) -> Dict[str, float]:
    """QAIC, QCAIC and QBIC from H_T, with natural logarithms."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}.")
    log_t = math.log(T)
    base = -2.0 * objective
    return {
        "qaic": base + 2.0 * d,
        "qcaic": base + (log_t + 1.0) * d,
        "qbic": base + log_t * d,
    }


def criteria(
    fit: FitResult,
    T: Optional[int] = None,
    d: Optional[int] = None,
    instrument: str = "",
) -> CriterionReport:
    """
    Criteria of a fit. T and d default to the fit's own.

    Args:
        fit (FitResult): The fitted model.
        T (int, optional): Calibration sessions.
        d (int, optional): Parameter dimension.
        instrument (str, optional): Label carried to the report.

    Returns:
        CriterionReport: The three criteria with the fit's flags.
    """
    T = fit.T if T is None else T
    d = fit.d if d is None else d
    if T == 1:
        logger.debug(f"{fit.model}: T = 1, QBIC has no penalty.")
    return CriterionReport(
        instrument=instrument,
        model=fit.model,
        d=d,
        T=T,
        objective=fit.objective,
        converged=fit.usable,
        boundary_hit=fit.boundary_hit,
        **criterion_values(fit.objective, T, d),
    )


def rank_models(
    reports: Sequence[CriterionReport],
    criterion: Union[str, Criterion],
) -> List[CriterionReport]:
    """
    Order reports by a criterion, lowest first; ties go to the smaller d,
    then to the name.

    Reports of fits that neither converged nor stopped on the boundary are
    left out.

    Raises:
        MixedTError: If the reports do not share one T.
    """
    criterion = Criterion.parse(criterion)
    t_values = sorted({r.T for r in reports})
    if len(t_values) > 1:
        raise MixedTError(
            f"Cannot rank models calibrated over different numbers of "
            f"sessions: T in {t_values}."
        )
    usable = []
    for r in reports:
        if r.converged:
            usable.append(r)
        else:
            logger.warning(f"{r.model}: excluded from ranking, fit did not "
                           "converge.")
    if t_values == [1]:
        logger.warning("Ranking with T = 1: QBIC coincides with -2 H_T.")
    return sorted(usable, key=lambda r: (r.value(criterion), r.d, r.model))


def selection_counts(
    reports_by_instrument: Mapping[str, Sequence[CriterionReport]],
    criteria_list: Iterable[Criterion] = CRITERIA,
) -> Dict[str, Dict[str, int]]:
    """
    How many times each model comes first, per criterion.

    Args:
        reports_by_instrument (Mapping): Instrument -> its model reports.

    Returns:
        dict: criterion -> model -> count. Models never selected are absent.
    """
    if len(reports_by_instrument) == 0:
        raise ValueError("No instruments to count over.")
    counts: Dict[str, Dict[str, int]] = {}
    for criterion in criteria_list:
        column: Dict[str, int] = {}
        for instrument in sorted(reports_by_instrument):
            ranking = rank_models(reports_by_instrument[instrument],
                                  criterion)
            if len(ranking) == 0:
                logger.warning(f"{instrument}: no usable fit to select from.")
                continue
            winner = ranking[0].model
            column[winner] = column.get(winner, 0) + 1
        counts[criterion.value] = dict(sorted(column.items()))
    return counts


REPORT_COLUMNS = ["instrument", "model", "d", "T", "H", "qaic", "qcaic",
                  "qbic"]


def criteria_frame(reports: Sequence[CriterionReport]) -> pd.DataFrame:
    rows = []
    for r in reports:
        row = asdict(r)
        row["H"] = row.pop("objective")
        rows.append(row)
    df = pd.DataFrame(rows, columns=REPORT_COLUMNS + ["converged",
                                                      "boundary_hit"])
    return df.sort_values(["instrument", "model"], kind="stable")


def write_criteria_csv(reports: Sequence[CriterionReport],
                       path: Union[str, Path]):
    criteria_frame(reports)[REPORT_COLUMNS].to_csv(
        path, index=False, float_format="%.10g"
    )


def join_with_accuracy(reports: Sequence[CriterionReport],
                       accuracy: pd.DataFrame) -> pd.DataFrame:
    """
    Criteria next to backtest accuracy, to check whether lower-criterion
    models are the more accurate ones.

    Args:
        reports: Criterion reports.
        accuracy (pd.DataFrame): Backtest rows with at least the columns
            instrument, model, accuracy.
    """
    return criteria_frame(reports).merge(
        accuracy, on=["instrument", "model"], how="inner"
    )
