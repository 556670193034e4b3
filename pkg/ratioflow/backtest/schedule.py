from dataclasses import dataclass
from typing import List, Optional, Tuple

from ..errors import InsufficientSessionsError, ScheduleError


@dataclass(frozen=True)
class CalibrationWindow:
    """
    One calibrate-then-predict step, as positions into the ordered session
    list.
    """
    index: int
    calibration: Tuple[int, ...]
    prediction: Tuple[int, ...]


@dataclass(frozen=True)
class CalibrationSchedule:
    """
    Rolling schedule: calibrate on the l sessions before k, predict
    sessions k .. k+l-1, then move k forward by l.

    Attributes:
        lookback_days (int): l, the calibration span.
        step_days (int | None): Stride between windows. Defaults to l, so
            prediction windows tile the sample.
        first_prediction (int | None): Position of the first predicted
            session. Defaults to l.
    """
    lookback_days: int
    step_days: Optional[int] = None
    first_prediction: Optional[int] = None

    def __post_init__(self):
        if self.lookback_days < 1:
            raise ScheduleError(
                f"lookback_days must be >= 1, got {self.lookback_days}."
            )
        if self.step_days is not None and self.step_days < 1:
            raise ScheduleError(f"step_days must be >= 1, got "
                                f"{self.step_days}.")
        if self.first_prediction is not None and \
                self.first_prediction < self.lookback_days:
            raise ScheduleError(
                f"First prediction at {self.first_prediction} leaves less "
                f"than {self.lookback_days} calibration sessions."
            )

    @property
    def step(self) -> int:
        return self.step_days if self.step_days is not None \
            else self.lookback_days

    @property
    def start(self) -> int:
        return self.first_prediction if self.first_prediction is not None \
            else self.lookback_days

    def windows(self, n_sessions: int) -> List[CalibrationWindow]:
        """
        Windows over `n_sessions` ordered sessions. The last prediction
        window is cut at the end of the sample.

        Raises:
            InsufficientSessionsError: If no session can be predicted.
        """
        if n_sessions <= self.start:
            raise InsufficientSessionsError(
                f"{n_sessions} sessions, need at least {self.start + 1} for "
                f"a lookback of {self.lookback_days}."
            )
        l = self.lookback_days
        out = []
        for i, k in enumerate(range(self.start, n_sessions, self.step)):
            window = CalibrationWindow(
                index=i,
                calibration=tuple(range(k - l, k)),
                prediction=tuple(range(k, min(k + self.step, n_sessions))),
            )
            assert max(window.calibration) < min(window.prediction), \
                "Calibration overlaps prediction."
            out.append(window)
        return out
