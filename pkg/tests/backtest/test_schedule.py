import pytest

from ratioflow.backtest.schedule import CalibrationSchedule
from ratioflow.errors import InsufficientSessionsError, ScheduleError


class TestCalibrationSchedule:
    """Window tiling and feasibility of the calibration schedule"""

    def test_tiling(self):
        windows = CalibrationSchedule(3).windows(10)
        assert [w.prediction for w in windows] == [(3, 4, 5), (6, 7, 8), (9,)]
        assert [w.calibration for w in windows] == [(0, 1, 2), (3, 4, 5),
                                                    (6, 7, 8)]
        assert [w.index for w in windows] == [0, 1, 2]

    def test_calibration_precedes_prediction(self):
        for l in range(1, 8):
            for w in CalibrationSchedule(l).windows(30):
                assert len(w.calibration) == l
                assert max(w.calibration) + 1 == min(w.prediction)

    def test_first_prediction_and_step(self):
        schedule = CalibrationSchedule(2, step_days=1, first_prediction=5)
        windows = schedule.windows(8)
        assert [w.prediction for w in windows] == [(5,), (6,), (7,)]
        assert windows[0].calibration == (3, 4)

    def test_one_day_lookback(self):
        windows = CalibrationSchedule(1).windows(3)
        assert [(w.calibration, w.prediction) for w in windows] == \
            [((0,), (1,)), ((1,), (2,))]

    def test_too_few_sessions(self):
        with pytest.raises(InsufficientSessionsError):
            CalibrationSchedule(5).windows(5)
        with pytest.raises(InsufficientSessionsError):
            CalibrationSchedule(2, first_prediction=9).windows(9)

    @pytest.mark.parametrize("kwargs", [
        {"lookback_days": 0},
        {"lookback_days": 2, "step_days": 0},
        {"lookback_days": 3, "first_prediction": 2},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ScheduleError):
            CalibrationSchedule(**kwargs)
