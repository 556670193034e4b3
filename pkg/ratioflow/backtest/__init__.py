from .schedule import CalibrationSchedule, CalibrationWindow
from .runner import (
    AccuracyReport,
    PredictionRecord,
    PredictionTable,
    StudyRow,
    WindowReport,
    alternation_accuracy,
    audit_window,
    dump_predictions,
    predict_side,
    recalibration_study,
    run_backtest,
    write_accuracy_csv,
)
