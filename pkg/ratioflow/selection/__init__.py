from .criteria import (
    CRITERIA,
    Criterion,
    CriterionReport,
    criteria,
    criterion_values,
    join_with_accuracy,
    rank_models,
    selection_counts,
    write_criteria_csv,
)
