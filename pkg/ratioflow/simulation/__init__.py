from .config import (
    BookDriven,
    ConstantRate,
    LogOU,
    OUParams,
    OUPaths,
    RegimeShift,
    SimConfig,
    UShape,
    load_sim_config,
)
from .rng import make_rng
from .simulate import (
    GroundTruth,
    SimulatedSession,
    bayes_accuracy,
    combine,
    simulate,
    simulate_session,
    write_ground_truth,
)
from .labels import (
    CovariatePaths,
    LabeledSamples,
    draw_covariate_paths,
    simulate_labels_only,
)
from .montecarlo import NormalityReport, monte_carlo_normality
