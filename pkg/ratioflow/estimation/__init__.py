from .ratio import Theta, linear_predictor, ratio, ratio_ma, ratio_pair
from .likelihood import (
    LikelihoodTerms,
    evaluate,
    gradient,
    hessian,
    quasi_log_likelihood,
)
from .qmle import (
    FitResult,
    GammaEstimate,
    estimate_gamma,
    fit_qmle,
    load_fit,
    standard_errors,
)
