from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import stats
from tqdm import tqdm

from ..config import EstimatorOptions
from ..errors import EstimationError
from ..estimation.qmle import FitResult, fit_qmle
from ..log import logger
from .config import SimConfig
from .labels import simulate_labels_only


MIN_REPLICATIONS = 100


@dataclass
class NormalityReport:
    """
    Distribution of the standardized estimation error across replications.

    For each usable replication, u = sqrt(T) (theta_hat - theta*) is mapped
    to Gamma_hat^(1/2) u, which should be close to a standard normal
    vector.

    Attributes:
        labels (list): Covariate labels.
        replications (int): Replications run.
        used (int): Replications with a usable fit and standard errors.
        excluded (dict): Excluded replications by reason.
        mean, variance, skewness (list): Per coordinate, standardized.
        ks_statistic, ks_pvalue (list): Kolmogorov-Smirnov against N(0, 1).
        coverage (list): Share of replications whose confidence interval
            theta_hat_j +- z * se_j holds theta*_j.
        level (float): Nominal confidence level of `coverage`.
    """
    labels: List[str]
    replications: int
    used: int
    excluded: Dict[str, int]
    mean: List[float]
    variance: List[float]
    skewness: List[float]
    ks_statistic: List[float]
    ks_pvalue: List[float]
    coverage: List[float]
    level: float = 0.95
    standardized: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in vars(self).items() if k != "standardized"}


def symmetric_sqrt(matrix: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (matrix + matrix.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _replicate(config: SimConfig, replication: int,
               options: EstimatorOptions) -> Optional[FitResult]:
    samples = simulate_labels_only(config, replication=replication)
    try:
        return fit_qmle(samples.dataset, options)
    except EstimationError as exc:
        logger.info(f"Replication {replication} excluded: {exc}")
        return None


def monte_carlo_normality(
    config: SimConfig,
    replications: int,
    options: Optional[EstimatorOptions] = None,
    level: float = 0.95,
    jobs: int = 1,
    progress: bool = False,
) -> NormalityReport:
    """
    Replicate label-only simulations, fit each one and summarize how close
    the standardized errors are to N(0, I).

    Args:
        config (SimConfig): Law of the data, without regime shift.
        replications (int): M, at least 100.
        options (EstimatorOptions, optional): Fit options.
        level (float, optional): Confidence level for coverage.
        jobs (int, optional): Worker processes.
        progress (bool, optional): Show a progress bar.

    Returns:
        NormalityReport: Moments, KS statistics and coverage.
    """
    if replications < MIN_REPLICATIONS:
        raise ValueError(f"At least {MIN_REPLICATIONS} replications needed, "
                         f"got {replications}.")
    if config.regime_shift is not None:
        raise ValueError("Normality study needs a fixed theta*.")
    options = options if options is not None else EstimatorOptions()
    theta_star = config.theta_star()
    T = config.sessions
    z_crit = stats.norm.ppf(0.5 + level / 2.0)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            fits = list(tqdm(
                pool.map(_replicate, [config] * replications,
                         range(replications), [options] * replications),
                total=replications, disable=not progress,
            ))
    else:
        fits = [_replicate(config, m, options)
                for m in tqdm(range(replications), disable=not progress)]

    excluded = {"fit_failed": 0, "not_converged": 0, "no_std_errors": 0}
    standardized, covered = [], []
    for fit in fits:
        if fit is None:
            excluded["fit_failed"] += 1
            continue
        if not fit.converged:
            excluded["not_converged"] += 1
            continue
        if fit.std_errors is None:
            excluded["no_std_errors"] += 1
            continue
        u = np.sqrt(T) * (fit.theta - theta_star)
        standardized.append(symmetric_sqrt(fit.gamma_hat) @ u)
        covered.append(np.abs(fit.theta - theta_star)
                       <= z_crit * fit.std_errors)
    if len(standardized) == 0:
        raise EstimationError("Every replication was excluded.")

    zeta = np.array(standardized)
    ks = [stats.kstest(zeta[:, j], "norm") for j in range(zeta.shape[1])]
    report = NormalityReport(
        labels=config.spec.labels,
        replications=replications,
        used=zeta.shape[0],
        excluded=excluded,
        mean=zeta.mean(axis=0).tolist(),
        variance=zeta.var(axis=0, ddof=1).tolist(),
        skewness=stats.skew(zeta, axis=0).tolist(),
        ks_statistic=[float(r.statistic) for r in ks],
        ks_pvalue=[float(r.pvalue) for r in ks],
        coverage=np.mean(covered, axis=0).tolist(),
        level=level,
        standardized=zeta,
    )
    logger.info(f"Normality study: {report.used}/{replications} usable "
                f"replications, coverage {report.coverage}.")
    return report
