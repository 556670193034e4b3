from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..errors import ConfigInvalid
from ..estimation.ratio import ratio_pair
from ..features.dataset import MA_CODE, Dataset
from ..features.descriptors import CovariateKind
from .baseline import make_baseline
from .config import OUPaths, SimConfig
from .paths import PathLayout, simulate_paths
from .rng import LABEL_STREAM, PATH_STREAM, make_rng


# Market-order times in label-only mode follow lambda0 alone.
EVENT_TIMES = "baseline_only"


@dataclass
class LabeledSamples:
    """
    Label-only simulation output.

    `dataset` holds the market orders with enough history for the model,
    `r_ma` their true ask-side probabilities.
    """
    dataset: Dataset
    r_ma: np.ndarray
    theta_star: np.ndarray


@dataclass
class CovariatePaths:
    """
    Covariate inputs at the market orders of each session.

    Attributes:
        imbalances (list): Per session, path values at t- of each market
            order, shape (n_k, n_paths) in PathLayout order.
        spread_signs (list): Per session, +1 / -1 spread indicator at each
            market order, shape (n_k,).
    """
    imbalances: List[np.ndarray]
    spread_signs: List[np.ndarray]


def label_event_times(config: SimConfig, rng: np.random.Generator,
                      baseline=None) -> np.ndarray:
    """
    Market-order times of one session, Poisson with rate lambda0(t).

    The covariate-driven factors of the intensity are left out, so the
    times approximate those of the full simulation.
    """
    if baseline is None:
        baseline = make_baseline(config.baseline, config.session_length,
                                 config.grid_step, rng)
    bound = baseline.cell_max()
    lower = np.arange(baseline.n_cells) * config.grid_step
    width = np.minimum(lower + config.grid_step, config.session_length) \
        - lower
    counts = rng.poisson(bound * width)
    starts = np.repeat(lower, counts)
    t = starts + rng.random(starts.shape[0]) * np.repeat(width, counts)
    cell_bound = np.repeat(bound, counts)
    keep = rng.random(t.shape[0]) * cell_bound < baseline.rate(t)
    return np.sort(t[keep])


def draw_covariate_paths(config: SimConfig, replication: int = 0) \
        -> CovariatePaths:
    """
    OU covariate values at baseline-driven market-order times, one session
    at a time.
    """
    dynamics = config.covariate_dynamics
    if not isinstance(dynamics, OUPaths):
        raise ConfigInvalid("Label-only simulation needs OU covariate paths.")
    layout = PathLayout.for_spec(config.spec)
    imbalances, signs = [], []
    for k in range(config.sessions):
        rng = make_rng(config.seed, replication, k, PATH_STREAM)
        baseline = make_baseline(config.baseline, config.session_length,
                                 config.grid_step, rng)
        times = label_event_times(config, rng, baseline)
        paths = simulate_paths(dynamics, layout, baseline.n_cells,
                               config.grid_step, rng)
        imb, spread = paths.at(times)
        imbalances.append(imb.reshape(times.shape[0], layout.n_paths))
        signs.append(np.where(spread > config.spread_threshold, 1.0, -1.0))
    return CovariatePaths(imbalances=imbalances, spread_signs=signs)


def _pad(arrays: List[np.ndarray], n_max: int, width: int) -> np.ndarray:
    out = np.zeros((len(arrays), n_max, width), dtype=np.float64)
    for k, a in enumerate(arrays):
        out[k, :a.shape[0]] = a.reshape(a.shape[0], width)
    return out


def simulate_labels_only(
    config: SimConfig,
    paths: Optional[CovariatePaths] = None,
    replication: int = 0,
) -> LabeledSamples:
    """
    Sides drawn Bernoulli(r^MA(t, theta*)) given the covariates, without
    simulating event times by thinning.

    Event times come from the baseline lambda0 alone and ignore the
    covariate-driven intensity, an approximation recorded as
    `EVENT_TIMES` in simulation outputs. The ratios themselves are exact
    given the covariates.

    Lagged covariates come from the supplied paths at earlier market orders
    of the same session, last signs from the sides drawn so far. The
    recursion runs over the event index, vectorized across sessions.

    Args:
        config (SimConfig): Model, parameters, sessions and seed.
        paths (CovariatePaths, optional): Covariates at event times.
            Defaults to `draw_covariate_paths(config, replication)`.
        replication (int, optional): Replication index, keys the streams.

    Returns:
        LabeledSamples: Samples with enough history, and their true r^MA.
    """
    spec = config.spec
    layout = PathLayout.for_spec(spec)
    if paths is None:
        paths = draw_covariate_paths(config, replication)
    rng = make_rng(config.seed, replication, LABEL_STREAM)

    T = len(paths.imbalances)
    counts = np.array([a.shape[0] for a in paths.imbalances], dtype=np.int64)
    n_max = int(counts.max(initial=0))
    d = spec.dimension
    imb = _pad(paths.imbalances, n_max, layout.n_paths)
    signs = _pad(paths.spread_signs, n_max, 1)[:, :, 0]
    theta = np.stack([config.theta_star(k) for k in range(T)]) if T \
        else np.zeros((0, d))

    # Everything but the sign covariates is known before drawing sides.
    X = np.zeros((T, n_max, d), dtype=np.float64)
    sign_cols, spread_cols = [], []
    for j, c in enumerate(spec.covariates):
        if c.kind is CovariateKind.CONSTANT:
            X[:, :, j] = 1.0
        elif c.kind is CovariateKind.LAST_SIGN:
            sign_cols.append(j)
        elif c.kind is CovariateKind.SIGN_SPREAD_PRODUCT:
            spread_cols.append(j)
        elif c.lag == 0:
            X[:, :, j] = imb[:, :, layout.columns[j]]
        else:
            X[:, c.lag:, j] = imb[:, :-c.lag, layout.columns[j]]

    is_ma = np.zeros((T, n_max), dtype=np.int8)
    r_ma = np.zeros((T, n_max), dtype=np.float64)
    last_sign = np.zeros(T, dtype=np.float64)
    uniforms = rng.random((T, n_max))
    for i in range(n_max):
        for j in sign_cols:
            X[:, i, j] = last_sign
        for j in spread_cols:
            X[:, i, j] = last_sign * signs[:, i]
        z = np.einsum("kj,kj->k", X[:, i, :], theta)
        r_ma[:, i] = ratio_pair(z)[0]
        ma = uniforms[:, i] < r_ma[:, i]
        is_ma[:, i] = ma
        last_sign = np.where(ma, -1.0, 1.0)

    position = np.arange(n_max)[None, :]
    keep = (position < counts[:, None]) & \
        (position >= spec.required_history)
    session_id = np.broadcast_to(np.arange(T)[:, None], (T, n_max))
    dataset = Dataset.from_arrays(
        spec, X[keep], is_ma[keep], session_id=session_id[keep],
        n_sessions=T,
    )
    prev = np.full((T, n_max), -1, dtype=np.int8)
    prev[:, 1:] = np.where(is_ma[:, :-1] == 1, MA_CODE, 1 - MA_CODE)
    dataset.prev_side = prev[keep]
    return LabeledSamples(dataset=dataset, r_ma=r_ma[keep],
                          theta_star=config.theta_star(0))
