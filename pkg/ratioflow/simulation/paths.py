from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.signal import lfilter

from ..features.descriptors import CovariateDescriptor, CovariateKind, ModelSpec
from .config import OUParams, OUPaths


def ou_grid(mean: float, reversion: float, vol: float, step: float,
            n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Ornstein-Uhlenbeck values on a regular grid, exact transitions, started
    from the stationary law.
    """
    a = np.exp(-reversion * step)
    stationary = vol / np.sqrt(2.0 * reversion)
    noise = rng.standard_normal(n)
    innovations = stationary * np.sqrt(1.0 - a * a) * noise
    innovations[0] = stationary * noise[0]
    # y[k] = a y[k-1] + innovations[k], y[0] drawn from the stationary law
    return mean + lfilter([1.0], [1.0, -a], innovations)


# (kind, n): the level imbalance or cumulative imbalance a path stands for.
PathKey = Tuple[CovariateKind, int]


def _path_key(c: CovariateDescriptor) -> Optional[PathKey]:
    if c.kind in (CovariateKind.IMB, CovariateKind.LAG_IMB):
        return CovariateKind.IMB, c.n
    if c.kind in (CovariateKind.IMB_CUM, CovariateKind.LAG_IMB_CUM):
        return CovariateKind.IMB_CUM, c.n
    return None


def _path_label(key: PathKey) -> str:
    kind, n = key
    return f"i_{n}" if kind is CovariateKind.IMB else f"ibar_{n}"


@dataclass(frozen=True)
class PathLayout:
    """
    How the covariates of a spec are assembled from simulated imbalance
    paths, the spread sign and the trade history.

    Attributes:
        keys (list): One path per distinct imbalance the model refers to,
            lagged or not.
        columns (list): Per covariate, the path column it reads (-1 for
            the constant and the sign covariates).
    """
    spec: ModelSpec
    keys: List[PathKey]
    columns: List[int]

    @classmethod
    def for_spec(cls, spec: ModelSpec) -> "PathLayout":
        keys: List[PathKey] = []
        columns = []
        for c in spec.covariates:
            key = _path_key(c)
            if key is None:
                columns.append(-1)
                continue
            if key not in keys:
                keys.append(key)
            columns.append(keys.index(key))
        return cls(spec=spec, keys=keys, columns=columns)

    @property
    def n_paths(self) -> int:
        return len(self.keys)

    @property
    def labels(self) -> List[str]:
        return [_path_label(k) for k in self.keys]

    def assemble(self, current: np.ndarray, history: List[np.ndarray],
                 last_sign: float, spread_sign: float) -> np.ndarray:
        """
        Feature vector at one market order.

        Args:
            current (np.ndarray): Path values at t-, shape (n_paths,).
            history (list): Path values at earlier market orders of the
                session, most recent first. Missing lags read as 0.
            last_sign (float): Sign of the previous trade, 0 if none.
            spread_sign (float): +1 when the spread exceeds its threshold,
                -1 otherwise.
        """
        x = np.empty(self.spec.dimension, dtype=np.float64)
        for j, c in enumerate(self.spec.covariates):
            if c.kind is CovariateKind.CONSTANT:
                x[j] = 1.0
            elif c.kind is CovariateKind.LAST_SIGN:
                x[j] = last_sign
            elif c.kind is CovariateKind.SIGN_SPREAD_PRODUCT:
                x[j] = last_sign * spread_sign
            elif c.lag == 0:
                x[j] = current[self.columns[j]]
            elif c.lag <= len(history):
                x[j] = history[c.lag - 1][self.columns[j]]
            else:
                x[j] = 0.0
        return x


@dataclass(frozen=True)
class SessionPaths:
    """Grid values of the imbalance paths and of the spread over a session."""
    imbalances: np.ndarray
    spread: np.ndarray
    grid_step: float

    def cell_of(self, t: np.ndarray) -> np.ndarray:
        n = self.spread.shape[0]
        return np.minimum((np.asarray(t) // self.grid_step).astype(np.int64),
                          n - 1)

    def at(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(imbalances, spread) at times t, piecewise constant."""
        cells = self.cell_of(t)
        return self.imbalances[cells], self.spread[cells]


def simulate_paths(dynamics: OUPaths, layout: PathLayout, n_cells: int,
                   grid_step: float, rng: np.random.Generator) \
        -> SessionPaths:
    """OU imbalance paths, clamped to [-1, 1], and a spread path."""
    imbalances = np.empty((n_cells, layout.n_paths), dtype=np.float64)
    for p, label in enumerate(layout.labels):
        law: OUParams = dynamics.per_covariate.get(label, dynamics.imbalance)
        imbalances[:, p] = ou_grid(law.mean, law.reversion, law.vol,
                                   grid_step, n_cells, rng)
    np.clip(imbalances, -1.0, 1.0, out=imbalances)
    s = dynamics.spread
    spread = ou_grid(s.mean, s.reversion, s.vol, grid_step, n_cells, rng)
    return SessionPaths(imbalances=imbalances, spread=spread,
                        grid_step=grid_step)
