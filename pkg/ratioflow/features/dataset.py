from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd

from ..book.events import Side
from ..book.replay import DepthPanel, Emission
from ..log import logger
from .covariates import FeatureVector, imbalance_arrays
from .descriptors import CovariateKind, ModelSpec


MA_CODE = 0  # side code of ask-side market orders


@dataclass(frozen=True)
class MarketOrderSample:
    """One labeled observation: the side and the covariates at t-."""
    side: Side
    timestamp: int
    session_id: int
    features: FeatureVector


@dataclass
class Dataset:
    """
    Samples of one model, in stream order.

    Attributes:
        spec (ModelSpec): The model the features belong to.
        X (np.ndarray): Features, shape (N, d).
        is_ma (np.ndarray): 1 for ask-side (MA) market orders, shape (N,).
        session_id (np.ndarray): Session of each sample.
        timestamp (np.ndarray): Timestamp of each sample.
        event_index (np.ndarray): Position in the replayed stream.
        prev_side (np.ndarray): Side code of the previous market order of
            the same session, -1 for the first one.
        n_sessions (int): T, the number of sessions the data cover.
        spread_mean (float): Spread threshold used by eps*s.
        skipped (dict): Number of excluded market orders by reason.
    """
    spec: ModelSpec
    X: np.ndarray
    is_ma: np.ndarray
    session_id: np.ndarray
    timestamp: np.ndarray
    event_index: np.ndarray
    prev_side: np.ndarray
    n_sessions: int
    spread_mean: float = float("nan")
    skipped: Dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.X.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.X.shape[1])

    @property
    def n_ma(self) -> int:
        return int(self.is_ma.sum())

    def sample(self, i: int) -> MarketOrderSample:
        return MarketOrderSample(
            side=Side.ASK if self.is_ma[i] else Side.BID,
            timestamp=int(self.timestamp[i]),
            session_id=int(self.session_id[i]),
            features=self.X[i],
        )

    def samples(self) -> List[MarketOrderSample]:
        return [self.sample(i) for i in range(len(self))]

    def take(self, index: np.ndarray) -> "Dataset":
        """Sub-dataset over the given rows, T unchanged."""
        return Dataset(
            spec=self.spec,
            X=self.X[index],
            is_ma=self.is_ma[index],
            session_id=self.session_id[index],
            timestamp=self.timestamp[index],
            event_index=self.event_index[index],
            prev_side=self.prev_side[index],
            n_sessions=self.n_sessions,
            spread_mean=self.spread_mean,
            skipped=dict(self.skipped),
        )

    @classmethod
    def from_arrays(
        cls,
        spec: ModelSpec,
        X: np.ndarray,
        is_ma: np.ndarray,
        session_id: Optional[np.ndarray] = None,
        n_sessions: Optional[int] = None,
    ) -> "Dataset":
        """Wrap raw feature/label arrays, e.g. label-only simulations."""
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        if session_id is None:
            session_id = np.zeros(n, dtype=np.int64)
        session_id = np.asarray(session_id, dtype=np.int64)
        if n_sessions is None:
            n_sessions = int(np.unique(session_id).shape[0])
        return cls(
            spec=spec,
            X=X,
            is_ma=np.asarray(is_ma, dtype=np.int8),
            session_id=session_id,
            timestamp=np.arange(n, dtype=np.int64),
            event_index=np.arange(n, dtype=np.int64),
            prev_side=np.full(n, -1, dtype=np.int8),
            n_sessions=n_sessions,
        )


def session_positions(session_id: np.ndarray) -> np.ndarray:
    """
    Rank of each row inside its (contiguous) session: 0, 1, 2, ...
    """
    n = session_id.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    starts = np.flatnonzero(
        np.concatenate([[True], session_id[1:] != session_id[:-1]])
    )
    lengths = np.diff(np.concatenate([starts, [n]]))
    return np.arange(n, dtype=np.int64) - np.repeat(starts, lengths)


def _shift(values: np.ndarray, m: int) -> np.ndarray:
    """Rows moved m positions down; the first m rows are zero."""
    out = np.zeros_like(values)
    if m < values.shape[0]:
        out[m:] = values[:-m] if m > 0 else values
    return out


def feature_matrix(
    spec: ModelSpec,
    panel: DepthPanel,
    spread_mean: float,
) -> np.ndarray:
    """
    Covariates of every market order of a panel, including rows that lack
    history (their lag and sign entries are 0 placeholders).

    Args:
        spec (ModelSpec): The model.
        panel (DepthPanel): Pre-event depth, one row per market order.
        spread_mean (float): Threshold of the sign/spread covariate.

    Returns:
        np.ndarray: Shape (len(panel), d).
    """
    n = len(panel)
    bid = panel.bid_qty.astype(np.float64)
    ask = panel.ask_qty.astype(np.float64)
    imb = imbalance_arrays(bid, ask)
    imb_cum = imbalance_arrays(np.cumsum(bid, axis=1), np.cumsum(ask, axis=1))
    pos = session_positions(panel.session_id)

    sign = np.where(panel.side == MA_CODE, -1.0, 1.0)
    last_sign = _shift(sign, 1)
    last_sign[pos < 1] = 0.0

    X = np.empty((n, spec.dimension), dtype=np.float64)
    for j, c in enumerate(spec.covariates):
        if c.kind is CovariateKind.CONSTANT:
            X[:, j] = 1.0
        elif c.kind is CovariateKind.IMB:
            X[:, j] = imb[:, c.n - 1]
        elif c.kind is CovariateKind.IMB_CUM:
            X[:, j] = imb_cum[:, c.n - 1]
        elif c.kind is CovariateKind.LAST_SIGN:
            X[:, j] = last_sign
        elif c.kind is CovariateKind.SIGN_SPREAD_PRODUCT:
            s = np.where(panel.spread() > spread_mean, 1.0, -1.0)
            X[:, j] = last_sign * s
        else:
            source = imb if c.kind is CovariateKind.LAG_IMB else imb_cum
            lagged = _shift(source[:, c.n - 1], c.m)
            lagged[pos < c.m] = 0.0
            X[:, j] = lagged
    return X


def spread_mean_of(panel: DepthPanel) -> float:
    """Mean spread over the market-order arrivals of a panel, NaN if none."""
    spread = panel.spread()
    defined = ~np.isnan(spread)
    if not defined.any():
        return float("nan")
    return float(spread[defined].mean())


def build_dataset(
    spec: ModelSpec,
    emissions: Union[DepthPanel, Iterable[Emission]],
    spread_mean: Optional[float] = None,
    n_sessions: Optional[int] = None,
    min_history: int = 0,
) -> Dataset:
    """
    Pair every market order with its pre-event covariates.

    Market orders lacking the history the model needs (lags, last sign) are
    skipped, as are those needing a spread on a one-sided book; skips are
    counted by reason in `Dataset.skipped`.

    Args:
        spec (ModelSpec): The model.
        emissions: A DepthPanel or the output of `replay`, whole sessions.
        spread_mean (float, optional): Frozen spread threshold. Defaults to
            the mean spread over the market orders of `emissions`, which
            makes this dataset the calibration window.
        n_sessions (int, optional): T. Defaults to the number of distinct
            sessions in `emissions`.
        min_history (int, optional): Extra minimum session position, used
            to share an evaluable mask between models. Defaults to 0.

    Returns:
        Dataset: The samples, in stream order.
    """
    panel = emissions if isinstance(emissions, DepthPanel) \
        else DepthPanel.from_emissions(emissions)
    if spread_mean is None:
        spread_mean = spread_mean_of(panel)
    if n_sessions is None:
        n_sessions = int(panel.sessions().shape[0])

    pos = session_positions(panel.session_id)
    need = max(spec.required_history, min_history)
    has_history = pos >= need
    if spec.uses_spread:
        has_spread = ~np.isnan(panel.spread())
        if np.isnan(spread_mean):
            has_spread[:] = False
    else:
        has_spread = np.ones(len(panel), dtype=bool)
    keep = has_history & has_spread
    skipped = {
        "insufficient_history": int((~has_history).sum()),
        "empty_side": int((has_history & ~has_spread).sum()),
    }

    X = feature_matrix(spec, panel, spread_mean)
    prev_side = np.full(len(panel), -1, dtype=np.int8)
    prev_side[1:] = panel.side[:-1]
    prev_side[pos < 1] = -1

    dataset = Dataset(
        spec=spec,
        X=X[keep],
        is_ma=(panel.side[keep] == MA_CODE).astype(np.int8),
        session_id=panel.session_id[keep],
        timestamp=panel.timestamp[keep],
        event_index=panel.event_index[keep],
        prev_side=prev_side[keep],
        n_sessions=n_sessions,
        spread_mean=float(spread_mean),
        skipped=skipped,
    )
    logger.debug(
        f"{spec.name}: {len(dataset)} samples over {n_sessions} sessions, "
        f"skipped {skipped}."
    )
    return dataset


def export_dataset(dataset: Dataset, path: Union[str, Path]):
    """
    Write the feature matrix for external cross-checks.

    ".npz" gives a NumPy archive, anything else a CSV with columns
    side,session_id,timestamp_ns,x_0..x_{d-1}.
    """
    path = Path(path)
    sides = np.where(dataset.is_ma == 1, "MA", "MB")
    if path.suffix == ".npz":
        np.savez(
            path, X=dataset.X, side=sides, session_id=dataset.session_id,
            timestamp_ns=dataset.timestamp,
            labels=np.array(dataset.spec.labels),
        )
        return
    df = pd.DataFrame(
        dataset.X, columns=[f"x_{j}" for j in range(dataset.dimension)]
    )
    df.insert(0, "timestamp_ns", dataset.timestamp)
    df.insert(0, "session_id", dataset.session_id)
    df.insert(0, "side", sides)
    df.to_csv(path, index=False, float_format="%.17g")


