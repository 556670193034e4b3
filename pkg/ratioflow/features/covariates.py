from collections import deque
from typing import Deque, Optional, Protocol, Tuple

import numpy as np

from ..book.events import Side
from ..errors import EmptySideError, InsufficientHistoryError
from .descriptors import MAX_LAG, MAX_LEVEL, CovariateKind, ModelSpec


# The FeatureVector of a model: float64 array of length d, aligned to the
# ModelSpec covariate order, constant first.
FeatureVector = np.ndarray


class DepthView(Protocol):
    """Anything exposing per-level depth: BookState or BookSnapshot."""

    def depth(self, side: Side, n: int) -> int: ...

    def spread(self) -> int: ...


def imbalance(q_bid: float, q_ask: float) -> float:
    """
    Imbalance (q_bid - q_ask) / (q_bid + q_ask), 0 when both are empty.

    Close to +1 when the ask side is thin.
    """
    total = q_bid + q_ask
    if total <= 0:
        return 0.0
    return (q_bid - q_ask) / total


def cumulative_imbalance(state: DepthView, n: int) -> float:
    """Imbalance of the depth summed over levels 1..n of each side."""
    if n < 1:
        raise ValueError(f"Level must be >= 1, got {n}.")
    q_bid = sum(state.depth(Side.BID, k) for k in range(1, n + 1))
    q_ask = sum(state.depth(Side.ASK, k) for k in range(1, n + 1))
    return imbalance(q_bid, q_ask)


def sign_spread_product(eps: int, current_spread: float, mean_spread: float) \
        -> int:
    """
    eps * s, with s = +1 when the spread is strictly larger than its mean
    and -1 otherwise.
    """
    s = 1 if current_spread > mean_spread else -1
    return int(eps) * s


def imbalance_profile(state: DepthView, levels: int = MAX_LEVEL) \
        -> Tuple[np.ndarray, np.ndarray]:
    """Level and cumulative imbalances i_1..i_levels, ibar_1..ibar_levels."""
    q_bid = np.array([state.depth(Side.BID, k) for k in range(1, levels + 1)],
                     dtype=np.float64)
    q_ask = np.array([state.depth(Side.ASK, k) for k in range(1, levels + 1)],
                     dtype=np.float64)
    return imbalance_arrays(q_bid, q_ask), \
        imbalance_arrays(np.cumsum(q_bid), np.cumsum(q_ask))


def imbalance_arrays(q_bid: np.ndarray, q_ask: np.ndarray) -> np.ndarray:
    """Vectorized `imbalance`, elementwise over equally shaped arrays."""
    q_bid = np.asarray(q_bid, dtype=np.float64)
    q_ask = np.asarray(q_ask, dtype=np.float64)
    total = q_bid + q_ask
    out = np.zeros(np.broadcast(q_bid, q_ask).shape, dtype=np.float64)
    np.divide(q_bid - q_ask, total, out=out, where=total > 0)
    return out


class LagBuffer:
    """
    Market-order-time history of one session.

    Holds the imbalance profiles of the last `depth` market orders (most
    recent first), the sign of the last trade and running spread statistics
    over market-order arrivals.

    Attributes:
        depth (int): Number of past profiles kept.
        last_sign (int): Last trade sign, 0 before the first trade.
        count (int): Market orders recorded since the last reset.
        spread_threshold (float | None): Frozen spread mean used by the
            sign/spread covariate. When None, the running mean is used.
    """

    def __init__(self, depth: int = MAX_LAG,
                 spread_threshold: Optional[float] = None):
        self.depth = depth
        self.spread_threshold = spread_threshold
        self._ring: Deque[Tuple[np.ndarray, np.ndarray]] = deque(maxlen=depth)
        self.last_sign = 0
        self.count = 0
        self.spread_sum = 0.0
        self.spread_count = 0

    @classmethod
    def for_spec(cls, spec: ModelSpec,
                 spread_threshold: Optional[float] = None) -> "LagBuffer":
        return cls(depth=spec.max_lag, spread_threshold=spread_threshold)

    def __len__(self) -> int:
        return len(self._ring)

    def reset(self):
        """Forget the session's history. Frozen threshold is kept."""
        self._ring.clear()
        self.last_sign = 0
        self.count = 0
        self.spread_sum = 0.0
        self.spread_count = 0

    def record(self, state: DepthView, side: Side,
               spread: Optional[float] = None):
        """
        Push the pre-event book of a market order and its side.

        Args:
            state: The book strictly before the market order.
            side (Side): The side of the market order.
            spread (float, optional): Spread at the arrival, when defined.
        """
        if self.depth > 0:
            self._ring.appendleft(imbalance_profile(state))
        self.last_sign = side.trade_sign
        self.count += 1
        if spread is not None:
            self.spread_sum += spread
            self.spread_count += 1

    def lagged(self, m: int) -> Tuple[np.ndarray, np.ndarray]:
        """Imbalance profiles of the market order m arrivals back."""
        if m < 1 or m > len(self._ring):
            raise InsufficientHistoryError(
                f"Lag {m} requested with {len(self._ring)} past orders."
            )
        return self._ring[m - 1]

    @property
    def spread_mean(self) -> Optional[float]:
        if self.spread_threshold is not None:
            return self.spread_threshold
        if self.spread_count == 0:
            return None
        return self.spread_sum / self.spread_count


def compute_features(
    spec: ModelSpec,
    state: DepthView,
    lags: LagBuffer,
    mean_spread: Optional[float] = None,
    strict: bool = True,
) -> FeatureVector:
    """
    Covariate vector X(t-) of one market order, in spec order.

    Args:
        spec (ModelSpec): The model.
        state: Book strictly before the market order.
        lags (LagBuffer): History of the current session, not yet holding
            the market order being described.
        mean_spread (float, optional): Spread threshold. Defaults to the
            buffer's frozen or running mean.
        strict (bool, optional): When False, lags reaching before the
            session start read as 0 instead of raising. Defaults to True.

    Returns:
        FeatureVector: Values aligned with `spec.covariates`.

    Raises:
        InsufficientHistoryError: If the session has fewer past market
            orders than the model's lags or last sign need.
        EmptySideError: If the spread is required on a one-sided book.
    """
    if strict and lags.count < spec.required_history:
        raise InsufficientHistoryError(
            f"{spec.name} needs {spec.required_history} past market orders, "
            f"session has {lags.count}."
        )
    imb, imb_cum = imbalance_profile(state)
    values = np.empty(spec.dimension, dtype=np.float64)
    for j, c in enumerate(spec.covariates):
        if c.kind is CovariateKind.CONSTANT:
            values[j] = 1.0
        elif c.kind is CovariateKind.IMB:
            values[j] = imb[c.n - 1]
        elif c.kind is CovariateKind.IMB_CUM:
            values[j] = imb_cum[c.n - 1]
        elif c.kind is CovariateKind.LAST_SIGN:
            values[j] = lags.last_sign
        elif c.kind is CovariateKind.SIGN_SPREAD_PRODUCT:
            threshold = mean_spread if mean_spread is not None \
                else lags.spread_mean
            if threshold is None:
                raise InsufficientHistoryError(
                    "No spread mean available for the sign/spread covariate."
                )
            values[j] = sign_spread_product(
                lags.last_sign, state.spread(), threshold
            )
        else:
            if not strict and c.m > len(lags):
                values[j] = 0.0
                continue
            lag_imb, lag_cum = lags.lagged(c.m)
            if c.kind is CovariateKind.LAG_IMB:
                values[j] = lag_imb[c.n - 1]
            else:
                values[j] = lag_cum[c.n - 1]
    return values


class FeatureStream:
    """
    Incremental feature computation over a replayed stream.

    Sees events strictly in order and uses nothing but the past: the
    reference path for look-ahead audits and the book-driven simulator.
    """

    def __init__(self, spec: ModelSpec, spread_threshold: Optional[float]):
        self.spec = spec
        self.lags = LagBuffer.for_spec(spec, spread_threshold=spread_threshold)
        self.session_id: Optional[int] = None

    def start_session(self, session_id: int):
        if session_id != self.session_id:
            self.lags.reset()
            self.session_id = session_id

    def features(self, state: DepthView, strict: bool = True) \
            -> Optional[FeatureVector]:
        """Features at the next market order, None when it must be skipped."""
        try:
            return compute_features(self.spec, state, self.lags,
                                    strict=strict)
        except (InsufficientHistoryError, EmptySideError):
            return None

    def record(self, state: DepthView, side: Side):
        try:
            spread: Optional[float] = float(state.spread())
        except EmptySideError:
            spread = None
        self.lags.record(state, side, spread=spread)
