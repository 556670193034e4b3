from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Deque, List, Optional, Tuple, Union

import numpy as np
import orjson
from tqdm import tqdm

from ..book.events import EventColumns, Kind, OrderEvent, Side
from ..book.state import BookState
from ..errors import EnvelopeViolation
from ..estimation.ratio import ratio_pair
from ..features.covariates import FeatureStream
from ..features.descriptors import ModelSpec
from ..log import logger
from .baseline import make_baseline
from .config import BookDriven, OUPaths, SimConfig
from .paths import PathLayout, simulate_paths
from .rng import EVENT_STREAM, PATH_STREAM, make_rng


NS_PER_SECOND = 1_000_000_000
LADDER_LEVELS = 10

# (timestamp_ns, kind, side, price, quantity)
Row = Tuple[int, Kind, Side, int, int]


@dataclass
class GroundTruth:
    """
    The simulator's view of every market order.

    Attributes:
        session_id (np.ndarray): Session of each market order.
        timestamp (np.ndarray): Nanoseconds since session open.
        event_index (np.ndarray): Position in the emitted event stream.
        side (np.ndarray): Side codes, 0 for MA.
        X (np.ndarray): True covariates at t-, shape (n, d). Lags before the
            session's first market orders read as 0.
        r_ma (np.ndarray): True probability of an ask-side market order.
    """
    session_id: np.ndarray
    timestamp: np.ndarray
    event_index: np.ndarray
    side: np.ndarray
    X: np.ndarray
    r_ma: np.ndarray

    def __len__(self) -> int:
        return int(self.r_ma.shape[0])

    @classmethod
    def concat(cls, parts: List["GroundTruth"], d: int) -> "GroundTruth":
        if len(parts) == 0:
            i64 = np.zeros(0, dtype=np.int64)
            return cls(i64, i64, i64, np.zeros(0, dtype=np.int8),
                       np.zeros((0, d)), np.zeros(0))
        return cls(*[np.concatenate([getattr(p, f) for p in parts])
                     for f in ("session_id", "timestamp", "event_index",
                               "side", "X", "r_ma")])


@dataclass
class SimulatedSession:
    session_id: int
    events: EventColumns
    truth: GroundTruth


def envelope_factor(vartheta_ma: np.ndarray, vartheta_mb: np.ndarray) \
        -> float:
    """
    Bound of exp(vartheta^MA . x) + exp(vartheta^MB . x) over |x_j| <= 1,
    which holds for every covariate kind.
    """
    return float(np.exp(np.abs(vartheta_ma).sum())
                 + np.exp(np.abs(vartheta_mb).sum()))


def bayes_accuracy(r_ma: np.ndarray) -> float:
    """E[max(r^MA, r^MB)], the accuracy of the classifier knowing theta*."""
    r_ma = np.asarray(r_ma, dtype=np.float64)
    if r_ma.shape[0] == 0:
        raise ValueError("No market orders.")
    return float(np.mean(np.maximum(r_ma, 1.0 - r_ma)))


'''DRIVERS'''


class SessionDriver(ABC):
    """
    Covariate source of one session and producer of its non-market-order
    events.
    """
    book_rate: float = 0.0

    @abstractmethod
    def open(self) -> List[Row]:
        pass

    @abstractmethod
    def features(self, t: float) -> np.ndarray:
        pass

    @abstractmethod
    def on_market_order(self, ts: int, side: Side,
                        rng: np.random.Generator) -> List[Row]:
        pass

    def on_book_event(self, ts: int, rng: np.random.Generator) -> List[Row]:
        return []


def _static_ladder(start_price: int, depth: int) -> List[Row]:
    rows = []
    for k in range(LADDER_LEVELS):
        rows.append((0, Kind.LIMIT_INSERT, Side.ASK, start_price + k, depth))
        rows.append((0, Kind.LIMIT_INSERT, Side.BID, start_price - 1 - k,
                     depth))
    return rows


class OUDriver(SessionDriver):
    """
    Covariates read from OU paths; the emitted book is a deep static ladder
    hit by unit market orders.
    """

    def __init__(self, spec: ModelSpec, dynamics: OUPaths, n_cells: int,
                 grid_step: float, spread_threshold: float,
                 rng: np.random.Generator, start_price: int = 10_000):
        self.layout = PathLayout.for_spec(spec)
        self.paths = simulate_paths(dynamics, self.layout, n_cells, grid_step,
                                    rng)
        self.spread_threshold = spread_threshold
        self.depth = dynamics.initial_depth
        self.start_price = start_price
        self.history: Deque[np.ndarray] = deque(maxlen=max(spec.max_lag, 1))
        self.last_sign = 0.0
        self._current = np.zeros(self.layout.n_paths)

    def open(self):
        return _static_ladder(self.start_price, self.depth)

    def features(self, t):
        current, spread = self.paths.at(t)
        self._current = current
        spread_sign = 1.0 if spread > self.spread_threshold else -1.0
        return self.layout.assemble(current, list(self.history),
                                    self.last_sign, spread_sign)

    def on_market_order(self, ts, side, rng):
        self.history.appendleft(self._current)
        self.last_sign = float(side.trade_sign)
        price = self.start_price if side is Side.ASK else self.start_price - 1
        return [(ts, Kind.MARKET_ORDER, side, price, 1)]


class BookDriver(SessionDriver):
    """
    Limit and cancel flows maintain a book; covariates are computed from it
    exactly as the feature pipeline does on the replayed stream.
    """

    def __init__(self, spec: ModelSpec, dynamics: BookDriven,
                 spread_threshold: float, session_id: int):
        self.dynamics = dynamics
        self.session_id = session_id
        self.book_rate = dynamics.limit_rate + dynamics.cancel_rate
        self.state = BookState()
        self.stream = FeatureStream(spec, spread_threshold=spread_threshold)
        self.stream.start_session(session_id)

    def _emit(self, ts: int, kind: Kind, side: Side, price: int,
              quantity: int) -> Row:
        self.state.apply(OrderEvent(self.session_id, ts, kind, side, price,
                                    quantity))
        return ts, kind, side, price, quantity

    def open(self):
        d = self.dynamics
        return [self._emit(*row) for row in
                _static_ladder(d.start_price, d.initial_depth)]

    def features(self, t):
        x = self.stream.features(self.state, strict=False)
        assert x is not None, "Book lost a side despite replenishment."
        return x

    def on_market_order(self, ts, side, rng):
        self.stream.record(self.state, side)
        levels = self.state.ask_levels() if side is Side.ASK \
            else self.state.bid_levels()
        price, resting = levels[0]
        quantity = min(int(rng.integers(1, self.dynamics.market_quantity + 1)),
                       resting)
        rows = [self._emit(ts, Kind.MARKET_ORDER, side, price, quantity)]
        return rows + self._replenish(ts, rng)

    def on_book_event(self, ts, rng):
        d = self.dynamics
        side = Side.ASK if rng.random() < 0.5 else Side.BID
        if rng.random() * self.book_rate < d.limit_rate:
            rows = [self._insert(ts, side, rng)]
        else:
            rows = self._cancel(ts, side, rng)
        return rows + self._replenish(ts, rng)

    def _insert(self, ts, side, rng) -> Row:
        d = self.dynamics
        best_bid, best_ask = self.state.best_bid(), self.state.best_ask()
        quantity = int(rng.integers(1, d.max_quantity + 1))
        if rng.random() < d.inside_fraction and best_ask - best_bid > 1:
            price = best_ask - 1 if side is Side.ASK else best_bid + 1
        else:
            k = int(rng.integers(0, d.levels))
            price = best_ask + k if side is Side.ASK else best_bid - k
        return self._emit(ts, Kind.LIMIT_INSERT, side, price, quantity)

    def _cancel(self, ts, side, rng) -> List[Row]:
        levels = self.state.ask_levels() if side is Side.ASK \
            else self.state.bid_levels()
        if len(levels) == 0:
            return []
        price, resting = levels[int(rng.integers(0, len(levels)))]
        quantity = int(rng.integers(1, resting + 1))
        return [self._emit(ts, Kind.CANCEL, side, price, quantity)]

    def _replenish(self, ts, rng) -> List[Row]:
        """Refill each side up to the configured number of levels."""
        d = self.dynamics
        rows = []
        for side in (Side.ASK, Side.BID):
            while True:
                levels = self.state.ask_levels() if side is Side.ASK \
                    else self.state.bid_levels()
                if len(levels) >= d.levels:
                    break
                quantity = int(rng.integers(1, d.max_quantity + 1))
                if side is Side.ASK:
                    if levels:
                        price = levels[-1][0] + 1
                    else:
                        bid = self.state.best_bid()
                        price = d.start_price if bid is None else bid + 1
                else:
                    if levels:
                        price = levels[-1][0] - 1
                    else:
                        ask = self.state.best_ask()
                        price = d.start_price - 1 if ask is None else ask - 1
                rows.append(self._emit(ts, Kind.LIMIT_INSERT, side, price,
                                       quantity))
        return rows


'''THINNING'''


def simulate_session(config: SimConfig, session: int,
                     replication: int = 0) -> SimulatedSession:
    """
    One session by thinning against a piecewise constant envelope.

    Within each grid cell, candidate points arrive at the envelope rate
    (plus the book-event rate in book-driven mode) and are handled in time
    order, so the last sign and lags seen by a candidate include every
    earlier accepted market order.

    Raises:
        EnvelopeViolation: If an intensity exceeds the envelope.
    """
    spec = config.spec
    rng_paths = make_rng(config.seed, replication, session, PATH_STREAM)
    rng = make_rng(config.seed, replication, session, EVENT_STREAM)
    baseline = make_baseline(config.baseline, config.session_length,
                             config.grid_step, rng_paths)
    dynamics = config.covariate_dynamics
    if isinstance(dynamics, BookDriven):
        driver: SessionDriver = BookDriver(spec, dynamics,
                                           config.spread_threshold, session)
    else:
        driver = OUDriver(spec, dynamics, baseline.n_cells, config.grid_step,
                          config.spread_threshold, rng_paths)
    ma, mb = config.varthetas(session)
    theta = ma - mb
    bound = envelope_factor(ma, mb)

    rows: List[Row] = list(driver.open())
    truth_rows = []
    cell_max = baseline.cell_max() * bound
    for cell in range(baseline.n_cells):
        lower, upper = baseline.cell_bounds(cell)
        envelope = float(cell_max[cell])
        total = envelope + driver.book_rate
        n = rng.poisson(total * (upper - lower))
        for t in np.sort(rng.uniform(lower, upper, n)):
            ts = int(t * NS_PER_SECOND)
            if rng.random() * total < driver.book_rate:
                rows.extend(driver.on_book_event(ts, rng))
                continue
            x = driver.features(t)
            intensity = float(baseline.rate(t)) * \
                (np.exp(ma @ x) + np.exp(mb @ x))
            if intensity > envelope * (1.0 + 1e-12):
                raise EnvelopeViolation(
                    f"Intensity {intensity} above envelope {envelope} at "
                    f"t={t} in session {session}."
                )
            if rng.random() * envelope >= intensity:
                continue
            r_ma = float(ratio_pair(theta @ x)[0])
            side = Side.ASK if rng.random() < r_ma else Side.BID
            truth_rows.append((ts, len(rows), side.code, x, r_ma))
            rows.extend(driver.on_market_order(ts, side, rng))

    events = EventColumns(
        session_id=np.full(len(rows), session, dtype=np.int64),
        timestamp=np.array([r[0] for r in rows], dtype=np.int64),
        kind=np.array([r[1].code for r in rows], dtype=np.int8),
        side=np.array([r[2].code for r in rows], dtype=np.int8),
        price=np.array([r[3] for r in rows], dtype=np.int64),
        quantity=np.array([r[4] for r in rows], dtype=np.int64),
    )
    n_mo = len(truth_rows)
    truth = GroundTruth(
        session_id=np.full(n_mo, session, dtype=np.int64),
        timestamp=np.array([r[0] for r in truth_rows], dtype=np.int64),
        event_index=np.array([r[1] for r in truth_rows], dtype=np.int64),
        side=np.array([r[2] for r in truth_rows], dtype=np.int8),
        X=np.array([r[3] for r in truth_rows]).reshape(n_mo, spec.dimension),
        r_ma=np.array([r[4] for r in truth_rows], dtype=np.float64),
    )
    logger.debug(f"Session {session}: {len(rows)} events, {n_mo} market "
                 "orders.")
    return SimulatedSession(session_id=session, events=events, truth=truth)


def simulate(config: SimConfig, replication: int = 0,
             progress: bool = False) -> List[SimulatedSession]:
    """Every session of the configuration, reproducible from its seed."""
    return [
        simulate_session(config, k, replication)
        for k in tqdm(range(config.sessions), desc="sessions",
                      disable=not progress)
    ]


def combine(sessions: List[SimulatedSession], d: int) \
        -> Tuple[EventColumns, GroundTruth]:
    """One stream for all sessions, truth indices shifted to match it."""
    offsets = np.cumsum([0] + [len(s.events) for s in sessions])
    parts = []
    for s, offset in zip(sessions, offsets):
        t = s.truth
        parts.append(GroundTruth(t.session_id, t.timestamp,
                                 t.event_index + offset, t.side, t.X, t.r_ma))
    columns = EventColumns(*[
        np.concatenate([getattr(s.events, f) for s in sessions])
        if sessions else np.zeros(0, dtype=np.int64)
        for f in ("session_id", "timestamp", "kind", "side", "price",
                  "quantity")
    ])
    return columns, GroundTruth.concat(parts, d)


def write_ground_truth(truth: GroundTruth, path: Union[str, Path],
                       meta: Optional[Dict[str, Any]] = None):
    """NDJSON sidecar, one market order per line, after an optional
    `{"meta": ...}` first line.
    """
    with open(path, "wb") as f:
        if meta is not None:
            f.write(orjson.dumps({"meta": meta}, option=orjson.OPT_SORT_KEYS))
            f.write(b"\n")
        for i in range(len(truth)):
            f.write(orjson.dumps({
                "session_id": int(truth.session_id[i]),
                "ts": int(truth.timestamp[i]),
                "event_index": int(truth.event_index[i]),
                "side": "MA" if truth.side[i] == 0 else "MB",
                "x": truth.X[i].tolist(),
                "r_ma": float(truth.r_ma[i]),
            }))
            f.write(b"\n")
