from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Sequence

import numpy as np

from ..config import SessionClock
from .events import Kind, OrderEvent, Side, SIDE_CODES, SIDE_FROM_CODE
from .state import DEFAULT_DEPTH, BookSnapshot, BookState


@dataclass(frozen=True)
class MarketOrderArrival:
    """One market order, located in the replayed stream."""
    event_index: int
    session_id: int
    timestamp: int
    side: Side
    quantity: int


@dataclass(frozen=True)
class Emission:
    """A market order together with the book as of the instant before it."""
    arrival: MarketOrderArrival
    book: BookSnapshot


def replay(
    events: Iterable[OrderEvent],
    clock: Optional[SessionClock] = None,
    levels: int = DEFAULT_DEPTH,
) -> Iterator[Emission]:
    """
    Replay an event stream and emit the pre-event book at each market order.

    The book is rebuilt from scratch for every session. Every event updates
    the book, but only market orders inside the session clock window are
    emitted. Single pass, memory bounded by the book size.

    Args:
        events (Iterable[OrderEvent]): Events sorted by (session_id,
            timestamp), equal timestamps in feed order.
        clock (SessionClock, optional): Continuous-trading window applied to
            every session. Defaults to the whole session.
        levels (int, optional): Depth kept in snapshots. Defaults to 10.

    Yields:
        Emission: One per market order inside the window.

    Raises:
        BookError: From `BookState.apply`, with the event index attached.
    """
    clock = clock if clock is not None else SessionClock()
    state = BookState()
    current_session = None
    for index, ev in enumerate(events):
        if ev.session_id != current_session:
            state.reset()
            current_session = ev.session_id
        if ev.kind is Kind.MARKET_ORDER and clock.contains(ev.timestamp):
            snapshot = state.snapshot(levels)
            state.apply(ev, event_index=index)
            yield Emission(
                arrival=MarketOrderArrival(
                    event_index=index,
                    session_id=ev.session_id,
                    timestamp=ev.timestamp,
                    side=ev.side,
                    quantity=ev.quantity,
                ),
                book=snapshot,
            )
        else:
            state.apply(ev, event_index=index)


@dataclass(frozen=True)
class DepthPanel:
    """
    Pre-event top-of-book for a sequence of market orders, in columns.

    Row r describes the r-th emitted market order. Quantities of absent
    levels are 0 and absent best prices are -1.

    Attributes:
        event_index (np.ndarray): Stream positions, shape (N,).
        session_id (np.ndarray): Sessions, shape (N,).
        timestamp (np.ndarray): Timestamps, shape (N,).
        side (np.ndarray): Side codes (0 ask / MA, 1 bid / MB), shape (N,).
        bid_qty (np.ndarray): Bid quantities by level, shape (N, levels).
        ask_qty (np.ndarray): Ask quantities by level, shape (N, levels).
        best_bid (np.ndarray): Best bid price, shape (N,).
        best_ask (np.ndarray): Best ask price, shape (N,).
    """
    event_index: np.ndarray
    session_id: np.ndarray
    timestamp: np.ndarray
    side: np.ndarray
    bid_qty: np.ndarray
    ask_qty: np.ndarray
    best_bid: np.ndarray
    best_ask: np.ndarray

    def __len__(self) -> int:
        return int(self.session_id.shape[0])

    @property
    def levels(self) -> int:
        return int(self.bid_qty.shape[1])

    @classmethod
    def empty(cls, levels: int = DEFAULT_DEPTH) -> "DepthPanel":
        i64 = np.zeros(0, dtype=np.int64)
        return cls(
            event_index=i64, session_id=i64, timestamp=i64,
            side=np.zeros(0, dtype=np.int8),
            bid_qty=np.zeros((0, levels), dtype=np.int64),
            ask_qty=np.zeros((0, levels), dtype=np.int64),
            best_bid=i64, best_ask=i64,
        )

    @classmethod
    def from_emissions(
        cls,
        emissions: Iterable[Emission],
        levels: int = DEFAULT_DEPTH
    ) -> "DepthPanel":
        rows: List[Emission] = list(emissions)
        if len(rows) == 0:
            return cls.empty(levels)
        levels = rows[0].book.levels
        return cls(
            event_index=np.array([e.arrival.event_index for e in rows],
                                 dtype=np.int64),
            session_id=np.array([e.arrival.session_id for e in rows],
                                dtype=np.int64),
            timestamp=np.array([e.arrival.timestamp for e in rows],
                               dtype=np.int64),
            side=np.array([SIDE_CODES[e.arrival.side] for e in rows],
                          dtype=np.int8),
            bid_qty=np.stack([e.book.bid_qty for e in rows]),
            ask_qty=np.stack([e.book.ask_qty for e in rows]),
            best_bid=np.array([e.book.bid_px[0] for e in rows],
                              dtype=np.int64),
            best_ask=np.array([e.book.ask_px[0] for e in rows],
                              dtype=np.int64),
        )

    def two_sided(self) -> np.ndarray:
        return (self.bid_qty[:, 0] > 0) & (self.ask_qty[:, 0] > 0)

    def spread(self) -> np.ndarray:
        """Spread in ticks as floats; NaN where the book is one-sided."""
        out = (self.best_ask - self.best_bid).astype(np.float64)
        out[~self.two_sided()] = np.nan
        return out

    def sessions(self) -> np.ndarray:
        return np.unique(self.session_id)

    def take(self, mask_or_index: np.ndarray) -> "DepthPanel":
        return DepthPanel(
            event_index=self.event_index[mask_or_index],
            session_id=self.session_id[mask_or_index],
            timestamp=self.timestamp[mask_or_index],
            side=self.side[mask_or_index],
            bid_qty=self.bid_qty[mask_or_index],
            ask_qty=self.ask_qty[mask_or_index],
            best_bid=self.best_bid[mask_or_index],
            best_ask=self.best_ask[mask_or_index],
        )

    def select_sessions(self, session_ids: Sequence[int]) -> "DepthPanel":
        return self.take(np.isin(self.session_id, np.asarray(session_ids)))

    def snapshot(self, row: int) -> BookSnapshot:
        """Rebuild the best-price-only snapshot of one row."""
        bid_px = np.full(self.levels, -1, dtype=np.int64)
        ask_px = np.full(self.levels, -1, dtype=np.int64)
        bid_px[0] = self.best_bid[row]
        ask_px[0] = self.best_ask[row]
        return BookSnapshot(
            timestamp=int(self.timestamp[row]),
            bid_qty=self.bid_qty[row].copy(),
            ask_qty=self.ask_qty[row].copy(),
            bid_px=bid_px,
            ask_px=ask_px,
        )

    def side_of(self, row: int) -> Side:
        return SIDE_FROM_CODE[int(self.side[row])]
