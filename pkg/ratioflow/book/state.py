from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from sortedcontainers import SortedDict  # type: ignore

from ..errors import (
    CrossedBookError,
    EmptySideError,
    NegativeQuantityError,
    OutOfOrderError,
)
from .events import Kind, OrderEvent, Side


DEFAULT_DEPTH = 10


@dataclass(frozen=True)
class BookSnapshot:
    """
    Immutable top-of-book view: the first `levels` quantities per side.

    Index 0 holds the best level. Absent levels have quantity 0 and price -1.
    """
    timestamp: int
    bid_qty: np.ndarray
    ask_qty: np.ndarray
    bid_px: np.ndarray
    ask_px: np.ndarray

    @property
    def levels(self) -> int:
        return int(self.bid_qty.shape[0])

    def depth(self, side: Side, n: int) -> int:
        if n < 1:
            raise ValueError(f"Level index must be >= 1, got {n}.")
        qty = self.ask_qty if side is Side.ASK else self.bid_qty
        if n > qty.shape[0]:
            return 0
        return int(qty[n - 1])

    def has_both_sides(self) -> bool:
        return bool(self.bid_qty[0] > 0 and self.ask_qty[0] > 0)

    def spread(self) -> int:
        if not self.has_both_sides():
            raise EmptySideError("Spread undefined on a one-sided book.")
        return int(self.ask_px[0] - self.bid_px[0])


class BookState:
    """
    Aggregated limit order book: per-price resting quantities on both sides.

    Asks are kept ascending from the best ask, bids descending from the best
    bid, both in `SortedDict` ladders keyed by integer tick prices.

    Attributes:
        asks (SortedDict): price -> quantity, best ask first.
        bids (SortedDict): price -> quantity, best bid last.
        last_update (int): Timestamp of the last applied event.
        session_id (int | None): Session of the last applied event.
    """

    def __init__(self):
        self.asks: SortedDict = SortedDict()
        self.bids: SortedDict = SortedDict()
        self.last_update: int = 0
        self.session_id: Optional[int] = None

    def __repr__(self) -> str:
        return (
            f"BookState(bids={self.bid_levels()}, asks={self.ask_levels()}, "
            f"last_update={self.last_update})"
        )

    @classmethod
    def from_levels(
        cls,
        bids: Dict[int, int] = {},
        asks: Dict[int, int] = {},
        last_update: int = 0,
    ) -> "BookState":
        """Build a book directly from price -> quantity ladders."""
        state = cls()
        for px, qty in bids.items():
            if qty > 0:
                state.bids[int(px)] = int(qty)
        for px, qty in asks.items():
            if qty > 0:
                state.asks[int(px)] = int(qty)
        state.last_update = last_update
        state._check_uncrossed()
        return state

    def copy(self) -> "BookState":
        other = BookState()
        other.asks = self.asks.copy()
        other.bids = self.bids.copy()
        other.last_update = self.last_update
        other.session_id = self.session_id
        return other

    def reset(self):
        self.asks.clear()
        self.bids.clear()
        self.last_update = 0
        self.session_id = None

    '''LADDERS'''

    def ask_levels(self) -> List[Tuple[int, int]]:
        return list(self.asks.items())

    def bid_levels(self) -> List[Tuple[int, int]]:
        return list(reversed(self.bids.items()))

    def best_ask(self) -> Optional[int]:
        return self.asks.peekitem(0)[0] if self.asks else None

    def best_bid(self) -> Optional[int]:
        return self.bids.peekitem(-1)[0] if self.bids else None

    def depth(self, side: Side, n: int) -> int:
        """
        Quantity resting at the n-th best level of one side.

        Args:
            side (Side): Book side.
            n (int): Level index, 1 for the best quote.

        Returns:
            int: The quantity, 0 when the side has fewer than n levels.
        """
        if n < 1:
            raise ValueError(f"Level index must be >= 1, got {n}.")
        if side is Side.ASK:
            if n > len(self.asks):
                return 0
            return self.asks.peekitem(n - 1)[1]
        if n > len(self.bids):
            return 0
        return self.bids.peekitem(-n)[1]

    def spread(self) -> int:
        """
        Best ask minus best bid, in ticks.

        Raises:
            EmptySideError: If either side of the book is empty.
        """
        if not self.asks or not self.bids:
            raise EmptySideError("Spread undefined on a one-sided book.")
        return self.asks.peekitem(0)[0] - self.bids.peekitem(-1)[0]

    def snapshot(self, levels: int = DEFAULT_DEPTH) -> BookSnapshot:
        """
        Copy the top `levels` of both ladders into an immutable snapshot.
        """
        bid_qty = np.zeros(levels, dtype=np.int64)
        ask_qty = np.zeros(levels, dtype=np.int64)
        bid_px = np.full(levels, -1, dtype=np.int64)
        ask_px = np.full(levels, -1, dtype=np.int64)
        for k, (px, qty) in enumerate(self.asks.items()[:levels]):
            ask_px[k] = px
            ask_qty[k] = qty
        n_bids = len(self.bids)
        for k in range(min(levels, n_bids)):
            px, qty = self.bids.peekitem(n_bids - 1 - k)
            bid_px[k] = px
            bid_qty[k] = qty
        return BookSnapshot(
            timestamp=self.last_update,
            bid_qty=bid_qty,
            ask_qty=ask_qty,
            bid_px=bid_px,
            ask_px=ask_px,
        )

    '''MUTATIONS'''

    def apply(self, ev: OrderEvent, event_index: Optional[int] = None):
        """
        Apply one event in place.

        Limit inserts add quantity at (side, price); cancels remove it;
        market orders consume the best levels of their side, walking deeper
        levels when the best one is exhausted. Empty levels are removed.
        Validation happens before any mutation, so a failing event leaves
        the book untouched.

        Args:
            ev (OrderEvent): The event to apply.
            event_index (int, optional): Stream position, for diagnostics.

        Raises:
            OutOfOrderError: If the event is older than the last update of the
                same session.
            NegativeQuantityError: If a cancel or a market order exceeds the
                resting quantity.
            CrossedBookError: If an insert would leave best bid >= best ask.
        """
        if self.session_id == ev.session_id and ev.timestamp < self.last_update:
            raise OutOfOrderError(
                f"Timestamp {ev.timestamp} precedes last update "
                f"{self.last_update}.",
                event_index=event_index, line=ev.line
            )
        ladder = self.asks if ev.side is Side.ASK else self.bids

        if ev.kind is Kind.LIMIT_INSERT:
            if ev.side is Side.ASK:
                best_bid = self.best_bid()
                crossed = best_bid is not None and ev.price <= best_bid
            else:
                best_ask = self.best_ask()
                crossed = best_ask is not None and ev.price >= best_ask
            if crossed:
                raise CrossedBookError(
                    f"Insert {ev.side.value}@{ev.price} crosses the book.",
                    event_index=event_index, line=ev.line
                )
            ladder[ev.price] = ladder.get(ev.price, 0) + ev.quantity

        elif ev.kind is Kind.CANCEL:
            resting = ladder.get(ev.price, 0)
            if ev.quantity > resting:
                raise NegativeQuantityError(
                    f"Cancel of {ev.quantity} exceeds resting {resting} "
                    f"at {ev.side.value}@{ev.price}.",
                    event_index=event_index, line=ev.line
                )
            if ev.quantity == resting:
                del ladder[ev.price]
            else:
                ladder[ev.price] = resting - ev.quantity

        else:
            available = sum(ladder.values())
            if ev.quantity > available:
                raise NegativeQuantityError(
                    f"Market order of {ev.quantity} exceeds {available} "
                    f"resting on side {ev.side.value}.",
                    event_index=event_index, line=ev.line
                )
            remaining = ev.quantity
            while remaining > 0:
                idx = 0 if ev.side is Side.ASK else -1
                px, qty = ladder.peekitem(idx)
                if qty <= remaining:
                    remaining -= qty
                    del ladder[px]
                else:
                    ladder[px] = qty - remaining
                    remaining = 0

        self.last_update = ev.timestamp
        self.session_id = ev.session_id

    def _check_uncrossed(self):
        if self.asks and self.bids and self.best_bid() >= self.best_ask():
            raise CrossedBookError(
                f"Best bid {self.best_bid()} >= best ask {self.best_ask()}."
            )


def apply_event(
    state: BookState,
    ev: OrderEvent,
    event_index: Optional[int] = None
) -> BookState:
    """
    Apply `ev` to `state` and return the (mutated) state.
    """
    state.apply(ev, event_index=event_index)
    return state


def depth(state: BookState, side: Side, n: int) -> int:
    return state.depth(side, n)


def spread(state: BookState) -> int:
    return state.spread()
