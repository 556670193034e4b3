"""
Columnar replay on dense per-tick ladders.

Same semantics as `replay`, compiled with numba for the ingestion path.
"""

from typing import Optional

import numpy as np
from numba import njit  # type: ignore

from ..config import SessionClock
from ..errors import CrossedBookError, NegativeQuantityError, OutOfOrderError
from ..log import logger
from .events import EventColumns, Kind, OrderEvent
from .replay import DepthPanel, replay
from .state import DEFAULT_DEPTH


# Widest price range (in ticks) handled by the dense kernel.
MAX_DENSE_WIDTH = 20_000_000

_OK = 0
_CROSSED = 1
_NEGATIVE = 2
_OUT_OF_ORDER = 3


@njit(cache=True)
def _collect(book, best, lo, hi, step, levels, out_qty, out_px, row, pmin):
    j = best
    k = 0
    while k < levels and lo <= j <= hi:
        if book[j] > 0:
            out_qty[row, k] = book[j]
            out_px[row, k] = j + pmin
            k += 1
        j += step


@njit(cache=True)
def _next_ask(book, j, hi, width):
    while j <= hi and book[j] == 0:
        j += 1
    return j if j <= hi else width


@njit(cache=True)
def _next_bid(book, j, lo):
    while j >= lo and book[j] == 0:
        j -= 1
    return j if j >= lo else -1


@njit(cache=True)
def _replay_kernel(
    session, ts, kind, side, price, qty, pmin, width, levels,
    open_ns, close_ns, out_index, out_bid_q, out_ask_q, out_bid_px,
    out_ask_px
):
    bids = np.zeros(width, dtype=np.int64)
    asks = np.zeros(width, dtype=np.int64)
    best_bid = -1
    best_ask = width
    lo = width
    hi = -1
    n_out = 0
    n = session.shape[0]
    for i in range(n):
        if i > 0 and session[i] != session[i - 1]:
            if hi >= lo:
                bids[lo:hi + 1] = 0
                asks[lo:hi + 1] = 0
            best_bid = -1
            best_ask = width
            lo = width
            hi = -1
        elif i > 0 and ts[i] < ts[i - 1]:
            return n_out, _OUT_OF_ORDER, i
        q = qty[i]
        if kind[i] == 0:
            p = price[i] - pmin
            if side[i] == 0:
                if best_bid >= 0 and p <= best_bid:
                    return n_out, _CROSSED, i
                asks[p] += q
                if p < best_ask:
                    best_ask = p
            else:
                if best_ask < width and p >= best_ask:
                    return n_out, _CROSSED, i
                bids[p] += q
                if p > best_bid:
                    best_bid = p
            if p < lo:
                lo = p
            if p > hi:
                hi = p
        elif kind[i] == 1:
            p = price[i] - pmin
            if side[i] == 0:
                if p < 0 or p >= width or asks[p] < q:
                    return n_out, _NEGATIVE, i
                asks[p] -= q
                if asks[p] == 0 and p == best_ask:
                    best_ask = _next_ask(asks, p + 1, hi, width)
            else:
                if p < 0 or p >= width or bids[p] < q:
                    return n_out, _NEGATIVE, i
                bids[p] -= q
                if bids[p] == 0 and p == best_bid:
                    best_bid = _next_bid(bids, p - 1, lo)
        else:
            if open_ns <= ts[i] <= close_ns:
                out_index[n_out] = i
                _collect(bids, best_bid, lo, hi, -1, levels, out_bid_q,
                         out_bid_px, n_out, pmin)
                _collect(asks, best_ask, lo, hi, 1, levels, out_ask_q,
                         out_ask_px, n_out, pmin)
                n_out += 1
            remaining = q
            if side[i] == 0:
                while remaining > 0:
                    if best_ask >= width:
                        return n_out, _NEGATIVE, i
                    take = min(asks[best_ask], remaining)
                    asks[best_ask] -= take
                    remaining -= take
                    if asks[best_ask] == 0:
                        best_ask = _next_ask(asks, best_ask + 1, hi, width)
            else:
                while remaining > 0:
                    if best_bid < 0:
                        return n_out, _NEGATIVE, i
                    take = min(bids[best_bid], remaining)
                    bids[best_bid] -= take
                    remaining -= take
                    if bids[best_bid] == 0:
                        best_bid = _next_bid(bids, best_bid - 1, lo)
    return n_out, _OK, -1


def replay_columns(
    columns: EventColumns,
    clock: Optional[SessionClock] = None,
    levels: int = DEFAULT_DEPTH,
) -> DepthPanel:
    """
    Replay a columnar stream and return the pre-event depth panel.

    Equivalent to `DepthPanel.from_emissions(replay(...))`. Streams whose
    price range exceeds MAX_DENSE_WIDTH ticks go through the object path.

    Raises:
        BookError: With the index of the first failing event.
    """
    clock = clock if clock is not None else SessionClock()
    n = len(columns)
    if n == 0:
        return DepthPanel.empty(levels)
    is_ladder = columns.kind != Kind.MARKET_ORDER.code
    if is_ladder.any():
        pmin = int(columns.price[is_ladder].min()) - 1
        pmax = int(columns.price[is_ladder].max()) + 1
    else:
        pmin, pmax = 0, 1
    width = pmax - pmin + 1
    if width > MAX_DENSE_WIDTH:
        logger.info(
            f"Price range of {width} ticks, falling back to object replay."
        )
        return DepthPanel.from_emissions(
            replay(columns.iter_events(), clock=clock, levels=levels),
            levels=levels
        )
    n_mo = columns.n_market_orders()
    out_index = np.zeros(n_mo, dtype=np.int64)
    out_bid_q = np.zeros((n_mo, levels), dtype=np.int64)
    out_ask_q = np.zeros((n_mo, levels), dtype=np.int64)
    out_bid_px = np.full((n_mo, levels), -1, dtype=np.int64)
    out_ask_px = np.full((n_mo, levels), -1, dtype=np.int64)
    n_out, code, where = _replay_kernel(
        columns.session_id, columns.timestamp, columns.kind, columns.side,
        columns.price, columns.quantity, pmin, width, levels,
        clock.open_ns, clock.close_or_max, out_index, out_bid_q, out_ask_q,
        out_bid_px, out_ask_px
    )
    if code != _OK:
        _raise_kernel_error(code, int(where), columns)
    out_index = out_index[:n_out]
    return DepthPanel(
        event_index=out_index,
        session_id=columns.session_id[out_index],
        timestamp=columns.timestamp[out_index],
        side=columns.side[out_index].astype(np.int8),
        bid_qty=out_bid_q[:n_out],
        ask_qty=out_ask_q[:n_out],
        best_bid=out_bid_px[:n_out, 0].copy(),
        best_ask=out_ask_px[:n_out, 0].copy(),
    )


def _raise_kernel_error(code: int, index: int, columns: EventColumns):
    ev: OrderEvent = next(
        _events_at(columns, index)
    )
    if code == _CROSSED:
        raise CrossedBookError(
            f"Insert {ev.side.value}@{ev.price} crosses the book.",
            event_index=index
        )
    if code == _NEGATIVE:
        raise NegativeQuantityError(
            f"{ev.kind.name} of {ev.quantity} exceeds resting quantity "
            f"on side {ev.side.value}.",
            event_index=index
        )
    raise OutOfOrderError(
        f"Timestamp {ev.timestamp} precedes the previous event.",
        event_index=index
    )


def _events_at(columns: EventColumns, index: int):
    return columns.take(slice(index, index + 1)).iter_events()
