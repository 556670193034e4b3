from typing import Dict, List, Tuple

import numpy as np
import pytest

from ratioflow.book.events import EventColumns, Kind, OrderEvent, Side
from ratioflow.simulation.config import (
    BookDriven,
    ConstantRate,
    OUPaths,
    SimConfig,
)


# (session_id, timestamp_ns, kind, side, price_ticks, quantity)
EventRow = Tuple[int, int, str, str, int, int]
Ladder = Dict[int, int]


def to_events(rows: List[EventRow]) -> List[OrderEvent]:
    return [
        OrderEvent(session_id=s, timestamp=ts, kind=Kind(kind),
                   side=Side(side), price=px, quantity=qty)
        for s, ts, kind, side, px, qty in rows
    ]


def to_columns(rows: List[EventRow]) -> EventColumns:
    return EventColumns.from_events(to_events(rows))


def walk(ladder: Ladder, quantity: int, ascending: bool):
    """Naive matcher: consume `quantity` from the best prices of a ladder."""
    for price in sorted(ladder, reverse=not ascending):
        if quantity == 0:
            break
        take = min(quantity, ladder[price])
        ladder[price] -= take
        quantity -= take
        if ladder[price] == 0:
            del ladder[price]


def random_rows(seed: int, n_sessions: int = 3, n_events: int = 400,
                start_price: int = 1000) \
        -> Tuple[List[EventRow], List[Tuple[Ladder, Ladder]]]:
    """
    A valid random stream and the final (asks, bids) of each session, kept
    by a plain dict book.
    """
    rng = np.random.default_rng(seed)
    rows: List[EventRow] = []
    books = []
    for k in range(n_sessions):
        asks: Ladder = {}
        bids: Ladder = {}
        ts = 0
        for _ in range(n_events):
            ts += int(rng.integers(0, 3))
            u = rng.random()
            side = "A" if rng.random() < 0.5 else "B"
            book = asks if side == "A" else bids
            if u < 0.5 or not book:
                if side == "A":
                    base = max(bids) + 1 if bids else start_price
                    price = base + int(rng.integers(0, 6))
                else:
                    base = min(asks) - 1 if asks else start_price - 1
                    price = base - int(rng.integers(0, 6))
                qty = int(rng.integers(1, 200))
                book[price] = book.get(price, 0) + qty
                rows.append((k, ts, "L", side, price, qty))
            elif u < 0.75:
                prices = sorted(book)
                price = prices[int(rng.integers(0, len(prices)))]
                qty = int(rng.integers(1, book[price] + 1))
                book[price] -= qty
                if book[price] == 0:
                    del book[price]
                rows.append((k, ts, "C", side, price, qty))
            else:
                total = sum(book.values())
                qty = int(rng.integers(1, min(total, 300) + 1))
                best = min(book) if side == "A" else max(book)
                walk(book, qty, ascending=side == "A")
                rows.append((k, ts, "M", side, best, qty))
        books.append((dict(asks), dict(bids)))
    return rows, books


def separable_rows(seed: int, n_sessions: int = 4, per_session: int = 20) \
        -> List[EventRow]:
    """
    Sessions of isolated market orders: a thin ask side (bid 300, ask 100)
    is always followed by an ask-side order, a thin bid side by a bid-side
    one. The book is emptied after each order.
    """
    rng = np.random.default_rng(seed)
    rows: List[EventRow] = []
    for k in range(n_sessions):
        ts = 0
        for _ in range(per_session):
            buy = rng.random() < 0.5
            q_bid, q_ask = (300, 100) if buy else (100, 300)
            side = "A" if buy else "B"
            rows.append((k, ts, "L", "B", 999, q_bid))
            rows.append((k, ts + 1, "L", "A", 1001, q_ask))
            rows.append((k, ts + 2, "M", side, 1001 if buy else 999, 1))
            rows.append((k, ts + 3, "C", "B", 999, q_bid - (0 if buy else 1)))
            rows.append((k, ts + 4, "C", "A", 1001, q_ask - (1 if buy else 0)))
            ts += 5
    return rows


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def random_stream():
    """Factory: (seed, n_sessions, n_events) -> EventColumns."""
    def make(seed: int = 0, n_sessions: int = 3, n_events: int = 400):
        rows, _ = random_rows(seed, n_sessions, n_events)
        return to_columns(rows)
    return make


@pytest.fixture
def separable_stream():
    def make(seed: int = 0, n_sessions: int = 4, per_session: int = 20):
        return to_columns(separable_rows(seed, n_sessions, per_session))
    return make


@pytest.fixture
def sim_config():
    """Small label-friendly configuration: imb1_e_es on OU paths."""
    return SimConfig(
        model="imb1_e_es",
        vartheta_ma=[0.1, 1.0, 0.4, 0.2],
        vartheta_mb=[0.0, -1.0, -0.2, 0.0],
        baseline=ConstantRate(rate=1.0),
        covariate_dynamics=OUPaths(),
        sessions=4,
        session_length=200.0,
        grid_step=1.0,
        seed=11,
    )


@pytest.fixture
def book_sim_config():
    """Book-driven configuration whose events go through replay."""
    return SimConfig(
        model="imb2_e_es_la1",
        vartheta_ma=[0.0, 0.8, 0.3, 0.2, 0.1, 0.3, 0.1],
        vartheta_mb=[0.0, -0.8, -0.3, 0.0, 0.0, -0.2, 0.0],
        baseline=ConstantRate(rate=1.0),
        covariate_dynamics=BookDriven(limit_rate=10.0, cancel_rate=6.0),
        sessions=10,
        session_length=60.0,
        grid_step=1.0,
        spread_threshold=1.5,
        seed=5,
    )
