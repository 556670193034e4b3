from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np


class Side(str, Enum):
    """
    Book side. For a market order the side is the one whose liquidity is
    consumed: an ask-side market order (MA) is a buy, a bid-side market order
    (MB) is a sell.
    """
    ASK = "A"
    BID = "B"

    @property
    def code(self) -> int:
        return SIDE_CODES[self]

    @property
    def label(self) -> str:
        return "MA" if self is Side.ASK else "MB"

    @property
    def trade_sign(self) -> int:
        """Last-trade sign convention: -1 for an ask trade, +1 for a bid."""
        return -1 if self is Side.ASK else 1

    @classmethod
    def from_label(cls, label: str) -> "Side":
        label = label.upper()
        if label in ("MA", "A", "ASK"):
            return cls.ASK
        if label in ("MB", "B", "BID"):
            return cls.BID
        raise ValueError(f"Unknown side label {label!r}.")


class Kind(str, Enum):
    LIMIT_INSERT = "L"
    CANCEL = "C"
    MARKET_ORDER = "M"

    @property
    def code(self) -> int:
        return KIND_CODES[self]


# Integer codes used by the columnar representation.
SIDE_CODES = {Side.ASK: 0, Side.BID: 1}
KIND_CODES = {Kind.LIMIT_INSERT: 0, Kind.CANCEL: 1, Kind.MARKET_ORDER: 2}
SIDE_FROM_CODE = {v: k for k, v in SIDE_CODES.items()}
KIND_FROM_CODE = {v: k for k, v in KIND_CODES.items()}


@dataclass(frozen=True, slots=True)
class OrderEvent:
    """
    One order-flow event in the canonical schema.

    Attributes:
        session_id (int): Day index k.
        timestamp (int): Nanoseconds since session open.
        kind (Kind): Limit insert, cancel or market order.
        side (Side): Book side the event refers to.
        price (int): Price in ticks. Informational for market orders.
        quantity (int): Shares, strictly positive.
        line (int | None): Source line, kept for diagnostics.
    """
    session_id: int
    timestamp: int
    kind: Kind
    side: Side
    price: int
    quantity: int
    line: Optional[int] = None

    def __post_init__(self):
        if self.quantity <= 0:
            raise ValueError(
                f"Event quantity must be positive, got {self.quantity}."
            )


@dataclass(frozen=True, slots=True)
class Session:
    """
    Observation interval I^(k) = [open, close], in nanoseconds.
    """
    session_id: int
    open: int
    close: int

    def __post_init__(self):
        if not self.open < self.close:
            raise ValueError(
                f"Session {self.session_id}: open must precede close."
            )

    @property
    def length(self) -> int:
        return self.close - self.open

    def contains(self, timestamp: int) -> bool:
        return self.open <= timestamp <= self.close


@dataclass(frozen=True)
class EventColumns:
    """
    Columnar event stream, one numpy array per schema field.

    Sides and kinds use the integer codes of SIDE_CODES and KIND_CODES.
    """
    session_id: np.ndarray
    timestamp: np.ndarray
    kind: np.ndarray
    side: np.ndarray
    price: np.ndarray
    quantity: np.ndarray

    def __len__(self) -> int:
        return int(self.session_id.shape[0])

    @classmethod
    def from_events(cls, events) -> "EventColumns":
        rows = [
            (
                ev.session_id, ev.timestamp, ev.kind.code, ev.side.code,
                ev.price, ev.quantity
            )
            for ev in events
        ]
        if len(rows) == 0:
            arr = np.zeros((0, 6), dtype=np.int64)
        else:
            arr = np.asarray(rows, dtype=np.int64)
        return cls(
            session_id=arr[:, 0].copy(),
            timestamp=arr[:, 1].copy(),
            kind=arr[:, 2].astype(np.int8),
            side=arr[:, 3].astype(np.int8),
            price=arr[:, 4].copy(),
            quantity=arr[:, 5].copy(),
        )

    def iter_events(self):
        """Yield OrderEvent objects, in stream order."""
        for i in range(len(self)):
            yield OrderEvent(
                session_id=int(self.session_id[i]),
                timestamp=int(self.timestamp[i]),
                kind=KIND_FROM_CODE[int(self.kind[i])],
                side=SIDE_FROM_CODE[int(self.side[i])],
                price=int(self.price[i]),
                quantity=int(self.quantity[i]),
            )

    def take(self, mask_or_index: np.ndarray) -> "EventColumns":
        return EventColumns(
            session_id=self.session_id[mask_or_index],
            timestamp=self.timestamp[mask_or_index],
            kind=self.kind[mask_or_index],
            side=self.side[mask_or_index],
            price=self.price[mask_or_index],
            quantity=self.quantity[mask_or_index],
        )

    def session_ids(self) -> np.ndarray:
        return np.unique(self.session_id)

    def n_market_orders(self) -> int:
        return int(np.count_nonzero(self.kind == KIND_CODES[Kind.MARKET_ORDER]))
