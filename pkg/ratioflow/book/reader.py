import gzip
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Iterable, List, Union

import numpy as np
import orjson
import pandas as pd

from ..errors import InputFormatError
from ..log import logger
from .events import EventColumns, KIND_CODES, SIDE_CODES, Kind, Side


COLUMNS = [
    "session_id", "timestamp_ns", "kind", "side", "price_ticks", "quantity"
]
_KIND_MAP = {k.value: code for k, code in KIND_CODES.items()}
_SIDE_MAP = {s.value: code for s, code in SIDE_CODES.items()}


class EventReader(ABC):
    """
    Reads one event file of the canonical schema into columns.

    Subclasses only parse the raw table; validation and conversion to codes
    are shared.
    """

    # Line number of the first data row; CSV files carry a header.
    first_data_line: int = 1

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    @abstractmethod
    def read_frame(self) -> pd.DataFrame:
        pass

    def read(self) -> EventColumns:
        """
        Parse and validate the file.

        Returns:
            EventColumns: The events in file order.

        Raises:
            InputFormatError: On missing columns, unknown codes, non-positive
                quantities or unsorted (session_id, timestamp) keys. The
                error carries the 1-based line of the first bad row.
        """
        df = self.read_frame()
        missing = [c for c in COLUMNS if c not in df.columns]
        if missing:
            raise InputFormatError(
                f"Missing columns {missing}.", path=self.path, line=1
            )
        df = df[COLUMNS]
        kind = df["kind"].astype(str).str.strip().map(_KIND_MAP)
        side = df["side"].astype(str).str.strip().map(_SIDE_MAP)
        self._fail_on(kind.isna().to_numpy(), "Unknown event kind.")
        self._fail_on(side.isna().to_numpy(), "Unknown side.")
        ints = {}
        for name in ("session_id", "timestamp_ns", "price_ticks", "quantity"):
            values = pd.to_numeric(df[name], errors="coerce")
            bad = values.isna().to_numpy() | (
                values.to_numpy(dtype=float, na_value=0.5) % 1 != 0
            )
            self._fail_on(bad, f"Column {name} is not an integer.")
            ints[name] = values.to_numpy().astype(np.int64)
        self._fail_on(ints["quantity"] <= 0, "Quantity must be positive.")
        session = ints["session_id"]
        ts = ints["timestamp_ns"]
        if len(session) > 1:
            new_session = session[1:] != session[:-1]
            unsorted = (session[1:] < session[:-1]) | (
                ~new_session & (ts[1:] < ts[:-1])
            )
            self._fail_on(
                np.concatenate([[False], unsorted]),
                "Events not sorted by (session_id, timestamp)."
            )
        logger.debug(f"Read {len(df)} events from {self.path}.")
        return EventColumns(
            session_id=session,
            timestamp=ts,
            kind=kind.to_numpy().astype(np.int8),
            side=side.to_numpy().astype(np.int8),
            price=ints["price_ticks"],
            quantity=ints["quantity"],
        )

    def line_of(self, row: int) -> int:
        return row + self.first_data_line

    def _fail_on(self, mask: np.ndarray, msg: str):
        if mask.any():
            row = int(np.argmax(mask))
            raise InputFormatError(msg, path=self.path, line=self.line_of(row))


class CsvEventReader(EventReader):

    first_data_line = 2

    def read_frame(self) -> pd.DataFrame:
        try:
            return pd.read_csv(
                self.path, dtype=str, skipinitialspace=True,
                compression="infer"
            )
        except pd.errors.EmptyDataError:
            raise InputFormatError("Empty file, header row required.",
                                   path=self.path, line=1)
        except (pd.errors.ParserError, UnicodeDecodeError, OSError) as exc:
            raise InputFormatError(str(exc), path=self.path)


class NdjsonEventReader(EventReader):

    first_data_line = 1

    def __init__(self, path: Union[str, Path]):
        super().__init__(path)
        self._lines: List[int] = []

    def line_of(self, row: int) -> int:
        if row < len(self._lines):
            return self._lines[row]
        return super().line_of(row)

    def read_frame(self) -> pd.DataFrame:
        opener = gzip.open if self.path.suffix == ".gz" else open
        rows = []
        self._lines = []
        try:
            with opener(self.path, "rb") as fh:
                for i, raw in enumerate(fh, start=1):
                    if not raw.strip():
                        continue
                    self._lines.append(i)
                    try:
                        rows.append(orjson.loads(raw))
                    except orjson.JSONDecodeError as exc:
                        raise InputFormatError(
                            f"Invalid JSON: {exc}", path=self.path, line=i
                        )
        except (OSError, EOFError) as exc:
            raise InputFormatError(str(exc), path=self.path)
        if len(rows) == 0:
            return pd.DataFrame(columns=COLUMNS)
        return pd.DataFrame.from_records(rows)


def get_reader(path: Union[str, Path]) -> EventReader:
    """
    Pick a reader by file extension, ignoring a trailing ".gz".
    """
    path = Path(path)
    suffixes = [s.lower() for s in path.suffixes]
    if suffixes and suffixes[-1] == ".gz":
        suffixes = suffixes[:-1]
    ext = suffixes[-1] if suffixes else ""
    if ext == ".csv":
        return CsvEventReader(path)
    if ext in (".ndjson", ".jsonl", ".json"):
        return NdjsonEventReader(path)
    raise InputFormatError(f"Unsupported file type {ext!r}.", path=path)


def concat_columns(parts: List[EventColumns]) -> EventColumns:
    if len(parts) == 0:
        return EventColumns.from_events([])
    return EventColumns(
        session_id=np.concatenate([p.session_id for p in parts]),
        timestamp=np.concatenate([p.timestamp for p in parts]),
        kind=np.concatenate([p.kind for p in parts]),
        side=np.concatenate([p.side for p in parts]),
        price=np.concatenate([p.price for p in parts]),
        quantity=np.concatenate([p.quantity for p in parts]),
    )


def read_events(
    paths: Iterable[Union[str, Path]],
    allow_empty: bool = False
) -> EventColumns:
    """
    Read and concatenate event files in the given order.

    Files must not interleave sessions: each file's first session is checked
    against the previous file's last one.

    Args:
        paths (Iterable): Event files (CSV or NDJSON, optionally gzipped).
        allow_empty (bool, optional): Accept an input with no events.
            Defaults to False.

    Raises:
        InputFormatError: If a file is malformed, files are out of order, or
            no events were read and `allow_empty` is False.
    """
    parts: List[EventColumns] = []
    last_key = None
    for path in paths:
        cols = get_reader(path).read()
        if len(cols) > 0:
            first_key = (int(cols.session_id[0]), int(cols.timestamp[0]))
            if last_key is not None and first_key < last_key:
                raise InputFormatError(
                    "File starts before the end of the previous file.",
                    path=path, line=get_reader(path).first_data_line
                )
            last_key = (int(cols.session_id[-1]), int(cols.timestamp[-1]))
        parts.append(cols)
    columns = concat_columns(parts)
    if len(columns) == 0 and not allow_empty:
        raise InputFormatError("No events in input.")
    return columns


def write_events(columns: EventColumns, path: Union[str, Path]):
    """
    Write events in the canonical CSV or NDJSON schema (by extension).
    """
    path = Path(path)
    kind_names = np.array([Kind.LIMIT_INSERT.value, Kind.CANCEL.value,
                           Kind.MARKET_ORDER.value])
    side_names = np.array([Side.ASK.value, Side.BID.value])
    df = pd.DataFrame({
        "session_id": columns.session_id,
        "timestamp_ns": columns.timestamp,
        "kind": kind_names[columns.kind.astype(np.int64)],
        "side": side_names[columns.side.astype(np.int64)],
        "price_ticks": columns.price,
        "quantity": columns.quantity,
    })
    reader = get_reader(path)
    if isinstance(reader, CsvEventReader):
        df.to_csv(path, index=False, compression="infer")
    else:
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "wb") as fh:
            for record in df.to_dict(orient="records"):
                fh.write(orjson.dumps(record) + b"\n")


def session_summary(columns: EventColumns) -> pd.DataFrame:
    """
    Per-session counts of a stream: events, market orders, inserts,
    cancels, first and last timestamp.
    """
    df = pd.DataFrame({
        "session_id": columns.session_id,
        "timestamp_ns": columns.timestamp,
        "kind": columns.kind,
    })
    grouped = df.groupby("session_id", sort=True)
    out = pd.DataFrame({
        "events": grouped.size(),
        "market_orders": grouped["kind"].apply(
            lambda k: int((k == KIND_CODES[Kind.MARKET_ORDER]).sum())),
        "inserts": grouped["kind"].apply(
            lambda k: int((k == KIND_CODES[Kind.LIMIT_INSERT]).sum())),
        "cancels": grouped["kind"].apply(
            lambda k: int((k == KIND_CODES[Kind.CANCEL]).sum())),
        "first_ts": grouped["timestamp_ns"].min(),
        "last_ts": grouped["timestamp_ns"].max(),
    })
    return out.reset_index()
