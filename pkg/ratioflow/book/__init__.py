from .events import EventColumns, Kind, OrderEvent, Session, Side
from .state import BookSnapshot, BookState, apply_event, depth, spread
from .replay import DepthPanel, Emission, MarketOrderArrival, replay
from .fast import replay_columns
from .reader import get_reader, read_events, session_summary, write_events
