import numpy as np
import pytest

from ratioflow.book.events import EventColumns, Side
from ratioflow.book.fast import replay_columns
from ratioflow.book.replay import DepthPanel, replay
from ratioflow.config import SessionClock
from ratioflow.errors import (
    CrossedBookError,
    NegativeQuantityError,
    OutOfOrderError,
)
from tests.conftest import to_columns, to_events


def assert_panels_equal(a: DepthPanel, b: DepthPanel):
    for name in ("event_index", "session_id", "timestamp", "side", "bid_qty",
                 "ask_qty", "best_bid", "best_ask"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name),
                                      err_msg=name)


class TestReplay:
    """Event-by-event replay"""

    def test_no_market_orders(self):
        rows = [(0, 0, "L", "A", 1001, 10), (0, 1, "L", "B", 999, 10)]
        assert list(replay(to_events(rows))) == []

    def test_pre_event_snapshot(self):
        rows = [(0, 0, "L", "A", 1001, 10), (0, 1, "L", "B", 999, 20),
                (0, 2, "M", "A", 1001, 10)]
        emissions = list(replay(to_events(rows)))
        assert len(emissions) == 1
        e = emissions[0]
        assert e.arrival.event_index == 2
        assert e.arrival.side is Side.ASK
        assert e.book.depth(Side.ASK, 1) == 10
        assert e.book.depth(Side.BID, 1) == 20

    def test_consumed_level_shrinks(self):
        rows = [(0, 0, "L", "A", 1001, 10), (0, 1, "M", "A", 1001, 4),
                (0, 2, "M", "A", 1001, 6), (0, 3, "L", "A", 1002, 1)]
        emissions = list(replay(to_events(rows)))
        assert [e.book.depth(Side.ASK, 1) for e in emissions] == [10, 6]

    def test_book_resets_between_sessions(self):
        rows = [(0, 0, "L", "A", 1001, 10), (0, 1, "L", "B", 999, 10),
                (1, 0, "L", "A", 1005, 3), (1, 1, "M", "A", 1005, 1)]
        (e,) = list(replay(to_events(rows)))
        assert e.arrival.session_id == 1
        assert e.book.depth(Side.ASK, 1) == 3
        assert e.book.depth(Side.BID, 1) == 0

    def test_clock_filters_emissions_but_not_updates(self):
        rows = [(0, 0, "L", "A", 1001, 10), (0, 5, "M", "A", 1001, 2),
                (0, 20, "M", "A", 1001, 2), (0, 40, "M", "A", 1001, 2)]
        clock = SessionClock(open_ns=10, close_ns=30)
        emissions = list(replay(to_events(rows), clock=clock))
        assert [e.arrival.timestamp for e in emissions] == [20]
        assert emissions[0].book.depth(Side.ASK, 1) == 8

    def test_errors_carry_the_stream_index(self):
        rows = [(0, 0, "L", "A", 1001, 10), (0, 1, "L", "B", 1001, 10)]
        with pytest.raises(CrossedBookError) as info:
            list(replay(to_events(rows)))
        assert info.value.event_index == 1

    def test_deterministic(self, random_stream):
        columns = random_stream(3, n_sessions=2, n_events=500)
        first = DepthPanel.from_emissions(replay(columns.iter_events()))
        second = DepthPanel.from_emissions(replay(columns.iter_events()))
        assert_panels_equal(first, second)


class TestDepthPanel:
    """Columnar replay against the object path"""

    def test_empty(self):
        panel = DepthPanel.from_emissions([])
        assert len(panel) == 0
        assert panel.levels == 10

    def test_spread_is_nan_on_one_sided_rows(self):
        rows = [(0, 0, "L", "A", 1001, 10), (0, 1, "M", "A", 1001, 1),
                (0, 2, "L", "B", 998, 10), (0, 3, "M", "B", 998, 1)]
        panel = DepthPanel.from_emissions(replay(to_events(rows)))
        spread = panel.spread()
        assert np.isnan(spread[0])
        assert spread[1] == 3.0
        assert list(panel.two_sided()) == [False, True]

    def test_select_sessions(self, random_stream):
        columns = random_stream(1, n_sessions=3, n_events=300)
        panel = replay_columns(columns)
        sub = panel.select_sessions([0, 2])
        assert set(sub.sessions()) == {0, 2}
        assert len(sub) == np.isin(panel.session_id, [0, 2]).sum()

    def test_snapshot_of_a_row(self, random_stream):
        columns = random_stream(2, n_sessions=1, n_events=300)
        emissions = list(replay(columns.iter_events()))
        panel = DepthPanel.from_emissions(emissions)
        snap = panel.snapshot(0)
        for n in range(1, 11):
            for side in Side:
                assert snap.depth(side, n) == emissions[0].book.depth(side, n)


class TestColumnarReplay:
    """The compiled path agrees with the object path."""

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_matches_object_replay(self, random_stream, seed):
        columns = random_stream(seed, n_sessions=3, n_events=2000)
        expected = DepthPanel.from_emissions(replay(columns.iter_events()))
        assert_panels_equal(replay_columns(columns), expected)

    def test_matches_with_clock(self, random_stream):
        columns = random_stream(9, n_sessions=2, n_events=2000)
        clock = SessionClock(open_ns=200, close_ns=1500)
        expected = DepthPanel.from_emissions(
            replay(columns.iter_events(), clock=clock))
        assert_panels_equal(replay_columns(columns, clock=clock), expected)
        assert (expected.timestamp >= 200).all()

    def test_empty_stream(self):
        panel = replay_columns(EventColumns.from_events([]))
        assert len(panel) == 0

    def test_market_orders_only_on_empty_book(self):
        columns = to_columns([(0, 0, "M", "A", 1001, 1)])
        with pytest.raises(NegativeQuantityError) as info:
            replay_columns(columns)
        assert info.value.event_index == 0

    @pytest.mark.parametrize("rows,error", [
        ([(0, 0, "L", "A", 1001, 1), (0, 1, "L", "B", 1002, 1)],
         CrossedBookError),
        ([(0, 0, "L", "A", 1001, 1), (0, 1, "C", "A", 1001, 2)],
         NegativeQuantityError),
        ([(0, 5, "L", "A", 1001, 1), (0, 4, "L", "A", 1001, 1)],
         OutOfOrderError),
    ])
    def test_errors(self, rows, error):
        with pytest.raises(error) as info:
            replay_columns(to_columns(rows))
        assert info.value.event_index == 1

    def test_wide_price_range_uses_object_path(self):
        rows = [(0, 0, "L", "B", 1, 5), (0, 1, "L", "A", 30_000_000, 5),
                (0, 2, "M", "A", 30_000_000, 1)]
        panel = replay_columns(to_columns(rows))
        assert list(panel.best_ask) == [30_000_000]
        assert list(panel.best_bid) == [1]


@pytest.mark.slow
class TestThroughput:
    """Replay of a large stream"""

    def test_ten_million_events(self, random_stream):
        import time

        columns = random_stream(0, n_sessions=1, n_events=1000)
        replay_columns(columns)  # compile
        big = random_stream(1, n_sessions=20, n_events=500_000)
        start = time.perf_counter()
        panel = replay_columns(big)
        elapsed = time.perf_counter() - start
        assert len(panel) == big.n_market_orders()
        assert len(big) / elapsed >= 1_000_000
