import numpy as np
import pytest

from ratioflow.book.events import Side
from ratioflow.book.replay import replay
from ratioflow.book.state import BookSnapshot, BookState
from ratioflow.errors import EmptySideError, InsufficientHistoryError
from ratioflow.features.catalog import get_model
from ratioflow.features.covariates import (
    FeatureStream,
    LagBuffer,
    compute_features,
    cumulative_imbalance,
    imbalance,
    imbalance_profile,
    sign_spread_product,
)
from ratioflow.features.descriptors import Constant, ModelSpec


def snapshot(bid_qty, ask_qty, bid_px=999, ask_px=1001):
    levels = 10
    bq = np.zeros(levels, dtype=np.int64)
    aq = np.zeros(levels, dtype=np.int64)
    bq[:len(bid_qty)] = bid_qty
    aq[:len(ask_qty)] = ask_qty
    bp = np.full(levels, -1, dtype=np.int64)
    ap = np.full(levels, -1, dtype=np.int64)
    bp[0], ap[0] = bid_px, ask_px
    return BookSnapshot(timestamp=0, bid_qty=bq, ask_qty=aq, bid_px=bp,
                        ask_px=ap)


class TestScalarOperations:
    """Imbalance and spread indicator"""

    @pytest.mark.parametrize("q_bid,q_ask,expected", [
        (400, 400, 0.0), (100, 0, 1.0), (0, 100, -1.0), (100, 50, 1 / 3),
        (0, 0, 0.0),
    ])
    def test_imbalance(self, q_bid, q_ask, expected):
        assert imbalance(q_bid, q_ask) == pytest.approx(expected)

    def test_cumulative_imbalance(self):
        state = BookState.from_levels(bids={999: 100, 998: 300},
                                      asks={1001: 200, 1002: 200})
        assert cumulative_imbalance(state, 1) == imbalance(100, 200)
        assert cumulative_imbalance(state, 2) == 0.0

    def test_cumulative_imbalance_with_empty_level(self):
        snap = snapshot([100, 0], [50, 150])
        assert cumulative_imbalance(snap, 2) == pytest.approx(-1 / 3)

    @pytest.mark.parametrize("eps,spread,mean,expected", [
        (1, 3, 1.8, 1), (-1, 1, 1.8, 1), (0, 3, 1.8, 0), (1, 2, 2.0, -1),
    ])
    def test_sign_spread_product(self, eps, spread, mean, expected):
        assert sign_spread_product(eps, spread, mean) == expected


class TestComputeFeatures:
    """Feature vectors at market orders"""

    def test_constant_model(self):
        spec = ModelSpec(name="const", covariates=(Constant(),))
        x = compute_features(spec, BookState(), LagBuffer.for_spec(spec))
        assert list(x) == [1.0]

    def test_balanced_book(self):
        state = BookState.from_levels(bids={999: 10}, asks={1001: 10})
        x = compute_features(get_model("imb1"), state, LagBuffer())
        assert list(x) == [1.0, 0.0]

    def test_imb2_e_es_la1_by_hand(self):
        spec = get_model("imb2_e_es_la1")
        before = BookState.from_levels(bids={999: 50},
                                       asks={1001: 150, 1002: 50})
        now = BookState.from_levels(bids={999: 300, 998: 100},
                                    asks={1001: 100, 1003: 200})
        lags = LagBuffer.for_spec(spec)
        lags.record(before, Side.ASK, spread=2.0)
        x = compute_features(spec, now, lags, mean_spread=1.8)
        expected = [1.0, imbalance(300, 100), imbalance(100, 200),
                    imbalance(50, 150), imbalance(0, 50), -1.0,
                    sign_spread_product(-1, 2, 1.8)]
        np.testing.assert_allclose(x, expected, rtol=0, atol=1e-15)

    def test_needs_history(self):
        spec = get_model("imb1_la1")
        with pytest.raises(InsufficientHistoryError):
            compute_features(spec, BookState(), LagBuffer.for_spec(spec))

    def test_lenient_mode_reads_missing_lags_as_zero(self):
        spec = get_model("imb1_e_es_la1")
        state = BookState.from_levels(bids={999: 30}, asks={1001: 10})
        x = compute_features(spec, state, LagBuffer.for_spec(spec),
                             mean_spread=1.0, strict=False)
        assert list(x) == [1.0, 0.5, 0.0, 0.0, 0.0]

    def test_spread_needed_on_one_sided_book(self):
        spec = get_model("imb1_e_es")
        lags = LagBuffer.for_spec(spec, spread_threshold=1.0)
        lags.record(BookState(), Side.BID)
        with pytest.raises(EmptySideError):
            compute_features(spec, BookState.from_levels(bids={999: 1}), lags)

    def test_running_spread_mean(self):
        lags = LagBuffer(depth=0)
        assert lags.spread_mean is None
        for s in (1.0, 2.0, 6.0):
            lags.record(BookState(), Side.BID, spread=s)
        assert lags.spread_mean == 3.0
        assert lags.last_sign == 1
        frozen = LagBuffer(depth=0, spread_threshold=1.5)
        frozen.record(BookState(), Side.ASK, spread=9.0)
        assert frozen.spread_mean == 1.5
        assert frozen.last_sign == -1


class TestLagBuffer:
    """Per-session lag buffers"""

    def test_ring_keeps_most_recent_first(self):
        lags = LagBuffer(depth=2)
        books = [BookState.from_levels(bids={999: q}, asks={1001: 10})
                 for q in (10, 30, 50)]
        for b in books:
            lags.record(b, Side.BID)
        assert len(lags) == 2
        assert lags.lagged(1)[0][0] == imbalance(50, 10)
        assert lags.lagged(2)[0][0] == imbalance(30, 10)
        with pytest.raises(InsufficientHistoryError):
            lags.lagged(3)

    def test_session_boundary_clears_history(self):
        stream = FeatureStream(get_model("imb1_e_es_la1"),
                               spread_threshold=1.0)
        stream.start_session(0)
        stream.record(BookState.from_levels(bids={999: 1}, asks={1001: 1}),
                      Side.ASK)
        assert stream.lags.count == 1
        stream.start_session(0)
        assert stream.lags.count == 1
        stream.start_session(1)
        assert stream.lags.count == 0
        assert stream.lags.last_sign == 0
        assert stream.lags.spread_threshold == 1.0


class TestProperties:
    """Range, antisymmetry and averaging on books met in random streams."""

    @pytest.fixture
    def books(self, random_stream):
        columns = random_stream(8, n_sessions=2, n_events=1500)
        return [e.book for e in replay(columns.iter_events())]

    def test_ranges(self, books):
        for book in books:
            imb, cum = imbalance_profile(book)
            assert np.all(np.abs(imb) <= 1.0)
            assert np.all(np.abs(cum) <= 1.0)

    def test_swapping_sides_negates(self, books):
        for book in books:
            swapped = BookSnapshot(book.timestamp, bid_qty=book.ask_qty,
                                   ask_qty=book.bid_qty, bid_px=book.ask_px,
                                   ask_px=book.bid_px)
            imb, cum = imbalance_profile(book)
            s_imb, s_cum = imbalance_profile(swapped)
            np.testing.assert_array_equal(s_imb, -imb)
            np.testing.assert_array_equal(s_cum, -cum)

    def test_cumulative_is_a_weighted_mean(self, books):
        for book in books:
            imb, cum = imbalance_profile(book)
            running_max = np.maximum.accumulate(np.abs(imb))
            assert np.all(np.abs(cum) <= running_max + 1e-12)
