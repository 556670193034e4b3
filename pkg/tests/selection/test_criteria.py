import math

import numpy as np
import pandas as pd
import pytest

from ratioflow.errors import MixedTError
from ratioflow.estimation.qmle import FitResult
from ratioflow.estimation.ratio import Theta
from ratioflow.selection.criteria import (
    CRITERIA,
    Criterion,
    CriterionReport,
    criteria,
    criteria_frame,
    criterion_values,
    join_with_accuracy,
    rank_models,
    selection_counts,
    write_criteria_csv,
)


def make_fit(model, d, objective, T=20, converged=True, boundary_hit=False):
    return FitResult(
        model=model,
        labels=[f"x{j}" for j in range(d)],
        theta_hat=Theta(np.zeros(d)),
        objective=objective,
        gradient_norm=0.0,
        iterations=3,
        gamma_hat=np.eye(d),
        std_errors=np.ones(d),
        converged=converged,
        boundary_hit=boundary_hit,
        T=T,
        n_samples=100,
        n_ma=50,
    )


def report(model, d, objective, T=20, converged=True, instrument="A"):
    return criteria(make_fit(model, d, objective, T, converged),
                    instrument=instrument)


class TestFormulas:
    """QAIC, QCAIC and QBIC values"""

    def test_values(self):
        values = criterion_values(-100.0, 20, 3)
        assert values["qaic"] == pytest.approx(206.0)
        assert values["qcaic"] == pytest.approx(200 + 3 * (math.log(20) + 1))
        assert values["qbic"] == pytest.approx(200 + 3 * math.log(20))

    def test_report_from_fit(self):
        r = report("imb2", 3, -100.0)
        assert (r.d, r.T, r.objective) == (3, 20, -100.0)
        assert r.value("QAIC") == r.qaic == pytest.approx(206.0)
        assert r.value(Criterion.QBIC) == r.qbic
        assert r.instrument == "A" and r.converged

    def test_overrides(self):
        r = criteria(make_fit("imb1", 2, -50.0), T=5, d=4)
        assert r.T == 5 and r.d == 4
        assert r.qaic == pytest.approx(108.0)

    def test_single_session_has_no_bic_penalty(self):
        r = report("imb1", 2, -10.0, T=1)
        assert r.single_session
        assert r.qbic == pytest.approx(20.0)
        assert r.qaic == pytest.approx(24.0)
        assert r.qcaic == pytest.approx(22.0)

    def test_invalid_T(self):
        with pytest.raises(ValueError):
            criterion_values(-1.0, 0, 2)

    def test_criterion_parse(self):
        assert Criterion.parse("qcaic") is Criterion.QCAIC
        with pytest.raises(ValueError):
            Criterion.parse("aic")
        assert len(CRITERIA) == 3


class TestRanking:
    """Model ranking per criterion"""

    def test_lowest_first(self):
        reports = [report("imb1", 2, -120.0), report("imb2", 3, -100.0),
                   report("imb3", 4, -90.0)]
        ranking = rank_models(reports, "qaic")
        # QAIC 244, 206 and 188.
        assert [r.model for r in ranking] == ["imb3", "imb2", "imb1"]

    def test_penalty_can_change_the_winner(self):
        # 2-parameter gain of 2 beats the AIC penalty but not the BIC one.
        small = report("imb1", 2, -100.0)
        large = report("imb3", 4, -97.5)
        assert rank_models([small, large], "qaic")[0].model == "imb3"
        assert rank_models([small, large], "qbic")[0].model == "imb1"

    def test_ties_prefer_fewer_parameters_then_name(self):
        a = criteria(make_fit("zeta", 2, -100.0), d=2)
        b = criteria(make_fit("alpha", 3, -99.0), d=3)
        c = criteria(make_fit("beta", 3, -99.0), d=3)
        assert a.qaic == b.qaic == c.qaic
        ranking = rank_models([c, b, a], Criterion.QAIC)
        assert [r.model for r in ranking] == ["zeta", "alpha", "beta"]

    def test_mixed_T(self):
        with pytest.raises(MixedTError):
            rank_models([report("imb1", 2, -1.0, T=10),
                         report("imb2", 3, -1.0, T=20)], "qaic")

    def test_unusable_fits_are_excluded(self):
        reports = [report("imb1", 2, -120.0, converged=False),
                   report("imb2", 3, -100.0)]
        assert [r.model for r in rank_models(reports, "qbic")] == ["imb2"]

    def test_boundary_fits_stay_in(self):
        r = criteria(make_fit("imb1", 2, -5.0, converged=False,
                              boundary_hit=True))
        assert r.converged and r.boundary_hit
        assert rank_models([r], "qaic") == [r]


class TestSelectionCounts:
    """Selection counts across instruments"""

    def test_counts(self):
        by_instrument = {
            "A": [report("imb1", 2, -100.0, instrument="A"),
                  report("imb3", 4, -97.5, instrument="A")],
            "B": [report("imb1", 2, -100.0, instrument="B"),
                  report("imb3", 4, -90.0, instrument="B")],
            "C": [report("imb1", 2, -100.0, instrument="C", converged=False)],
        }
        counts = selection_counts(by_instrument)
        assert counts["qaic"] == {"imb3": 2}
        assert counts["qbic"] == {"imb1": 1, "imb3": 1}
        assert set(counts) == {"qaic", "qcaic", "qbic"}

    def test_no_instruments(self):
        with pytest.raises(ValueError):
            selection_counts({})


class TestTables:
    """Criteria tables"""

    def test_frame(self):
        frame = criteria_frame([report("imb2", 3, -100.0, instrument="B"),
                                report("imb1", 2, -120.0, instrument="A")])
        assert list(frame["instrument"]) == ["A", "B"]
        assert "H" in frame.columns and "objective" not in frame.columns
        assert frame.iloc[1]["H"] == -100.0

    def test_csv(self, tmp_path):
        path = tmp_path / "criteria.csv"
        write_criteria_csv([report("imb1", 2, -120.0)], path)
        df = pd.read_csv(path)
        assert list(df.columns) == ["instrument", "model", "d", "T", "H",
                                    "qaic", "qcaic", "qbic"]
        assert df.iloc[0]["qaic"] == pytest.approx(244.0)

    def test_join_with_accuracy(self):
        reports = [report("imb1", 2, -120.0), report("imb2", 3, -100.0)]
        accuracy = pd.DataFrame({"instrument": ["A", "A"],
                                 "model": ["imb2", "imb9"],
                                 "accuracy": [0.6, 0.7]})
        joined = join_with_accuracy(reports, accuracy)
        assert list(joined["model"]) == ["imb2"]
        assert joined.iloc[0]["accuracy"] == 0.6
