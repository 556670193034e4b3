import numpy as np
import orjson
import pytest
from typer.testing import CliRunner

from ratioflow.book.reader import write_events
from ratioflow.cli.app import app, exit_code
from ratioflow.cli.config import resolve_run_config
from ratioflow.errors import (
    CrossedBookError,
    InputFormatError,
    InsufficientSamplesError,
    MixedTError,
    ModelNotFoundError,
    RatioflowError,
)
from ratioflow.estimation.qmle import load_fit
from ratioflow.report import read_csv, read_json

from tests.conftest import random_rows, separable_rows, to_columns


runner = CliRunner()


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


@pytest.fixture
def events_file(tmp_path):
    def make(name="events.csv", seed=0, n_sessions=3, rows=None):
        if rows is None:
            rows, _ = random_rows(seed, n_sessions, 400)
        path = tmp_path / name
        write_events(to_columns(rows), path)
        return path
    return make


class TestExitCodes:
    """Error to exit code mapping"""

    @pytest.mark.parametrize("exc, code", [
        (MixedTError("x"), 4),
        (InsufficientSamplesError("x"), 3),
        (CrossedBookError("x"), 2),
        (ModelNotFoundError("x"), 2),
        (RatioflowError("x"), 1),
    ])
    def test_mapping(self, exc, code):
        assert exit_code(exc) == code


class TestIngestCheck:
    """ingest-check command"""

    def test_summary(self, events_file, tmp_path):
        path = events_file(n_sessions=3)
        out = tmp_path / "out"
        result = invoke("ingest-check", "-i", path, "--out", out)
        assert result.exit_code == 0, result.output
        report = read_json(out / "ingest.json")
        sessions = report["instruments"]["instrument"]["sessions"]
        assert [s["session_id"] for s in sessions] == [0, 1, 2]
        assert sum(s["events"] for s in sessions) == 1200
        assert report["config_hash"] and report["version"]

    def test_unmatched_glob_creates_nothing(self, tmp_path):
        out = tmp_path / "out"
        result = invoke("ingest-check", "-i", tmp_path / "nope*.csv",
                        "--out", out)
        assert result.exit_code == 2
        assert not out.exists()

    def test_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("session_id,timestamp_ns,kind,side,price_ticks,"
                        "quantity\n")
        result = invoke("ingest-check", "-i", path, "--out", tmp_path / "o")
        assert result.exit_code == 2

    def test_crossed_book(self, tmp_path):
        rows = [(0, 0, "L", "B", 1001, 5), (0, 1, "L", "A", 1000, 5)]
        path = tmp_path / "crossed.csv"
        write_events(to_columns(rows), path)
        result = invoke("ingest-check", "-i", path, "--out", tmp_path / "o")
        assert result.exit_code == 2


class TestFit:
    """fit command"""

    def test_windows(self, events_file, tmp_path):
        path = events_file(n_sessions=3)
        out = tmp_path / "out"
        result = invoke("fit", "-i", path, "--models", "imb1,imb1_e_es",
                        "--lookback", 1, "--out", out)
        assert result.exit_code == 0, result.output
        files = sorted(p.name for p in (out / "fits" / "instrument").iterdir())
        assert files == [f"{m}__w{k}.json" for m in ("imb1", "imb1_e_es")
                         for k in range(3)]
        fit = load_fit(out / "fits" / "instrument" / "imb1__w2.json")
        assert fit.T == 1 and fit.usable
        payload = read_json(out / "fits" / "instrument" / "imb1__w2.json")
        assert payload["sessions"] == [2]

    def test_tick_size_prices_the_spread(self, events_file, tmp_path):
        config = tmp_path / "run.yaml"
        config.write_text("tick_size: 0.5\n")
        out = tmp_path / "out"
        result = invoke("fit", "--config", config, "-i", events_file(),
                        "--models", "imb1_e_es", "--lookback", 1,
                        "--out", out)
        assert result.exit_code == 0, result.output
        payload = read_json(out / "fits" / "instrument" / "imb1_e_es__w0.json")
        assert payload["fit"]["spread_mean"] > 0
        assert payload["spread_mean_price"] == pytest.approx(
            0.5 * payload["fit"]["spread_mean"])

        result = invoke("backtest", "--config", config, "-i", events_file(),
                        "--models", "imb1", "--lookback", 1,
                        "--out", tmp_path / "bt")
        assert result.exit_code == 0, result.output
        report = read_json(tmp_path / "bt" / "backtest.json")["reports"][0]
        for window in report["windows"]:
            if window["spread_mean"] is not None:
                assert window["spread_mean_price"] == pytest.approx(
                    0.5 * window["spread_mean"])

    def test_unknown_model(self, events_file, tmp_path):
        result = invoke("fit", "-i", events_file(), "--models", "imb42",
                        "--out", tmp_path / "o")
        assert result.exit_code == 2

    def test_too_few_market_orders(self, events_file, tmp_path):
        rows = [(0, 0, "L", "A", 1001, 5), (0, 1, "L", "B", 999, 5),
                (0, 2, "M", "A", 1001, 1)]
        result = invoke("fit", "-i", events_file(rows=rows), "--models",
                        "imb1", "--out", tmp_path / "o")
        assert result.exit_code == 3


class TestSelect:
    """select command"""

    def test_counts_and_rerun(self, events_file, tmp_path):
        a = events_file("a.csv", seed=1)
        b = events_file("b.csv", seed=2)
        out = tmp_path / "out"
        args = ("select", "-i", f"A={a}", "-i", f"B={b}", "--models",
                "imb1,imb2,imb1_e_es", "--out", out)
        result = invoke(*args)
        assert result.exit_code == 0, result.output
        table = read_csv(out / "criteria.csv")
        assert len(table) == 6
        assert set(table["instrument"]) == {"A", "B"}
        assert (table["T"] == 3).all()
        np.testing.assert_allclose(table["qaic"],
                                   -2 * table["H"] + 2 * table["d"])
        selection = read_json(out / "selection.json")
        assert selection["instruments"] == 2
        for criterion in ("qaic", "qcaic", "qbic"):
            assert sum(selection["counts"][criterion].values()) == 2

        first = [(out / n).read_bytes() for n in ("criteria.csv",
                                                  "selection.json")]
        assert invoke(*args).exit_code == 0
        second = [(out / n).read_bytes() for n in ("criteria.csv",
                                                   "selection.json")]
        assert first == second

    def test_lday_models_cannot_be_ranked(self, events_file, tmp_path):
        result = invoke("select", "-i", events_file(), "--models",
                        "imb1,imb1_e_es_la1_2day", "--out", tmp_path / "o")
        assert result.exit_code == 4


class TestBacktest:
    """backtest command"""

    def test_separable(self, events_file, tmp_path):
        path = events_file(rows=separable_rows(0, 4, 20))
        out = tmp_path / "out"
        result = invoke("backtest", "-i", path, "--models", "imb1",
                        "--lookback", 1, "--audit", "--out", out)
        assert result.exit_code == 0, result.output
        df = read_csv(out / "accuracy.csv")
        assert len(df) == 1
        assert df.iloc[0]["accuracy"] == 1.0
        assert df.iloc[0]["n_pred"] == 60
        report = read_json(out / "backtest.json")
        assert len(report["reports"][0]["windows"]) == 3

    def test_sweep(self, events_file, tmp_path):
        out = tmp_path / "out"
        result = invoke("backtest", "-i", events_file(n_sessions=4),
                        "--models", "imb1", "--sweep", "--out", out)
        assert result.exit_code == 0, result.output
        df = read_csv(out / "accuracy.csv")
        assert list(df["l"]) == [1, 2, 3]
        assert df["n_pred"].nunique() == 1
        errors = read_json(out / "backtest.json")["errors"]
        assert "instrument/imb1" in errors

    def test_dump_predictions(self, events_file, tmp_path):
        config = tmp_path / "run.yaml"
        config.write_text("schedule:\n  dump_predictions: true\n")
        out = tmp_path / "out"
        result = invoke("backtest", "--config", config, "-i",
                        events_file(), "--models", "imb1", "--lookback", 1,
                        "--out", out)
        assert result.exit_code == 0, result.output
        dumped = out / "predictions" / "instrument__imb1__l1.ndjson"
        lines = dumped.read_bytes().splitlines()
        assert "meta" in orjson.loads(lines[0])
        assert len(lines) - 1 == read_csv(out / "accuracy.csv")["n_pred"][0]

    def test_every_task_failing(self, events_file, tmp_path):
        result = invoke("backtest", "-i", events_file(n_sessions=1),
                        "--models", "imb1", "--lookback", 1,
                        "--out", tmp_path / "o")
        assert result.exit_code == 3


class TestSimulate:
    """simulate command"""

    def write_config(self, tmp_path, **extra):
        simulation = {
            "model": "imb1_e_es",
            "vartheta_ma": [0.1, 1.0, 0.4, 0.2],
            "vartheta_mb": [0.0, -1.0, -0.2, 0.0],
            "baseline": {"kind": "constant", "rate": 1.0},
            "sessions": 3,
            "session_length": 60.0,
            **extra,
        }
        path = tmp_path / "sim.yaml"
        path.write_text(orjson.dumps({"simulation": simulation}).decode())
        return path

    def test_events_and_truth(self, tmp_path):
        out = tmp_path / "sim"
        result = invoke("simulate", "--config", self.write_config(tmp_path),
                        "--seed", 4, "--out", out)
        assert result.exit_code == 0, result.output
        manifest = read_json(out / "manifest.json")
        assert manifest["seed"] == 4
        assert manifest["theta_star"] == pytest.approx([0.1, 2.0, 0.6, 0.2])
        assert manifest["event_times"] == "thinned"
        truth = (out / "truth.ndjson").read_bytes().splitlines()
        assert len(truth) - 1 == manifest["market_orders"] > 0

        check = invoke("ingest-check", "-i", out / "events.csv",
                       "--out", tmp_path / "check")
        assert check.exit_code == 0, check.output
        ingest = read_json(tmp_path / "check" / "ingest.json")
        assert ingest["instruments"]["instrument"][
            "market_orders_in_window"] == manifest["market_orders"]

    def test_same_seed_same_stream(self, tmp_path):
        config = self.write_config(tmp_path)
        invoke("simulate", "--config", config, "--out", tmp_path / "a")
        invoke("simulate", "--config", config, "--out", tmp_path / "b")
        assert (tmp_path / "a" / "events.csv").read_bytes() == \
            (tmp_path / "b" / "events.csv").read_bytes()

    def test_labels_only(self, tmp_path):
        out = tmp_path / "sim"
        result = invoke("simulate", "--config", self.write_config(tmp_path),
                        "--labels-only", "--out", out)
        assert result.exit_code == 0, result.output
        with np.load(out / "dataset.npz") as data:
            assert data["X"].shape[1] == 4
        manifest = read_json(out / "manifest.json")
        assert 0.5 <= manifest["bayes_accuracy"] <= 1
        assert manifest["event_times"] == "baseline_only"

    def test_invalid_simulation(self, tmp_path):
        config = self.write_config(tmp_path, vartheta_ma=[1.0])
        result = invoke("simulate", "--config", config, "--out", tmp_path)
        assert result.exit_code == 2

    def test_missing_section(self, tmp_path):
        result = invoke("simulate", "--out", tmp_path / "o")
        assert result.exit_code == 2

    def test_too_few_replications(self, tmp_path):
        result = invoke("simulate", "--config", self.write_config(tmp_path),
                        "--normality", 10, "--out", tmp_path / "o")
        assert result.exit_code == 2


class TestReport:
    """report command"""

    def test_collects_outputs(self, events_file, tmp_path):
        path = events_file()
        out = tmp_path / "out"
        assert invoke("select", "-i", path, "--models", "imb1,imb2",
                      "--out", out).exit_code == 0
        assert invoke("backtest", "-i", path, "--models", "imb1,imb2",
                      "--lookback", 1, "--out", out).exit_code == 0
        assert invoke("fit", "-i", path, "--models", "imb1",
                      "--out", out).exit_code == 0
        result = invoke("report", "--out", out)
        assert result.exit_code == 0, result.output
        summary = read_json(out / "summary.json")
        assert {"fits", "criteria", "selection", "accuracy"} <= set(summary)
        assert len(summary["accuracy"]) == 2
        assert len(summary["config_hashes"]) == 3

    def test_missing_directory(self, tmp_path):
        assert invoke("report", "--out", tmp_path / "nope").exit_code == 2


class TestRunConfig:
    """Run configuration precedence"""

    def test_precedence(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RATIOFLOW_JOBS", "3")
        monkeypatch.setenv("RATIOFLOW_SEED", "9")
        assert resolve_run_config().jobs == 3

        path = tmp_path / "run.toml"
        path.write_text('jobs = 2\n[schedule]\nlookback_days = 3\n')
        cfg = resolve_run_config(path)
        assert (cfg.jobs, cfg.seed) == (2, 9)

        cfg = resolve_run_config(path, {"jobs": 4, "seed": None,
                                        "schedule": {"audit": True}})
        assert (cfg.jobs, cfg.seed) == (4, 9)
        assert cfg.schedule.lookback_days == 3 and cfg.schedule.audit

    def test_inputs_list(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("instrument: XYZ\ninputs: [a.csv, b.csv]\n")
        assert resolve_run_config(path).inputs == {"XYZ": ["a.csv", "b.csv"]}

    def test_invalid(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("jobs: 0\n")
        with pytest.raises(InputFormatError):
            resolve_run_config(path)

    def test_hash_tracks_content(self):
        a = resolve_run_config(overrides={"models": ["imb1"]})
        b = resolve_run_config(overrides={"models": ["imb2"]})
        assert a.hash != b.hash
        assert a.hash == resolve_run_config(overrides={"models": ["imb1"]}).hash
