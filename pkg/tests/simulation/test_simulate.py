import numpy as np
import orjson
import pytest

from ratioflow.book.fast import replay_columns
from ratioflow.errors import ConfigInvalid
from ratioflow.estimation.qmle import fit_qmle
from ratioflow.estimation.ratio import ratio_ma
from ratioflow.features.dataset import MA_CODE, build_dataset, feature_matrix
from ratioflow.simulation.config import (
    OUParams,
    OUPaths,
    RegimeShift,
)
from ratioflow.simulation.labels import simulate_labels_only
from ratioflow.simulation.montecarlo import monte_carlo_normality
from ratioflow.simulation.paths import ou_grid
from ratioflow.simulation.simulate import (
    bayes_accuracy,
    combine,
    envelope_factor,
    simulate,
    simulate_session,
    write_ground_truth,
)


class TestOUGrid:
    """OU covariate paths"""

    def test_stationary_moments(self, rng):
        y = ou_grid(0.3, 0.5, 0.5, 1.0, 200_000, rng)
        assert y.mean() == pytest.approx(0.3, abs=0.02)
        assert y.var() == pytest.approx(0.25, abs=0.01)
        c = y - y.mean()
        rho = (c[1:] * c[:-1]).mean() / c.var()
        assert rho == pytest.approx(np.exp(-0.5), abs=0.01)

    def test_constant_without_noise(self, rng):
        y = ou_grid(1.5, 0.5, 0.0, 1.0, 10, rng)
        assert np.all(y == 1.5)


class TestThinning:
    """Thinning simulation"""

    def test_envelope_bound(self, rng):
        ma, mb = rng.normal(size=4), rng.normal(size=4)
        bound = envelope_factor(ma, mb)
        for _ in range(1000):
            x = rng.uniform(-1, 1, 4)
            assert np.exp(ma @ x) + np.exp(mb @ x) <= bound

    def test_zero_parameters_give_poisson_counts(self, sim_config):
        config = sim_config.model_copy(update={
            "vartheta_ma": [0.0] * 4, "vartheta_mb": [0.0] * 4,
        })
        _, truth = combine(simulate(config), 4)
        expected = 2.0 * 1.0 * 200.0 * 4
        assert abs(len(truth) - expected) < 5 * np.sqrt(expected)
        share = float(np.mean(truth.side == MA_CODE))
        assert share == pytest.approx(0.5, abs=0.05)
        assert np.all(truth.r_ma == 0.5)
        assert bayes_accuracy(truth.r_ma) == 0.5

    def test_reproducible(self, sim_config):
        a = simulate_session(sim_config, 1)
        b = simulate_session(sim_config, 1)
        np.testing.assert_array_equal(a.events.timestamp, b.events.timestamp)
        np.testing.assert_array_equal(a.truth.X, b.truth.X)
        c = simulate_session(sim_config, 1, replication=1)
        assert len(c.truth) != len(a.truth) or \
            not np.array_equal(c.truth.X, a.truth.X)

    def test_ratios_follow_theta(self, sim_config):
        _, truth = combine(simulate(sim_config), 4)
        np.testing.assert_allclose(
            truth.r_ma, ratio_ma(sim_config.theta_star(), truth.X),
            rtol=0, atol=1e-15)


class TestPipelineIdentity:
    """Simulated books replayed through the pipeline"""

    def test_book_driven_features_survive_replay(self, book_sim_config):
        config = book_sim_config
        columns, truth = combine(simulate(config), config.spec.dimension)
        panel = replay_columns(columns)
        assert len(panel) == len(truth) > 0
        np.testing.assert_array_equal(panel.event_index, truth.event_index)
        np.testing.assert_array_equal(panel.side, truth.side)
        X = feature_matrix(config.spec, panel, config.spread_threshold)
        np.testing.assert_allclose(X, truth.X, rtol=0, atol=1e-12)

    def test_ou_stream_replays(self, sim_config):
        columns, truth = combine(simulate(sim_config), 4)
        panel = replay_columns(columns)
        assert len(panel) == len(truth)
        np.testing.assert_array_equal(panel.side, truth.side)
        assert list(np.unique(columns.session_id)) == [0, 1, 2, 3]

    def test_recovers_parameters(self, book_sim_config):
        config = book_sim_config.model_copy(update={"sessions": 30})
        columns, _ = combine(simulate(config), config.spec.dimension)
        data = build_dataset(config.spec, replay_columns(columns),
                             spread_mean=config.spread_threshold)
        fit = fit_qmle(data)
        assert fit.converged
        z = (fit.theta - config.theta_star()) / fit.std_errors
        assert np.all(np.abs(z) < 5)

    def test_ground_truth_file(self, sim_config, tmp_path):
        _, truth = combine(simulate(sim_config), 4)
        path = tmp_path / "truth.ndjson"
        write_ground_truth(truth, path, meta={"seed": 11})
        lines = path.read_bytes().splitlines()
        assert orjson.loads(lines[0]) == {"meta": {"seed": 11}}
        assert len(lines) == len(truth) + 1
        row = orjson.loads(lines[1])
        assert row["side"] in ("MA", "MB") and len(row["x"]) == 4
        assert row["event_index"] == int(truth.event_index[0])


class TestLabelsOnly:
    """Label-only simulation"""

    def test_sign_covariates_follow_drawn_sides(self, sim_config):
        samples = simulate_labels_only(sim_config)
        data = samples.dataset
        assert len(data) > 0 and data.n_sessions == 4
        expected = np.where(data.prev_side == MA_CODE, -1.0, 1.0)
        np.testing.assert_array_equal(data.X[:, 2], expected)
        assert np.all(np.abs(data.X[:, 3]) == 1.0)
        assert np.all(np.abs(data.X[:, 1]) <= 1.0)
        np.testing.assert_allclose(
            samples.r_ma, ratio_ma(samples.theta_star, data.X), atol=1e-15)

    def test_reproducible(self, sim_config):
        a = simulate_labels_only(sim_config).dataset
        b = simulate_labels_only(sim_config).dataset
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.is_ma, b.is_ma)
        c = simulate_labels_only(sim_config, replication=3).dataset
        assert len(c) != len(a) or not np.array_equal(c.is_ma, a.is_ma)

    def test_lags_read_earlier_orders(self, sim_config):
        config = sim_config.model_copy(update={
            "model": "imb1_la1",
            "vartheta_ma": [0.0, 1.0, 0.5],
            "vartheta_mb": [0.0, -1.0, 0.0],
        })
        data = simulate_labels_only(config).dataset
        same = data.session_id[1:] == data.session_id[:-1]
        np.testing.assert_array_equal(data.X[1:, 2][same], data.X[:-1, 1][same])

    def test_regime_shift(self, sim_config):
        config = sim_config.model_copy(update={
            "regime_shift": RegimeShift(session=2,
                                        vartheta_ma=[0.0, -1.0, 0.0, 0.0],
                                        vartheta_mb=[0.0, 1.0, 0.0, 0.0]),
        })
        samples = simulate_labels_only(config)
        data = samples.dataset
        for k in range(4):
            rows = data.session_id == k
            np.testing.assert_allclose(
                samples.r_ma[rows], ratio_ma(config.theta_star(k), data.X[rows]),
                atol=1e-15)

    def test_needs_ou_paths(self, book_sim_config):
        with pytest.raises(ConfigInvalid):
            simulate_labels_only(book_sim_config)

    def test_estimates_are_consistent(self, sim_config):
        config = sim_config.model_copy(update={
            "sessions": 50,
            "covariate_dynamics": OUPaths(imbalance=OUParams(vol=1.0)),
        })
        samples = simulate_labels_only(config)
        fit = fit_qmle(samples.dataset)
        np.testing.assert_allclose(fit.theta, samples.theta_star, atol=0.2)


class TestMonteCarlo:
    """Normality study"""

    def test_needs_enough_replications(self, sim_config):
        with pytest.raises(ValueError):
            monte_carlo_normality(sim_config, 99)

    def test_needs_fixed_theta(self, sim_config):
        config = sim_config.model_copy(update={
            "regime_shift": RegimeShift(session=1, vartheta_ma=[0.0] * 4,
                                        vartheta_mb=[0.0] * 4),
        })
        with pytest.raises(ValueError):
            monte_carlo_normality(config, 100)
