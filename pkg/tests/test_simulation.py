import numpy as np
import pytest
from scipy.special import ndtri

from wassrem import InvalidArgumentError, QuantileGrid
from wassrem.simulation import (
    TRANSPORT_KS,
    SimulationParams,
    SimulationScenario,
    ise,
    loglog_slope,
    query_grid,
    run_once,
    run_study,
    sample_unit,
    sd_fn,
    simulate_dataset,
    sparse_unit_recovery,
    transport_map,
    true_quantile,
)

PARAMS = SimulationParams()


class TestTruth:
    def test_setting_one_at_zero(self):
        q = true_quantile("I", PARAMS, 0.0, 400)
        np.testing.assert_allclose(q.values, 3.0 * ndtri((np.arange(400) + 0.5) / 400), atol=1e-12)

    def test_setting_two_matches_one_at_zero(self):
        np.testing.assert_array_equal(
            true_quantile("II", PARAMS, 0.0, 100).values, true_quantile("I", PARAMS, 0.0, 100).values
        )

    def test_setting_one_at_one(self):
        q = true_quantile("I", PARAMS, 1.0, 1000)
        mid = q.values
        # symmetric Gaussian grid: mean is the average, sd follows from the midpoint quantiles
        assert mid.mean() == pytest.approx(3.0, abs=1e-12)
        base = ndtri((np.arange(1000) + 0.5) / 1000)
        np.testing.assert_allclose((mid - 3.0) / base[base != 0].size * base.size, (mid - 3.0), atol=0)
        np.testing.assert_allclose(mid, 3.0 + 3.5 * base, atol=1e-12)

    def test_transported_settings_share_truth(self):
        for z in np.linspace(-1, 1, 20):
            np.testing.assert_array_equal(true_quantile("III", PARAMS, z).values, true_quantile("I", PARAMS, z).values)
            np.testing.assert_array_equal(true_quantile("IV", PARAMS, z).values, true_quantile("II", PARAMS, z).values)

    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            true_quantile("I", PARAMS, 1.5)

    def test_rejects_bad_setting(self):
        with pytest.raises(InvalidArgumentError):
            true_quantile("V", PARAMS, 0.0)

    def test_rejects_nonpositive_sd(self):
        with pytest.raises(InvalidArgumentError):
            SimulationParams(sigma0=0.4, beta=0.5)


class TestTransport:
    def test_maps_average_to_identity(self):
        x = np.linspace(-2 * np.pi, 2 * np.pi, 1000)
        avg = sum(transport_map(k, x) for k in TRANSPORT_KS) / 4
        assert np.max(np.abs(avg - x)) <= 1e-15

    @pytest.mark.parametrize("k", TRANSPORT_KS)
    def test_monotone(self, k):
        x = np.linspace(-20, 20, 100001)
        assert np.all(np.diff(transport_map(k, x)) >= 0)

    def test_zero_index_rejected(self):
        with pytest.raises(InvalidArgumentError):
            transport_map(0, 1.0)

    def test_opposite_maps_average_to_untransported(self):
        m_plus, d_plus = sample_unit("III", PARAMS, 0.3, np.random.default_rng(8), 40.0, k=1)
        m_minus, d_minus = sample_unit("III", PARAMS, 0.3, np.random.default_rng(8), 40.0, k=-1)
        raw, _ = sample_unit("I", PARAMS, 0.3, np.random.default_rng(8), 40.0)
        assert d_plus.k == 1 and d_minus.k == -1
        # sorting is preserved by monotone maps, so pairs line up index by index
        np.testing.assert_allclose((m_plus.values + m_minus.values) / 2, raw.values, atol=1e-12)


class TestSampling:
    @pytest.mark.parametrize("setting,z", [("I", 0.7), ("II", 0.25), ("I", -1.0)])
    def test_gamma_mean_and_variance(self, setting, z):
        rng = np.random.default_rng(123)
        draws = np.array([sample_unit(setting, PARAMS, z, rng, 0.0)[1].sigma for _ in range(100_000)])
        target = float(sd_fn(setting, PARAMS, z))
        assert draws.mean() == pytest.approx(target, rel=0.01)
        # shape * scale^2 = (mu^2/kappa) * (kappa/mu)^2 = kappa
        assert draws.var() == pytest.approx(PARAMS.kappa, rel=0.05)

    def test_zero_tau_fixes_mean(self):
        params = SimulationParams(tau=0.0)
        for seed in range(5):
            _, d = sample_unit("I", params, 0.4, np.random.default_rng(seed), 5.0)
            assert d.eta == pytest.approx(1.2)

    def test_empty_unit(self):
        m, d = sample_unit("I", PARAMS, 0.0, np.random.default_rng(0), 5.0, n_obs=0)
        assert m is None and d.n_obs == 0

    def test_dataset_sizes(self):
        data = simulate_dataset("IV", PARAMS, 40, np.random.default_rng(1), forced_sizes={3: 1})
        assert len(data.measures) == 40
        assert data.measures[3].size == 1
        assert all(d.k in TRANSPORT_KS for d in data.draws)
        assert np.all((data.z >= -1) & (data.z <= 1))

    def test_unit_rate_multipliers(self):
        rates = np.r_[np.full(10, 0.1), np.full(10, 4.0)]
        data = simulate_dataset("I", PARAMS, 20, np.random.default_rng(2), 1.0, unit_rates=rates)
        sizes = np.array([d.n_obs for d in data.draws])
        assert sizes[:10].mean() < sizes[10:].mean()


class TestIse:
    def test_zero_for_truth(self):
        truth = lambda z: true_quantile("I", PARAMS, z, 50)  # noqa: E731
        assert ise(truth, truth) == 0.0

    def test_location_shift(self):
        c = 0.7
        truth = lambda z: true_quantile("II", PARAMS, z, 50)  # noqa: E731
        shifted = lambda z: QuantileGrid(truth(z).values + c)  # noqa: E731
        assert ise(shifted, truth) == pytest.approx(2 * c * c, rel=1e-12)

    def test_query_grid(self):
        g = query_grid(100)
        assert g.size == 100
        assert g[0] == pytest.approx(-0.99) and g[-1] == pytest.approx(0.99)


class TestStudy:
    def test_run_is_deterministic(self):
        sc = SimulationScenario(setting="III", n_ladder=(30,), runs=1, master_seed=42)
        assert run_once(sc, 30, 0) == run_once(sc, 30, 0)

    def test_runs_differ_across_indices(self):
        sc = SimulationScenario(setting="I", n_ladder=(30,), runs=2, two_step=False)
        assert run_once(sc, 30, 0).ise_rem != run_once(sc, 30, 1).ise_rem

    def test_study_summary(self):
        sc = SimulationScenario(setting="II", n_ladder=(40, 80), runs=3, master_seed=1, compare_modes=True)
        res = run_study(sc)
        assert [(r.n, r.run_index) for r in res.runs] == [(40, 0), (40, 1), (40, 2), (80, 0), (80, 1), (80, 2)]
        methods = res.summary["methods"]
        assert set(methods) == {"rem", "two-step", "rem-other-mode"}
        assert methods["rem"]["by_n"]["40"]["count"] == 3
        assert "slope_mean" in methods["rem"]

    def test_worker_count_does_not_matter(self):
        sc = SimulationScenario(setting="IV", n_ladder=(30,), runs=3, master_seed=5)
        assert run_study(sc, workers=1).runs == run_study(sc, workers=2).runs

    def test_scenario_validation(self):
        with pytest.raises(InvalidArgumentError):
            SimulationScenario(n_ladder=(1,))
        with pytest.raises(InvalidArgumentError):
            SimulationScenario(runs=0)
        assert SimulationScenario(setting="ii").mode == "local"
        assert SimulationScenario(setting="III").mode == "global"

    def test_loglog_slope(self):
        ns = [10, 20, 40]
        assert loglog_slope(ns, [1 / n for n in ns]) == pytest.approx(-1.0)


def test_sparse_unit_recovery_small():
    out = sparse_unit_recovery(n=60, seed=3)
    assert out.two_step_excluded
    assert np.isfinite(out.rem_distance)
