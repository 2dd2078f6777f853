import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snnfilter.config import SilencingSettings
from snnfilter.harness import (
    FilterRun,
    RunResult,
    aggregate,
    combined_rmse,
    execute_runs,
    monte_carlo,
    neuron_sweep,
    profile_table,
    run_seeds,
    runtime_profile,
    sigma_bounds_check,
    single_run,
    spike_efficiency,
)
from snnfilter.scn import SpikeRaster


@pytest.fixture(scope="module")
def short_cfg(vdp_cfg):
    return vdp_cfg.with_overrides(T=2.0, mc_runs=3, window=1.0, coverage_window=1.0)


@pytest.fixture(scope="module")
def short_runs(short_cfg):
    return execute_runs(short_cfg, range(3))


class TestMetrics:
    def test_combined_rmse_examples(self):
        assert combined_rmse([3.0, 4.0]) == 5.0
        assert combined_rmse([0.0043, 0.0046]) == pytest.approx(0.0063, abs=5e-5)
        assert combined_rmse([]) == 0.0
        with pytest.raises(ValueError):
            combined_rmse([0.1, -0.1])

    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=8))
    def test_combined_rmse_bounds(self, v):
        c = combined_rmse(v)
        assert max(v) <= c * (1 + 1e-12) + 1e-300
        assert c <= sum(v) * (1 + 1e-12) + 1e-300

    def test_sigma_bounds(self):
        P = np.tile(np.eye(2), (4, 1, 1))
        assert sigma_bounds_check(np.zeros((4, 2)), P) == 1.0
        assert sigma_bounds_check(np.full((4, 2), 3.5), P) == 0.0
        assert sigma_bounds_check(np.array([[0.0, 4.0]] * 4), P) == 0.5
        assert sigma_bounds_check(np.zeros((0, 2)), np.zeros((0, 2, 2))) == 1.0

    def test_spike_efficiency(self):
        assert spike_efficiency(34342, 100, 2000) == pytest.approx(0.17171)
        assert spike_efficiency(0, 0, 0) == 0.0
        ras = SpikeRaster(N=2, n_steps=2, dt=0.1)
        for k in range(2):
            ras.record(k, np.array([3, 1]))
        assert ras.total_spikes == 8
        assert spike_efficiency(ras) == 1.0
        with pytest.raises(ValueError):
            spike_efficiency(10)


class TestSeeds:
    def test_independent_of_batch(self):
        assert run_seeds(7, 3) == run_seeds(7, 3)
        seeds = {run_seeds(7, k) for k in range(50)}
        assert len(seeds) == 50
        assert run_seeds(7, 0) != run_seeds(8, 0)


class TestAggregation:
    def test_single_run_rmse_is_absolute_error(self, short_cfg):
        cfg = short_cfg.with_overrides(mc_runs=1)
        rec, runs = monte_carlo(cfg, keep_runs=True)
        for f in cfg.filters:
            err = np.abs(runs[0].truth.states - runs[0].filters[f].estimates)
            np.testing.assert_allclose(rec[f].rmse, err, rtol=1e-14)

    def test_hand_aggregation(self, short_cfg, short_runs):
        rec = aggregate(short_cfg, short_runs)
        times = short_runs[0].truth.times
        mask = times >= short_cfg.T - short_cfg.window - 1e-9
        for f in short_cfg.filters:
            errs = [r.truth.states - r.filters[f].estimates for r in short_runs]
            rmse = np.sqrt(sum(e**2 for e in errs) / 3)
            np.testing.assert_allclose(rec[f].rmse, rmse, rtol=1e-13)
            np.testing.assert_allclose(rec[f].window_rmse, rmse[mask].mean(axis=0), rtol=1e-13)
            assert rec[f].delta_x == pytest.approx(np.linalg.norm(rmse[mask].mean(axis=0)))
            assert rec[f].runs_used == 3 and rec[f].divergences == 0
        assert rec["ekf"].spikes_total == 0 and np.isnan(rec["ekf"].spike_fraction)
        assert rec["snn_emsif"].spikes_total == sum(r.filters["snn_emsif"].raster.total_spikes for r in short_runs)

    def test_permutation_invariant(self, short_cfg, short_runs):
        a = aggregate(short_cfg, short_runs)
        b = aggregate(short_cfg, short_runs[::-1])
        for f in short_cfg.filters:
            assert a[f].rmse.tobytes() == b[f].rmse.tobytes()
            assert a[f].coverage == b[f].coverage

    def test_divergent_runs_excluded(self, short_cfg, short_runs):
        broken = RunResult(
            99, short_runs[0].seeds, short_runs[0].truth,
            {f: FilterRun(None, None, diverged=True) for f in short_cfg.filters},
        )
        a = aggregate(short_cfg, short_runs)
        b = aggregate(short_cfg, short_runs + [broken])
        for f in short_cfg.filters:
            np.testing.assert_array_equal(a[f].rmse, b[f].rmse)
            assert b[f].divergences == 1 and b[f].runs_used == 3
        only = aggregate(short_cfg, [broken])
        assert only.all_diverged and np.isnan(only["ekf"].delta_x)

    def test_empty(self, short_cfg):
        with pytest.raises(ValueError):
            aggregate(short_cfg, [])

    def test_parallel_matches_serial(self, short_cfg, short_runs):
        par = execute_runs(short_cfg, range(3), workers=2)
        for s, p in zip(short_runs, par):
            for f in short_cfg.filters:
                assert s.filters[f].estimates.tobytes() == p.filters[f].estimates.tobytes()

    def test_silencing_labels(self, vdp_cfg):
        cfg = vdp_cfg.with_overrides(T=2.0, filters=("ekf", "snn_emsif"))
        run = single_run(cfg, 0, SilencingSettings(0.5, 1.0))
        assert sorted(run.filters) == ["ekf", "snn_emsif", "snn_emsif_silenced"]
        a, b = run.filters["snn_emsif"], run.filters["snn_emsif_silenced"]
        np.testing.assert_array_equal(a.estimates[:100], b.estimates[:100])
        k, i = b.raster.as_arrays()
        late = i[k >= 100]
        assert np.unique(late).size <= 50

    def test_emsif_coverage(self, vdp_cfg):
        rec = monte_carlo(vdp_cfg.with_overrides(mc_runs=5, filters=("emsif",)))
        assert rec["emsif"].coverage > 0.95


class TestSweepAndProfile:
    def test_single_point_sweep(self, short_cfg):
        curve = neuron_sweep(short_cfg.with_overrides(mc_runs=1), [60])
        assert sorted(curve) == ["snn_ekf", "snn_emsif"]
        assert all(len(v) == 1 and v[0][0] == 60 and np.isfinite(v[0][1]) for v in curve.values())

    def test_sweep_without_snn_filters(self, short_cfg):
        assert neuron_sweep(short_cfg.with_overrides(filters=("ekf",)), [50]) == {}
        with pytest.raises(ValueError):
            neuron_sweep(short_cfg.with_overrides(sweep=None))

    def test_empty_profile(self, short_cfg):
        assert runtime_profile(short_cfg, N_list=[]) == []
        assert runtime_profile(short_cfg, filters=[]) == []

    def test_profile_entries(self, short_cfg):
        entries = runtime_profile(short_cfg, N_list=[20, 40], repeats=2, steps=20)
        assert len(entries) == 6
        for e in entries:
            assert len(e.repeat_means) == 2 and e.mean == min(e.repeat_means) and e.p95 > 0
        table = profile_table(entries)
        assert sorted(table) == ["snn_ekf", "snn_emsif", "snn_emsif_star"]
        assert sorted(table["snn_ekf"]) == [20, 40]
