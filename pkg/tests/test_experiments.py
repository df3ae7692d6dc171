"""
Tests for the experiment drivers on small budgets: reductions between
schemes under common random numbers, determinism and traces.
"""

import pytest

from slice_core.algorithms.embb_power_control import max_target_snr, orth_rate, target_snr_for_rate
from slice_core.experiments import (
    MmtcErrorModel,
    UrllcRateModel,
    gtar_grid,
    require_feasible,
    run_beta_sweep_mmtc,
    run_beta_sweep_urllc,
    run_embb_check,
    run_frontier_mmtc,
    run_region_urllc,
    run_single_trial_trace,
    run_user_region_urllc,
)
from slice_core.slice_schemas import ConfigurationError, FrontierPoint, InfeasibleSearchError, ScenarioConfig
from slice_core.telemetry.collector import ProgressCollector


# ============================================================================
# Fixtures
# ============================================================================

@pytest.fixture
def quiet():
    return ProgressCollector(verbose=False, keep_history=True)


@pytest.fixture
def urllc_config():
    return ScenarioConfig(scheme="rsma", gamma_b_db=10.0, gamma_u_db=20.0, f_total=2, f_urllc=1,
                          n_urllc=2, eps_u=1e-2, trials=2000, r_b_points=3,
                          beta_grid=[0.0, 0.5, 1.0], rate_tol=1e-2, seed=4)


@pytest.fixture
def mmtc_config():
    return ScenarioConfig(scenario="embb-mmtc", scheme="rsma", gamma_b_db=20.0, gamma_m_db=5.0,
                          f_total=1, f_urllc=0, n_urllc=0, eps_m=0.1, r_m=0.04, r_b=1.0,
                          trials=1000, r_b_points=3, gtar_grid_size=3, beta_grid=[0.0, 1.0],
                          alpha_grid_size=5, lambda_upper=40.0, lambda_tol=1.0, seed=6)


def by_series(points, series):
    return [point for point in points if point.series == series]


# ============================================================================
# Helpers
# ============================================================================

class TestHelpers:

    def test_gtar_grid_zero_rate(self):
        assert gtar_grid(0.0, 1.5, 5) == [0.0]

    def test_gtar_grid_out_of_reach(self):
        assert gtar_grid(5.0, 1.5, 5) == []

    def test_gtar_grid_span(self):
        grid = gtar_grid(1.0, 15.0, 5)
        assert grid[0] == pytest.approx(target_snr_for_rate(1.0))
        assert grid[-1] == pytest.approx(15.0)
        assert grid == sorted(grid)
        assert len(grid) == 5

    def test_require_feasible(self):
        require_feasible([FrontierPoint(series="oma", y=0.0), FrontierPoint(series="noma", y=0.0, feasible=False)])
        with pytest.raises(InfeasibleSearchError):
            require_feasible([FrontierPoint(series="noma", y=0.0, feasible=False)])

    def test_urllc_targets(self, urllc_config):
        assert UrllcRateModel(urllc_config, "oma", f_u=1).targets() == (1e-2,)
        assert UrllcRateModel(urllc_config, "noma", g_tar=0.0).targets() == (1e-2,)
        assert UrllcRateModel(urllc_config, "noma", g_tar=1.0).targets() == (1e-2, 1e-3)

    def test_mmtc_targets(self, mmtc_config):
        assert MmtcErrorModel(mmtc_config, "oma", r_m=0.04).targets() == (0.1,)
        assert MmtcErrorModel(mmtc_config, "noma", r_m=0.04, g_tar=1.0, r_b=0.5).targets() == (0.1, 1e-3)

    def test_mmtc_zero_arrivals(self, mmtc_config):
        model = MmtcErrorModel(mmtc_config, "noma", r_m=0.04, g_tar=1.0, r_b=0.5)
        mmtc, embb = model.error_at(0.0, 500)
        assert mmtc.p_hat == 0.0
        assert embb.p_hat == 0.0


# ============================================================================
# eMBB + URLLC
# ============================================================================

class TestRegionUrllc:

    def test_oma_sweeps_frequency_split(self, urllc_config, quiet):
        points = run_region_urllc(urllc_config.with_updates(scheme="oma"), progress=quiet)
        r_orth = orth_rate(10.0, 1e-3)
        assert [point.x for point in points] == pytest.approx([2 * r_orth, r_orth, 0.0])
        assert points[0].y == 0.0
        assert points[1].y < points[2].y

    def test_noma_at_zero_embb_rate_matches_full_oma(self, urllc_config, quiet):
        oma = run_region_urllc(urllc_config.with_updates(scheme="oma"), progress=quiet)
        noma = run_region_urllc(urllc_config.with_updates(scheme="noma"), progress=quiet)
        assert noma[0].x == 0.0
        assert noma[0].y == oma[-1].y

    def test_rsma_not_worse_than_noma(self, urllc_config, quiet):
        noma = run_region_urllc(urllc_config.with_updates(scheme="noma"), progress=quiet)
        rsma = run_region_urllc(urllc_config, progress=quiet)
        tolerance = urllc_config.rate_tol * urllc_config.n_urllc
        for low, high in zip(noma, rsma):
            assert high.y >= low.y - tolerance
            assert high.best_beta is not None

    def test_independent_of_workers(self, urllc_config, quiet):
        serial = run_region_urllc(urllc_config, workers=1, progress=quiet)
        parallel = run_region_urllc(urllc_config.with_updates(trials=9000), workers=3, progress=quiet)
        again = run_region_urllc(urllc_config.with_updates(trials=9000), workers=1, progress=quiet)
        assert parallel == again
        assert len(serial) == urllc_config.r_b_points

    def test_progress_events(self, urllc_config, quiet):
        run_region_urllc(urllc_config.with_updates(scheme="oma"), progress=quiet)
        assert len(quiet.history) == urllc_config.f_total + 1


class TestBetaSweepUrllc:

    def test_rows(self, urllc_config, quiet):
        points = run_beta_sweep_urllc(urllc_config, progress=quiet)
        assert [point.series for point in points] == ["oma", "noma", "rsma", "rsma", "rsma"]
        assert [point.x for point in by_series(points, "rsma")] == [0.0, 0.5, 1.0]

    def test_beta_one_matches_noma_baseline(self, urllc_config, quiet):
        points = run_beta_sweep_urllc(urllc_config, progress=quiet)
        noma = by_series(points, "noma")[0]
        rsma_one = by_series(points, "rsma")[-1]
        assert rsma_one.y == noma.y
        assert rsma_one.p_hat_service == noma.p_hat_service

    def test_rate_above_orthogonal_rejected(self, urllc_config, quiet):
        with pytest.raises(ConfigurationError):
            run_beta_sweep_urllc(urllc_config.with_updates(r_b=10.0), progress=quiet)


class TestUserRegionUrllc:

    def test_rows_and_corners(self, urllc_config, quiet):
        points = run_user_region_urllc(urllc_config, progress=quiet)
        assert len(points) == len(urllc_config.beta_grid) + 2
        corners = by_series(points, "noma")
        assert len(corners) == 2
        assert all(point.best_beta is None for point in corners)

    def test_needs_rsma(self, urllc_config, quiet):
        with pytest.raises(ConfigurationError):
            run_user_region_urllc(urllc_config.with_updates(scheme="noma"), progress=quiet)


# ============================================================================
# eMBB + mMTC
# ============================================================================

class TestFrontierMmtc:

    def test_oma_frontier(self, mmtc_config, quiet):
        config = mmtc_config.with_updates(scheme="oma")
        points = run_frontier_mmtc(config, progress=quiet)
        assert len(points) == config.alpha_grid_size
        assert points[-1].y == 0.0
        assert points[-1].x == pytest.approx(orth_rate(100.0, 1e-3))
        for earlier, later in zip(points, points[1:]):
            assert later.y <= earlier.y + config.lambda_tol

    def test_noma_frontier(self, mmtc_config, quiet):
        config = mmtc_config.with_updates(scheme="noma")
        points = run_frontier_mmtc(config, progress=quiet)
        assert len(points) == config.r_b_points
        assert points[0].x == 0.0
        assert points[0].best_gtar == 0.0
        assert all(point.best_beta is None for point in points)

    def test_needs_mmtc_scenario(self, urllc_config, quiet):
        with pytest.raises(ConfigurationError):
            run_frontier_mmtc(urllc_config, progress=quiet)


class TestBetaSweepMmtc:

    def test_extreme_splits_match_noma(self, mmtc_config, quiet):
        points = run_beta_sweep_mmtc(mmtc_config, progress=quiet)
        assert [point.series for point in points] == ["oma", "noma", "rsma", "rsma"]
        noma = by_series(points, "noma")[0]
        for row in by_series(points, "rsma"):
            assert row.y == noma.y
            assert row.best_gtar == noma.best_gtar

    def test_needs_fixed_rate(self, mmtc_config, quiet):
        with pytest.raises(ConfigurationError):
            run_beta_sweep_mmtc(mmtc_config.with_updates(r_b=None), progress=quiet)

    def test_rate_above_orthogonal_is_infeasible(self, mmtc_config, quiet):
        points = run_beta_sweep_mmtc(mmtc_config.with_updates(r_b=6.0), progress=quiet)
        assert not any(point.feasible for point in points)
        with pytest.raises(InfeasibleSearchError):
            require_feasible(points)


# ============================================================================
# Trace and eMBB Check
# ============================================================================

class TestTrace:

    def test_noma_urllc(self):
        config = ScenarioConfig(scheme="noma", f_total=1, f_urllc=1)
        text = run_single_trial_trace(config, [[10 ** 2.1], [10 ** 1.9]], g_tar=10.0)
        assert "U1=1.258" in text
        assert "U2=3.039" in text
        assert "order: U1 -> U2" in text

    def test_rsma_urllc(self):
        config = ScenarioConfig(scheme="rsma", f_total=1, f_urllc=1)
        text = run_single_trial_trace(config, [[10 ** 2.1], [10 ** 1.9]], g_tar=10.0, beta=0.8)
        assert "U1.1" in text and "U1.2" in text
        assert "U1=2.62" in text

    def test_rsma_mmtc(self):
        config = ScenarioConfig(scenario="embb-mmtc", scheme="rsma", f_total=1, f_urllc=0,
                                n_urllc=0, r_m=1.0, r_b=2.0)
        text = run_single_trial_trace(config, [2.0], g_tar=4.0, beta=0.5)
        assert "d_m=0 d_b=0" in text
        assert "r_B1=0.4854" in text
        assert "r_B2=0.7369" in text

    def test_noma_mmtc_retry(self):
        config = ScenarioConfig(scenario="embb-mmtc", scheme="noma", f_total=1, f_urllc=0,
                                n_urllc=0, r_m=1.0, r_b=1.0)
        assert "d_m=1 d_b=1" in run_single_trial_trace(config, [2.0], g_tar=4.0)
        no_retry = config.with_updates(retry_after_cancellation=False)
        assert "d_m=0 d_b=1" in run_single_trial_trace(no_retry, [2.0], g_tar=4.0)

    def test_mmtc_without_devices(self):
        config = ScenarioConfig(scenario="embb-mmtc", scheme="noma", f_total=1, f_urllc=0,
                                n_urllc=0, r_m=1.0, r_b=1.0)
        text = run_single_trial_trace(config, [], g_tar=4.0)
        assert "M1" not in text
        assert "d_m=0 d_b=1" in text
        assert "r_B=2.3219" in text

    def test_default_target_is_budget_maximum(self):
        config = ScenarioConfig(scheme="noma", f_total=1, f_urllc=1)
        text = run_single_trial_trace(config, [[5.0], [3.0]])
        assert f"g_tar={max_target_snr(10.0, 1e-3)!r}" in text


class TestEmbbCheck:

    def test_closed_form_and_monte_carlo(self):
        report = run_embb_check(ScenarioConfig(trials=50_000, seed=2))
        assert report.r_b_orth == pytest.approx(1.3671, abs=1e-3)
        assert report.g_tar_max == pytest.approx(1.57952, abs=1e-4)
        assert report.activity_rate == pytest.approx(0.999, abs=5e-4)
        assert report.mean_power == pytest.approx(1.0, abs=0.05)

    def test_deterministic(self):
        config = ScenarioConfig(trials=5000, seed=3)
        assert run_embb_check(config, workers=1) == run_embb_check(config, workers=2)

