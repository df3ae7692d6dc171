"""
Tests for the Monte Carlo engine: Wilson intervals, block sampling,
bisection searches with escalation and grid optimisation.
"""

import numpy as np
import pytest

from slice_core.algorithms.channel_model import TrialSeed, trial_stream
from slice_core.algorithms.mc_engine import (
    BlockSampler,
    GridPoint,
    OutageEstimate,
    SearchResult,
    Verdict,
    classify,
    estimate_outage,
    max_lambda_bisect,
    max_rate_bisect,
    optimize_grid,
    wilson_interval,
    z_score,
)


def uniform_below(threshold: float):
    def sample(seed: TrialSeed, size: int) -> np.ndarray:
        return trial_stream(seed).random(size) < threshold
    return sample


def exact(p: float, trials: int = 1_000_000) -> OutageEstimate:
    """Estimate with a zero-width interval at ``p``."""
    return OutageEstimate(failures=int(round(p * trials)), trials=trials, p_hat=p, ci_low=p, ci_high=p)


def step_probe(threshold: float):
    """Outage 0 up to ``threshold`` and 1 above it."""
    def probe(value: float, n_trials: int) -> OutageEstimate:
        return exact(0.0 if value <= threshold else 1.0, n_trials)
    return probe


# ============================================================================
# Intervals
# ============================================================================

class TestWilson:

    def test_z_score(self):
        assert z_score(0.95) == pytest.approx(1.959964, abs=1e-6)

    def test_contains_point_estimate(self):
        for failures in (0, 1, 17, 500, 999, 1000):
            low, high = wilson_interval(failures, 1000)
            assert 0.0 <= low <= failures / 1000 <= high <= 1.0

    def test_zero_failures_has_zero_lower_bound(self):
        low, high = wilson_interval(0, 1000)
        assert low == 0.0
        assert high == pytest.approx(0.00383, abs=1e-4)

    def test_known_value(self):
        low, high = wilson_interval(10, 100)
        assert low == pytest.approx(0.05523, abs=1e-4)
        assert high == pytest.approx(0.17437, abs=1e-4)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            wilson_interval(0, 0)

    def test_estimate_consistency_check(self):
        with pytest.raises(ValueError):
            OutageEstimate(failures=1, trials=10, p_hat=0.1, ci_low=0.2, ci_high=0.3)


class TestClassify:

    def test_verdicts(self):
        assert classify((exact(0.01),), (0.05,)) is Verdict.ACCEPT
        assert classify((exact(0.1),), (0.05,)) is Verdict.REJECT
        wide = OutageEstimate(failures=4, trials=100, p_hat=0.04, ci_low=0.01, ci_high=0.09)
        assert classify((wide,), (0.05,)) is Verdict.UNDECIDED

    def test_joint_targets(self):
        assert classify((exact(0.01), exact(0.2)), (0.05, 0.1)) is Verdict.REJECT
        assert classify((exact(0.01), exact(0.05)), (0.05, 0.1)) is Verdict.ACCEPT

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            classify((exact(0.01),), (0.05, 0.1))


# ============================================================================
# Sampling
# ============================================================================

class TestEstimateOutage:

    def test_uniform_threshold(self):
        estimate = estimate_outage(uniform_below(0.3), 1_000_000, master_seed=1)
        assert estimate.trials == 1_000_000
        assert 0.2977 <= estimate.p_hat <= 0.3023
        assert estimate.ci_low < 0.3 < estimate.ci_high

    def test_worker_count_does_not_change_result(self):
        serial = estimate_outage(uniform_below(0.3), 50_000, master_seed=2, workers=1)
        parallel = estimate_outage(uniform_below(0.3), 50_000, master_seed=2, workers=4)
        assert serial == parallel

    def test_units_per_trial(self):
        def two_units(seed, size):
            return np.full(size, 1)
        estimate = estimate_outage(two_units, 100, master_seed=0, units_per_trial=2)
        assert estimate.p_hat == pytest.approx(0.5)

    def test_interval_coverage(self):
        covered = 0
        for seed in range(200):
            estimate = estimate_outage(uniform_below(0.1), 2000, master_seed=seed, block_size=500)
            covered += estimate.ci_low <= 0.1 <= estimate.ci_high
        assert covered / 200 >= 0.9


class TestBlockSampler:

    def test_prefix_is_stable(self):
        sampler = BlockSampler(lambda seed, size: trial_stream(seed).random(size), 5, block_size=100)
        first = sampler.ensure(250).copy()
        longer = sampler.ensure(1000)
        assert np.array_equal(longer[:250], first)
        assert sampler.cached_trials == 1000

    def test_prefix_independent_of_history(self):
        grown = BlockSampler(lambda seed, size: trial_stream(seed).random(size), 5, block_size=100)
        grown.ensure(100)
        grown.ensure(700)
        direct = BlockSampler(lambda seed, size: trial_stream(seed).random(size), 5, workers=3, block_size=100)
        assert np.array_equal(grown.ensure(700), direct.ensure(700))

    def test_block_keys(self):
        seen = []

        def record(seed, size):
            seen.append(seed.trial_index)
            return np.zeros(size)
        BlockSampler(record, 9, block_size=10).ensure(35)
        assert seen == [0, 1, 2, 3]

    def test_block_size_checked(self):
        sampler = BlockSampler(lambda seed, size: np.zeros(size - 1), 0, block_size=10)
        with pytest.raises(ValueError):
            sampler.ensure(5)


# ============================================================================
# Searches
# ============================================================================

class TestBisection:

    def test_step_function(self):
        result = max_rate_bisect(step_probe(3.7), 1e-3, 1e-3, 1000)
        assert result.meets_constraint
        assert 3.7 - 1e-3 <= result.argmax <= 3.7

    def test_whole_bracket_feasible(self):
        result = max_rate_bisect(step_probe(100.0), 1e-3, 1e-3, 1000)
        assert result.argmax == 15.0
        assert result.probes == 2

    def test_infeasible_at_lower_end(self):
        result = max_rate_bisect(lambda value, n: exact(0.5, n), 0.1, 1e-3, 1000)
        assert not result.meets_constraint
        assert result.argmax == 0.0
        assert result.probes == 1

    def test_target_of_one_accepts_upper(self):
        result = max_rate_bisect(lambda value, n: exact(1.0, n), 1.0, 1e-3, 1000)
        assert result.argmax == 15.0

    def test_lambda_search(self):
        def error_at(lam, n):
            return exact(min(1.0, lam / 100.0), n)
        result = max_lambda_bisect(error_at, 0.1, 0.25, 1000)
        assert result.meets_constraint
        assert 9.75 <= result.argmax <= 10.0

    def test_random_thresholds(self):
        rng = trial_stream(TrialSeed(99, 0))
        for threshold in rng.uniform(0.0, 15.0, 50):
            result = max_rate_bisect(step_probe(float(threshold)), 0.5, 1e-3, 1000)
            assert threshold - 1e-3 <= result.argmax <= threshold

    def test_joint_targets(self):
        def probe(value, n):
            return exact(0.0 if value <= 5.0 else 1.0, n), exact(0.0 if value <= 2.0 else 1.0, n)
        result = max_rate_bisect(probe, (0.1, 0.1), 1e-3, 1000)
        assert 2.0 - 1e-3 <= result.argmax <= 2.0
        assert len(result.estimates_at_argmax) == 2

    def test_escalation(self):
        calls = []

        def probe(value, n):
            calls.append(n)
            if n < 16_000:
                return OutageEstimate(failures=1, trials=n, p_hat=0.04, ci_low=0.01, ci_high=0.09)
            return exact(0.04, n)
        result = max_rate_bisect(probe, 0.05, 1.0, 1000, upper=1.0, max_trials=64_000)
        assert calls[:3] == [1000, 4000, 16_000]
        assert result.meets_constraint

    def test_undecided_at_cap_uses_point_estimate(self):
        def probe(value, n):
            p = 0.04 if value <= 1.0 else 0.06
            return OutageEstimate(failures=1, trials=n, p_hat=p, ci_low=0.01, ci_high=0.09)
        result = max_rate_bisect(probe, 0.05, 1e-2, 1000, max_trials=1000)
        assert 1.0 - 1e-2 <= result.argmax <= 1.0

    def test_probe_hook(self):
        seen = []
        max_rate_bisect(step_probe(1.0), 0.1, 0.5, 100,
                        on_probe=lambda value, estimates, ok: seen.append((value, ok)))
        assert seen[0] == (0.0, True)
        assert seen[1] == (15.0, False)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            max_rate_bisect(step_probe(1.0), 0.1, 0.0, 100)
        with pytest.raises(ValueError):
            max_rate_bisect(step_probe(1.0), 0.1, 1e-3, 100, lower=2.0, upper=1.0)


# ============================================================================
# Grid Optimisation
# ============================================================================

def fixed(argmax: float, ok: bool = True) -> SearchResult:
    return SearchResult(argmax=argmax, meets_constraint=ok, estimates_at_argmax=(exact(0.0),))


class TestOptimizeGrid:

    def test_picks_largest(self):
        values = {GridPoint(0.2, 1.0): 3.0, GridPoint(0.5, 1.0): 4.0, GridPoint(0.8, 1.0): 2.0}
        point, result = optimize_grid(lambda p: fixed(values[p]), values)
        assert point == GridPoint(0.5, 1.0)
        assert result.argmax == 4.0

    def test_ties_resolve_to_smaller_beta_then_gtar(self):
        grid = [GridPoint(0.6, 2.0), GridPoint(0.6, 1.0), GridPoint(0.3, 5.0)]
        point, _ = optimize_grid(lambda p: fixed(1.0), grid)
        assert point == GridPoint(0.3, 5.0)
        grid = [GridPoint(None, 2.0), GridPoint(None, 1.0)]
        point, _ = optimize_grid(lambda p: fixed(1.0), grid)
        assert point == GridPoint(None, 1.0)

    def test_infeasible_points_skipped(self):
        values = {GridPoint(0.0, 1.0): fixed(9.0, ok=False), GridPoint(1.0, 1.0): fixed(1.0)}
        point, result = optimize_grid(values.__getitem__, values)
        assert point == GridPoint(1.0, 1.0)

    def test_all_infeasible_returns_first(self):
        grid = [GridPoint(0.5, 1.0), GridPoint(0.1, 1.0)]
        point, result = optimize_grid(lambda p: fixed(0.0, ok=False), grid)
        assert point == GridPoint(0.1, 1.0)
        assert not result.meets_constraint

    def test_prune_passes_incumbent(self):
        floors = []

        def objective(point, floor):
            floors.append(floor)
            return fixed(point.g_tar)
        optimize_grid(objective, [GridPoint(None, g) for g in (1.0, 3.0, 2.0)], prune=True)
        assert floors == [None, 1.0, 2.0]

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            optimize_grid(lambda p: fixed(0.0), [])
