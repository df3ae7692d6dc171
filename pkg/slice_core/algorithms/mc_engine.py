"""
Monte Carlo Engine

Outage estimation over counter-seeded trial blocks, Wilson confidence
intervals, bisection searches for the largest rate or arrival rate that
meets a reliability target, and grid optimisation over (beta, g_tar).

Trials are generated in fixed-size blocks; block ``b`` always uses the
stream keyed by (master_seed, b). Workers only change which thread
computes a block, never its contents, so estimates are bit-identical for
any worker count. Escalating the trial count extends the block prefix.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from slice_core.algorithms.channel_model import TrialSeed

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 4096
DEFAULT_CONFIDENCE = 0.95
ESCALATION_FACTOR = 4


@lru_cache(maxsize=8)
def z_score(confidence: float) -> float:
    return float(stats.norm.ppf(0.5 + confidence / 2.0))


def wilson_interval(failures: int, trials: int,
                    confidence: float = DEFAULT_CONFIDENCE) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    z = z_score(confidence)
    p = failures / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2.0 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials)) / denom
    low = 0.0 if failures == 0 else max(0.0, centre - half)
    high = 1.0 if failures == trials else min(1.0, centre + half)
    return min(low, p), max(high, p)


@dataclass(frozen=True)
class OutageEstimate:
    failures: int
    trials: int
    p_hat: float
    ci_low: float
    ci_high: float

    def __post_init__(self):
        if self.trials <= 0:
            raise ValueError("an estimate needs at least one trial")
        if not 0.0 <= self.ci_low <= self.p_hat <= self.ci_high <= 1.0:
            raise ValueError(
                f"inconsistent estimate: {self.ci_low} <= {self.p_hat} <= {self.ci_high}")

    @classmethod
    def from_counts(cls, failures: int, trials: int,
                    confidence: float = DEFAULT_CONFIDENCE) -> "OutageEstimate":
        low, high = wilson_interval(failures, trials, confidence)
        return cls(failures=int(failures), trials=int(trials),
                   p_hat=failures / trials, ci_low=low, ci_high=high)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


# ============================================================================
# Block sampling
# ============================================================================

BlockFn = Callable[[TrialSeed, int], np.ndarray]


class BlockSampler:
    """
    Lazily computes and caches per-trial outputs block by block.

    ``sample_block(seed, size)`` must return an array whose first axis
    has length ``size``; row ``i`` describes trial ``i`` of that block.
    """

    def __init__(self, sample_block: BlockFn, master_seed: int, workers: int = 1,
                 block_size: int = DEFAULT_BLOCK_SIZE):
        if block_size < 1:
            raise ValueError("block_size must be positive")
        self.sample_block = sample_block
        self.master_seed = master_seed
        self.workers = max(1, int(workers))
        self.block_size = block_size
        self._blocks: List[np.ndarray] = []
        self._joined: Optional[np.ndarray] = None

    def _evaluate(self, index: int) -> np.ndarray:
        block = np.asarray(self.sample_block(TrialSeed(self.master_seed, index), self.block_size))
        if block.shape[0] != self.block_size:
            raise ValueError(f"block {index} returned {block.shape[0]} rows, expected {self.block_size}")
        return block

    @property
    def cached_trials(self) -> int:
        return len(self._blocks) * self.block_size

    def ensure(self, n_trials: int) -> np.ndarray:
        """Per-trial outputs of the first ``n_trials`` trials."""
        if n_trials < 1:
            raise ValueError("n_trials must be positive")
        needed = -(-n_trials // self.block_size)
        missing = range(len(self._blocks), needed)
        if len(missing) > 0:
            if self.workers > 1 and len(missing) > 1:
                with ThreadPoolExecutor(max_workers=self.workers) as executor:
                    computed = list(executor.map(self._evaluate, missing))
            else:
                computed = [self._evaluate(index) for index in missing]
            self._blocks.extend(computed)
            self._joined = None
        if self._joined is None or self._joined.shape[0] < needed * self.block_size:
            self._joined = np.concatenate(self._blocks, axis=0)
        return self._joined[:n_trials]


def estimate_outage(trial_fn: BlockFn, n_trials: int, master_seed: int, workers: int = 1,
                    units_per_trial: int = 1, block_size: int = DEFAULT_BLOCK_SIZE,
                    confidence: float = DEFAULT_CONFIDENCE) -> OutageEstimate:
    """
    Estimate a failure probability from per-trial failure counts.

    ``trial_fn(seed, size)`` returns, for each trial of a block, the
    number of failed units (a bool works for one unit per trial).
    """
    if n_trials < 1:
        raise ValueError("n_trials must be positive")
    sampler = BlockSampler(trial_fn, master_seed, workers, block_size)
    counts = sampler.ensure(n_trials)
    failures = int(np.sum(counts, dtype=np.int64))
    return OutageEstimate.from_counts(failures, n_trials * units_per_trial, confidence)


# ============================================================================
# Searches
# ============================================================================

Estimates = Tuple[OutageEstimate, ...]
Probe = Callable[[float, int], Union[OutageEstimate, Sequence[OutageEstimate]]]
ProbeHook = Callable[[float, Estimates, bool], None]


class Verdict(Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    UNDECIDED = "undecided"


@dataclass
class SearchResult:
    argmax: float
    meets_constraint: bool
    estimates_at_argmax: Estimates
    search_trace: List[Tuple[float, Estimates]] = field(default_factory=list)

    @property
    def estimate_at_argmax(self) -> Optional[OutageEstimate]:
        return self.estimates_at_argmax[0] if self.estimates_at_argmax else None

    @property
    def probes(self) -> int:
        return len(self.search_trace)


def _as_tuple(value: Union[OutageEstimate, Sequence[OutageEstimate]]) -> Estimates:
    if isinstance(value, OutageEstimate):
        return (value,)
    return tuple(value)


def _targets(eps_target: Union[float, Sequence[float]]) -> Tuple[float, ...]:
    if isinstance(eps_target, (int, float)):
        return (float(eps_target),)
    return tuple(float(eps) for eps in eps_target)


def classify(estimates: Estimates, targets: Tuple[float, ...]) -> Verdict:
    """Accept only if every interval clears its target, reject if any lies wholly above."""
    if len(estimates) != len(targets):
        raise ValueError(f"{len(estimates)} estimates for {len(targets)} targets")
    if any(est.ci_low > eps for est, eps in zip(estimates, targets)):
        return Verdict.REJECT
    if all(est.ci_high <= eps for est, eps in zip(estimates, targets)):
        return Verdict.ACCEPT
    return Verdict.UNDECIDED


class _Decider:
    """Runs probes with trial escalation for undecided verdicts."""

    def __init__(self, probe: Probe, targets: Tuple[float, ...], n_trials: int,
                 max_trials: Optional[int], on_probe: Optional[ProbeHook]):
        self.probe = probe
        self.targets = targets
        self.n_trials = n_trials
        self.max_trials = max(n_trials, max_trials or n_trials)
        self.on_probe = on_probe
        self.trace: List[Tuple[float, Estimates]] = []

    def __call__(self, value: float) -> Tuple[bool, Estimates]:
        n = self.n_trials
        while True:
            estimates = _as_tuple(self.probe(value, n))
            self.trace.append((value, estimates))
            verdict = classify(estimates, self.targets)
            if verdict is Verdict.UNDECIDED and n < self.max_trials:
                n = min(self.max_trials, n * ESCALATION_FACTOR)
                logger.debug(f"undecided at {value:.6g}, escalating to {n} trials")
                continue
            if verdict is Verdict.UNDECIDED:
                accepted = all(est.p_hat <= eps for est, eps in zip(estimates, self.targets))
            else:
                accepted = verdict is Verdict.ACCEPT
            if self.on_probe is not None:
                self.on_probe(value, estimates, accepted)
            return accepted, estimates


def _bisect_max(probe: Probe, eps_target: Union[float, Sequence[float]], tol: float,
                n_trials: int, lower: float, upper: float, max_trials: Optional[int],
                on_probe: Optional[ProbeHook]) -> SearchResult:
    if tol <= 0.0:
        raise ValueError("tolerance must be positive")
    if lower > upper:
        raise ValueError(f"empty bracket [{lower}, {upper}]")
    decide = _Decider(probe, _targets(eps_target), n_trials, max_trials, on_probe)

    ok, estimates = decide(lower)
    if not ok:
        return SearchResult(0.0, False, estimates, decide.trace)
    ok_hi, estimates_hi = decide(upper)
    if ok_hi:
        return SearchResult(upper, True, estimates_hi, decide.trace)

    lo, hi = lower, upper
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok, mid_estimates = decide(mid)
        if ok:
            lo, estimates = mid, mid_estimates
        else:
            hi = mid
    return SearchResult(lo, True, estimates, decide.trace)


def max_rate_bisect(outage_at: Probe, eps_target: Union[float, Sequence[float]],
                    tol_rate: float, n_trials: int, lower: float = 0.0, upper: float = 15.0,
                    max_trials: Optional[int] = None,
                    on_probe: Optional[ProbeHook] = None) -> SearchResult:
    """Largest rate in [lower, upper] whose outage stays within ``eps_target``."""
    return _bisect_max(outage_at, eps_target, tol_rate, n_trials, lower, upper, max_trials, on_probe)


def max_lambda_bisect(error_at: Probe, eps_m: Union[float, Sequence[float]],
                      tol_lambda: float, n_trials: int, lower: float = 0.0, upper: float = 200.0,
                      max_trials: Optional[int] = None,
                      on_probe: Optional[ProbeHook] = None) -> SearchResult:
    """Largest arrival rate in [lower, upper] whose error stays within ``eps_m``."""
    return _bisect_max(error_at, eps_m, tol_lambda, n_trials, lower, upper, max_trials, on_probe)


# ============================================================================
# Grid optimisation
# ============================================================================

class GridPoint(NamedTuple):
    beta: Optional[float]
    g_tar: float


Objective = Callable[..., SearchResult]


def optimize_grid(objective: Objective, grid: Iterable[GridPoint],
                  prune: bool = False) -> Tuple[GridPoint, SearchResult]:
    """
    Best grid point by ``objective(point).argmax``.

    Points are visited by increasing (beta, g_tar) and the incumbent is
    replaced only on a strict improvement, so ties resolve to the smaller
    beta and then the smaller g_tar. With ``prune`` the objective is
    called as ``objective(point, floor)`` where ``floor`` is the incumbent
    argmax (or None); it may report infeasible when it cannot beat it.
    """
    ordered = sorted(grid, key=lambda point: (-1.0 if point.beta is None else point.beta, point.g_tar))
    if not ordered:
        raise ValueError("optimisation grid is empty")

    best: Optional[Tuple[GridPoint, SearchResult]] = None
    fallback: Optional[Tuple[GridPoint, SearchResult]] = None
    for point in ordered:
        if prune:
            floor = best[1].argmax if best is not None else None
            result = objective(point, floor)
        else:
            result = objective(point)
        if not result.meets_constraint:
            if fallback is None:
                fallback = (point, result)
            continue
        if best is None or result.argmax > best[1].argmax:
            best = (point, result)

    if best is None:
        logger.debug("no grid point met the constraints")
        return fallback
    return best
