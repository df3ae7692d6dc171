"""
Experiment Drivers

One function per sweep: rate regions and beta sweeps for eMBB + URLLC,
arrival-rate frontiers and beta sweeps for eMBB + mMTC, the per-user
URLLC region, single-trial traces and the eMBB power-control check.

Every probe of every operating point reuses the master seed of the
config, so points are compared on common random numbers. Rate models
cache their per-trial samples, which turns each bisection probe into a
count over cached rates.
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from slice_core.algorithms.channel_model import ChannelDraw, db_to_linear, draw_channel_batch
from slice_core.algorithms.embb_power_control import (
    EmbbPolicy,
    embb_policy,
    rate_for_target_snr,
    target_snr_for_rate,
    transmit_power,
)
from slice_core.algorithms.mc_engine import (
    BlockSampler,
    GridPoint,
    OutageEstimate,
    SearchResult,
    max_lambda_bisect,
    max_rate_bisect,
    optimize_grid,
)
from slice_core.algorithms.scheme_embb_mmtc import (
    decode_mmtc_batch,
    embb_error_estimate,
    mmtc_error_estimate,
    noma_mmtc_decode,
    oma_mmtc_decode,
    rsma_mmtc_decode,
)
from slice_core.algorithms.scheme_embb_urllc import (
    SplitConfig,
    embb_outage_batch,
    noma_urllc_rates_batch,
    noma_urllc_rates,
    oma_urllc_rates,
    oma_urllc_rates_batch,
    rsma_urllc_rates,
    rsma_urllc_rates_batch,
    urllc_outage_batch,
)
from slice_core.slice_schemas import (
    ConfigurationError,
    EmbbCheckReport,
    FrontierPoint,
    InfeasibleSearchError,
    ScenarioConfig,
)
from slice_core.telemetry.collector import ProgressCollector, collector
from slice_core.telemetry.events import EventType

logger = logging.getLogger(__name__)

# Slack when a g_tar derived from a rate lands just above the budget maximum
_GTAR_SLACK = 1e-9


def policy_for(config: ScenarioConfig) -> EmbbPolicy:
    return embb_policy(db_to_linear(config.gamma_b_db), config.eps_b)


def _infeasible() -> SearchResult:
    return SearchResult(argmax=0.0, meets_constraint=False, estimates_at_argmax=())


def _clamp_gtar(g_tar: float, policy: EmbbPolicy) -> float:
    return min(g_tar, policy.g_tar_max)


# ============================================================================
# Models
# ============================================================================

class UrllcRateModel:
    """
    Cached per-trial URLLC rates of one operating point.

    ``outage_at(rate, n)`` returns the pooled per-user URLLC outage and,
    when eMBB carries data on the same frequencies, the eMBB outage.
    """

    def __init__(self, config: ScenarioConfig, scheme: str, *, g_tar: float = 0.0,
                 beta: float = 1.0, f_u: Optional[int] = None, workers: int = 1,
                 by_role: bool = False):
        self.config = config
        self.scheme = scheme
        self.g_tar = g_tar
        self.beta = beta
        self.f_u = config.f_urllc if f_u is None else f_u
        self.by_role = by_role
        self.r_b_per_freq = rate_for_target_snr(g_tar)
        self.sampler = BlockSampler(self._sample, config.seed, workers)

    def _sample(self, seed, size: int) -> np.ndarray:
        batch = draw_channel_batch(self.config, seed, size)
        if self.scheme == "oma":
            return oma_urllc_rates_batch(batch.g_u, self.f_u).rates
        if self.scheme == "noma":
            return noma_urllc_rates_batch(batch.g_u, self.g_tar).rates
        result = rsma_urllc_rates_batch(batch.g_u, self.g_tar, self.beta)
        return result.by_role() if self.by_role else result.rates

    @property
    def embb_constrained(self) -> bool:
        return self.scheme != "oma" and self.r_b_per_freq > 0.0

    def rates(self, n_trials: int) -> np.ndarray:
        return self.sampler.ensure(n_trials)

    def outage_at(self, rate: float, n_trials: int) -> Tuple[OutageEstimate, ...]:
        rates = self.rates(n_trials)
        failed = urllc_outage_batch(rates, rate)
        urllc = OutageEstimate.from_counts(int(failed.sum()), failed.size)
        if not self.embb_constrained:
            return (urllc,)
        embb_failed = embb_outage_batch(rates, self.g_tar, self.r_b_per_freq, rate)
        return urllc, OutageEstimate.from_counts(int(embb_failed.sum()), n_trials)

    def user_outage_at(self, user: int) -> Callable[[float, int], OutageEstimate]:
        """Outage of a single user (column of the rate matrix)."""
        def probe(rate: float, n_trials: int) -> OutageEstimate:
            failed = urllc_outage_batch(self.rates(n_trials)[:, user], rate)
            return OutageEstimate.from_counts(int(failed.sum()), n_trials)
        return probe

    def targets(self) -> Tuple[float, ...]:
        if self.embb_constrained:
            return self.config.eps_u, self.config.eps_b
        return (self.config.eps_u,)


class MmtcErrorModel:
    """
    mMTC (and eMBB) decoding errors of one operating point as a function
    of the arrival rate. The sampler of the last probed rate is kept, so
    trial escalation at the same rate only draws new blocks.
    """

    def __init__(self, config: ScenarioConfig, scheme: str, *, r_m: float, g_tar: float = 0.0,
                 beta: float = 1.0, r_b: float = 0.0, workers: int = 1):
        self.config = config
        self.scheme = scheme
        self.r_m = r_m
        self.g_tar = g_tar
        self.beta = beta
        self.r_b = r_b
        self.workers = workers
        self._samplers: Dict[float, BlockSampler] = {}

    def _sampler(self, lambda_m: float) -> BlockSampler:
        if lambda_m not in self._samplers:
            self._samplers.clear()

            def sample(seed, size: int) -> np.ndarray:
                batch = draw_channel_batch(self.config, seed, size, lambda_m)
                outcome = decode_mmtc_batch(
                    batch, self.scheme, g_tar=self.g_tar, beta=self.beta, r_m=self.r_m,
                    r_b=self.r_b, retry=self.config.retry_after_cancellation)
                return outcome.stacked()

            self._samplers[lambda_m] = BlockSampler(sample, self.config.seed, self.workers)
        return self._samplers[lambda_m]

    def error_at(self, lambda_m: float, n_trials: int) -> Tuple[OutageEstimate, ...]:
        outcome = self._sampler(lambda_m).ensure(n_trials)
        mmtc = mmtc_error_estimate(outcome[:, 0], outcome[:, 2], lambda_m)
        if self.scheme == "oma":
            return (mmtc,)
        return mmtc, embb_error_estimate(outcome[:, 1])

    def targets(self) -> Tuple[float, ...]:
        if self.scheme == "oma":
            return (self.config.eps_m,)
        return self.config.eps_m, self.config.eps_b


# ============================================================================
# Search helpers
# ============================================================================

def _rate_search(config: ScenarioConfig, probe, targets, progress: ProgressCollector,
                 label: str, lower: float = 0.0) -> SearchResult:
    if lower > config.rate_upper:
        return _infeasible()
    return max_rate_bisect(probe, targets, config.rate_tol, config.trials, lower=lower,
                           upper=config.rate_upper, max_trials=config.effective_max_trials,
                           on_probe=progress.probe_hook(label))


def _lambda_search(config: ScenarioConfig, model: MmtcErrorModel, progress: ProgressCollector,
                   label: str, lower: float = 0.0, upper: Optional[float] = None) -> SearchResult:
    upper = config.lambda_upper if upper is None else upper
    if lower > upper:
        return _infeasible()
    return max_lambda_bisect(model.error_at, model.targets(), config.lambda_tol, config.trials,
                             lower=lower, upper=upper, max_trials=config.effective_max_trials,
                             on_probe=progress.probe_hook(label))


def gtar_grid(r_b: float, g_tar_max: float, size: int) -> List[float]:
    """
    Geometric g_tar grid from the smallest SNR supporting ``r_b`` up to the
    budget maximum; empty when ``r_b`` is out of reach, [0.0] for r_b = 0.
    """
    g_low = target_snr_for_rate(r_b)
    if g_low <= 0.0:
        return [0.0]
    if g_low > g_tar_max:
        if g_low > g_tar_max * (1.0 + _GTAR_SLACK):
            return []
        g_low = g_tar_max
    return [float(g) for g in np.unique(np.geomspace(g_low, g_tar_max, size))]


def _point(series: str, x: Optional[float], y: float, result: SearchResult,
           grid_point: Optional[GridPoint] = None, units: int = 1) -> FrontierPoint:
    estimates = result.estimates_at_argmax
    service = estimates[0] if estimates else None
    embb = estimates[1] if len(estimates) > 1 else None
    best_beta = grid_point.beta if grid_point is not None and series.startswith("rsma") else None
    return FrontierPoint(
        series=series,
        x=x,
        y=y,
        best_beta=best_beta,
        best_gtar=grid_point.g_tar if grid_point is not None else None,
        p_hat_b=embb.p_hat if embb is not None else None,
        p_hat_service=service.p_hat if service is not None else None,
        ci_low=service.ci_low if service is not None else None,
        ci_high=service.ci_high if service is not None else None,
        trials=service.trials // units if service is not None else None,
        feasible=result.meets_constraint,
    )


def _report(progress: ProgressCollector, point: FrontierPoint) -> FrontierPoint:
    progress.emit(EventType.SWEEP_POINT, point.series,
                  properties={"x": point.x, "y": point.y, "feasible": point.feasible})
    return point


def require_feasible(points: Sequence[FrontierPoint]) -> None:
    """Raise InfeasibleSearchError when no point met its constraints."""
    if not any(point.feasible for point in points):
        raise InfeasibleSearchError("no operating point satisfied the reliability constraints")


# ============================================================================
# eMBB + URLLC
# ============================================================================

def _urllc_operating_point(config: ScenarioConfig, scheme: str, g_tar: float, workers: int,
                           progress: ProgressCollector,
                           label: str) -> Tuple[Optional[GridPoint], SearchResult]:
    """Best URLLC per-user rate at a fixed eMBB g_tar (over beta for RSMA)."""
    if scheme == "noma":
        model = UrllcRateModel(config, "noma", g_tar=g_tar, workers=workers)
        return GridPoint(None, g_tar), _rate_search(config, model.outage_at, model.targets(), progress, label)

    def objective(point: GridPoint, floor: Optional[float]) -> SearchResult:
        model = UrllcRateModel(config, "rsma", g_tar=point.g_tar, beta=point.beta, workers=workers)
        lower = 0.0 if floor is None else floor + config.rate_tol
        return _rate_search(config, model.outage_at, model.targets(), progress,
                            f"{label} beta={point.beta:g}", lower=lower)

    grid = [GridPoint(beta, g_tar) for beta in config.beta_grid]
    return optimize_grid(objective, grid, prune=True)


def run_region_urllc(config: ScenarioConfig, workers: int = 1,
                     progress: ProgressCollector = collector) -> List[FrontierPoint]:
    """
    URLLC sum rate against eMBB sum rate.

    OMA sweeps the URLLC frequency count F_U from 0 to F; NOMA and RSMA
    sweep the eMBB sum rate over [0, F * r_orth] on all frequencies.
    """
    policy = policy_for(config)
    r_orth = policy.r_b_orth
    n_freq, n_users = config.f_total, config.n_urllc
    points: List[FrontierPoint] = []

    if config.scheme == "oma":
        for f_u in range(n_freq + 1):
            x = (n_freq - f_u) * r_orth
            if f_u == 0:
                points.append(_report(progress, FrontierPoint(series="oma", x=x, y=0.0)))
                continue
            model = UrllcRateModel(config, "oma", f_u=f_u, workers=workers)
            result = _rate_search(config, model.outage_at, model.targets(), progress, f"oma F_U={f_u}")
            points.append(_report(progress, _point("oma", x, n_users * result.argmax, result, units=n_users)))
        return points

    for r_b_sum in np.linspace(0.0, n_freq * r_orth, config.r_b_points):
        g_tar = _clamp_gtar(target_snr_for_rate(r_b_sum / n_freq), policy)
        label = f"{config.scheme} r_B={r_b_sum:.4f}"
        grid_point, result = _urllc_operating_point(config, config.scheme, g_tar, workers, progress, label)
        points.append(_report(progress, _point(
            config.scheme, float(r_b_sum), n_users * result.argmax, result, grid_point, units=n_users)))
    return points


def _beta_sweep_gtar(config: ScenarioConfig, policy: EmbbPolicy) -> float:
    """eMBB g_tar of the beta sweeps: r_B^sum = (F - F_U) * r_orth unless r_b is set."""
    if config.r_b is not None:
        r_b_per_freq = config.r_b
    else:
        r_b_per_freq = (config.f_total - config.f_urllc) * policy.r_b_orth / config.f_total
    g_tar = target_snr_for_rate(r_b_per_freq)
    if g_tar > policy.g_tar_max * (1.0 + _GTAR_SLACK):
        raise ConfigurationError(
            f"r_b={r_b_per_freq} per frequency exceeds the orthogonal eMBB rate {policy.r_b_orth}")
    return _clamp_gtar(g_tar, policy)


def run_beta_sweep_urllc(config: ScenarioConfig, workers: int = 1,
                         progress: ProgressCollector = collector) -> List[FrontierPoint]:
    """URLLC sum rate against beta at a fixed eMBB rate, with OMA and NOMA baselines."""
    policy = policy_for(config)
    g_tar = _beta_sweep_gtar(config, policy)
    n_users = config.n_urllc
    points: List[FrontierPoint] = []

    if config.f_urllc >= 1:
        model = UrllcRateModel(config, "oma", f_u=config.f_urllc, workers=workers)
        result = _rate_search(config, model.outage_at, model.targets(), progress, "oma baseline")
        points.append(_report(progress, _point("oma", None, n_users * result.argmax, result, units=n_users)))
    else:
        points.append(_report(progress, FrontierPoint(series="oma", y=0.0, feasible=False)))

    model = UrllcRateModel(config, "noma", g_tar=g_tar, workers=workers)
    result = _rate_search(config, model.outage_at, model.targets(), progress, "noma baseline")
    points.append(_report(progress, _point(
        "noma", None, n_users * result.argmax, result, GridPoint(None, g_tar), units=n_users)))

    for beta in sorted(config.beta_grid):
        model = UrllcRateModel(config, "rsma", g_tar=g_tar, beta=beta, workers=workers)
        result = _rate_search(config, model.outage_at, model.targets(), progress, f"rsma beta={beta:g}")
        points.append(_report(progress, _point(
            "rsma", beta, n_users * result.argmax, result, GridPoint(beta, g_tar), units=n_users)))
    return points


def run_user_region_urllc(config: ScenarioConfig, workers: int = 1,
                          progress: ProgressCollector = collector) -> List[FrontierPoint]:
    """
    Per-user URLLC rates (split user, other user) traced by beta, each
    user held to its own outage target. The beta = 0 and beta = 1 points
    are repeated as the two NOMA decoding orders.
    """
    if config.scheme != "rsma":
        raise ConfigurationError("user-region-urllc needs scheme=rsma")
    policy = policy_for(config)
    g_tar = _beta_sweep_gtar(config, policy)
    points: List[FrontierPoint] = []
    corners: List[FrontierPoint] = []

    for beta in sorted(config.beta_grid):
        model = UrllcRateModel(config, "rsma", g_tar=g_tar, beta=beta, workers=workers, by_role=True)
        results = [
            _rate_search(config, model.user_outage_at(user), config.eps_u, progress,
                         f"user {user + 1} beta={beta:g}")
            for user in (0, 1)
        ]
        split_rate, other_rate = (result.argmax for result in results)
        point = _point("rsma", split_rate, other_rate, results[1], GridPoint(beta, g_tar))
        point = point.model_copy(update={"feasible": all(r.meets_constraint for r in results)})
        points.append(_report(progress, point))
        if beta in (0.0, 1.0):
            corners.append(point.model_copy(update={"series": "noma", "best_beta": None}))
    return points + corners


# ============================================================================
# eMBB + mMTC
# ============================================================================

def _mmtc_operating_point(config: ScenarioConfig, scheme: str, r_b: float, betas: Sequence[Optional[float]],
                          policy: EmbbPolicy, workers: int, progress: ProgressCollector,
                          label: str) -> Tuple[Optional[GridPoint], SearchResult]:
    """Best arrival rate at eMBB rate ``r_b`` over the g_tar grid (and ``betas``)."""
    g_values = gtar_grid(r_b, policy.g_tar_max, config.gtar_grid_size)
    if not g_values:
        return None, _infeasible()

    def objective(point: GridPoint, floor: Optional[float]) -> SearchResult:
        model = MmtcErrorModel(config, scheme, r_m=config.r_m, g_tar=point.g_tar,
                               beta=1.0 if point.beta is None else point.beta, r_b=r_b, workers=workers)
        lower = 0.0 if floor is None else floor + config.lambda_tol
        return _lambda_search(config, model, progress, f"{label} g_tar={point.g_tar:.4g}", lower=lower)

    grid = [GridPoint(beta, g) for beta in betas for g in g_values]
    return optimize_grid(objective, grid, prune=True)


def _oma_lambda(config: ScenarioConfig, alpha: float, workers: int, progress: ProgressCollector,
                upper: Optional[float] = None) -> SearchResult:
    """Largest arrival rate when mMTC keeps a 1 - alpha share of the resource."""
    if alpha >= 1.0:
        return SearchResult(argmax=0.0, meets_constraint=alpha == 1.0, estimates_at_argmax=())
    model = MmtcErrorModel(config, "oma", r_m=config.r_m / (1.0 - alpha), workers=workers)
    return _lambda_search(config, model, progress, f"oma alpha={alpha:.4f}", upper=upper)


def run_frontier_mmtc(config: ScenarioConfig, workers: int = 1,
                      progress: ProgressCollector = collector) -> List[FrontierPoint]:
    """
    Largest mMTC arrival rate against eMBB rate.

    OMA splits the resource with a time/frequency share alpha for eMBB;
    NOMA and RSMA sweep r_B over [0, r_orth] and optimise g_tar (and beta).
    """
    if config.scenario != "embb-mmtc":
        raise ConfigurationError("frontier-mmtc needs scenario=embb-mmtc")
    policy = policy_for(config)
    r_orth = policy.r_b_orth
    points: List[FrontierPoint] = []

    if config.scheme == "oma":
        upper = config.lambda_upper
        for alpha in np.linspace(0.0, 1.0, config.alpha_grid_size):
            result = _oma_lambda(config, float(alpha), workers, progress, upper=upper)
            points.append(_report(progress, _point("oma", float(alpha) * r_orth, result.argmax, result)))
            if result.meets_constraint and alpha < 1.0:
                # lambda_orth is non-increasing in the effective rate
                upper = min(upper, result.argmax + config.lambda_tol)
        return points

    betas: Sequence[Optional[float]] = sorted(config.beta_grid) if config.scheme == "rsma" else [None]
    for r_b in np.linspace(0.0, r_orth, config.r_b_points):
        label = f"{config.scheme} r_B={r_b:.4f}"
        grid_point, result = _mmtc_operating_point(config, config.scheme, float(r_b), betas,
                                                   policy, workers, progress, label)
        points.append(_report(progress, _point(config.scheme, float(r_b), result.argmax, result, grid_point)))
    return points


def run_beta_sweep_mmtc(config: ScenarioConfig, workers: int = 1,
                        progress: ProgressCollector = collector) -> List[FrontierPoint]:
    """Arrival rate against beta at fixed r_B, with OMA and NOMA baselines."""
    if config.scenario != "embb-mmtc":
        raise ConfigurationError("beta-sweep-mmtc needs scenario=embb-mmtc")
    if config.r_b is None:
        raise ConfigurationError("r_b: beta-sweep-mmtc needs a fixed eMBB rate")
    policy = policy_for(config)
    r_b = config.r_b
    points: List[FrontierPoint] = []

    result = _oma_lambda(config, r_b / policy.r_b_orth, workers, progress)
    points.append(_report(progress, _point("oma", None, result.argmax, result)))

    grid_point, result = _mmtc_operating_point(config, "noma", r_b, [None], policy, workers,
                                               progress, "noma baseline")
    points.append(_report(progress, _point("noma", None, result.argmax, result, grid_point)))

    for beta in sorted(config.beta_grid):
        grid_point, result = _mmtc_operating_point(config, "rsma", r_b, [beta], policy, workers,
                                                   progress, f"rsma beta={beta:g}")
        if grid_point is None:
            grid_point = GridPoint(beta, 0.0)
        points.append(_report(progress, _point("rsma", beta, result.argmax, result, grid_point)))
    return points


# ============================================================================
# Single-trial trace and eMBB check
# ============================================================================

def run_single_trial_trace(config: ScenarioConfig, gains: Sequence[Sequence[float]],
                           g_tar: Optional[float] = None, beta: float = 0.5) -> str:
    """
    Decode one explicit channel realisation and render the SIC trace.

    For embb-urllc ``gains`` holds one row of per-frequency gains per
    user; for embb-mmtc a single row of device gains.
    """
    policy = policy_for(config)
    if g_tar is None:
        g_tar = policy.g_tar_max if config.r_b is None else _clamp_gtar(target_snr_for_rate(config.r_b), policy)
    header = [f"scenario={config.scenario} scheme={config.scheme} g_tar={g_tar!r}"
              + (f" beta={beta!r}" if config.scheme == "rsma" else "")]

    if config.scenario == "embb-urllc":
        g_u = np.atleast_2d(np.asarray(gains, dtype=np.float64))
        draw = ChannelDraw(g_b=np.zeros(g_u.shape[1]), g_u=g_u, g_m=np.zeros(0))
        if config.scheme == "oma":
            result = oma_urllc_rates(draw, g_u.shape[1])
        elif config.scheme == "noma":
            result = noma_urllc_rates(draw, g_tar)
        else:
            result = rsma_urllc_rates(draw, g_tar, SplitConfig(beta))
        rates = ", ".join(f"U{user + 1}={rate:.6f}" for user, rate in enumerate(result.r_u_per_user))
        order = " -> ".join(f"U{user + 1}" for user in result.decode_order)
        return "\n".join(header + [result.trace.render(), f"rates: {rates}", f"order: {order}"])

    g_m = np.asarray(gains, dtype=np.float64).ravel()
    draw = ChannelDraw(g_b=np.zeros(1), g_u=np.zeros((0, 1)), g_m=g_m)
    r_b = config.r_b if config.r_b is not None else rate_for_target_snr(g_tar)
    retry = config.retry_after_cancellation
    if config.scheme == "oma":
        result = oma_mmtc_decode(draw, config.r_m)
    elif config.scheme == "noma":
        result = noma_mmtc_decode(draw, g_tar, config.r_m, r_b, retry=retry)
    else:
        result = rsma_mmtc_decode(draw, g_tar, beta, config.r_m, r_b, retry=retry)
    lines = header + [result.trace.render(), f"d_m={result.d_m} d_b={result.d_b}"]
    if result.embb_rates:
        names = ["r_B"] if config.scheme == "noma" else ["r_B1", "r_B2"]
        lines.append("embb rates: " + ", ".join(
            f"{name}={rate:.6f}" for name, rate in zip(names, result.embb_rates)))
    return "\n".join(lines)


def run_embb_check(config: ScenarioConfig, workers: int = 1) -> EmbbCheckReport:
    """Closed-form power-control numbers plus a Monte Carlo check of activity and mean power."""
    policy = policy_for(config)

    def sample(seed, size: int) -> np.ndarray:
        gains = draw_channel_batch(config, seed, size).g_b
        power = transmit_power(gains, policy)
        return np.stack([(gains >= policy.g_min).mean(axis=1), power.mean(axis=1)], axis=1)

    stats = BlockSampler(sample, config.seed, workers).ensure(config.trials)
    return EmbbCheckReport(
        gamma_b_db=config.gamma_b_db,
        eps_b=config.eps_b,
        g_min=policy.g_min,
        g_tar_max=policy.g_tar_max,
        r_b_orth=policy.r_b_orth,
        trials=config.trials,
        activity_rate=float(stats[:, 0].mean()),
        mean_power=float(stats[:, 1].mean()),
    )
