"""
eMBB + mMTC Coexistence: OMA, NOMA and RSMA

Single-frequency uplink with a Poisson number of mMTC devices. The base
station sorts devices by gain and decodes them strongest first; decoding
stops at the first device whose SINR cannot support its rate.

Under NOMA the eMBB signal (received at g_tar) is decoded at the first
mMTC failure and, once cancelled, the failed device is retried. Under
RSMA the eMBB message is split into streams of power beta*g_tar and
(1-beta)*g_tar: the first failure decodes stream 1, the next decodes
stream 2 and eMBB succeeds when the two stream rates add up to r_B.
Streams still pending when the devices run out are decoded at the end.

The scalar decoders keep a DecodeTrace; the batch kernel runs the same
state machine vectorised over trials. Both evaluate the same SINR
expressions in the same operation order so their decisions agree.
"""

import logging
from dataclasses import dataclass
from typing import Literal, Sequence, Tuple

import numpy as np

from slice_core.algorithms.channel_model import ChannelBatch, ChannelDraw
from slice_core.algorithms.decode_trace import DecodeTrace, meets_rate
from slice_core.algorithms.mc_engine import DEFAULT_CONFIDENCE, OutageEstimate, z_score
from slice_core.slice_schemas import ConfigurationError

logger = logging.getLogger(__name__)

Mode = Literal["oma", "noma", "rsma"]

# eMBB decoding stage per trial
PENDING = 0
SPLIT = 1
RESOLVED = 2


@dataclass(frozen=True)
class MmtcParams:
    r_m: float
    lambda_m: float
    eps_m: float

    def __post_init__(self):
        if not self.r_m > 0.0:
            raise ConfigurationError(f"r_m must be positive, got {self.r_m}")
        if not self.lambda_m >= 0.0:
            raise ConfigurationError(f"lambda_m must be non-negative, got {self.lambda_m}")
        if not 0.0 < self.eps_m < 1.0:
            raise ConfigurationError(f"eps_m must lie in (0, 1), got {self.eps_m}")


@dataclass
class MmtcTrialResult:
    d_m: int
    d_b: int
    trace: DecodeTrace
    embb_rates: Tuple[float, ...] = ()


@dataclass(frozen=True)
class MmtcBatchOutcome:
    d_m: np.ndarray
    d_b: np.ndarray
    n_m: np.ndarray

    def stacked(self) -> np.ndarray:
        """(T, 3) array of d_m, d_b, n_m."""
        return np.stack([self.d_m, self.d_b, self.n_m], axis=1)


# ============================================================================
# Shared pieces
# ============================================================================

def sort_descending(gains: np.ndarray) -> np.ndarray:
    return -np.sort(-gains, axis=-1)


def residual_sums(ordered: np.ndarray) -> np.ndarray:
    """S_k = sum of ordered[..., k:], with a trailing zero entry S_n."""
    tail = np.cumsum(ordered[..., ::-1], axis=-1)[..., ::-1]
    zero = np.zeros(ordered.shape[:-1] + (1,))
    return np.concatenate([tail, zero], axis=-1)


def _device_sinr(gain, residual_after, stuck, embb_power):
    return gain / (1.0 + residual_after + stuck + embb_power)


def _embb_sinr(g_tar, residual, stuck):
    return g_tar / (1.0 + residual + stuck)


def _stream1_sinr(g_tar, beta, residual, stuck):
    return beta * g_tar / (1.0 + (1.0 - beta) * g_tar + residual + stuck)


def _stream2_sinr(g_tar, beta, residual, stuck):
    return (1.0 - beta) * g_tar / (1.0 + residual + stuck)


def _check_operating_point(g_tar: float, beta: float, r_m: float, r_b: float) -> None:
    if not g_tar >= 0.0:
        raise ConfigurationError(f"g_tar must be non-negative, got {g_tar}")
    if not 0.0 <= beta <= 1.0:
        raise ConfigurationError(f"beta must lie in [0, 1], got {beta}")
    if not r_m > 0.0:
        raise ConfigurationError(f"mMTC rate must be positive, got {r_m}")
    if not r_b >= 0.0:
        raise ConfigurationError(f"r_b must be non-negative, got {r_b}")


# ============================================================================
# Scalar reference decoder
# ============================================================================

def _decode_single(gains: np.ndarray, *, mode: Mode, g_tar: float, beta: float,
                   r_m: float, r_b: float, retry: bool) -> MmtcTrialResult:
    ordered = sort_descending(np.asarray(gains, dtype=np.float64).ravel())
    residual = residual_sums(ordered)
    n = ordered.shape[0]
    back_to_back = beta in (0.0, 1.0)
    trace = DecodeTrace()

    stage = RESOLVED if mode == "oma" else PENDING
    embb_power = 0.0 if mode == "oma" else g_tar
    d_b = 1 if mode == "oma" else 0
    d_m = 0
    r1 = 0.0
    stuck = 0.0
    embb_rates = []
    terminated = False

    def resolve_single(k: int) -> bool:
        sinr = _embb_sinr(g_tar, residual[k], stuck)
        rate = np.log2(1.0 + sinr)
        ok = bool(meets_rate(rate, r_b))
        trace.record("B", sinr, success=ok, cancel=ok)
        embb_rates.append(float(rate))
        return ok

    def resolve_stream1(k: int) -> float:
        sinr = _stream1_sinr(g_tar, beta, residual[k], stuck)
        trace.record("B1", sinr, cancel=True)
        trace.mark("m1", k)
        rate = np.log2(1.0 + sinr)
        embb_rates.append(float(rate))
        return rate

    def resolve_stream2(k: int) -> bool:
        sinr = _stream2_sinr(g_tar, beta, residual[k], stuck)
        rate = np.log2(1.0 + sinr)
        ok = bool(meets_rate(r1 + rate, r_b))
        trace.record("B2", sinr, success=ok, cancel=ok,
                     note=f"r1+r2={float(r1 + rate)!r} vs r_b={r_b!r}")
        trace.mark("m2", k)
        embb_rates.append(float(rate))
        return ok

    k = 0
    while k < n:
        sinr = _device_sinr(ordered[k], residual[k + 1], stuck, embb_power)
        ok = bool(meets_rate(np.log2(1.0 + sinr), r_m))
        trace.record(f"M{k + 1}", sinr, success=ok, gain=ordered[k], cancel=ok)
        if ok:
            d_m += 1
            k += 1
            continue
        if stage == RESOLVED:
            terminated = True
            break

        if mode == "noma":
            if not resolve_single(k):
                terminated = True
                break
            trace.mark("m1", k)
            stage, embb_power, d_b = RESOLVED, 0.0, 1
        else:
            split_now = stage == PENDING
            if split_now:
                r1 = resolve_stream1(k)
                stage, embb_power = SPLIT, (1.0 - beta) * g_tar
            if stage == SPLIT and (not split_now or back_to_back):
                if not resolve_stream2(k):
                    terminated = True
                    break
                stage, embb_power, d_b = RESOLVED, 0.0, 1

        if not retry:
            stuck = stuck + ordered[k]
            k += 1

    if not terminated and stage != RESOLVED:
        if mode == "noma":
            if resolve_single(n):
                trace.mark("m1", n)
                d_b = 1
        else:
            if stage == PENDING:
                r1 = resolve_stream1(n)
            if resolve_stream2(n):
                d_b = 1

    return MmtcTrialResult(d_m=d_m, d_b=d_b, trace=trace, embb_rates=tuple(embb_rates))


def oma_mmtc_decode(draw: ChannelDraw, r_m_eff: float) -> MmtcTrialResult:
    """SIC over mMTC devices alone at rate ``r_m_eff``; eMBB is orthogonal."""
    _check_operating_point(0.0, 1.0, r_m_eff, 0.0)
    return _decode_single(draw.g_m, mode="oma", g_tar=0.0, beta=1.0,
                          r_m=r_m_eff, r_b=0.0, retry=True)


def noma_mmtc_decode(draw: ChannelDraw, g_tar: float, r_m: float, r_b: float,
                     retry: bool = True) -> MmtcTrialResult:
    _check_operating_point(g_tar, 1.0, r_m, r_b)
    return _decode_single(draw.g_m, mode="noma", g_tar=g_tar, beta=1.0,
                          r_m=r_m, r_b=r_b, retry=retry)


def rsma_mmtc_decode(draw: ChannelDraw, g_tar: float, beta: float, r_m: float, r_b: float,
                     retry: bool = True) -> MmtcTrialResult:
    _check_operating_point(g_tar, beta, r_m, r_b)
    return _decode_single(draw.g_m, mode="rsma", g_tar=g_tar, beta=beta,
                          r_m=r_m, r_b=r_b, retry=retry)


# ============================================================================
# Batch kernel
# ============================================================================

def decode_mmtc_batch(batch: ChannelBatch, scheme: Mode, *, g_tar: float = 0.0,
                      beta: float = 1.0, r_m: float, r_b: float = 0.0,
                      retry: bool = True) -> MmtcBatchOutcome:
    """Decode every trial of ``batch``; OMA ignores g_tar, beta and r_b."""
    if scheme == "oma":
        g_tar, beta, r_b = 0.0, 1.0, 0.0
    _check_operating_point(g_tar, beta, r_m, r_b)

    ordered = sort_descending(batch.g_m)
    counts = batch.n_m
    trials = ordered.shape[0]
    residual = residual_sums(ordered)
    back_to_back = beta in (0.0, 1.0)

    stage = np.full(trials, RESOLVED if scheme == "oma" else PENDING, dtype=np.int8)
    embb_power = np.full(trials, 0.0 if scheme == "oma" else g_tar)
    d_b = np.full(trials, 1 if scheme == "oma" else 0, dtype=np.int64)
    d_m = np.zeros(trials, dtype=np.int64)
    r1 = np.zeros(trials)
    stuck = np.zeros(trials)
    position = np.zeros(trials, dtype=np.int64)
    live = np.ones(trials, dtype=bool)

    def finish(rows: np.ndarray) -> None:
        stage[rows] = RESOLVED
        embb_power[rows] = 0.0
        d_b[rows] = 1

    def resolve(rows: np.ndarray, at: np.ndarray, fresh: np.ndarray) -> None:
        """eMBB action for ``rows`` failing at index ``at``; ``fresh`` marks PENDING rows."""
        if scheme == "noma":
            sinr = _embb_sinr(g_tar, residual[rows, at], stuck[rows])
            ok = meets_rate(np.log2(1.0 + sinr), r_b)
            finish(rows[ok])
            live[rows[~ok]] = False
            return
        first = rows[fresh]
        if first.size:
            sinr = _stream1_sinr(g_tar, beta, residual[first, at[fresh]], stuck[first])
            r1[first] = np.log2(1.0 + sinr)
            stage[first] = SPLIT
            embb_power[first] = (1.0 - beta) * g_tar
        second_mask = np.ones(rows.size, dtype=bool) if back_to_back else ~fresh
        second = rows[second_mask]
        if second.size:
            sinr = _stream2_sinr(g_tar, beta, residual[second, at[second_mask]], stuck[second])
            ok = meets_rate(r1[second] + np.log2(1.0 + sinr), r_b)
            finish(second[ok])
            live[second[~ok]] = False

    while True:
        active = np.flatnonzero(live & (position < counts))
        if active.size == 0:
            break
        k = position[active]
        sinr = _device_sinr(ordered[active, k], residual[active, k + 1], stuck[active], embb_power[active])
        ok = meets_rate(np.log2(1.0 + sinr), r_m)
        decoded = active[ok]
        d_m[decoded] += 1
        position[decoded] += 1

        failed = active[~ok]
        if failed.size == 0:
            continue
        failed_stage = stage[failed]
        live[failed[failed_stage == RESOLVED]] = False
        acting = failed[failed_stage != RESOLVED]
        if acting.size:
            resolve(acting, position[acting], stage[acting] == PENDING)
        if not retry:
            skipped = failed[live[failed]]
            stuck[skipped] = stuck[skipped] + ordered[skipped, position[skipped]]
            position[skipped] += 1

    if scheme != "oma":
        leftover = np.flatnonzero(live & (stage != RESOLVED))
        if leftover.size:
            fresh = stage[leftover] == PENDING
            if scheme == "rsma" and not back_to_back:
                # stream 1 then stream 2 back to back at the end of the list
                first = leftover[fresh]
                sinr = _stream1_sinr(g_tar, beta, residual[first, counts[first]], stuck[first])
                r1[first] = np.log2(1.0 + sinr)
                stage[first] = SPLIT
                fresh = np.zeros(leftover.size, dtype=bool)
            resolve(leftover, counts[leftover], fresh)

    return MmtcBatchOutcome(d_m=d_m, d_b=d_b, n_m=counts.astype(np.int64))


# ============================================================================
# Error estimates
# ============================================================================

def mmtc_error_probability(trials: Sequence[MmtcTrialResult], lambda_m: float) -> float:
    """1 - E[d_m] / lambda_m, clamped to [0, 1]; zero when no devices arrive."""
    if lambda_m <= 0.0:
        return 0.0
    if not trials:
        raise ValueError("no trials to average")
    mean_decoded = sum(result.d_m for result in trials) / len(trials)
    return min(1.0, max(0.0, 1.0 - mean_decoded / lambda_m))


def mmtc_error_estimate(d_m: np.ndarray, n_m: np.ndarray, lambda_m: float,
                        confidence: float = DEFAULT_CONFIDENCE) -> OutageEstimate:
    """
    mMTC error with a normal-approximation interval from the spread of
    d_m. ``failures`` counts arrived but undecoded devices.
    """
    trials = int(d_m.shape[0])
    failures = int(np.sum(n_m - d_m))
    if lambda_m <= 0.0:
        return OutageEstimate(failures=failures, trials=trials, p_hat=0.0, ci_low=0.0, ci_high=0.0)
    raw = 1.0 - float(np.mean(d_m)) / lambda_m
    spread = float(np.std(d_m, ddof=1)) / np.sqrt(trials) / lambda_m if trials > 1 else 0.0
    half = z_score(confidence) * spread
    p_hat = min(1.0, max(0.0, raw))
    low = min(1.0, max(0.0, raw - half))
    high = min(1.0, max(0.0, raw + half))
    return OutageEstimate(failures=failures, trials=trials, p_hat=p_hat, ci_low=low, ci_high=high)


def embb_error_estimate(d_b: np.ndarray, confidence: float = DEFAULT_CONFIDENCE) -> OutageEstimate:
    """Wilson estimate of Pr[eMBB not decoded]."""
    trials = int(d_b.shape[0])
    return OutageEstimate.from_counts(int(trials - np.sum(d_b)), trials, confidence)
