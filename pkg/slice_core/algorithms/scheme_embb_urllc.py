"""
eMBB + URLLC Coexistence: OMA, NOMA and RSMA

URLLC users transmit at full power on every frequency they use and are
decoded by greedy SIC: at each step the remaining user with the largest
frequency-averaged log2(1 + SINR) is decoded and cancelled. Under NOMA the
eMBB signal (received at g_tar wherever active) is decoded last. RSMA
splits the first-decoded URLLC user into two streams with power fractions
beta and 1 - beta and decodes x_{1,1} -> x_2 -> x_{1,2}.

Kernels work on batches of trials (trials x users x frequencies); the
scalar operations wrap them for one draw and add a DecodeTrace.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from slice_core.algorithms.channel_model import ChannelDraw
from slice_core.algorithms.decode_trace import DecodeTrace, meets_rate
from slice_core.slice_schemas import ConfigurationError


@dataclass(frozen=True)
class SplitConfig:
    """Power fraction beta of the first stream of the split user."""
    beta: float

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigurationError(f"beta must lie in [0, 1], got {self.beta}")


@dataclass
class UrllcTrialResult:
    r_u_per_user: List[float]
    embb_decoded: bool
    trace: DecodeTrace
    decode_order: List[int]
    split_user: Optional[int] = None


@dataclass(frozen=True)
class UrllcBatchRates:
    """Per-trial achieved rates indexed by original user, plus the decode order."""
    rates: np.ndarray                       # (T, n_U)
    order: np.ndarray                       # (T, n_U)
    split_user: Optional[np.ndarray] = None  # (T,)

    def by_role(self) -> np.ndarray:
        """Rates reordered as (split user, other user) for RSMA batches."""
        if self.split_user is None:
            raise ValueError("role ordering needs an RSMA batch")
        rows = np.arange(self.rates.shape[0])
        return np.stack([self.rates[rows, self.split_user],
                         self.rates[rows, 1 - self.split_user]], axis=1)


# ============================================================================
# Kernels
# ============================================================================

def greedy_sic(g_u: np.ndarray, g_tar: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Greedy SIC over a batch of URLLC gains ``g_u`` of shape (T, U, F).

    Returns (rates, order, step_sinr): rates per original user, the user
    decoded at each step, and that user's per-frequency SINR at its step.
    Ties go to the lowest user index.
    """
    trials, users, _ = g_u.shape
    rows = np.arange(trials)
    remaining = np.ones((trials, users), dtype=bool)
    rates = np.zeros((trials, users))
    order = np.zeros((trials, users), dtype=np.int64)
    step_sinr = np.zeros_like(g_u)

    for step in range(users):
        merit = np.full((trials, users), -np.inf)
        sinr_by_user = np.empty_like(g_u)
        for user in range(users):
            others = remaining.copy()
            others[:, user] = False
            interference = np.where(others[:, :, None], g_u, 0.0).sum(axis=1)
            sinr = g_u[:, user, :] / (1.0 + interference + g_tar)
            sinr_by_user[:, user, :] = sinr
            merit[:, user] = np.where(remaining[:, user], np.log2(1.0 + sinr).mean(axis=1), -np.inf)
        pick = np.argmax(merit, axis=1)
        rates[rows, pick] = merit[rows, pick]
        order[:, step] = pick
        step_sinr[:, step, :] = sinr_by_user[rows, pick, :]
        remaining[rows, pick] = False

    return rates, order, step_sinr


def rsma_stream_sinrs(g1, g2, g_tar: float, beta: float):
    """SINRs of x_{1,1}, x_2 and x_{1,2} for split user gain g1 and other user gain g2."""
    share = 1.0 - beta
    sinr_11 = beta * g1 / (1.0 + share * g1 + g2 + g_tar)
    sinr_2 = g2 / (1.0 + share * g1 + g_tar)
    sinr_12 = share * g1 / (1.0 + g_tar)
    return sinr_11, sinr_2, sinr_12


def rsma_stream_rates(g1, g2, g_tar: float, beta: float):
    """Per-frequency rates of x_{1,1}, x_2 and x_{1,2}."""
    return tuple(np.log2(1.0 + sinr) for sinr in rsma_stream_sinrs(g1, g2, g_tar, beta))


def oma_urllc_rates_batch(g_u: np.ndarray, f_u: int) -> UrllcBatchRates:
    """URLLC-only SIC on the first ``f_u`` frequencies."""
    if f_u < 1 or f_u > g_u.shape[2]:
        raise ConfigurationError(f"f_u must lie in [1, {g_u.shape[2]}], got {f_u}")
    rates, order, _ = greedy_sic(g_u[:, :, :f_u], 0.0)
    return UrllcBatchRates(rates=rates, order=order)


def noma_urllc_rates_batch(g_u: np.ndarray, g_tar: float) -> UrllcBatchRates:
    """Greedy SIC on all frequencies with the eMBB interference g_tar."""
    rates, order, _ = greedy_sic(g_u, g_tar)
    return UrllcBatchRates(rates=rates, order=order)


def rsma_urllc_rates_batch(g_u: np.ndarray, g_tar: float, beta: float) -> UrllcBatchRates:
    """Two-user RSMA; the split user is the first in the greedy NOMA order."""
    if g_u.shape[1] != 2:
        raise ConfigurationError(f"rsma splitting needs exactly 2 URLLC users, got {g_u.shape[1]}")
    SplitConfig(beta)
    rows = np.arange(g_u.shape[0])
    _, order, _ = greedy_sic(g_u, g_tar)
    split = order[:, 0]
    other = 1 - split
    r11, r2, r12 = rsma_stream_rates(g_u[rows, split, :], g_u[rows, other, :], g_tar, beta)
    rates = np.empty((g_u.shape[0], 2))
    rates[rows, split] = (r11 + r12).mean(axis=1)
    rates[rows, other] = r2.mean(axis=1)
    return UrllcBatchRates(rates=rates, order=order, split_user=split)


def urllc_outage_batch(rates: np.ndarray, r_u_target: float) -> np.ndarray:
    """Per-user outage flags (T, U)."""
    return ~meets_rate(rates, r_u_target)


def embb_outage_batch(rates: np.ndarray, g_tar: float, r_b_per_freq: float,
                      r_u_target: float) -> np.ndarray:
    """
    eMBB decoding failure per trial: any URLLC user below target leaves
    its signal uncancelled, and the post-cancellation SNR must support
    r_b_per_freq.
    """
    urllc_failed = urllc_outage_batch(rates, r_u_target).any(axis=1)
    embb_short = not bool(meets_rate(np.log2(1.0 + g_tar), r_b_per_freq))
    return urllc_failed | embb_short


# ============================================================================
# Single-draw operations
# ============================================================================

def _sic_trace(draw_gains: np.ndarray, order: np.ndarray, step_sinr: np.ndarray,
               g_tar: Optional[float]) -> DecodeTrace:
    trace = DecodeTrace()
    for step, user in enumerate(order):
        for freq, sinr in enumerate(step_sinr[step]):
            trace.record(f"U{user + 1}", sinr, frequency=freq, gain=draw_gains[user, freq])
        trace.cancel(f"U{user + 1}")
    if g_tar is not None:
        for freq in range(draw_gains.shape[1]):
            trace.record("B", g_tar, frequency=freq)
    return trace


def oma_urllc_rates(draw: ChannelDraw, f_u: int) -> UrllcTrialResult:
    """URLLC users alone on ``f_u`` frequencies; eMBB is orthogonal."""
    if f_u < 1 or f_u > draw.g_u.shape[1]:
        raise ConfigurationError(f"f_u must lie in [1, {draw.g_u.shape[1]}], got {f_u}")
    rates, order, step_sinr = greedy_sic(draw.g_u[None, :, :f_u], 0.0)
    trace = _sic_trace(draw.g_u[:, :f_u], order[0], step_sinr[0], None)
    return UrllcTrialResult(
        r_u_per_user=[float(rate) for rate in rates[0]],
        embb_decoded=True,
        trace=trace,
        decode_order=[int(user) for user in order[0]],
    )


def noma_urllc_rates(draw: ChannelDraw, g_tar: float) -> UrllcTrialResult:
    """URLLC SIC with eMBB superposed; eMBB decoded after all URLLC users."""
    rates, order, step_sinr = greedy_sic(draw.g_u[None], g_tar)
    trace = _sic_trace(draw.g_u, order[0], step_sinr[0], g_tar)
    return UrllcTrialResult(
        r_u_per_user=[float(rate) for rate in rates[0]],
        embb_decoded=True,
        trace=trace,
        decode_order=[int(user) for user in order[0]],
    )


def rsma_urllc_rates(draw: ChannelDraw, g_tar: float, split: SplitConfig) -> UrllcTrialResult:
    """Two-user RSMA with the first greedy user split by ``split.beta``."""
    batch = rsma_urllc_rates_batch(draw.g_u[None], g_tar, split.beta)
    first = int(batch.split_user[0])
    second = 1 - first
    g1, g2 = draw.g_u[first], draw.g_u[second]
    sinr_11, sinr_2, sinr_12 = rsma_stream_sinrs(g1, g2, g_tar, split.beta)

    trace = DecodeTrace()
    streams = (
        (f"U{first + 1}.1", sinr_11, g1),
        (f"U{second + 1}", sinr_2, g2),
        (f"U{first + 1}.2", sinr_12, g1),
    )
    for name, sinrs, gains in streams:
        for freq, sinr in enumerate(sinrs):
            trace.record(name, sinr, frequency=freq, gain=gains[freq])
        trace.cancel(name)
    for freq in range(draw.g_u.shape[1]):
        trace.record("B", g_tar, frequency=freq)

    return UrllcTrialResult(
        r_u_per_user=[float(rate) for rate in batch.rates[0]],
        embb_decoded=True,
        trace=trace,
        decode_order=[first, second],
        split_user=first,
    )


def urllc_outage_indicator(result: UrllcTrialResult, r_u_target: float) -> List[bool]:
    """Per-user outage: rate below target."""
    return [bool(flag) for flag in urllc_outage_batch(np.asarray(result.r_u_per_user), r_u_target)]


def embb_noma_outage_indicator(result: UrllcTrialResult, g_tar: float,
                               r_b_per_freq: float, r_u_target: float) -> bool:
    """
    eMBB failure in NOMA/RSMA coexistence for one trial. Silent
    frequencies carry no eMBB data and are not counted as failures.
    """
    rates = np.asarray(result.r_u_per_user)[None, :]
    return bool(embb_outage_batch(rates, g_tar, r_b_per_freq, r_u_target)[0])
