"""
Channel Model - Rayleigh Fading and Poisson Arrivals

Per-trial channel draws for the eMBB, URLLC and mMTC services, the
counter-based random streams behind them, and the exponential integral
E1 used by eMBB power-control inversion.

Every random quantity is produced by inverse-CDF transform of uniforms
taken from a Philox stream keyed by (master seed, trial index, lane), so
a trial can be regenerated in isolation and the result never depends on
how trials are distributed over workers.
"""

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
from scipy import stats

from slice_core.slice_schemas import SEED_LIMIT, ConfigurationError

if TYPE_CHECKING:
    from slice_core.slice_schemas import ScenarioConfig

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.57721566490153286061
E1_TOLERANCE = 1e-12
_E1_MAX_ITERATIONS = 500
_FPMIN = 1e-300

# Stream lanes inside one trial block
LANE_FADING = 0
LANE_MMTC_COUNT = 1
LANE_MMTC_GAINS = 2


# ============================================================================
# Unit conversion and average gains
# ============================================================================

def db_to_linear(value_db: float) -> float:
    """Convert a power ratio from dB to linear scale."""
    if not math.isfinite(value_db):
        raise ConfigurationError(f"gain in dB must be finite, got {value_db}")
    return 10.0 ** (value_db / 10.0)


def _check_gamma(gamma: float) -> None:
    if not (gamma > 0.0 and math.isfinite(gamma)):
        raise ConfigurationError(f"average channel gain must be positive, got {gamma}")


@dataclass(frozen=True)
class AverageGains:
    """Linear average channel gains of the three services."""
    gamma_b: float
    gamma_u: float
    gamma_m: float

    def __post_init__(self):
        for value in (self.gamma_b, self.gamma_u, self.gamma_m):
            _check_gamma(value)

    @classmethod
    def from_db(cls, gamma_b_db: float, gamma_u_db: float, gamma_m_db: float) -> "AverageGains":
        return cls(db_to_linear(gamma_b_db), db_to_linear(gamma_u_db), db_to_linear(gamma_m_db))

    @classmethod
    def from_config(cls, config: "ScenarioConfig") -> "AverageGains":
        return cls.from_db(config.gamma_b_db, config.gamma_u_db, config.gamma_m_db)


# ============================================================================
# Counter-based random streams
# ============================================================================

@dataclass(frozen=True)
class TrialSeed:
    """Key of one independent random stream: (master seed, trial or block index)."""
    master_seed: int
    trial_index: int

    def __post_init__(self):
        for name in ("master_seed", "trial_index"):
            value = getattr(self, name)
            if not 0 <= value < SEED_LIMIT:
                raise ConfigurationError(f"{name} must be an unsigned 64-bit integer, got {value}")


def trial_stream(seed: TrialSeed, lane: int = LANE_FADING) -> np.random.Generator:
    """Philox generator for one (seed, lane) pair; identical keys give identical streams."""
    sequence = np.random.SeedSequence(seed.master_seed, spawn_key=(seed.trial_index, lane))
    return np.random.Generator(np.random.Philox(sequence))


# ============================================================================
# Samplers
# ============================================================================

def gain_from_uniform(gamma: float, u):
    """Inverse CDF of Exponential(gamma): -gamma * ln(1 - u)."""
    return -gamma * np.log1p(-np.asarray(u, dtype=np.float64))


def sample_rayleigh_gain(gamma: float, rng: np.random.Generator, size=None):
    """Squared Rayleigh amplitude with mean ``gamma``."""
    _check_gamma(gamma)
    gains = gain_from_uniform(gamma, rng.random(size))
    return float(gains) if size is None else gains


def sample_poisson(lambda_m: float, rng: np.random.Generator, size=None):
    """
    Poisson counts by inverse CDF, so one uniform maps to one count and the
    counts are coupled monotonically across different ``lambda_m``.
    """
    if not (lambda_m >= 0.0 and math.isfinite(lambda_m)):
        raise ConfigurationError(f"arrival rate must be non-negative, got {lambda_m}")
    u = rng.random(size)
    if lambda_m == 0.0:
        counts = np.zeros(np.shape(u), dtype=np.int64)
    else:
        # ppf(0) is -1 for discrete laws
        counts = np.maximum(stats.poisson.ppf(u, lambda_m), 0).astype(np.int64)
    return int(counts) if size is None else counts


# ============================================================================
# Channel draws
# ============================================================================

@dataclass(frozen=True)
class ChannelDraw:
    """Channel realisation of a single trial."""
    g_b: np.ndarray   # (F,)
    g_u: np.ndarray   # (n_U, F)
    g_m: np.ndarray   # (n_M,)

    @property
    def n_m(self) -> int:
        return int(self.g_m.shape[0])


@dataclass(frozen=True)
class ChannelBatch:
    """
    Channel realisations of a block of trials.

    mMTC gains are zero-padded to the largest device count in the block;
    ``n_m`` holds the true count per trial.
    """
    g_b: np.ndarray   # (T, F)
    g_u: np.ndarray   # (T, n_U, F)
    g_m: np.ndarray   # (T, W)
    n_m: np.ndarray   # (T,)

    @property
    def size(self) -> int:
        return int(self.g_b.shape[0])

    def row(self, index: int) -> ChannelDraw:
        count = int(self.n_m[index])
        return ChannelDraw(
            g_b=self.g_b[index].copy(),
            g_u=self.g_u[index].copy(),
            g_m=self.g_m[index, :count].copy(),
        )


def draw_channel_batch(config: "ScenarioConfig", seed: TrialSeed, size: int,
                       lambda_m: Optional[float] = None) -> ChannelBatch:
    """
    Draw ``size`` trials from the streams keyed by ``seed``.

    mMTC gains are laid out so that device ``i`` of trial ``t`` always
    consumes the same uniform, whatever the arrival rate: raising
    ``lambda_m`` only appends devices.
    """
    gains = AverageGains.from_config(config)
    n_freq = config.f_total
    n_users = config.n_urllc if config.scenario == "embb-urllc" else 0

    fading = trial_stream(seed, LANE_FADING)
    g_b = sample_rayleigh_gain(gains.gamma_b, fading, (size, n_freq))
    g_u = sample_rayleigh_gain(gains.gamma_u, fading, (size, n_users, n_freq))

    if config.scenario == "embb-mmtc":
        rate = config.lambda_m if lambda_m is None else lambda_m
        counts = sample_poisson(rate, trial_stream(seed, LANE_MMTC_COUNT), size)
        width = int(counts.max()) if size else 0
        raw = sample_rayleigh_gain(gains.gamma_m, trial_stream(seed, LANE_MMTC_GAINS), (width, size)).T
        present = np.arange(width)[None, :] < counts[:, None]
        g_m = np.ascontiguousarray(np.where(present, raw, 0.0))
    else:
        counts = np.zeros(size, dtype=np.int64)
        g_m = np.zeros((size, 0))

    return ChannelBatch(g_b=g_b, g_u=g_u, g_m=g_m, n_m=counts)


def draw_scenario_channels(config: "ScenarioConfig", trial: TrialSeed,
                           lambda_m: Optional[float] = None) -> ChannelDraw:
    """Single-trial channel draw; same (config, trial) gives the same draw."""
    return draw_channel_batch(config, trial, 1, lambda_m).row(0)


# ============================================================================
# Exponential integral
# ============================================================================

def upper_incomplete_gamma_zero(x: float) -> float:
    """
    E1(x) = Gamma(0, x) for x > 0, to about 1e-12 relative accuracy.

    Power series below 1, modified Lentz continued fraction above.
    """
    if not x > 0.0:
        raise ValueError(f"E1 is only defined for x > 0, got {x}")
    if x < 1.0:
        return _e1_series(x)
    return _e1_continued_fraction(x)


def _e1_series(x: float) -> float:
    total = 0.0
    term = 1.0
    for k in range(1, _E1_MAX_ITERATIONS):
        term *= -x / k
        contribution = term / k
        total += contribution
        if abs(contribution) < E1_TOLERANCE * abs(total):
            break
    return -EULER_GAMMA - math.log(x) - total


def _e1_continued_fraction(x: float) -> float:
    b = x + 1.0
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _E1_MAX_ITERATIONS):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < E1_TOLERANCE:
            return h * math.exp(-x)
    raise ArithmeticError(f"E1 continued fraction did not converge for x={x}")
