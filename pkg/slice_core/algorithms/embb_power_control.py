"""
eMBB Truncated Channel Inversion

The eMBB device transmits only when its gain on a frequency clears a
threshold g_min, and then inverts the channel so the received SNR equals
g_tar. The threshold fixes the per-frequency activity probability at
1 - eps_b; g_tar is capped by the unit average power budget.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from slice_core.algorithms.channel_model import upper_incomplete_gamma_zero
from slice_core.slice_schemas import ConfigurationError

# Relative slack when checking a requested g_tar against the power budget
BUDGET_SLACK = 1e-12


def _check_inputs(gamma_b: float, eps_b: float) -> None:
    if not (gamma_b > 0.0 and math.isfinite(gamma_b)):
        raise ConfigurationError(f"gamma_b must be positive, got {gamma_b}")
    if not 0.0 < eps_b < 1.0:
        raise ConfigurationError(f"eps_b must lie in (0, 1), got {eps_b}")


def threshold_snr(gamma_b: float, eps_b: float) -> float:
    """g_min = gamma_b * ln(1 / (1 - eps_b))."""
    _check_inputs(gamma_b, eps_b)
    return -gamma_b * math.log1p(-eps_b)


def activity_probability(gamma_b: float, eps_b: float) -> float:
    """Pr[G_B >= g_min]; equals 1 - eps_b."""
    return math.exp(-threshold_snr(gamma_b, eps_b) / gamma_b)


def max_target_snr(gamma_b: float, eps_b: float) -> float:
    """Largest g_tar with unit average transmit power: gamma_b / E1(g_min / gamma_b)."""
    g_min = threshold_snr(gamma_b, eps_b)
    return gamma_b / upper_incomplete_gamma_zero(g_min / gamma_b)


def rate_for_target_snr(g_tar: float) -> float:
    return math.log2(1.0 + g_tar)


def target_snr_for_rate(rate: float) -> float:
    """Inverse of rate_for_target_snr."""
    if rate < 0.0:
        raise ConfigurationError(f"rate must be non-negative, got {rate}")
    return 2.0 ** rate - 1.0


def orth_rate(gamma_b: float, eps_b: float) -> float:
    """Per-frequency eMBB rate without interference: log2(1 + g_tar_max)."""
    return rate_for_target_snr(max_target_snr(gamma_b, eps_b))


@dataclass(frozen=True)
class EmbbPolicy:
    """Power-control parameters shared by every eMBB frequency."""
    gamma_b: float
    eps_b: float
    g_min: float
    g_tar: float
    g_tar_max: float

    @property
    def rate_per_frequency(self) -> float:
        return rate_for_target_snr(self.g_tar)

    @property
    def r_b_orth(self) -> float:
        return rate_for_target_snr(self.g_tar_max)


def embb_policy(gamma_b: float, eps_b: float, g_tar: Optional[float] = None) -> EmbbPolicy:
    """Build the policy; ``g_tar`` defaults to the budget maximum."""
    g_min = threshold_snr(gamma_b, eps_b)
    g_max = max_target_snr(gamma_b, eps_b)
    if g_tar is None:
        g_tar = g_max
    elif not 0.0 <= g_tar <= g_max * (1.0 + BUDGET_SLACK):
        raise ConfigurationError(
            f"g_tar={g_tar} outside [0, {g_max}] allowed by the power budget")
    return EmbbPolicy(gamma_b=gamma_b, eps_b=eps_b, g_min=g_min,
                      g_tar=min(g_tar, g_max), g_tar_max=g_max)


def transmit_power(gain, policy: EmbbPolicy):
    """Per-frequency power: g_tar / gain when active, zero when silent."""
    gain = np.asarray(gain, dtype=np.float64)
    active = gain >= policy.g_min
    power = np.divide(policy.g_tar, gain, out=np.zeros_like(gain), where=active)
    return float(power) if power.ndim == 0 else power
