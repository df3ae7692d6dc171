"""
Startup Checks for slice-sim.

Verifies that the numerical stack behaves as the simulator expects
(Philox streams, float64 arithmetic, scipy special functions) before a
sweep starts.
"""

import sys
import logging
import time
from typing import Optional, Tuple

import numpy as np
import scipy

logger = logging.getLogger(__name__)

# Cache for startup check results (TTL: 5 minutes)
_startup_cache: Optional[Tuple[bool, float]] = None
CACHE_TTL_SECONDS = 300


def check_philox_stream() -> Tuple[bool, str]:
    """Two generators built from the same key must agree."""
    try:
        key = np.random.SeedSequence(12345, spawn_key=(0, 0))
        first = np.random.Generator(np.random.Philox(key)).random(4)
        again = np.random.Generator(np.random.Philox(np.random.SeedSequence(12345, spawn_key=(0, 0)))).random(4)
    except Exception as e:
        return False, f"Philox unavailable: {e}"
    if not np.array_equal(first, again):
        return False, "Philox streams are not reproducible"
    return True, f"numpy {np.__version__}"


def check_float64() -> Tuple[bool, str]:
    eps = np.finfo(np.float64).eps
    if eps > 2.3e-16:
        return False, f"float64 epsilon {eps} is larger than IEEE double"
    return True, f"float64 eps={eps:.3g}"


def run_startup_checks() -> bool:
    """
    Run all startup checks (cached for 5 minutes).
    Returns: True if critical checks pass, False otherwise.
    """
    global _startup_cache

    if _startup_cache is not None:
        cached_result, cached_time = _startup_cache
        if time.time() - cached_time < CACHE_TTL_SECONDS:
            logger.debug("✅ Using cached startup check result")
            return cached_result

    logger.debug("🔍 Running Startup Checks...")
    logger.debug(f"✅ Python: {sys.version.split()[0]}")

    philox_ok, philox_msg = check_philox_stream()
    if philox_ok:
        logger.debug(f"✅ RNG: {philox_msg}")
    else:
        logger.error(f"❌ RNG Critical Failure: {philox_msg}")
        return False

    float_ok, float_msg = check_float64()
    if float_ok:
        logger.debug(f"✅ Arithmetic: {float_msg}")
    else:
        logger.error(f"❌ Arithmetic Critical Failure: {float_msg}")
        return False

    logger.debug(f"✅ scipy {scipy.__version__}")
    logger.debug("✅ Startup Checks Complete")

    _startup_cache = (True, time.time())
    return True
