"""
Scenario configuration loading.

Config files are plain ``key = value`` lines (``#`` starts a comment).
A config argument is either a path to such a file or the name of a
bundled preset (``fig3`` .. ``fig9``). Command-line ``--set key=value``
overrides are applied on top and the result is validated once.
"""

import hashlib
import json
import logging
import os
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from slice_core.slice_schemas import ConfigurationError, ScenarioConfig

logger = logging.getLogger(__name__)

PRESET_PACKAGE = "slice_core.presets"

# Fast-mode caps
FAST_EPS_U_FLOOR = 1e-3
FAST_TRIALS_CAP = 1_000_000
FAST_MMTC_TRIALS_CAP = 20_000
FAST_GTAR_GRID_SIZE = 10

_LIST_FIELDS = {"beta_grid"}


def _coerce(key: str, raw: str) -> Any:
    value = raw.strip()
    if key in _LIST_FIELDS:
        items = [item for item in value.replace(";", ",").split(",") if item.strip()]
        try:
            return [float(item) for item in items]
        except ValueError:
            raise ConfigurationError(f"{key}: expected a comma-separated list of numbers, got '{raw}'")
    lowered = value.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if lowered in ("none", "null", ""):
        return None
    return value


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    """Parse ``key = value`` lines into a raw mapping."""
    values: Dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{source}:{number}: expected 'key = value', got '{line.strip()}'")
        key, raw = stripped.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigurationError(f"{source}:{number}: missing key")
        values[key] = _coerce(key, raw)
    return values


def parse_overrides(pairs: Iterable[str]) -> Dict[str, Any]:
    """Parse repeated ``key=value`` command-line overrides."""
    values: Dict[str, Any] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigurationError(f"override '{pair}' is not of the form key=value")
        key, raw = pair.split("=", 1)
        key = key.strip().replace("-", "_")
        values[key] = _coerce(key, raw)
    return values


def list_presets() -> List[str]:
    """Names of the bundled presets."""
    folder = resources.files(PRESET_PACKAGE)
    return sorted(entry.name[:-4] for entry in folder.iterdir() if entry.name.endswith(".cfg"))


def read_config_source(config: str) -> Dict[str, Any]:
    """Raw mapping from a file path or a preset name."""
    path = Path(config)
    if path.is_file():
        return parse_config_text(path.read_text(), source=str(path))
    preset = resources.files(PRESET_PACKAGE).joinpath(f"{config}.cfg")
    if preset.is_file():
        logger.debug(f"Loading bundled preset {config}")
        return parse_config_text(preset.read_text(), source=f"preset:{config}")
    raise ConfigurationError(
        f"config '{config}' is neither a file nor a preset ({', '.join(list_presets())})")


def load_scenario_config(config: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None,
                         fast: bool = False) -> ScenarioConfig:
    """
    Build a validated ScenarioConfig.

    ``config`` falls back to the SLICE_SIM_CONFIG environment variable,
    then to the built-in defaults.
    """
    config = config or os.getenv("SLICE_SIM_CONFIG")
    values: Dict[str, Any] = read_config_source(config) if config else {}
    values.update(overrides or {})
    scenario = ScenarioConfig.from_mapping(values)
    return apply_fast_mode(scenario) if fast else scenario


def apply_fast_mode(config: ScenarioConfig) -> ScenarioConfig:
    """Shrink the trial budget and search grids for smoke runs."""
    updates: Dict[str, Any] = {}
    if config.scenario == "embb-urllc":
        updates["eps_u"] = max(config.eps_u, FAST_EPS_U_FLOOR)
        updates["trials"] = min(config.trials, FAST_TRIALS_CAP)
    else:
        updates["trials"] = min(config.trials, FAST_MMTC_TRIALS_CAP)
        updates["gtar_grid_size"] = min(config.gtar_grid_size, FAST_GTAR_GRID_SIZE)
    if config.max_trials is not None:
        updates["max_trials"] = max(updates["trials"], min(config.max_trials, 4 * updates["trials"]))
    return config.with_updates(**updates)


def config_hash(config: ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    payload = config.model_dump(mode="json")
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
