import math
from typing import Any, Dict, List, Literal, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

# --- 1. Enums & Literal Types ---
Scenario = Literal["embb-urllc", "embb-mmtc"]
Scheme = Literal["oma", "noma", "rsma"]

SEED_LIMIT = 2 ** 64
DEFAULT_BETA_GRID: List[float] = [round(0.05 * i, 2) for i in range(21)]

# --- 2. Error Types ---


class ConfigurationError(ValueError):
    """Invalid scenario parameters; the message names the offending field."""


class InfeasibleSearchError(RuntimeError):
    """No grid point or bracket value satisfied the reliability constraints."""


# --- 3. Scenario Configuration ---


class ScenarioConfig(BaseModel):
    """
    Full parameter set of one simulation run.

    Average gains are given in dB and converted to linear scale by the
    channel model. Every field has a default so partial preset files work.
    """
    model_config = ConfigDict(extra="forbid")

    scenario: Scenario = "embb-urllc"
    scheme: Scheme = "rsma"

    # Average channel gains (dB)
    gamma_b_db: float = 10.0
    gamma_u_db: float = 20.0
    gamma_m_db: float = 5.0

    # Resources and population
    f_total: int = Field(default=10, ge=1)
    f_urllc: int = Field(default=5, ge=0)
    n_urllc: int = Field(default=2, ge=0)
    lambda_m: float = Field(default=10.0, ge=0.0)

    # Reliability targets
    eps_b: float = 1e-3
    eps_u: float = 1e-5
    eps_m: float = 0.1

    # Rates (bits/s/Hz)
    r_m: float = Field(default=0.04, gt=0.0)
    r_b: Optional[float] = Field(default=None, ge=0.0)

    # Sweep grids
    r_b_points: int = Field(default=17, ge=1)
    beta_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_BETA_GRID))
    gtar_grid_size: int = Field(default=20, ge=1)
    alpha_grid_size: int = Field(default=201, ge=2)

    # Monte Carlo budget
    trials: int = Field(default=1_000_000, ge=1)
    max_trials: Optional[int] = Field(default=None, ge=1)
    seed: int = 0
    retry_after_cancellation: bool = True

    # Search brackets
    rate_tol: float = Field(default=1e-3, gt=0.0)
    lambda_tol: float = Field(default=0.25, gt=0.0)
    rate_upper: float = Field(default=15.0, gt=0.0)
    lambda_upper: float = Field(default=200.0, gt=0.0)

    @model_validator(mode="after")
    def _check_consistency(self) -> "ScenarioConfig":
        for name in ("gamma_b_db", "gamma_u_db", "gamma_m_db"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        for name in ("eps_b", "eps_u", "eps_m"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        if self.f_urllc > self.f_total:
            raise ValueError(
                f"f_urllc ({self.f_urllc}) exceeds f_total ({self.f_total})")
        if not 0 <= self.seed < SEED_LIMIT:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.max_trials is not None and self.max_trials < self.trials:
            raise ValueError("max_trials must be at least trials")
        if not self.beta_grid:
            raise ValueError("beta_grid must not be empty")
        if any(not 0.0 <= beta <= 1.0 for beta in self.beta_grid):
            raise ValueError("beta_grid values must lie in [0, 1]")
        if 0.0 not in self.beta_grid or 1.0 not in self.beta_grid:
            raise ValueError("beta_grid must include both endpoints 0 and 1")
        if self.scenario == "embb-urllc":
            if self.n_urllc < 1:
                raise ValueError("n_urllc must be at least 1 for embb-urllc")
            if self.scheme == "rsma" and self.n_urllc != 2:
                raise ValueError(
                    f"n_urllc must be 2 for rsma splitting, got {self.n_urllc}")
        return self

    @property
    def effective_max_trials(self) -> int:
        """Escalation ceiling for undecided probes."""
        return self.max_trials if self.max_trials is not None else self.trials

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "ScenarioConfig":
        """Validate a raw mapping, translating pydantic errors into ConfigurationError."""
        try:
            return cls.model_validate(dict(values))
        except ValidationError as e:
            raise ConfigurationError(_describe(e)) from e

    def with_updates(self, **updates: Any) -> "ScenarioConfig":
        """Return a re-validated copy with some fields replaced."""
        merged = self.model_dump()
        merged.update(updates)
        return ScenarioConfig.from_mapping(merged)


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "config"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


# --- 4. Output Schemas ---


class FrontierPoint(BaseModel):
    """One row of a sweep result."""
    series: str
    x: Optional[float] = None
    y: float = Field(ge=0.0)
    best_beta: Optional[float] = None
    best_gtar: Optional[float] = None
    p_hat_b: Optional[float] = None
    p_hat_service: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    trials: Optional[int] = None
    feasible: bool = True

    @model_validator(mode="after")
    def _beta_only_for_rsma(self) -> "FrontierPoint":
        if self.best_beta is not None and not self.series.startswith("rsma"):
            raise ValueError(f"best_beta is only defined for rsma series, got {self.series}")
        return self


class SweepReport(BaseModel):
    """Machine-readable envelope for the --json output."""
    tool: str = "slice-sim"
    version: str
    command: str
    config_hash: str
    seed: int
    config: ScenarioConfig
    points: List[FrontierPoint] = Field(default_factory=list)
    meets_constraints: bool = True
    notes: Dict[str, str] = Field(default_factory=dict)


class EmbbCheckReport(BaseModel):
    """Closed-form eMBB power-control numbers and their Monte Carlo check."""
    gamma_b_db: float
    eps_b: float
    g_min: float
    g_tar_max: float
    r_b_orth: float
    trials: int
    activity_rate: float
    mean_power: float
