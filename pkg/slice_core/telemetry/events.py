from enum import Enum
from typing import Optional, Dict, Any
from datetime import datetime, timezone
from pydantic import BaseModel, Field
import uuid


class EventType(str, Enum):
    RUN_START = "run_start"
    STAGE = "stage"
    PROBE = "probe"
    SWEEP_POINT = "sweep_point"


class ProgressEvent(BaseModel):
    """
    Progress record of a simulation run.

    Written as one JSON line per event to stderr; result data never
    travels through events.
    """
    event_id: str = Field(default_factory=lambda: str(uuid.uuid4()))
    timestamp: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    run_id: str

    type: EventType
    label: str = ""

    # Search probe
    probe: Optional[float] = None
    p_hat: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    trials: Optional[int] = None
    accepted: Optional[bool] = None

    # Outcome
    success: bool = True
    duration_ms: float = 0.0
    error_category: Optional[str] = None

    # Metadata
    properties: Dict[str, Any] = Field(default_factory=dict)
