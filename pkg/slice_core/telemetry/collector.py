"""
Simulation Progress Collector

Emits structured progress events (run start, stage timing, search probes,
sweep points) as JSON lines on the ``slice_core.progress`` logger.
"""

import functools
import logging
import os
import uuid
from datetime import datetime, timezone
from typing import Any, Callable, List, Optional, Sequence

from slice_core.telemetry.events import EventType, ProgressEvent

logger = logging.getLogger(__name__)
progress_logger = logging.getLogger("slice_core.progress")

# Per-probe events are only written in verbose mode
VERBOSE_PROGRESS = os.getenv("SLICE_SIM_VERBOSE", "false").lower() == "true"


class ProgressCollector:
    """
    Collector for run progress events.
    """

    def __init__(self, verbose: Optional[bool] = None, keep_history: bool = False):
        self.verbose = VERBOSE_PROGRESS if verbose is None else verbose
        self.keep_history = keep_history
        self.run_id = str(uuid.uuid4())
        self.history: List[ProgressEvent] = []
        self.events_emitted = 0

    def emit(self, event_type: EventType, label: str = "", **fields: Any) -> Optional[ProgressEvent]:
        """Build, log and (optionally) keep an event. Probe events need verbose mode."""
        if event_type == EventType.PROBE and not self.verbose:
            return None
        event = ProgressEvent(run_id=self.run_id, type=event_type, label=label, **fields)
        try:
            progress_logger.info(event.model_dump_json(exclude_none=True))
        except Exception as e:
            logger.warning(f"Failed to record progress event: {e}")
        self.events_emitted += 1
        if self.keep_history:
            self.history.append(event)
        return event

    def probe_hook(self, label: str) -> Callable[[float, Sequence[Any], bool], None]:
        """Search callback reporting each decided probe under ``label``."""
        def hook(value: float, estimates: Sequence[Any], accepted: bool) -> None:
            head = estimates[0] if estimates else None
            self.emit(
                EventType.PROBE,
                label,
                probe=value,
                p_hat=getattr(head, "p_hat", None),
                ci_low=getattr(head, "ci_low", None),
                ci_high=getattr(head, "ci_high", None),
                trials=getattr(head, "trials", None),
                accepted=accepted,
            )
        return hook

    def track_stage(self, stage_name: str) -> Callable:
        """
        Decorator to time a stage of a run.

        Usage:
            @collector.track_stage("region-urllc")
            def run(...):
                return points
        """
        def decorator(func: Callable) -> Callable:
            @functools.wraps(func)
            def wrapper(*args, **kwargs) -> Any:
                start_time = datetime.now(timezone.utc)
                success = True
                error = None
                if self.verbose:
                    logger.debug(f"🔧 Stage {stage_name} started")
                try:
                    return func(*args, **kwargs)
                except Exception as e:
                    success = False
                    error = e
                    raise
                finally:
                    duration_ms = (datetime.now(timezone.utc) - start_time).total_seconds() * 1000
                    if self.verbose:
                        logger.debug(f"🕒 Stage {stage_name} completed in {duration_ms:.2f}ms (success={success})")
                    self.emit(
                        EventType.STAGE,
                        stage_name,
                        success=success,
                        duration_ms=duration_ms,
                        error_category=type(error).__name__ if error else None,
                    )
            return wrapper
        return decorator


# Global collector instance
collector = ProgressCollector()
