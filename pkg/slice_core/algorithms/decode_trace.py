"""
Decode Trace

Step-by-step record of one successive-interference-cancellation run,
used by the ``trace`` command and by tests that check decode order.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

# Absolute tolerance on rate-vs-target comparisons
RATE_TOLERANCE = 1e-9


def meets_rate(rate, target: float):
    """True where ``rate`` reaches ``target`` up to RATE_TOLERANCE."""
    return np.asarray(rate) >= target - RATE_TOLERANCE


@dataclass(frozen=True)
class DecodeStep:
    """One decoding attempt."""
    stream: str
    sinr: float
    rate: float
    success: Optional[bool] = None
    cancelled: Tuple[str, ...] = ()
    frequency: Optional[int] = None
    gain: Optional[float] = None
    note: str = ""


@dataclass
class DecodeTrace:
    steps: List[DecodeStep] = field(default_factory=list)
    markers: Dict[str, int] = field(default_factory=dict)
    _cancelled: List[str] = field(default_factory=list, repr=False)

    def record(self, stream: str, sinr: float, *, success: Optional[bool] = None,
               frequency: Optional[int] = None, gain: Optional[float] = None,
               note: str = "", cancel: bool = False) -> DecodeStep:
        """Append a step; with ``cancel`` the stream then joins the cancelled set."""
        sinr = float(sinr)
        step = DecodeStep(
            stream=stream,
            sinr=sinr,
            rate=float(np.log2(1.0 + sinr)),
            success=success,
            cancelled=tuple(self._cancelled),
            frequency=frequency,
            gain=None if gain is None else float(gain),
            note=note,
        )
        self.steps.append(step)
        if cancel:
            self.cancel(stream)
        return step

    def cancel(self, stream: str) -> None:
        if stream not in self._cancelled:
            self._cancelled.append(stream)

    def mark(self, name: str, position: int) -> None:
        self.markers[name] = int(position)

    @property
    def cancelled_streams(self) -> Tuple[str, ...]:
        return tuple(self._cancelled)

    def streams(self, prefix: str = "") -> List[DecodeStep]:
        return [step for step in self.steps if step.stream.startswith(prefix)]

    def render(self) -> str:
        """Text table of every step; gains, SINRs and rates are printed with repr."""
        lines = [f"{'#':>3}  {'stream':<8} {'freq':>4}  {'gain':>22}  {'sinr':>22}  {'rate':>22}  ok  cancelled"]
        for index, step in enumerate(self.steps):
            freq = "" if step.frequency is None else str(step.frequency)
            gain = "" if step.gain is None else repr(step.gain)
            ok = "-" if step.success is None else ("y" if step.success else "n")
            cancelled = ",".join(step.cancelled) or "-"
            note = f"  ({step.note})" if step.note else ""
            lines.append(
                f"{index:>3}  {step.stream:<8} {freq:>4}  {gain:>22}  {step.sinr!r:>22}  "
                f"{step.rate!r:>22}  {ok:>2}  {cancelled}{note}")
        for name, position in sorted(self.markers.items()):
            lines.append(f"marker {name} = {position}")
        return "\n".join(lines)
