"""
Sweep output in CSV and JSON.

CSV files open with a provenance comment line carrying the tool version,
the config hash and the seed, followed by one row per FrontierPoint.
Floats are written with ``repr`` so identical runs give identical bytes.
"""

import csv
import io
from pathlib import Path
from typing import Optional, Sequence, TextIO, Union

from slice_core import TOOL_NAME, __version__
from slice_core.config_loader import config_hash
from slice_core.slice_schemas import FrontierPoint, ScenarioConfig, SweepReport

CSV_COLUMNS = ("series", "x", "y", "best_beta", "best_gtar", "p_hat_b",
               "p_hat_service", "ci_low", "ci_high", "trials")


def provenance_line(config: ScenarioConfig) -> str:
    return f"# {TOOL_NAME} v{__version__}, config_hash={config_hash(config)}, seed={config.seed}"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(points: Sequence[FrontierPoint], config: ScenarioConfig) -> str:
    buffer = io.StringIO()
    buffer.write(provenance_line(config) + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for point in points:
        writer.writerow([_cell(getattr(point, column)) for column in CSV_COLUMNS])
    return buffer.getvalue()


def build_report(command: str, points: Sequence[FrontierPoint], config: ScenarioConfig) -> SweepReport:
    return SweepReport(
        version=__version__,
        command=command,
        config_hash=config_hash(config),
        seed=config.seed,
        config=config,
        points=list(points),
        meets_constraints=any(point.feasible for point in points),
    )


def render_json(command: str, points: Sequence[FrontierPoint], config: ScenarioConfig) -> str:
    return build_report(command, points, config).model_dump_json(indent=2) + "\n"


def write_output(text: str, out: Optional[Union[str, Path]] = None,
                 stream: Optional[TextIO] = None) -> None:
    """Write ``text`` to ``out`` if given, else to ``stream``."""
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    elif stream is not None:
        stream.write(text)
        stream.flush()
