"""
CSV reports.

A report is a header row, one row per sample or node summary, and a trailing
``# summary:`` comment line with sorted ``key=value`` pairs. Floats are printed
with 17 significant digits so equal runs give byte-identical files.
"""

import io
import logging
import math
import sys
from pathlib import Path
from typing import Any, Optional, TextIO, Union

import numpy as np

from sigma2lab.schemas.lab_schemas import ExperimentReport

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
SUMMARY_PREFIX = "# summary:"


def format_value(value: Any) -> str:
    """Render a summary scalar."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return FLOAT_FORMAT % v
    if value is None:
        return "none"
    return str(value).replace(";", ",").replace("\n", " ")


def summary_line(report: ExperimentReport) -> str:
    summary = dict(report.summary)
    summary.setdefault("violations", report.violations)
    summary["success"] = report.success
    body = "; ".join(f"{key}={format_value(summary[key])}" for key in sorted(summary))
    return f"{SUMMARY_PREFIX} {body}"


def render_report(report: ExperimentReport) -> str:
    """Full CSV text of a report."""
    buffer = io.StringIO()
    report.table.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    buffer.write(summary_line(report) + "\n")
    return buffer.getvalue()


def write_report(report: ExperimentReport, out: Optional[Union[str, Path]] = None, stream: Optional[TextIO] = None) -> None:
    """Write a report to ``out`` or to ``stream`` (stdout by default)."""
    text = render_report(report)
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"Report {report.name} written to {path} ({len(report.table)} rows)")
    else:
        (stream or sys.stdout).write(text)


def parse_summary(text: str) -> dict:
    """Summary pairs of a rendered report, values as strings."""
    for line in reversed(text.splitlines()):
        if line.startswith(SUMMARY_PREFIX):
            body = line[len(SUMMARY_PREFIX):].strip()
            return dict(part.split("=", 1) for part in body.split("; ") if part)
    return {}
