"""Metric reports and their CSV/JSON serialization."""

import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Sequence

import pandas as pd

COLUMN_ORDER = ["EN", "MI", "SD", "SF", "VIF", "AG", "SCD", "PSNR", "SSIM"]
# Serialized headers that differ from the metric key
COLUMN_LABELS = {"VIF": "VIF(single-scale)"}
PROVENANCE_COLUMNS = ["sources", "fused"]


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class MetricReport:
    """Metric name -> value for one fused result, with where it came from."""

    task: str
    values: Dict[str, float]
    sources: List[str] = field(default_factory=list)
    fused: str = ""
    timestamp: str = field(default_factory=_now)

    def ordered_keys(self) -> List[str]:
        """Fixed column order first, then any task-specific extras in insertion order."""
        known = [k for k in COLUMN_ORDER if k in self.values]
        return known + [k for k in self.values if k not in COLUMN_ORDER]

    def row(self) -> "OrderedDict[str, Any]":
        row: "OrderedDict[str, Any]" = OrderedDict()
        for key in self.ordered_keys():
            row[COLUMN_LABELS.get(key, key)] = float(self.values[key])
        row["sources"] = ";".join(self.sources)
        row["fused"] = self.fused
        return row


def _json_value(value: Any) -> Any:
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def reports_to_frame(reports: Sequence[MetricReport]) -> pd.DataFrame:
    """One row per report, metric columns in the fixed order."""
    if not reports:
        return pd.DataFrame()
    columns = list(reports[0].row().keys())
    return pd.DataFrame([r.row() for r in reports], columns=columns)


def to_csv(reports: Sequence[MetricReport]) -> str:
    return reports_to_frame(reports).to_csv(index=False, float_format="%.17g")


def to_json(reports: Sequence[MetricReport], include_timestamp: bool = True) -> str:
    rows = []
    for report in reports:
        row = OrderedDict((k, _json_value(v)) for k, v in report.row().items())
        row["sources"] = list(report.sources)
        if include_timestamp:
            row["timestamp"] = report.timestamp
        rows.append(row)
    document = OrderedDict([
        ("task", reports[0].task if reports else ""),
        ("rows", rows),
    ])
    return json.dumps(document, indent=2)


def generate_summary(reports: Sequence[MetricReport]) -> Dict[str, float]:
    """
    Mean of every metric over a batch of reports.

    Infinite PSNR rows are averaged as inf, matching their per-row meaning.
    """
    if not reports:
        return {}
    df = reports_to_frame(reports)
    metric_columns = [c for c in df.columns if c not in PROVENANCE_COLUMNS]
    return {column: float(df[column].mean()) for column in metric_columns}


def render(reports: Sequence[MetricReport], fmt: str = "json") -> str:
    if fmt == "csv":
        return to_csv(reports)
    if fmt == "json":
        return to_json(reports)
    raise ValueError(f"Unknown report format {fmt!r}; expected 'csv' or 'json'")
