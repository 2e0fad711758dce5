"""Render evaluation reports as aligned text tables, CSV, or JSON."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Optional, Sequence

from .corpus import ExplicitnessLabel
from .errors import ReportError
from .evaluation import EvaluationReport, Protocol
from .metrics import Metric

_METRIC_HEADERS = {
    Metric.ROUGE_L_F1: "ROUGE-L-F1",
    Metric.BLEU4: "BLEU-4",
    Metric.EXACT_MATCH: "EXACT MATCH",
    Metric.EXTERNAL: "EXTERNAL",
}

_QA_METRICS = (Metric.ROUGE_L_F1, Metric.EXACT_MATCH)
_QG_METRICS = (Metric.ROUGE_L_F1, Metric.BLEU4, Metric.EXTERNAL)


@dataclass(frozen=True)
class RenderedTable:
    title: str
    column_headers: tuple[str, ...]
    rows: tuple[tuple[str, tuple[str, ...]], ...]
    metadata_footer: str

    def __post_init__(self):
        for label, values in self.rows:
            if len(values) != len(self.column_headers):
                raise ReportError(
                    f"row {label!r} has {len(values)} values for "
                    f"{len(self.column_headers)} headers")


def format_value(value: Optional[float]) -> str:
    """Three decimals, round-half-to-even; absent cells render as a dash."""
    if value is None:
        return "-"
    return str(Decimal(repr(value)).quantize(Decimal("0.001"), rounding=ROUND_HALF_EVEN))


def _footer(reports: Sequence[EvaluationReport]) -> str:
    meta = reports[0].metadata
    parts = []
    norm = meta.get("normalization")
    if norm:
        enabled = [k for k, v in norm.items() if v]
        parts.append("normalization=" + (",".join(enabled) or "none"))
    for key in ("smoothing", "aggregation", "controlled_test_policy",
                "controlled_test_seed"):
        if key in meta and meta[key] is not None:
            parts.append(f"{key}={meta[key]}")
    return "; ".join(parts)


def build_table(reports: Sequence[EvaluationReport]) -> RenderedTable:
    protocols = {r.protocol for r in reports}
    if len(protocols) > 1:
        raise ReportError("cannot mix protocols in one table")
    protocol = reports[0].protocol

    if protocol is Protocol.QA_CONTROLLABILITY:
        metrics = [m for m in _QA_METRICS if any(m in r.overall for r in reports)]
        headers = tuple(
            f"{_METRIC_HEADERS[m]} {col}"
            for m in metrics for col in ("Overall", "Explicit", "Implicit")
        )
        rows = []
        for r in reports:
            values = []
            for m in metrics:
                values.append(format_value(r.overall.get(m)))
                for label in (ExplicitnessLabel.EXPLICIT, ExplicitnessLabel.IMPLICIT):
                    values.append(format_value(r.by_explicitness.get(label, {}).get(m)))
            rows.append((r.config.row_label, tuple(values)))
        title = "QA results (0-1)"
    else:
        metrics = [m for m in _QG_METRICS if any(m in r.overall for r in reports)]
        headers = tuple(_METRIC_HEADERS[m] for m in metrics)
        rows = [
            (r.config.row_label,
             tuple(format_value(r.overall.get(m)) for m in metrics))
            for r in reports
        ]
        title = "QG results (0-1)"

    return RenderedTable(
        title=title,
        column_headers=headers,
        rows=tuple(rows),
        metadata_footer=_footer(reports),
    )


def _render_text(table: RenderedTable) -> str:
    label_width = max([len("Models")] + [len(label) for label, _ in table.rows])
    col_widths = [
        max(len(h), *(len(row[1][i]) for row in table.rows)) if table.rows else len(h)
        for i, h in enumerate(table.column_headers)
    ]
    lines = [table.title]
    header = "Models".ljust(label_width) + "  " + "  ".join(
        h.rjust(w) for h, w in zip(table.column_headers, col_widths))
    lines.append(header)
    lines.append("-" * len(header))
    for label, values in table.rows:
        lines.append(label.ljust(label_width) + "  " + "  ".join(
            v.rjust(w) for v, w in zip(values, col_widths)))
    if table.metadata_footer:
        lines.append("")
        lines.append(table.metadata_footer)
    return "\n".join(lines) + "\n"


def _render_csv(table: RenderedTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", *table.column_headers])
    for label, values in table.rows:
        writer.writerow([label, *values])
    return buf.getvalue()


def render_report(reports: Sequence[EvaluationReport], format: str = "text-table") -> str:
    """One table per call; all reports must share a protocol. JSON keeps raw
    full-precision values alongside the formatted table."""
    if not reports:
        raise ReportError("no reports")
    table = build_table(reports)
    if format == "text-table":
        return _render_text(table)
    if format == "csv":
        return _render_csv(table)
    if format == "json":
        doc = {
            "title": table.title,
            "column_headers": list(table.column_headers),
            "rows": [
                {"model": label, "values": list(values)}
                for label, values in table.rows
            ],
            "metadata_footer": table.metadata_footer,
            "raw_reports": [r.to_dict() for r in reports],
        }
        return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    raise ReportError(f"unknown report format: {format!r}")
