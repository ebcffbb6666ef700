"""
CSV input and output for the command line.

Input reports.csv rows are (step, sensor_id, report_type, payload), where the
payload is a `key=value;key=value` list. Outputs are declarations.csv,
curves.csv, summary.csv and a plain-text report.
"""

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from rich.console import Console
from rich.table import Table

from fusion.exceptions import InvalidInputError, ReportSchemaError

from .validation import expected_columns, validate_header, validate_payload

logger = logging.getLogger("reports")

PathLike = Union[str, Path]


@dataclass(frozen=True)
class ReportRow:
    row: int
    step: int
    sensor_id: str
    report_type: str
    fields: Dict[str, str]


@dataclass(frozen=True)
class DeclarationRow:
    step: int
    probabilities: np.ndarray
    declared_class: int
    rho: float


def parse_payload(text: str) -> Dict[str, str]:
    """'amplitude=0.4;pw_high=1e-6' -> {'amplitude': '0.4', 'pw_high': '1e-6'}"""
    fields: Dict[str, str] = {}
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise InvalidInputError(f"payload item '{item}' is not key=value")
        if key in fields:
            raise InvalidInputError(f"payload key '{key}' repeated")
        fields[key] = value
    return fields


def read_report_rows(path: PathLike) -> List[ReportRow]:
    """Read and validate reports.csv; row numbers are file line numbers"""
    try:
        handle = open(path, "r", newline="", encoding="utf-8")
    except OSError as e:
        raise InvalidInputError(f"cannot read reports file {path}: {e.strerror}") from None

    rows: List[ReportRow] = []
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            return rows
        result = validate_header(header, "reports")
        if not result["is_valid"]:
            raise ReportSchemaError("; ".join(result["issues"]), 1)

        width = len(header)
        for record in reader:
            line = reader.line_num
            if not any(cell.strip() for cell in record):
                continue
            if len(record) != width:
                raise ReportSchemaError(f"expected {width} columns, got {len(record)}", line)
            step_text, sensor_id, report_type, payload = (cell.strip() for cell in record)
            try:
                step = int(step_text)
            except ValueError:
                raise ReportSchemaError(f"step '{step_text}' is not an integer", line) from None
            if step < 0:
                raise ReportSchemaError(f"step must be non-negative, got {step}", line)
            if not sensor_id:
                raise ReportSchemaError("sensor_id is empty", line)
            try:
                fields = parse_payload(payload)
            except InvalidInputError as e:
                raise ReportSchemaError(str(e), line) from None
            result = validate_payload(report_type, fields)
            if not result["is_valid"]:
                raise ReportSchemaError("; ".join(result["issues"]), line)
            rows.append(ReportRow(line, step, sensor_id, report_type, fields))

    logger.info(f"Read {len(rows)} report rows from {path}")
    return rows


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _write_rows(path: PathLike, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def write_declarations(path: PathLike, declarations: Sequence[DeclarationRow], class_ids: Sequence[int]) -> None:
    rows = [
        [d.step, *(_fmt(p) for p in d.probabilities), d.declared_class, _fmt(d.rho)]
        for d in declarations
    ]
    _write_rows(path, expected_columns("declarations", class_ids), rows)


def write_curves(path: PathLike, curves: np.ndarray, class_ids: Sequence[int]) -> None:
    """Mean class-probability curves; step k is the posterior after the k-th scan"""
    rows = [[k + 1, *(_fmt(p) for p in curve)] for k, curve in enumerate(curves)]
    _write_rows(path, expected_columns("curves", class_ids), rows)


def write_summary(path: PathLike, results: Sequence[Tuple[str, float]]) -> None:
    rows = [[label, f"{percent:.2f}"] for label, percent in results]
    _write_rows(path, expected_columns("summary"), rows)


def summary_table(results: Sequence[Tuple[str, float]], runs: int, steps: int) -> Table:
    table = Table(title=f"Percentage of correct reported class ({runs} runs x {steps} steps)")
    table.add_column("Features", justify="left")
    table.add_column("Correct (%)", justify="right")
    for label, percent in results:
        table.add_row(label.replace("a", "α"), f"{percent:.1f}")
    return table


def render_report(results: Sequence[Tuple[str, float]], runs: int, steps: int) -> str:
    """Plain-text rendering of the summary table, independent of the terminal"""
    buffer = io.StringIO()
    console = Console(file=buffer, width=80, color_system=None, force_terminal=False)
    console.print(summary_table(results, runs, steps))
    return buffer.getvalue()


def write_report_text(path: PathLike, results: Sequence[Tuple[str, float]], runs: int, steps: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_report(results, runs, steps), encoding="utf-8")


def read_table(path: PathLike, table: str, class_ids: Sequence[int] = ()) -> List[Dict[str, str]]:
    """Read back an output CSV, checking its header against the column contract"""
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, [])
        result = validate_header(header, table, class_ids)
        if not result["is_valid"]:
            raise ReportSchemaError("; ".join(result["issues"]), 1)
        return [dict(zip(header, record)) for record in reader]
