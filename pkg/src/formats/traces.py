"""Trace files: comment-prefixed YAML header lines followed by a CSV table.

Example::

    # quadrature_1: squeezed
    # rbw_hz: 100000.0
    frequency_hz,v1_db,v2_db,sigma1_db,sigma2_db
    5000000,-2.71,4.66,0.62,0.62

Variances are in dB relative to shot noise.  dB sigmas are converted to
linear ones by local linearisation, σ_lin = v·ln(10)/10·σ_dB, which holds
for σ_dB below about 1 dB.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from src.errors import TraceFormatError
from src.formats.atomic import atomic_write_text
from src.quadrature.spectrum import QuadratureSpectrum, from_db, to_db

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("frequency_hz", "v1_db", "v2_db")
SIGMA_COLUMNS = ("sigma1_db", "sigma2_db")
_DB_TO_LINEAR = math.log(10.0) / 10.0
FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class TraceFile:
    header: Dict[str, Any]
    spectrum: QuadratureSpectrum
    columns: Tuple[str, ...] = field(default=REQUIRED_COLUMNS)


def _parse_header_line(text: str, line_number: int) -> Tuple[str, Any]:
    body = text.lstrip("#").strip()
    if ":" not in body:
        return "", None
    key, _, raw = body.partition(":")
    try:
        value = yaml.safe_load(raw.strip()) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise TraceFormatError(f"unreadable header value for {key.strip()!r}: {exc}", line=line_number) from exc
    return key.strip(), value


def _split_lines(text: str) -> Tuple[Dict[str, Any], Optional[Tuple[int, str]], List[Tuple[int, str]]]:
    header: Dict[str, Any] = {}
    column_line: Optional[Tuple[int, str]] = None
    rows: List[Tuple[int, str]] = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, value = _parse_header_line(stripped, line_number)
            if key:
                header[key] = value
            continue
        if column_line is None:
            column_line = (line_number, stripped)
        else:
            rows.append((line_number, stripped))
    return header, column_line, rows


def _columns(column_line: Optional[Tuple[int, str]]) -> Tuple[str, ...]:
    if column_line is None:
        raise TraceFormatError("trace has no column header")
    line_number, text = column_line
    columns = tuple(name.strip() for name in text.split(","))
    missing = [name for name in REQUIRED_COLUMNS if name not in columns]
    if missing:
        raise TraceFormatError(f"missing required columns: {', '.join(missing)}", line=line_number)
    present = [name for name in SIGMA_COLUMNS if name in columns]
    if len(present) == 1:
        raise TraceFormatError("sigma1_db and sigma2_db must be given together", line=line_number)
    if len(set(columns)) != len(columns):
        raise TraceFormatError("duplicate column names", line=line_number)
    return columns


def parse_trace(text: str) -> TraceFile:
    """Parse trace text; errors name the 1-based line they occur on."""
    header, column_line, rows = _split_lines(text)
    columns = _columns(column_line)
    if not rows:
        raise TraceFormatError("trace has no data rows")

    for line_number, row in rows:
        n_fields = len(row.split(","))
        if n_fields != len(columns):
            raise TraceFormatError(
                f"expected {len(columns)} fields, found {n_fields}", line=line_number
            )

    raw = pd.read_csv(
        io.StringIO("\n".join(row for _, row in rows)),
        header=None,
        names=list(columns),
        dtype=str,
        skipinitialspace=True,
    )
    numeric = raw.apply(pd.to_numeric, errors="coerce")
    finite = np.isfinite(numeric.to_numpy(dtype=float))
    bad_rows = np.flatnonzero(~finite.all(axis=1))
    if bad_rows.size:
        index = int(bad_rows[0])
        bad_columns = [c for c, ok in zip(columns, finite[index]) if not ok]
        raise TraceFormatError(
            f"malformed value in column {', '.join(bad_columns)}", line=rows[index][0]
        )

    freqs = numeric["frequency_hz"].to_numpy(dtype=float)
    descending = np.flatnonzero(np.diff(freqs) <= 0.0)
    if descending.size:
        index = int(descending[0]) + 1
        raise TraceFormatError(
            f"frequencies must be strictly ascending ({freqs[index]!r} after {freqs[index - 1]!r})",
            line=rows[index][0],
        )

    v1 = np.asarray(from_db(numeric["v1_db"].to_numpy(dtype=float)))
    v2 = np.asarray(from_db(numeric["v2_db"].to_numpy(dtype=float)))
    sigma1 = sigma2 = None
    if SIGMA_COLUMNS[0] in columns:
        sigma1_db = numeric["sigma1_db"].to_numpy(dtype=float)
        sigma2_db = numeric["sigma2_db"].to_numpy(dtype=float)
        if np.any(sigma1_db < 0.0) or np.any(sigma2_db < 0.0):
            first = int(np.flatnonzero((sigma1_db < 0.0) | (sigma2_db < 0.0))[0])
            raise TraceFormatError("sigma columns must be non-negative", line=rows[first][0])
        if np.any(sigma1_db > 1.0) or np.any(sigma2_db > 1.0):
            logger.warning("dB sigmas above 1 dB; linearised sigmas are approximate")
        sigma1 = v1 * _DB_TO_LINEAR * sigma1_db
        sigma2 = v2 * _DB_TO_LINEAR * sigma2_db
    try:
        parsed = QuadratureSpectrum(freqs_hz=freqs, v1=v1, v2=v2, sigma1=sigma1, sigma2=sigma2)
    except ValueError as exc:
        raise TraceFormatError(str(exc)) from exc
    return TraceFile(header=header, spectrum=parsed, columns=columns)


def read_trace_file(path: Union[str, Path]) -> TraceFile:
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    trace = parse_trace(text)
    logger.info("Loaded %d trace points from %s", len(trace.spectrum), path)
    return trace


def load_trace(path: Union[str, Path]) -> QuadratureSpectrum:
    """Read a trace file into linear variances (vacuum = 1)."""
    return read_trace_file(path).spectrum


def _header_text(header: Mapping[str, Any]) -> str:
    lines = []
    for key, value in header.items():
        rendered = yaml.safe_dump(value, default_flow_style=True, width=10_000).strip()
        if rendered.endswith("..."):
            rendered = rendered[:-3].strip()
        lines.append(f"# {key}: {rendered}")
    return "".join(line + "\n" for line in lines)


def format_trace(measured: QuadratureSpectrum, header: Optional[Mapping[str, Any]] = None) -> str:
    columns: Dict[str, np.ndarray] = {
        "frequency_hz": measured.freqs_hz,
        "v1_db": np.atleast_1d(to_db(measured.v1)),
        "v2_db": np.atleast_1d(to_db(measured.v2)),
    }
    if measured.has_sigmas:
        columns["sigma1_db"] = measured.sigma1 / (measured.v1 * _DB_TO_LINEAR)
        columns["sigma2_db"] = measured.sigma2 / (measured.v2 * _DB_TO_LINEAR)
    table = pd.DataFrame(columns).to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return _header_text(header or {}) + table


def save_trace(
    path: Union[str, Path],
    measured: QuadratureSpectrum,
    header: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Write ``measured`` atomically in dB with optional header metadata."""
    written = atomic_write_text(path, format_trace(measured, header))
    logger.info("Wrote %d trace points to %s", len(measured), written)
    return written
