"""
File I/O for the replica predictor.

Provides:
- JSON config loading with validation errors reported by key path
- Tabulated spectrum loading from two-column CSV
- CSV writers for prediction rows and per-trial distortions
- JSON summary writer
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import IO, Any, Dict, List, Mapping, Sequence, Union

from pydantic import ValidationError

from .errors import ConfigError
from .models import EnsembleSpec, PredictionRow, RunConfig, SimReport

logger = logging.getLogger(__name__)

# CSV column order; "lam" is written as "lambda"
PREDICTION_COLUMNS = (
    "penalty",
    "ensemble",
    "solver",
    "minimized",
    "lam",
    "rate",
    "chi",
    "q",
    "p",
    "mu",
    "xi",
    "f",
    "w",
    "D",
    "D_dB",
    "status",
    "iterations",
    "dB_reference",
    "gate_delta",
)
_HEADER_NAMES = {"lam": "lambda"}


# ============================================================================
# Config and spectrum loading
# ============================================================================


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        key = ".".join(str(part) for part in item["loc"]) or "<root>"
        parts.append(f"{key}: {item['msg']}")
    return "; ".join(parts)


def parse_config(data: Any, source: str = "<config>") -> RunConfig:
    """
    Validate an already-decoded config object.

    Raises:
        ConfigError: Naming the offending key path(s)
    """
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: {_describe(e)}") from e


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Load and validate a JSON config file.

    Args:
        path: Config file path

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: Missing file, malformed JSON, or schema violation
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"{path}: malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e

    cfg = parse_config(data, str(path))
    logger.debug(f"Loaded config from {path}")
    return cfg


def load_spectrum_csv(path: Union[str, Path], r: float) -> EnsembleSpec:
    """
    Load a tabulated Gramian spectrum from CSV.

    The file has a header row and two columns: eigenvalue, probability mass.

    Args:
        path: CSV file path
        r: Compression rate carried by the ensemble

    Returns:
        Tabulated EnsembleSpec

    Raises:
        ConfigError: Unreadable file, bad rows, or invalid masses
    """
    path = Path(path)
    spectrum = []
    try:
        with open(path, encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None:
                raise ConfigError(f"{path}: empty spectrum file")
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) != 2:
                    raise ConfigError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
                try:
                    spectrum.append((float(row[0]), float(row[1])))
                except ValueError as e:
                    raise ConfigError(f"{path}:{lineno}: {e}") from e
    except OSError as e:
        raise ConfigError(f"cannot read spectrum file {path}: {e}") from e

    try:
        spec = EnsembleSpec(kind="tabulated", r=r, spectrum=spectrum)
    except ValidationError as e:
        raise ConfigError(f"{path}: {_describe(e)}") from e
    logger.info(f"Loaded {len(spectrum)} spectral atoms from {path}")
    return spec


# ============================================================================
# Writers
# ============================================================================


def format_cell(value: Any) -> str:
    """Deterministic CSV cell text; missing numbers are written as nan"""
    if value is None:
        return "nan"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if value.is_integer() and abs(value) < 1e15:
            return str(int(value))
        return repr(float(value))
    return str(value)


def write_prediction_csv(rows: Sequence[PredictionRow], stream: IO[str]) -> None:
    """Write prediction rows with a header (RFC 4180, CRLF line ends)"""
    writer = csv.writer(stream)
    writer.writerow([_HEADER_NAMES.get(col, col) for col in PREDICTION_COLUMNS])
    for row in rows:
        values: Dict[str, Any] = dict(row)
        writer.writerow([format_cell(values[col]) for col in PREDICTION_COLUMNS])


def write_trials_csv(report: SimReport, stream: IO[str]) -> None:
    """Write one (trial, distortion) row per trial"""
    writer = csv.writer(stream)
    writer.writerow(["trial", "distortion"])
    for trial, value in enumerate(report.distortions):
        writer.writerow([trial, format_cell(value)])


def write_json(data: Mapping[str, Any], path: Union[str, Path]) -> None:
    """Write a UTF-8 JSON document"""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote {path}")


def sim_summary(report: SimReport, extra: Dict[str, Any]) -> Dict[str, Any]:
    """JSON summary of a simulation (per-trial values stay in the CSV)"""
    summary: Dict[str, Any] = report.model_dump(exclude={"distortions"})
    summary.update(extra)
    return summary


def rows_as_dicts(rows: List[PredictionRow]) -> List[Dict[str, Any]]:
    """Rows with JSON-safe values (nan → None) for tool responses"""
    out = []
    for row in rows:
        out.append(
            {
                _HEADER_NAMES.get(k, k): (None if isinstance(v, float) and math.isnan(v) else v)
                for k, v in row.items()
            }
        )
    return out
