# fieldtheory/services/telemetry.py
"""
Run artifacts: JSON-lines telemetry, columnar plot data and the plain-text
summary. Nothing here writes timestamps, so identical runs produce identical
bytes.
"""
import csv
import json
import logging
from pathlib import Path

from fieldtheory.services.dynamics import RESIDUAL_NAMES

logger = logging.getLogger(__name__)

PLOT_COLUMNS = ("t", "H") + RESIDUAL_NAMES


def _dumps(payload) -> str:
    return json.dumps(payload, sort_keys=True, allow_nan=True)


def write_telemetry(path, scenario: str, records=(), checks=None) -> Path:
    """One line per evolution record, then one line per scenario check."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(_dumps({"kind": "record", "scenario": scenario, **record.as_dict()}) + "\n")
        for name, check in (checks or {}).items():
            fh.write(_dumps({"kind": "check", "scenario": scenario, "name": name, **check.as_dict()}) + "\n")
    logger.debug(f"telemetry written to {path}")
    return path


def emit_plotdata(records, path) -> Path:
    """
    CSV with header t,H,<six residual norms>; every value uses 17 significant
    digits so the file parses back to the in-memory floats exactly.
    """
    records = list(records)
    if not records:
        raise ValueError("emit_plotdata needs at least one record")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PLOT_COLUMNS)
        for record in records:
            row = [record.t, record.hamiltonian] + [record.constraint_residuals.get(name, 0.0) for name in RESIDUAL_NAMES]
            writer.writerow([f"{float(x):.17g}" for x in row])
    return path


def read_plotdata(path) -> dict:
    """Column name -> list of floats."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        columns = {name: [] for name in reader.fieldnames or ()}
        for row in reader:
            for name, value in row.items():
                columns[name].append(float(value))
    return columns


def write_summary(path, lines) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
