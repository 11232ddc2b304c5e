"""Versioned CSV persistence.

Every file starts with the comment line '# schema=1' followed by a header
row; floats are written with repr so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence

SCHEMA_LINE = "# schema=1"

__all__ = ["SCHEMA_LINE", "write_csv", "read_csv", "format_cell"]


def format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write rows under the schema line; floats via repr for reproducibility."""
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(c) for c in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Read a schema=1 CSV; raises ValueError on a missing or wrong schema line."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != SCHEMA_LINE:
        raise ValueError(f"{path}: missing '{SCHEMA_LINE}' header line")
    reader = csv.reader(lines[1:])
    rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: missing header row")
    return rows[0], rows[1:]
