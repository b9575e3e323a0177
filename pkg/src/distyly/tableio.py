"""CSV output helpers.

Floats are written with exactly 12 significant digits in scientific
notation so files are byte-stable across runs and platforms; integers and
strings pass through unchanged.
"""

import csv
import io
from typing import Iterable, Sequence


def format_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.11e}"
    return "" if v is None else str(v)


def write_csv(target, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write rows to a path or text file object, UTF-8, '\\n' line ends."""
    if hasattr(target, "write"):
        w = csv.writer(target, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_cell(v) for v in row])
        return
    with open(target, "w", encoding="utf-8", newline="") as fh:
        write_csv(fh, header, rows)


def render_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    write_csv(buf, header, rows)
    return buf.getvalue()
