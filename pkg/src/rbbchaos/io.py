"""CSV and JSON writers.

Every file starts with the artifact version and the fully resolved run
configuration. CSV files carry it as ``#`` comment lines, JSON files under a
``metadata`` key. Floats use Python's shortest round-trip repr (at most 17
significant digits), so reruns produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any, Iterable, Sequence

from . import __version__


def _clean(value: Any) -> Any:
    if hasattr(value, "item") and not isinstance(value, (list, dict, str)):
        value = value.item()  # numpy scalar
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def metadata(command: str, config: dict) -> dict:
    return {"artifact": "rbbchaos", "version": __version__, "command": command,
            "config": _clean(config)}


def _fmt(value: Any) -> str:
    value = _clean(value)
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def to_csv(meta: dict, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    buf.write(f"# {meta['artifact']} {meta['version']} {meta['command']}\n")
    buf.write("# config: " + json.dumps(meta["config"], sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def to_json(meta: dict, payload: dict) -> str:
    return json.dumps({"metadata": meta, **_clean(payload)}, indent=2, sort_keys=False) + "\n"


def state_key(occupancies) -> str:
    return ",".join(str(int(x)) for x in occupancies)


def read_csv_body(text: str) -> list[list[str]]:
    """Rows of a file written by :func:`to_csv`, header included, comments dropped."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.reader(lines))
