"""CSV helpers shared by the ensemble, report, and command line layers.

Artifacts are plain CSVs preceded by ``# key=value`` comment lines carrying
provenance (package version, config hash, the generating spec as one JSON
line).  Nothing time-dependent goes into these files, so reruns are
byte-identical; timestamps live in separate ``.meta.json`` sidecars written
by the command line layer.
"""

from __future__ import annotations

import csv
import json
import math

from .errors import ValidationError


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(path, columns, rows, meta: dict) -> None:
    """Write rows (dicts) under a sorted ``# key=value`` preamble."""
    with open(path, "w", newline="") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}={meta[key]}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def read_table(path):
    """Read a CSV written by :func:`write_table`.

    Returns (meta, columns, rows) with every cell still a string; callers
    apply their own converters.
    """
    meta = {}
    with open(path, newline="") as fh:
        pos = fh.tell()
        line = fh.readline()
        while line.startswith("#"):
            body = line[1:].strip()
            key, _, val = body.partition("=")
            meta[key.strip()] = val
            pos = fh.tell()
            line = fh.readline()
        fh.seek(pos)
        reader = csv.reader(fh)
        try:
            columns = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: no header row")
        rows = [dict(zip(columns, r)) for r in reader]
    return meta, columns, rows


def parse_float(cell: str):
    if cell == "":
        return None
    return float(cell)


def parse_int(cell: str):
    if cell == "":
        return None
    return int(cell)


def parse_bool(cell: str):
    if cell == "":
        return None
    if cell not in ("true", "false"):
        raise ValidationError(f"expected true/false, got {cell!r}")
    return cell == "true"


def json_safe(value):
    """Recursively replace non-finite floats by strings so the result is
    strict JSON."""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


def dump_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(json_safe(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
