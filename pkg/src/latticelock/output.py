"""Atomic, reproducible file output.

Files are written to a temporary name and renamed into place, so a crashed
run never leaves partial artifacts.  Floats are formatted with a fixed
shortest-round-trip-style format so identical inputs give identical bytes.
"""

from __future__ import annotations

import json
import os
import tempfile

FLOAT_FMT = "%.12g"


def format_value(v) -> str:
    if isinstance(v, float):
        return FLOAT_FMT % v
    return str(v)


def atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header: list, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path: str, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_csv(path: str):
    """Header list plus rows of strings (no type coercion)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]
