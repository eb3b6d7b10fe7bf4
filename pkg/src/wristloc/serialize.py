"""Canonical, byte-stable serialization helpers.

All JSON emitted by this package goes through :func:`canonical_json`:
keys are sorted, floats carry at most 6 significant decimals, and there is
no environment-dependent formatting, so identical data always produces
identical bytes.
"""

from __future__ import annotations

import hashlib
import math
from pathlib import Path

import numpy as np


def fmt_float(value: float) -> str:
    """Render a float with up to 6 significant decimals."""
    if not math.isfinite(value):
        raise ValueError(f"cannot serialize non-finite number {value!r}")
    text = format(float(value), ".6g")
    return text


def _encode(obj) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj))
    if isinstance(obj, str):
        out = ['"']
        for ch in obj:
            if ch == '"':
                out.append('\\"')
            elif ch == "\\":
                out.append("\\\\")
            elif ord(ch) < 0x20:
                out.append(f"\\u{ord(ch):04x}")
            else:
                out.append(ch)
        out.append('"')
        return "".join(out)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, (set, frozenset)):
        return _encode(sorted(obj))
    if isinstance(obj, dict):
        items = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            items.append(_encode(key) + ": " + _encode(obj[key]))
        return "{" + ", ".join(items) + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Serialize to a canonical single-line JSON string."""
    return _encode(obj)


def write_json(path: Path, obj) -> None:
    Path(path).write_text(canonical_json(obj) + "\n", encoding="utf-8")


def write_jsonl(path: Path, rows) -> None:
    text = "".join(canonical_json(row) + "\n" for row in rows)
    Path(path).write_text(text, encoding="utf-8")


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
