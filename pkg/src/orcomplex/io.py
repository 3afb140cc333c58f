"""Shared JSON container: ``{"format_version": 1, "kind": ..., "data": ...}``.

Floats are written with ``repr`` precision, so float64 values round-trip exactly.
Keys are sorted, so identical content always yields identical bytes.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class IoFailure(OSError):
    pass


class ParseError(ValueError):
    pass


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(kind: str, data) -> str:
    doc = {"format_version": FORMAT_VERSION, "kind": kind, "data": data}
    return json.dumps(doc, sort_keys=True, default=_plain, allow_nan=False, ensure_ascii=False) + "\n"


def loads(text: str, kind: str | None = None):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "data" not in doc or "kind" not in doc:
        raise ParseError("missing container fields (format_version, kind, data)")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {doc.get('format_version')!r}")
    if kind is not None and doc["kind"] != kind:
        raise ParseError(f"expected a {kind!r} document, found {doc['kind']!r}")
    return doc["data"]


def write(path, kind: str, data) -> Path:
    path = Path(path)
    text = dumps(kind, data)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def read(path, kind: str | None = None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return loads(text, kind)


def write_lines(path, lines) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path
