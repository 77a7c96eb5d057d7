"""Deterministic CSV helpers.

Every CSV written by the package starts with a manifest-reference
comment line, then a header row.  Floats are rendered with repr()
(shortest round-trip form) so that identical runs produce identical
bytes; runtimes and other volatile data never go into CSVs.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path


def fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, str):
        return v
    return repr(float(v))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def manifest_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def write_csv(path, columns, rows, manifest: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# manifest={manifest}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Returns (manifest, columns, rows-as-strings)."""
    lines = Path(path).read_text().splitlines()
    manifest = ""
    i = 0
    if lines and lines[0].startswith("# manifest="):
        manifest = lines[0].split("=", 1)[1]
        i = 1
    columns = lines[i].split(",")
    rows = [ln.split(",") for ln in lines[i + 1:] if ln]
    return manifest, columns, rows
