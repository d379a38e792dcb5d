"""Deterministic JSON/CSV writers with an embedded config and content hash."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        # JSON has no inf/nan; keep them readable and stable
        return x if math.isfinite(x) else repr(x)
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    return obj


def canonical_json(obj, indent: int | None = 2) -> str:
    seps = (",", ": ") if indent else (",", ":")
    return json.dumps(_plain(obj), sort_keys=True, indent=indent, separators=seps, allow_nan=False)


def git_blob_sha1(data: bytes) -> str:
    """sha1 of ``blob <len>\\0<data>``, the hash git gives a file with these bytes."""
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    return git_blob_sha1(canonical_json(config, indent=None).encode())


def envelope(command: str, config: dict, result: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "input_hash": config_hash(config),
        "result": result,
    }


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def write_outputs(out_dir, stem: str, doc: dict, tables: dict | None = None, fmt: str = "json") -> list:
    """Write ``<stem>.json`` and/or one CSV per table; CSVs start with a comment line carrying the hash."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        path = out / f"{stem}.json"
        path.write_text(canonical_json(doc) + "\n")
        written.append(str(path))
    if fmt in ("csv", "both"):
        cfg = canonical_json(doc["config"], indent=None)
        for name, (header, rows) in (tables or {}).items():
            path = out / f"{stem}_{name}.csv"
            head = f"# schema_version={doc['schema_version']} input_hash={doc['input_hash']} config={cfg}\n"
            path.write_text(head + csv_text(header, rows))
            written.append(str(path))
    return written
