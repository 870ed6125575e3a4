"""Self-describing output files: one ``# {json}`` header line, then the body."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from pathlib import Path

from . import __version__

TOOL = "gelfand"


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def header(command: str = "", config: dict | None = None, seed=None,
           timestamps: bool = False, **extra) -> dict:
    h = {"tool": TOOL, "version": __version__, "command": command,
         "config_hash": config_hash(config or {}), "seed": seed}
    if timestamps:
        h["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    h.update(extra)
    return h


def fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def csv_text(head: dict, columns, rows) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(head, sort_keys=True, default=_head_default) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def json_text(head: dict, body) -> str:
    return ("# " + json.dumps(head, sort_keys=True, default=_head_default) + "\n"
            + json.dumps(body, indent=2, sort_keys=True, default=_default) + "\n")


def _default(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _head_default(o):
    try:
        return _default(o)
    except TypeError:
        return str(o)


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def read_header(path) -> dict:
    with open(path) as f:
        first = f.readline()
    if not first.startswith("# "):
        raise ValueError(f"{path} has no header line")
    return json.loads(first[2:])


def read_csv(path) -> tuple[dict, list[dict]]:
    with open(path) as f:
        head = json.loads(f.readline()[2:])
        rows = list(csv.DictReader(f))
    return head, rows
