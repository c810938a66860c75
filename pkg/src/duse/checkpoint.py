"""Checkpoint and artifact files.

A checkpoint is three parts: a text header line, a one-line JSON manifest
listing ``name``, ``shape``, ``offset`` and ``nbytes`` of every tensor, and the
concatenated tensor payloads as little-endian float64.
"""
from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ContractError

FORMAT_VERSION = 1
MAGIC = "# duse checkpoint"


def save_checkpoint(path, tensors: Mapping[str, np.ndarray], header: str, meta: Mapping | None = None) -> None:
    entries, chunks, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"version": FORMAT_VERSION, "entries": entries, "meta": dict(meta or {})}
    first = f"{MAGIC} v{FORMAT_VERSION} {header.lstrip('# ').strip()}\n"
    with open(path, "wb") as fh:
        fh.write(first.encode())
        fh.write((json.dumps(manifest, sort_keys=True) + "\n").encode())
        for chunk in chunks:
            fh.write(chunk)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Return ``(tensors, manifest)``; raises ``ContractError`` on a malformed file."""
    path = Path(path)
    if not path.is_file():
        raise ContractError(f"checkpoint {str(path)!r} does not exist")
    with open(path, "rb") as fh:
        first = fh.readline().decode()
        if not first.startswith(MAGIC):
            raise ContractError(f"{path} is not a duse checkpoint")
        manifest = json.loads(fh.readline().decode())
        payload = fh.read()
    if manifest.get("version") != FORMAT_VERSION:
        raise ContractError(f"unsupported checkpoint version {manifest.get('version')}")
    tensors = {}
    for entry in manifest["entries"]:
        start, stop = entry["offset"], entry["offset"] + entry["nbytes"]
        if stop > len(payload):
            raise ContractError(f"checkpoint truncated in tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(payload[start:stop], dtype="<f8").reshape(entry["shape"]).copy()
    manifest["header"] = first.strip()
    return tensors, manifest


def write_csv(path, header: str, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    """CSV artifact whose first line is the run header."""
    buf = io.StringIO()
    buf.write(header + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> tuple[str, list[dict[str, str]]]:
    lines = Path(path).read_text().splitlines()
    return lines[0], list(csv.DictReader(lines[1:]))


def write_json(path, header: str, body: Mapping) -> None:
    """JSON artifact: the first line opens the object with a ``header`` field."""
    rest = json.dumps(dict(body), sort_keys=True)
    text = "{" + f'"header": {json.dumps(header)}' + (",\n" + rest[1:] if len(rest) > 2 else "}") + "\n"
    Path(path).write_text(text)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    if not os.access(p, os.W_OK):
        raise ContractError(f"output directory {str(p)!r} is not writable")
    return p
