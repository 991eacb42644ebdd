"""Provenance digests and the CSV dialect shared by every output file."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def provenance(command: str, params: dict, inputs: dict | None = None) -> dict:
    """Digest of a command's parameters and the *contents* of its input files.

    Paths are deliberately left out so reruns in another directory give
    identical outputs.
    """
    record = {
        "command": command,
        "params": params,
        "inputs": {name: file_digest(p) for name, p in sorted((inputs or {}).items())},
    }
    return {**record, "config_digest": digest(record)}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header: list[str], rows, config_digest: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if config_digest:
            fh.write(f"# config_digest={config_digest}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def read_digest(path) -> str | None:
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("# config_digest="):
        return first.strip().split("=", 1)[1]
    return None
