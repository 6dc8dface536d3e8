"""Versioned CSV tables and the run manifest."""

from __future__ import annotations

import csv
import io
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

SCHEMA_VERSION = 1


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    if hasattr(v, "item"):  # numpy scalar
        return _fmt(v.item())
    return str(v)


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(path, schema: str, columns: list[str], rows) -> Path:
    """Write ``rows`` (dicts or sequences) as CSV with a ``# schema=<name>.v<N>`` first line."""

    buf = io.StringIO()
    buf.write(f"# schema=qvdp.{schema}.v{SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        values = [row[c] for c in columns] if isinstance(row, dict) else list(row)
        writer.writerow([_fmt(v) for v in values])
    _atomic_write(Path(path), buf.getvalue())
    return Path(path)


def read_table(path) -> tuple[str, list[dict]]:
    """Inverse of :func:`write_table`; values are returned as strings."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema="):
            raise ValueError(f"{path}: missing schema line")
        rows = list(csv.DictReader(fh))
    return first[len("# schema="):], rows


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, manifest: dict, files) -> Path:
    manifest = dict(manifest)
    manifest["outputs"] = {Path(f).name: sha256(f) for f in files}
    path = Path(out_dir) / "manifest.json"
    _atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True, default=_fmt) + "\n")
    return path
