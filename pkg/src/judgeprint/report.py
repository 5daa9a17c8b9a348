"""Deterministic tabular output: CSV emission with pinned number
formatting (6 significant digits), atomic writes, and a content-hash
manifest so a run directory can verify itself."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path

TOOL_VERSION = "0.1.0"


def format_value(v) -> str:
    """Stable cell formatting: booleans lowercase, floats at 6 significant
    digits, None empty."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if v == int(v) and abs(v) < 1e15:
            return f"{v:.1f}"
        return f"{v:.6g}"
    return str(v)


def atomic_write_bytes(path: str | Path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def atomic_write_text(path: str | Path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path: str | Path, header: list[str], rows: list[list]):
    """Header row, stable column order, LF line endings, atomic replace."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path: str | Path) -> tuple[list[str], list[dict[str, str]]]:
    """Re-parse an emitted CSV; every toolkit output round-trips here."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [dict(zip(header, row)) for row in reader]
    return header, rows


def write_json(path: str | Path, obj):
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(run_dir: str | Path, config_echo: dict, seeds: dict):
    """Hash every output file (manifest excluded) and record config + seeds."""
    run_dir = Path(run_dir)
    hashes = {}
    for p in sorted(run_dir.rglob("*")):
        if p.is_file() and p.name not in ("manifest.json",):
            hashes[str(p.relative_to(run_dir))] = sha256_file(p)
    write_json(run_dir / "manifest.json", {
        "tool_version": TOOL_VERSION,
        "config": config_echo,
        "seeds": seeds,
        "hashes": hashes,
    })


def verify_manifest(run_dir: str | Path) -> list[str]:
    """Re-hash outputs against the manifest; returns mismatch descriptions."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    problems = []
    for rel, expected in manifest.get("hashes", {}).items():
        p = run_dir / rel
        if not p.exists():
            problems.append(f"missing file: {rel}")
        elif sha256_file(p) != expected:
            problems.append(f"hash mismatch: {rel}")
    for p in sorted(run_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            rel = str(p.relative_to(run_dir))
            if rel not in manifest.get("hashes", {}):
                problems.append(f"untracked file: {rel}")
    return problems
