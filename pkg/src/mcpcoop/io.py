"""CSV emission and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        # repr is the shortest string that round-trips the double
        return repr(float(v))
    if isinstance(v, complex):
        return repr(complex(v))
    if v is None:
        return ""
    if hasattr(v, "item"):
        return _cell(v.item())
    return str(v)


def emit_csv(columns, rows, path) -> Path:
    """Write a header row and ``rows`` with line-feed terminators.

    Floats are written with ``repr`` so re-parsing recovers the exact
    values, and identical tables give byte-identical files.
    """
    columns = list(columns)
    rows = [list(r) for r in rows]
    for i, r in enumerate(rows):
        if len(r) != len(columns):
            raise ValueError(f"row {i} has {len(r)} cells, expected {len(columns)}")
    p = Path(path)
    try:
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_cell(v) for v in r])
    except OSError as exc:
        raise OSError(f"cannot write {p}: {exc.strerror}") from exc
    return p


def read_csv(path):
    """Read a file written by :func:`emit_csv`; numeric cells become floats."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = []
        for r in rd:
            out = []
            for c in r:
                try:
                    out.append(float(c))
                except ValueError:
                    out.append(c)
            rows.append(out)
    return header, rows


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, files, warnings=(), extra=None) -> Path:
    """JSON manifest listing every written file with its sha256."""
    out = Path(out_dir)
    entries = [{"path": Path(f).name, "sha256": sha256(f)} for f in files]
    doc = {"command": command, "files": entries, "warnings": list(warnings)}
    if extra:
        doc.update(extra)
    p = out / "manifest.json"
    p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return p
