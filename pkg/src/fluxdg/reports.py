"""Plain-text outputs: fixed-format CSV tables and legacy VTK grid samples."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np


def fmt(value) -> str:
    """17 significant digits for reals; ints, bools and strings pass through."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    text = str(value)
    if any(ch in text for ch in ',"\n'):
        text = '"' + text.replace('"', '""') + '"'
    return text


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        if isinstance(row, dict):
            row = [row.get(k) for k in header]
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows), encoding="utf-8")
    return path


def write_vtk_grid(path, u_h, resolution: int = 65, name: str = "u_h") -> Path:
    """Sample ``u_h`` on a uniform ``resolution x resolution`` lattice (legacy ASCII STRUCTURED_POINTS)."""
    a, b, c, d = u_h.space.mesh.domain
    xs = np.linspace(a, b, resolution)
    ys = np.linspace(c, d, resolution)
    X, Y = np.meshgrid(xs, ys, indexing="xy")  # x fastest, as VTK expects
    vals = u_h(X, Y).ravel()
    lines = [
        "# vtk DataFile Version 3.0",
        f"{name} sampled on a uniform lattice",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {resolution} {resolution} 1",
        f"ORIGIN {a:.17g} {c:.17g} 0",
        f"SPACING {(b - a) / (resolution - 1):.17g} {(d - c) / (resolution - 1):.17g} 1",
        f"POINT_DATA {vals.size}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    lines.extend(f"{v:.17g}" for v in vals)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_vtk_grid(path):
    """Inverse of ``write_vtk_grid``: returns ``(dims, origin, spacing, values)``."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = {ln.split()[0]: ln.split()[1:] for ln in lines[3:10] if ln and ln.split()[0].isupper()}
    dims = tuple(int(v) for v in head["DIMENSIONS"])
    origin = tuple(float(v) for v in head["ORIGIN"])
    spacing = tuple(float(v) for v in head["SPACING"])
    start = next(k for k, ln in enumerate(lines) if ln.startswith("LOOKUP_TABLE")) + 1
    return dims, origin, spacing, np.array([float(v) for v in lines[start:]])
