#!/usr/bin/env python3
"""
Field output for contour plotting
VTK legacy ASCII unstructured grids (triangles, point scalars) and plain
x,y,value CSV in node order. Values are written with repr() so reading a
file back gives the coefficients bit for bit.
"""

import csv
import io
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from femcore import Field

# Add shared modules to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent.parent / "shared"))
from utils import atomic_write_text, format_float

FORMATS = ("vtk", "csv")
VTK_TRIANGLE = 5


def vtk_text(field: Field, name: str = "value", title: str = "porous convection field") -> str:
    mesh = field.mesh
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_nodes} double",
    ]
    lines.extend(f"{format_float(x)} {format_float(y)} 0.0" for x, y in mesh.nodes)
    lines.append(f"CELLS {mesh.num_triangles} {4 * mesh.num_triangles}")
    lines.extend(f"3 {i} {j} {k}" for i, j, k in mesh.triangles)
    lines.append(f"CELL_TYPES {mesh.num_triangles}")
    lines.extend([str(VTK_TRIANGLE)] * mesh.num_triangles)
    lines.append(f"POINT_DATA {mesh.num_nodes}")
    lines.append(f"SCALARS {name} double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(format_float(v) for v in field.coefficients)
    return "\n".join(lines) + "\n"


def csv_text(field: Field) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["x", "y", "value"])
    for (x, y), value in zip(field.mesh.nodes, field.coefficients):
        writer.writerow([format_float(x), format_float(y), format_float(value)])
    return buffer.getvalue()


def detect_format(path: Path, fmt: Optional[str] = None) -> str:
    fmt = (fmt or Path(path).suffix.lstrip(".")).lower()
    if fmt not in FORMATS:
        raise ValueError(f"Unknown field format {fmt!r}; choose from {FORMATS}")
    return fmt


def write_field(field: Field, path: Path, fmt: Optional[str] = None, name: str = "value") -> Path:
    """Write a field atomically (temp file + rename)"""
    fmt = detect_format(path, fmt)
    text = vtk_text(field, name) if fmt == "vtk" else csv_text(field)
    return atomic_write_text(Path(path), text)


def _read_vtk(text: str) -> tuple[np.ndarray, np.ndarray]:
    lines = text.split("\n")
    i = 0
    points = values = None
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("POINTS"):
            count = int(line.split()[1])
            block = np.array([row.split() for row in lines[i + 1:i + 1 + count]], dtype=float)
            points = block[:, :2]
            i += count
        elif line.startswith("LOOKUP_TABLE"):
            count = points.shape[0]
            values = np.array([float(v) for v in lines[i + 1:i + 1 + count]])
            i += count
        i += 1
    if points is None or values is None:
        raise ValueError("VTK file is missing POINTS or POINT_DATA")
    return points, values


def _read_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if [h.strip() for h in header] != ["x", "y", "value"]:
        raise ValueError(f"Unexpected CSV header {header}")
    rows = np.array([[float(c) for c in row] for row in reader if row], dtype=float).reshape(-1, 3)
    return rows[:, :2], rows[:, 2]


def read_field(path: Path, fmt: Optional[str] = None) -> tuple[np.ndarray, np.ndarray]:
    """(node coordinates, nodal values) from a file written by write_field"""
    fmt = detect_format(path, fmt)
    text = Path(path).read_text(encoding="utf-8")
    return _read_vtk(text) if fmt == "vtk" else _read_csv(text)
