"""Legacy ASCII VTK output for tetrahedral meshes and nodal fields."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ValidationError
from .mesh import TetMesh

VTK_TETRA = 10


def vtk_text(mesh: TetMesh, point_data=None, cell_data=None, title="aniso_uq") -> str:
    """``DATASET UNSTRUCTURED_GRID`` text with scalar point and cell arrays."""
    point_data = dict(point_data or {})
    cell_data = dict(cell_data or {})
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_vertices} double")
    lines += [" ".join(repr(float(c)) for c in p) for p in mesh.vertices]
    lines.append(f"CELLS {mesh.n_tets} {5 * mesh.n_tets}")
    lines += ["4 " + " ".join(str(int(v)) for v in t) for t in mesh.tets]
    lines.append(f"CELL_TYPES {mesh.n_tets}")
    lines += [str(VTK_TETRA)] * mesh.n_tets
    for header, count, data in (("POINT_DATA", mesh.n_vertices, point_data), ("CELL_DATA", mesh.n_tets, cell_data)):
        if not data:
            continue
        lines.append(f"{header} {count}")
        for name, values in data.items():
            values = np.asarray(getattr(values, "values", values), dtype=float)
            if values.shape != (count,):
                raise ValidationError(f"{name!r} has shape {values.shape}, expected ({count},)")
            if not name or any(ch.isspace() for ch in name):
                raise ValidationError(f"invalid VTK array name {name!r}")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [repr(float(v)) for v in values]
    return "\n".join(lines) + "\n"


def write_vtk(path, mesh: TetMesh, point_data=None, cell_data=None, title="aniso_uq") -> Path:
    path = Path(path)
    path.write_text(vtk_text(mesh, point_data, cell_data, title))
    return path
