"""Legacy ASCII VTK export of meshes and nodal fields."""

import logging
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from app.models.fem import Field, Mesh

logger = logging.getLogger(__name__)

VTK_TRIANGLE = 5
_NUMBER_FORMAT = "%.17g"


def vertex_values(field: Field) -> np.ndarray:
    """Values at the mesh vertices: (nv,) for scalar spaces, (nv, 2) for velocities."""

    nv = field.space.mesh.vertex_count
    if field.space.is_vector:
        return np.stack([field.component(0)[:nv], field.component(1)[:nv]], axis=1)
    return field.values[:nv]


def _write_block(handle, values: np.ndarray) -> None:
    np.savetxt(handle, values, fmt=_NUMBER_FORMAT)


def write_vtk(
    path: Path,
    mesh: Mesh,
    point_scalars: Optional[Mapping[str, np.ndarray]] = None,
    point_vectors: Optional[Mapping[str, np.ndarray]] = None,
    cell_scalars: Optional[Mapping[str, np.ndarray]] = None,
    title: str = "flowtopo",
) -> Path:
    """Write an unstructured triangle grid with point and cell data."""

    point_scalars = point_scalars or {}
    point_vectors = point_vectors or {}
    cell_scalars = cell_scalars or {}
    nv, nt = mesh.vertex_count, mesh.triangle_count

    for name, values in point_scalars.items():
        if np.shape(values) != (nv,):
            raise ValueError(f"point scalar '{name}' has shape {np.shape(values)}, expected ({nv},)")
    for name, values in point_vectors.items():
        if np.shape(values) != (nv, 2):
            raise ValueError(f"point vector '{name}' has shape {np.shape(values)}, expected ({nv}, 2)")
    for name, values in cell_scalars.items():
        if np.shape(values) != (nt,):
            raise ValueError(f"cell scalar '{name}' has shape {np.shape(values)}, expected ({nt},)")

    path = Path(path)
    with path.open("w", encoding="ascii", newline="\n") as handle:
        handle.write("# vtk DataFile Version 2.0\n")
        handle.write(f"{title}\n")
        handle.write("ASCII\n")
        handle.write("DATASET UNSTRUCTURED_GRID\n")
        handle.write(f"POINTS {nv} double\n")
        _write_block(handle, np.column_stack([mesh.vertices, np.zeros(nv)]))
        handle.write(f"CELLS {nt} {4 * nt}\n")
        np.savetxt(handle, np.column_stack([np.full(nt, 3), mesh.triangles]), fmt="%d")
        handle.write(f"CELL_TYPES {nt}\n")
        np.savetxt(handle, np.full(nt, VTK_TRIANGLE), fmt="%d")

        if point_scalars or point_vectors:
            handle.write(f"POINT_DATA {nv}\n")
            for name, values in point_scalars.items():
                handle.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                _write_block(handle, np.asarray(values, dtype=float))
            for name, values in point_vectors.items():
                handle.write(f"VECTORS {name} double\n")
                _write_block(handle, np.column_stack([values, np.zeros(nv)]))
        if cell_scalars:
            handle.write(f"CELL_DATA {nt}\n")
            for name, values in cell_scalars.items():
                handle.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                _write_block(handle, np.asarray(values, dtype=float))

    logger.debug("Wrote %s (%d points, %d cells)", path, nv, nt)
    return path
