"""Tests for the legacy VTK export."""

import numpy as np
import pytest

from app.integrations.vtk_writer import vertex_values, write_vtk
from app.services.fem_assembly import interpolate
from app.models.expressions import constant_expression


def test_writes_header_and_counts(tmp_path, unit_mesh):
    nv, nt = unit_mesh.vertex_count, unit_mesh.triangle_count
    path = write_vtk(
        tmp_path / "state.vtk",
        unit_mesh,
        point_scalars={"phi": np.ones(nv)},
        point_vectors={"u": np.zeros((nv, 2))},
        cell_scalars={"mask": -np.ones(nt)},
    )
    lines = path.read_text(encoding="ascii").splitlines()

    assert lines[:4] == ["# vtk DataFile Version 2.0", "flowtopo", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    assert lines[4] == f"POINTS {nv} double"
    assert f"CELLS {nt} {4 * nt}" in lines
    assert f"POINT_DATA {nv}" in lines
    assert f"CELL_DATA {nt}" in lines
    assert "VECTORS u double" in lines
    assert lines.count("LOOKUP_TABLE default") == 2


def test_mesh_only_file_has_no_data_sections(tmp_path, unit_mesh):
    text = write_vtk(tmp_path / "mesh.vtk", unit_mesh).read_text(encoding="ascii")

    assert "POINT_DATA" not in text
    assert "CELL_DATA" not in text


def test_shape_mismatch_names_the_field(tmp_path, unit_mesh):
    with pytest.raises(ValueError, match="point scalar 'phi'"):
        write_vtk(tmp_path / "bad.vtk", unit_mesh, point_scalars={"phi": np.ones(3)})
    with pytest.raises(ValueError, match="cell scalar 'mask'"):
        write_vtk(tmp_path / "bad.vtk", unit_mesh, cell_scalars={"mask": np.ones(unit_mesh.vertex_count)})


def test_vertex_values_of_velocity(unit_disc):
    velocity = interpolate(unit_disc.velocity, constant_expression((1.0, -2.0)))
    values = vertex_values(velocity)

    assert values.shape == (unit_disc.mesh.vertex_count, 2)
    assert np.allclose(values, [1.0, -2.0])
