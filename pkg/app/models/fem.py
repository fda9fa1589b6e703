"""Pydantic containers for the structured mesh, FE spaces and discrete fields."""

from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField, model_validator


class SpaceKind(str, Enum):
    """Supported finite element spaces."""

    VELOCITY = "velocity"  # vector-valued quadratic (P2 x P2)
    PRESSURE = "pressure"  # scalar linear (P1)
    DESIGN = "design"  # scalar linear (P1)


class Mesh(BaseModel):
    """Structured triangulation of the rectangle [0, width] x [0, height].

    Triangles are counterclockwise. ``triangle_edges[t, k]`` is the edge
    between local vertices ``k`` and ``(k + 1) % 3``. ``edge_triangles`` holds
    the (one or two) triangles sharing an edge, ``-1`` marking the outside.
    Boundary edges keep the orientation of their triangle, so their outward
    normal is the edge direction rotated clockwise.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    nx: int = PydanticField(..., ge=1)
    ny: int = PydanticField(..., ge=1)
    width: float = PydanticField(..., gt=0)
    height: float = PydanticField(..., gt=0)
    diagonal: Literal["right", "crossed"] = "right"

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    triangle_edges: np.ndarray
    edge_triangles: np.ndarray
    areas: np.ndarray

    boundary_edges: np.ndarray
    boundary_edge_ids: np.ndarray
    boundary_normals: np.ndarray
    boundary_lengths: np.ndarray

    measure: float

    @model_validator(mode="after")
    def validate_topology(self) -> "Mesh":
        if np.any(self.areas <= 0.0):
            raise ValueError("every triangle must have positive signed area")
        total = float(np.sum(self.areas))
        if abs(total - self.measure) > 1e-12 * self.measure:
            raise ValueError(
                f"domain measure {self.measure} differs from area sum {total}"
            )
        starts = np.bincount(self.boundary_edges[:, 0], minlength=len(self.vertices))
        ends = np.bincount(self.boundary_edges[:, 1], minlength=len(self.vertices))
        if not np.array_equal(starts, ends) or np.any(starts > 1):
            raise ValueError("boundary edges do not form closed loops")
        return self

    @property
    def vertex_count(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def triangle_count(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    @property
    def cell_size(self) -> float:
        """Largest structured cell side, the resolution used for interface checks."""
        return max(self.width / self.nx, self.height / self.ny)

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges.ravel())


class FunctionSpace(BaseModel):
    """A Lagrange space on a mesh.

    Velocity coefficients are blocked by component: entries ``[0, n)`` hold the
    x-component at the ``n`` scalar nodes and ``[n, 2n)`` the y-component.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: SpaceKind
    mesh: Mesh
    components: int = PydanticField(..., ge=1, le=2)
    node_coordinates: np.ndarray
    element_dofs: np.ndarray
    dirichlet_mask: np.ndarray
    boundary_nodes: np.ndarray

    @model_validator(mode="after")
    def validate_layout(self) -> "FunctionSpace":
        if self.dirichlet_mask.shape != (self.dof_count,):
            raise ValueError("dirichlet mask length must equal the DOF count")
        marked = np.flatnonzero(self.dirichlet_mask) % self.node_count
        if not np.all(np.isin(marked, self.boundary_nodes)):
            raise ValueError("dirichlet mask may only mark boundary DOFs")
        return self

    @property
    def node_count(self) -> int:
        return int(self.node_coordinates.shape[0])

    @property
    def dof_count(self) -> int:
        return self.components * self.node_count

    @property
    def is_vector(self) -> bool:
        return self.components == 2

    def component_slice(self, component: int) -> slice:
        return slice(component * self.node_count, (component + 1) * self.node_count)


class Field(BaseModel):
    """Coefficient vector owned by a function space."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    space: FunctionSpace
    values: np.ndarray

    @model_validator(mode="after")
    def validate_length(self) -> "Field":
        if self.values.shape != (self.space.dof_count,):
            raise ValueError(
                f"coefficient length {self.values.shape} does not match "
                f"{self.space.kind.value} DOF count {self.space.dof_count}"
            )
        return self

    def component(self, index: int) -> np.ndarray:
        return self.values[self.space.component_slice(index)]

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(space=self.space, values=np.asarray(values, dtype=float))

    @classmethod
    def zeros(cls, space: FunctionSpace) -> "Field":
        return cls(space=space, values=np.zeros(space.dof_count))
