"""Taylor-Hood and linear design spaces, element quadrature and sparse assembly.

Velocity coefficients are blocked by component. Scalar quadratic nodes are
the mesh vertices followed by the edge midpoints, so the local dofs of a
triangle are ``[v0, v1, v2, nv + e01, nv + e12, nv + e20]``. Gradients of
vector fields are stored as ``[..., i, j] = d u_i / d x_j``.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict

from app.core.config import settings
from app.models.expressions import VectorExpression
from app.models.fem import Field, FunctionSpace, Mesh, SpaceKind
from app.services.mesh_builder import locate_points
from app.services.quadrature import triangle_rule

logger = logging.getLogger(__name__)

_REFERENCE_LAMBDA_GRADIENTS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_EDGE_PAIRS = ((0, 1), (1, 2), (2, 0))
_PHASE_TOLERANCE = 1e-12


class MeshMismatchError(ValueError):
    """Raised when operands live on different meshes."""


class NegativeInterpolationError(ValueError):
    """Raised when a Brinkman coefficient evaluates below zero."""


# ---------------------------------------------------------------------------
# Reference basis
# ---------------------------------------------------------------------------


def _barycentric(points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    return np.column_stack([1.0 - points[:, 0] - points[:, 1], points[:, 0], points[:, 1]])


def p2_values_from_barycentric(lam: np.ndarray) -> np.ndarray:
    """Quadratic Lagrange basis at barycentric coordinates, shape (n, 6)."""

    vertex = lam * (2.0 * lam - 1.0)
    edge = np.stack([4.0 * lam[:, a] * lam[:, b] for a, b in _EDGE_PAIRS], axis=1)
    return np.hstack([vertex, edge])


def p1_basis(points: np.ndarray) -> np.ndarray:
    return _barycentric(points)


def p2_basis(points: np.ndarray) -> np.ndarray:
    return p2_values_from_barycentric(_barycentric(points))


def p2_reference_gradients(points: np.ndarray) -> np.ndarray:
    """Reference-element gradients of the quadratic basis, shape (q, 6, 2)."""

    lam = _barycentric(points)
    dlam = _REFERENCE_LAMBDA_GRADIENTS
    vertex = (4.0 * lam - 1.0)[:, :, None] * dlam[None, :, :]
    edge = np.stack(
        [
            4.0 * (lam[:, b, None] * dlam[a] + lam[:, a, None] * dlam[b])
            for a, b in _EDGE_PAIRS
        ],
        axis=1,
    )
    return np.concatenate([vertex, edge], axis=1)


# ---------------------------------------------------------------------------
# Spaces
# ---------------------------------------------------------------------------


def velocity_space(mesh: Mesh) -> FunctionSpace:
    """Vector quadratic space with every boundary node marked Dirichlet."""

    nv = mesh.vertex_count
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    nodes = np.vstack([mesh.vertices, midpoints])
    element_dofs = np.hstack([mesh.triangles, nv + mesh.triangle_edges])
    boundary_nodes = np.concatenate([mesh.boundary_vertices(), nv + np.sort(mesh.boundary_edge_ids)])
    scalar_mask = np.zeros(len(nodes), dtype=bool)
    scalar_mask[boundary_nodes] = True
    for array in (nodes, element_dofs, boundary_nodes):
        array.flags.writeable = False
    return FunctionSpace(
        kind=SpaceKind.VELOCITY,
        mesh=mesh,
        components=2,
        node_coordinates=nodes,
        element_dofs=element_dofs,
        dirichlet_mask=np.concatenate([scalar_mask, scalar_mask]),
        boundary_nodes=boundary_nodes,
    )


def _linear_space(mesh: Mesh, kind: SpaceKind) -> FunctionSpace:
    return FunctionSpace(
        kind=kind,
        mesh=mesh,
        components=1,
        node_coordinates=mesh.vertices,
        element_dofs=mesh.triangles,
        dirichlet_mask=np.zeros(mesh.vertex_count, dtype=bool),
        boundary_nodes=mesh.boundary_vertices(),
    )


def pressure_space(mesh: Mesh) -> FunctionSpace:
    return _linear_space(mesh, SpaceKind.PRESSURE)


def design_space(mesh: Mesh) -> FunctionSpace:
    return _linear_space(mesh, SpaceKind.DESIGN)


def require_same_mesh(*spaces: FunctionSpace) -> Mesh:
    """Return the shared mesh or raise MeshMismatchError."""

    mesh = spaces[0].mesh
    for space in spaces[1:]:
        other = space.mesh
        if other is mesh:
            continue
        if other.vertices.shape != mesh.vertices.shape or not (
            np.array_equal(other.vertices, mesh.vertices)
            and np.array_equal(other.triangles, mesh.triangles)
        ):
            raise MeshMismatchError(
                f"{space.kind.value} space lives on a different mesh than {spaces[0].kind.value}"
            )
    return mesh


# ---------------------------------------------------------------------------
# Element quadrature
# ---------------------------------------------------------------------------


class ElementQuadrature(BaseModel):
    """Basis values, physical gradients and weights on a block of triangles."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    degree: int
    triangles: np.ndarray  # triangle indices covered by this block
    p1_dofs: np.ndarray  # (T, 3)
    p2_dofs: np.ndarray  # (T, 6)
    p2_node_count: int
    points: np.ndarray  # (T, q, 2)
    dx: np.ndarray  # (T, q)
    p1_values: np.ndarray  # (q, 3)
    p2_values: np.ndarray  # (q, 6)
    p1_gradients: np.ndarray  # (T, 3, 2)
    p2_gradients: np.ndarray  # (T, q, 6, 2)

    @property
    def size(self) -> int:
        return int(self.triangles.shape[0])

    def p1(self, values: np.ndarray) -> np.ndarray:
        return np.einsum("ta,qa->tq", values[self.p1_dofs], self.p1_values)

    def p1_gradient(self, values: np.ndarray) -> np.ndarray:
        grad = np.einsum("ta,tai->ti", values[self.p1_dofs], self.p1_gradients)
        return np.broadcast_to(grad[:, None, :], self.dx.shape + (2,))

    def _split(self, values: np.ndarray) -> np.ndarray:
        n = self.p2_node_count
        return np.stack([values[:n][self.p2_dofs], values[n:][self.p2_dofs]], axis=1)

    def vector(self, values: np.ndarray) -> np.ndarray:
        """Vector quadratic field at the quadrature points, shape (T, q, 2)."""
        return np.einsum("tia,qa->tqi", self._split(values), self.p2_values)

    def vector_gradient(self, values: np.ndarray) -> np.ndarray:
        """Gradient [t, q, i, j] = d u_i / d x_j."""
        return np.einsum("tia,tqaj->tqij", self._split(values), self.p2_gradients)

    def integrate(self, integrand: np.ndarray) -> float:
        return float(np.einsum("tq,tq->", self.dx, integrand))


def element_quadrature(
    mesh: Mesh,
    degree: Optional[int] = None,
    triangles: Optional[np.ndarray] = None,
) -> ElementQuadrature:
    degree = settings.QUADRATURE_DEGREE if degree is None else degree
    if triangles is None:
        triangles = np.arange(mesh.triangle_count)
    ref_points, ref_weights = triangle_rule(degree)

    corners = mesh.vertices[mesh.triangles[triangles]]
    jac = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=2)
    inv_jac_t = np.transpose(np.linalg.inv(jac), (0, 2, 1))

    points = corners[:, None, 0, :] + np.einsum("tij,qj->tqi", jac, ref_points)
    dx = 2.0 * mesh.areas[triangles][:, None] * ref_weights[None, :]
    p1_gradients = np.einsum("tij,aj->tai", inv_jac_t, _REFERENCE_LAMBDA_GRADIENTS)
    p2_gradients = np.einsum("tij,qaj->tqai", inv_jac_t, p2_reference_gradients(ref_points))

    return ElementQuadrature(
        degree=degree,
        triangles=triangles,
        p1_dofs=mesh.triangles[triangles],
        p2_dofs=np.hstack([mesh.triangles[triangles], mesh.vertex_count + mesh.triangle_edges[triangles]]),
        p2_node_count=mesh.vertex_count + mesh.edge_count,
        points=points,
        dx=dx,
        p1_values=p1_basis(ref_points),
        p2_values=p2_basis(ref_points),
        p1_gradients=p1_gradients,
        p2_gradients=p2_gradients,
    )


QuadratureKernel = Callable[[ElementQuadrature], np.ndarray]


def _element_blocks(mesh: Mesh) -> list[np.ndarray]:
    chunk = settings.ELEMENT_CHUNK_SIZE
    return [
        np.arange(start, min(start + chunk, mesh.triangle_count))
        for start in range(0, mesh.triangle_count, chunk)
    ]


def map_elements(mesh: Mesh, kernel: QuadratureKernel, degree: Optional[int] = None) -> np.ndarray:
    """Apply ``kernel`` blockwise and concatenate results in element order."""

    blocks = _element_blocks(mesh)

    def run(block: np.ndarray) -> np.ndarray:
        return kernel(element_quadrature(mesh, degree, block))

    if settings.THREADS > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=min(settings.THREADS, len(blocks))) as executor:
            results = list(executor.map(run, blocks))
    else:
        results = [run(block) for block in blocks]
    return np.concatenate(results, axis=0)


def _scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int]) -> sp.csr_matrix:
    row_index = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    col_index = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    return sp.coo_matrix((local.ravel(), (row_index, col_index)), shape=shape).tocsr()


def _scatter_vector(local: np.ndarray, rows: np.ndarray, size: int) -> np.ndarray:
    result = np.zeros(size)
    np.add.at(result, rows.ravel(), local.ravel())
    return result


def _p2_scalar_dofs(mesh: Mesh) -> np.ndarray:
    return np.hstack([mesh.triangles, mesh.vertex_count + mesh.triangle_edges])


def _p2_scalar_count(mesh: Mesh) -> int:
    return mesh.vertex_count + mesh.edge_count


# ---------------------------------------------------------------------------
# Bilinear forms
# ---------------------------------------------------------------------------


def _scalar_stiffness(mesh: Mesh, quadratic: bool, degree: Optional[int]) -> sp.csr_matrix:
    if quadratic:
        local = map_elements(
            mesh,
            lambda quad: np.einsum("tq,tqai,tqbi->tab", quad.dx, quad.p2_gradients, quad.p2_gradients),
            degree,
        )
        dofs, size = _p2_scalar_dofs(mesh), _p2_scalar_count(mesh)
    else:
        local = map_elements(
            mesh,
            lambda quad: np.einsum("tq,tai,tbi->tab", quad.dx, quad.p1_gradients, quad.p1_gradients),
            degree,
        )
        dofs, size = mesh.triangles, mesh.vertex_count
    return _scatter(local, dofs, dofs, (size, size))


def _scalar_mass(
    mesh: Mesh,
    quadratic: bool,
    coefficient: Optional[QuadratureKernel],
    degree: Optional[int],
) -> sp.csr_matrix:
    def kernel(quad: ElementQuadrature) -> np.ndarray:
        basis = quad.p2_values if quadratic else quad.p1_values
        weight = quad.dx if coefficient is None else quad.dx * coefficient(quad)
        return np.einsum("tq,qa,qb->tab", weight, basis, basis)

    local = map_elements(mesh, kernel, degree)
    if quadratic:
        dofs, size = _p2_scalar_dofs(mesh), _p2_scalar_count(mesh)
    else:
        dofs, size = mesh.triangles, mesh.vertex_count
    return _scatter(local, dofs, dofs, (size, size))


def _lift_components(space: FunctionSpace, scalar: sp.csr_matrix) -> sp.csr_matrix:
    if space.is_vector:
        return sp.block_diag([scalar, scalar], format="csr")
    return scalar


def assemble_stiffness(space: FunctionSpace, weight: float = 1.0, degree: Optional[int] = None) -> sp.csr_matrix:
    """weight * int grad v : grad w dx."""

    if weight < 0:
        raise ValueError("stiffness weight must be nonnegative")
    scalar = _scalar_stiffness(space.mesh, space.kind == SpaceKind.VELOCITY, degree)
    return (weight * _lift_components(space, scalar)).tocsr()


def assemble_mass(space: FunctionSpace, degree: Optional[int] = None) -> sp.csr_matrix:
    scalar = _scalar_mass(space.mesh, space.kind == SpaceKind.VELOCITY, None, degree)
    return _lift_components(space, scalar)


def assemble_coefficient_mass(
    space: FunctionSpace,
    coefficient: QuadratureKernel,
    degree: Optional[int] = None,
) -> sp.csr_matrix:
    """int c(x) v . w dx with ``c`` evaluated blockwise at the quadrature points."""

    scalar = _scalar_mass(space.mesh, space.kind == SpaceKind.VELOCITY, coefficient, degree)
    return _lift_components(space, scalar)


def assemble_weighted_mass(
    space: FunctionSpace,
    alpha_field: Field,
    alpha_fn: Callable[[np.ndarray], np.ndarray],
    degree: Optional[int] = None,
) -> sp.csr_matrix:
    """int alpha(phi) v . w dx with phi interpolated at the quadrature points."""

    require_same_mesh(space, alpha_field.space)
    phi = alpha_field.values
    if np.any(np.abs(phi) > 1.0 + _PHASE_TOLERANCE):
        raise ValueError("phase values must lie in [-1, 1] before Brinkman assembly")

    def coefficient(quad: ElementQuadrature) -> np.ndarray:
        alpha = np.asarray(alpha_fn(quad.p1(phi)), dtype=float)
        if np.any(alpha < 0.0):
            raise NegativeInterpolationError(
                f"interpolation returned {alpha.min():.6g} < 0 at a quadrature point"
            )
        return alpha

    return assemble_coefficient_mass(space, coefficient, degree)


def assemble_divergence(vel_space: FunctionSpace, pres_space: FunctionSpace, degree: Optional[int] = None) -> sp.csr_matrix:
    """B with q^T B v = int q div v dx, shape (pressure dofs, velocity dofs)."""

    mesh = require_same_mesh(vel_space, pres_space)
    local = map_elements(
        mesh,
        lambda quad: np.einsum("tq,qa,tqbc->tcab", quad.dx, quad.p1_values, quad.p2_gradients),
        degree,
    )
    n1 = mesh.vertex_count
    n2 = _p2_scalar_count(mesh)
    dofs2 = _p2_scalar_dofs(mesh)
    blocks = [_scatter(local[:, c], mesh.triangles, dofs2, (n1, n2)) for c in range(2)]
    return sp.hstack(blocks, format="csr")


def assemble_convection(u_adv: Field, degree: Optional[int] = None) -> sp.csr_matrix:
    """N(u) with w^T N(u) v = b(u, v, w) = int (u . grad) v . w dx."""

    mesh = u_adv.space.mesh
    values = u_adv.values
    local = map_elements(
        mesh,
        lambda quad: np.einsum(
            "tq,qa,tqj,tqbj->tab", quad.dx, quad.p2_values, quad.vector(values), quad.p2_gradients
        ),
        degree,
    )
    n2 = _p2_scalar_count(mesh)
    dofs = _p2_scalar_dofs(mesh)
    scalar = _scatter(local, dofs, dofs, (n2, n2))
    return sp.block_diag([scalar, scalar], format="csr")


def assemble_transposed_convection(u_fixed: Field, degree: Optional[int] = None) -> sp.csr_matrix:
    """R(u) with w^T R(u) v = b(v, u, w) = int (v . grad) u . w dx."""

    mesh = u_fixed.space.mesh
    values = u_fixed.values
    local = map_elements(
        mesh,
        lambda quad: np.einsum(
            "tq,qa,qb,tqij->tijab",
            quad.dx,
            quad.p2_values,
            quad.p2_values,
            quad.vector_gradient(values),
        ),
        degree,
    )
    n2 = _p2_scalar_count(mesh)
    dofs = _p2_scalar_dofs(mesh)
    blocks = [[_scatter(local[:, i, j], dofs, dofs, (n2, n2)) for j in range(2)] for i in range(2)]
    return sp.bmat(blocks, format="csr")


# ---------------------------------------------------------------------------
# Linear forms and scalar integrals
# ---------------------------------------------------------------------------


def assemble_load(space: FunctionSpace, expression: VectorExpression, degree: Optional[int] = None) -> np.ndarray:
    """int f . v dx for every velocity basis function."""

    return assemble_velocity_functional(
        space, value_coefficient=lambda quad: expression.value(quad.points), degree=degree
    )


def assemble_velocity_functional(
    space: FunctionSpace,
    value_coefficient: Optional[QuadratureKernel] = None,
    gradient_coefficient: Optional[QuadratureKernel] = None,
    degree: Optional[int] = None,
) -> np.ndarray:
    """Vector with entries int c . (N_b e_i) + C : grad(N_b e_i) dx.

    ``value_coefficient`` returns (T, q, 2) and ``gradient_coefficient``
    returns (T, q, 2, 2) indexed like a velocity gradient.
    """

    mesh = space.mesh

    def kernel(quad: ElementQuadrature) -> np.ndarray:
        local = np.zeros((quad.size, 2, 6))
        if value_coefficient is not None:
            local += np.einsum("tq,tqi,qb->tib", quad.dx, value_coefficient(quad), quad.p2_values)
        if gradient_coefficient is not None:
            local += np.einsum("tq,tqij,tqbj->tib", quad.dx, gradient_coefficient(quad), quad.p2_gradients)
        return local

    local = map_elements(mesh, kernel, degree)
    n2 = _p2_scalar_count(mesh)
    dofs = _p2_scalar_dofs(mesh)
    return np.concatenate([_scatter_vector(local[:, i], dofs, n2) for i in range(2)])


def assemble_p1_functional(
    space: FunctionSpace,
    value_coefficient: Optional[QuadratureKernel] = None,
    gradient_coefficient: Optional[QuadratureKernel] = None,
    degree: Optional[int] = None,
) -> np.ndarray:
    """Vector with entries int c N_a + C . grad N_a dx on a linear space."""

    mesh = space.mesh

    def kernel(quad: ElementQuadrature) -> np.ndarray:
        local = np.zeros((quad.size, 3))
        if value_coefficient is not None:
            local += np.einsum("tq,tq,qa->ta", quad.dx, value_coefficient(quad), quad.p1_values)
        if gradient_coefficient is not None:
            local += np.einsum("tq,tqi,tai->ta", quad.dx, gradient_coefficient(quad), quad.p1_gradients)
        return local

    local = map_elements(mesh, kernel, degree)
    return _scatter_vector(local, mesh.triangles, mesh.vertex_count)


def integrate(mesh: Mesh, integrand: QuadratureKernel, degree: Optional[int] = None) -> float:
    """int integrand dx, summed per element block in a fixed order."""

    per_element = map_elements(
        mesh, lambda quad: np.einsum("tq,tq->t", quad.dx, integrand(quad)), degree
    )
    return float(np.sum(per_element))


def trilinear_eval(u: Field, v: Field, w: Field, degree: Optional[int] = None) -> float:
    """b(u, v, w) = int (u . grad) v . w dx."""

    mesh = require_same_mesh(u.space, v.space, w.space)
    return integrate(
        mesh,
        lambda quad: np.einsum(
            "tqj,tqij,tqi->tq", quad.vector(u.values), quad.vector_gradient(v.values), quad.vector(w.values)
        ),
        degree,
    )


def lumped_weights(mesh: Mesh) -> np.ndarray:
    """Exact integrals of the linear hat functions."""

    weights = np.zeros(mesh.vertex_count)
    np.add.at(weights, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return weights


# ---------------------------------------------------------------------------
# Interpolation, evaluation, boundary flux
# ---------------------------------------------------------------------------


ScalarMap = Callable[[np.ndarray], np.ndarray]


def interpolate(space: FunctionSpace, source: Union[VectorExpression, ScalarMap, float]) -> Field:
    """Nodal interpolant of an analytic expression."""

    nodes = space.node_coordinates
    if space.is_vector:
        if not isinstance(source, VectorExpression):
            raise ValueError("vector spaces interpolate VectorExpression sources")
        values = source.value(nodes)
        return Field(space=space, values=np.concatenate([values[:, 0], values[:, 1]]))
    if callable(source):
        return Field(space=space, values=np.asarray(source(nodes), dtype=float).reshape(-1).copy())
    return Field(space=space, values=np.full(space.node_count, float(source)))


def evaluate_at_points(field: Field, points: np.ndarray) -> np.ndarray:
    """Evaluate a discrete field at arbitrary points of the closed domain."""

    space = field.space
    triangle, bary = locate_points(space.mesh, points)
    if space.is_vector:
        basis = p2_values_from_barycentric(bary)
        dofs = space.element_dofs[triangle]
        return np.stack(
            [np.einsum("na,na->n", basis, field.component(i)[dofs]) for i in range(2)], axis=1
        )
    return np.einsum("na,na->n", bary, field.values[space.element_dofs[triangle]])


def boundary_flux(field: Field) -> float:
    """Simpson rule for the outward flux of the quadratic trace, exact on P2 traces."""

    space = field.space
    mesh = space.mesh
    if not space.is_vector:
        raise ValueError("flux is defined for velocity fields")
    start, end = mesh.boundary_edges[:, 0], mesh.boundary_edges[:, 1]
    middle = mesh.vertex_count + mesh.boundary_edge_ids
    ux, uy = field.component(0), field.component(1)
    simpson = []
    for comp in (ux, uy):
        simpson.append(comp[start] + 4.0 * comp[middle] + comp[end])
    normal_part = simpson[0] * mesh.boundary_normals[:, 0] + simpson[1] * mesh.boundary_normals[:, 1]
    return float(np.sum(mesh.boundary_lengths / 6.0 * normal_part))


def expression_flux(space: FunctionSpace, expression: VectorExpression) -> float:
    """Flux of the quadratic interpolant of ``expression``."""

    return boundary_flux(interpolate(space, expression))


# ---------------------------------------------------------------------------
# Discretization bundle
# ---------------------------------------------------------------------------


class Discretization:
    """Spaces plus the state-independent operators of one mesh, built lazily."""

    def __init__(self, mesh: Mesh, degree: Optional[int] = None):
        self.mesh = mesh
        self.degree = settings.QUADRATURE_DEGREE if degree is None else degree

    @cached_property
    def velocity(self) -> FunctionSpace:
        return velocity_space(self.mesh)

    @cached_property
    def pressure(self) -> FunctionSpace:
        return pressure_space(self.mesh)

    @cached_property
    def design(self) -> FunctionSpace:
        return design_space(self.mesh)

    @cached_property
    def velocity_stiffness(self) -> sp.csr_matrix:
        return assemble_stiffness(self.velocity, 1.0, self.degree)

    @cached_property
    def velocity_mass(self) -> sp.csr_matrix:
        return assemble_mass(self.velocity, self.degree)

    @cached_property
    def design_stiffness(self) -> sp.csr_matrix:
        return assemble_stiffness(self.design, 1.0, self.degree)

    @cached_property
    def design_mass(self) -> sp.csr_matrix:
        return assemble_mass(self.design, self.degree)

    @cached_property
    def divergence(self) -> sp.csr_matrix:
        return assemble_divergence(self.velocity, self.pressure, self.degree)

    @cached_property
    def lumped(self) -> np.ndarray:
        weights = lumped_weights(self.mesh)
        weights.flags.writeable = False
        return weights

    def gradient_norm(self, velocity: Field) -> float:
        values = velocity.values
        return float(np.sqrt(max(values @ (self.velocity_stiffness @ values), 0.0)))

    def l2_norm(self, velocity: Field) -> float:
        values = velocity.values
        return float(np.sqrt(max(values @ (self.velocity_mass @ values), 0.0)))

    def divergence_residual(self, velocity: Field) -> float:
        """||B u|| relative to ||abs(B) abs(u)||."""

        residual = self.divergence @ velocity.values
        scale = abs(self.divergence) @ np.abs(velocity.values)
        denominator = float(np.linalg.norm(scale))
        if denominator == 0.0:
            return 0.0
        return float(np.linalg.norm(residual)) / denominator
