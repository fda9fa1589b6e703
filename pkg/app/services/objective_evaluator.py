"""Diffuse objective J_eps, sharp objective J_0 and perimeter estimators."""

import logging
import math
from typing import Optional

import numpy as np
import shapely
from shapely.geometry import MultiLineString

from app.models.alpha import AlphaInterpolation
from app.models.fem import Field, Mesh
from app.models.objective import (
    C0,
    PHASE_TOLERANCE,
    ObjectiveBreakdown,
    ObjectiveSpec,
    PhaseField,
    SharpMask,
    SharpObjective,
)
from app.models.state import StateSolution
from app.services.fem_assembly import ElementQuadrature, integrate

logger = logging.getLogger(__name__)

# Reconstructed profiles span this many cells across the transition layer
_RECONSTRUCTION_CELLS = 16.0


class PotentialDomainError(ValueError):
    """Phase values outside [-1, 1], where the double obstacle potential is infinite."""


def eval_F(u: Field, spec: ObjectiveSpec, degree: Optional[int] = None) -> float:
    """Total potential power int mu/2 |grad u|^2 - f . u dx."""

    values = u.values

    def integrand(quad: ElementQuadrature) -> np.ndarray:
        grad = quad.vector_gradient(values)
        vel = quad.vector(values)
        force = spec.body_force.value(quad.points)
        return 0.5 * spec.viscosity * np.einsum("tqij,tqij->tq", grad, grad) - np.einsum(
            "tqi,tqi->tq", force, vel
        )

    return integrate(u.space.mesh, integrand, degree)


def eval_alpha_term(
    u: Field,
    phase: PhaseField,
    alpha: AlphaInterpolation,
    degree: Optional[int] = None,
) -> float:
    """1/2 int alpha_eps(phi) |u|^2 dx."""

    velocity = u.values
    phi = phase.values

    def integrand(quad: ElementQuadrature) -> np.ndarray:
        vel = quad.vector(velocity)
        return 0.5 * alpha.value(quad.p1(phi)) * np.einsum("tqi,tqi->tq", vel, vel)

    return integrate(u.space.mesh, integrand, degree)


def _check_potential_domain(values: np.ndarray) -> None:
    worst = float(np.max(np.abs(values))) if values.size else 0.0
    if worst > 1.0 + PHASE_TOLERANCE:
        raise PotentialDomainError(
            f"|phi| reaches {worst:.12g} > 1; the double obstacle potential is infinite there"
        )


def ginzburg_landau_energy(
    mesh: Mesh,
    values: np.ndarray,
    eps: float,
    gamma: float = 1.0,
    degree: Optional[int] = None,
) -> float:
    """gamma * int eps/2 |grad phi|^2 + (1 - phi^2) / (2 eps) dx for nodal values."""

    _check_potential_domain(values)

    def integrand(quad: ElementQuadrature) -> np.ndarray:
        grad = quad.p1_gradient(values)
        phi = quad.p1(values)
        return 0.5 * eps * np.einsum("tqi,tqi->tq", grad, grad) + 0.5 * (1.0 - phi**2) / eps

    return gamma * integrate(mesh, integrand, degree)


def eval_ginzburg_landau(phase: PhaseField, gamma: float, degree: Optional[int] = None) -> float:
    return ginzburg_landau_energy(
        phase.field.space.mesh, phase.values, phase.eps, gamma, degree
    )


def eval_J_eps(
    phase: PhaseField,
    state: StateSolution,
    spec: ObjectiveSpec,
    alpha: AlphaInterpolation,
    degree: Optional[int] = None,
) -> ObjectiveBreakdown:
    """Alpha term, F and GL; the total sums them in that order."""

    return ObjectiveBreakdown.from_terms(
        alpha_term=eval_alpha_term(state.velocity, phase, alpha, degree),
        f_term=eval_F(state.velocity, spec, degree),
        gl_term=eval_ginzburg_landau(phase, spec.gamma, degree),
    )


# ---------------------------------------------------------------------------
# Perimeter of black-and-white designs
# ---------------------------------------------------------------------------


def _interface_edges(mesh: Mesh, cell_values: np.ndarray) -> np.ndarray:
    pairs = mesh.edge_triangles
    interior = pairs[:, 1] >= 0
    left = cell_values[pairs[interior, 0]]
    right = cell_values[pairs[interior, 1]]
    return mesh.edges[interior][left != right]


def perimeter_edge_count(mesh: Mesh, cell_values: np.ndarray) -> float:
    """Total length of interior edges separating fluid and solid triangles."""

    edges = _interface_edges(mesh, cell_values)
    if edges.size == 0:
        return 0.0
    direction = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    return float(np.sum(np.hypot(direction[:, 0], direction[:, 1])))


def is_rectilinear_interface(mesh: Mesh, cell_values: np.ndarray) -> bool:
    """True when the interface is axis-aligned with every straight run at least two edges long.

    Unit-length runs between corners are the staircase of a slanted or
    curved boundary, which the edge count overestimates.
    """

    edges = _interface_edges(mesh, cell_values)
    if edges.size == 0:
        return True
    direction = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    tolerance = 1e-9 * mesh.cell_size
    horizontal = np.abs(direction[:, 1]) <= tolerance
    vertical = np.abs(direction[:, 0]) <= tolerance
    if not np.all(horizontal | vertical):
        return False
    touches_horizontal = np.zeros(mesh.vertex_count, dtype=bool)
    touches_vertical = np.zeros(mesh.vertex_count, dtype=bool)
    touches_horizontal[edges[horizontal].ravel()] = True
    touches_vertical[edges[vertical].ravel()] = True
    corner = touches_horizontal & touches_vertical
    return not np.any(corner[edges[:, 0]] & corner[edges[:, 1]])


def sharp_perimeter(mesh: Mesh, cell_values: np.ndarray, degree: Optional[int] = None) -> float:
    """Exact edge length for rectilinear interfaces, the GL reconstruction otherwise."""

    if is_rectilinear_interface(mesh, cell_values):
        return perimeter_edge_count(mesh, cell_values)
    return perimeter_gl_estimate(mesh, cell_values, degree)


def node_average(mesh: Mesh, cell_values: np.ndarray) -> np.ndarray:
    """Area-weighted average of triangle values at each vertex."""

    weighted = np.zeros(mesh.vertex_count)
    area = np.zeros(mesh.vertex_count)
    np.add.at(weighted, mesh.triangles.ravel(), np.repeat(mesh.areas * cell_values, 3))
    np.add.at(area, mesh.triangles.ravel(), np.repeat(mesh.areas, 3))
    return weighted / area


def interface_contour(mesh: Mesh, node_values: np.ndarray) -> MultiLineString:
    """Zero level set of a linear field, one segment per crossed triangle.

    Values are split into ``>= 0`` and ``< 0``; a crossing is placed by
    linear interpolation along each edge joining the two classes.
    """

    positive = node_values >= 0.0
    tri = mesh.triangles
    classes = positive[tri]
    crossed = np.flatnonzero(classes.any(axis=1) & ~classes.all(axis=1))
    segments = []
    for t in crossed:
        points = []
        for a, b in ((0, 1), (1, 2), (2, 0)):
            if classes[t, a] == classes[t, b]:
                continue
            va, vb = node_values[tri[t, a]], node_values[tri[t, b]]
            weight = va / (va - vb)
            pa, pb = mesh.vertices[tri[t, a]], mesh.vertices[tri[t, b]]
            points.append(tuple(pa + weight * (pb - pa)))
        if len(points) == 2 and points[0] != points[1]:
            segments.append(points)
    return MultiLineString(segments)


def sine_profile(signed_distance: np.ndarray, eps: float) -> np.ndarray:
    """Optimal one-dimensional transition sin(clip(s / eps, -pi/2, pi/2))."""

    return np.sin(np.clip(signed_distance / eps, -0.5 * math.pi, 0.5 * math.pi))


def signed_distance_to_contour(mesh: Mesh, node_values: np.ndarray, contour: MultiLineString) -> np.ndarray:
    distance = shapely.distance(shapely.points(mesh.vertices), contour)
    return np.where(node_values >= 0.0, distance, -distance)


def perimeter_gl_estimate(mesh: Mesh, cell_values: np.ndarray, degree: Optional[int] = None) -> float:
    """Perimeter from the GL energy of a reconstructed optimal profile, divided by c0."""

    node_values = node_average(mesh, np.asarray(cell_values, dtype=float))
    contour = interface_contour(mesh, node_values)
    if contour.is_empty:
        return 0.0
    eps = _RECONSTRUCTION_CELLS * mesh.cell_size / math.pi
    distance = signed_distance_to_contour(mesh, node_values, contour)
    profile = sine_profile(distance, eps)
    return ginzburg_landau_energy(mesh, profile, eps, 1.0, degree) / C0


def eval_J0(
    sharp_mask: SharpMask,
    spec: ObjectiveSpec,
    sharp_state: StateSolution,
    degree: Optional[int] = None,
) -> SharpObjective:
    """J_0 = F(u_sharp) + gamma * c0 * perimeter of the fluid set inside the domain."""

    mesh = sharp_state.velocity.space.mesh
    f_term = eval_F(sharp_state.velocity, spec, degree)
    perimeter = sharp_perimeter(mesh, sharp_mask.cell_values, degree)
    edge_count = perimeter_edge_count(mesh, sharp_mask.cell_values)
    perimeter_term = spec.gamma * C0 * perimeter
    logger.debug("Sharp perimeter %.6f (edge count %.6f)", perimeter, edge_count)
    return SharpObjective(
        f_term=f_term,
        perimeter=perimeter,
        perimeter_edge_count=edge_count,
        perimeter_term=perimeter_term,
        total=f_term + perimeter_term,
    )


def straight_interface_phase(
    design_space_field: Field,
    eps: float,
    beta: float,
    position: float,
    axis: int = 0,
) -> PhaseField:
    """Clipped-sine profile across the line x_axis = position."""

    nodes = design_space_field.space.node_coordinates
    values = sine_profile(nodes[:, axis] - position, eps)
    return PhaseField(field=design_space_field.with_values(values), eps=eps, beta=beta)


def disc_phase(design_space_field: Field, eps: float, beta: float, center: tuple[float, float], radius: float) -> PhaseField:
    """Clipped-sine profile of a solid disc (-1 inside, +1 outside)."""

    nodes = design_space_field.space.node_coordinates
    distance = np.hypot(nodes[:, 0] - center[0], nodes[:, 1] - center[1]) - radius
    values = sine_profile(distance, eps)
    return PhaseField(field=design_space_field.with_values(values), eps=eps, beta=beta)

