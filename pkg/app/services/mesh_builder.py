"""Structured triangulations of rectangles and point location on them."""

import logging
from typing import Literal

import numpy as np

from app.models.fem import Mesh

logger = logging.getLogger(__name__)

_LOCATION_TOLERANCE = 1e-8


class PointLocationError(ValueError):
    """Raised when a query point lies outside the closed domain."""


def _freeze(*arrays: np.ndarray) -> None:
    for array in arrays:
        array.flags.writeable = False


def _grid_vertices(nx: int, ny: int, width: float, height: float) -> np.ndarray:
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def _cell_corners(nx: int, ny: int) -> tuple[np.ndarray, ...]:
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    return v00, v10, v01, v11


def _right_triangles(nx: int, ny: int) -> np.ndarray:
    v00, v10, v01, v11 = _cell_corners(nx, ny)
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    return np.stack([lower, upper], axis=1).reshape(-1, 3)


def _crossed_triangles(nx: int, ny: int, first_center: int) -> np.ndarray:
    v00, v10, v01, v11 = _cell_corners(nx, ny)
    center = first_center + np.arange(nx * ny)
    bottom = np.stack([v00, v10, center], axis=1)
    right = np.stack([v10, v11, center], axis=1)
    top = np.stack([v11, v01, center], axis=1)
    left = np.stack([v01, v00, center], axis=1)
    return np.stack([bottom, right, top, left], axis=1).reshape(-1, 3)


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (vertices[triangles[:, k]] for k in range(3))
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_structured_mesh(
    nx: int,
    ny: int,
    width: float,
    height: float,
    diagonal: Literal["right", "crossed"] = "right",
) -> Mesh:
    """Triangulate [0, width] x [0, height] with nx x ny cells.

    The right-diagonal variant splits every cell along its (0,0)-(1,1)
    diagonal into 2 triangles; the crossed variant adds a center vertex and
    produces 4 triangles per cell.
    """

    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")
    if width <= 0 or height <= 0:
        raise ValueError("width and height must be greater than 0")
    if diagonal not in ("right", "crossed"):
        raise ValueError(f"Unknown diagonal pattern '{diagonal}'")

    vertices = _grid_vertices(nx, ny, width, height)
    if diagonal == "right":
        triangles = _right_triangles(nx, ny)
    else:
        hx, hy = width / nx, height / ny
        ci, cj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
        centers = np.stack(
            [((ci + 0.5) * hx).ravel(), ((cj + 0.5) * hy).ravel()], axis=1
        )
        triangles = _crossed_triangles(nx, ny, first_center=len(vertices))
        vertices = np.vstack([vertices, centers])

    # Edges between local vertices (0,1), (1,2), (2,0)
    local_pairs = np.stack(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=1
    )
    sorted_pairs = np.sort(local_pairs.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(sorted_pairs, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    triangle_edges = inverse.reshape(-1, 3)

    # Edge to triangle adjacency, deterministic via stable sort
    owners = np.repeat(np.arange(len(triangles)), 3)
    order = np.argsort(inverse, kind="stable")
    grouped = inverse[order]
    starts = np.flatnonzero(np.r_[True, grouped[1:] != grouped[:-1]])
    counts = np.diff(np.r_[starts, len(grouped)])
    if np.any(counts > 2):
        raise ValueError("non-manifold edge in triangulation")

    edge_triangles = np.full((len(edges), 2), -1, dtype=np.int64)
    edge_triangles[grouped[starts], 0] = owners[order[starts]]
    shared = starts[counts == 2]
    edge_triangles[grouped[shared + 1], 1] = owners[order[shared + 1]]

    # Boundary edges keep the counterclockwise orientation of their triangle
    boundary_slots = order[starts[counts == 1]]
    boundary_tri = boundary_slots // 3
    boundary_local = boundary_slots % 3
    boundary_edges = np.stack(
        [
            triangles[boundary_tri, boundary_local],
            triangles[boundary_tri, (boundary_local + 1) % 3],
        ],
        axis=1,
    )
    boundary_edge_ids = grouped[starts[counts == 1]]
    direction = vertices[boundary_edges[:, 1]] - vertices[boundary_edges[:, 0]]
    boundary_lengths = np.hypot(direction[:, 0], direction[:, 1])
    boundary_normals = np.stack([direction[:, 1], -direction[:, 0]], axis=1)
    boundary_normals /= boundary_lengths[:, None]

    areas = _signed_areas(vertices, triangles)
    triangles = triangles.astype(np.int64)
    _freeze(
        vertices,
        triangles,
        edges,
        triangle_edges,
        edge_triangles,
        areas,
        boundary_edges,
        boundary_edge_ids,
        boundary_normals,
        boundary_lengths,
    )

    mesh = Mesh(
        nx=nx,
        ny=ny,
        width=float(width),
        height=float(height),
        diagonal=diagonal,
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        triangle_edges=triangle_edges,
        edge_triangles=edge_triangles,
        areas=areas,
        boundary_edges=boundary_edges,
        boundary_edge_ids=boundary_edge_ids,
        boundary_normals=boundary_normals,
        boundary_lengths=boundary_lengths,
        measure=float(width) * float(height),
    )
    logger.debug(
        "Built %s mesh %dx%d: %d vertices, %d triangles",
        diagonal,
        nx,
        ny,
        mesh.vertex_count,
        mesh.triangle_count,
    )
    return mesh


def locate_points(mesh: Mesh, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Find the containing triangle and barycentric coordinates of each point.

    Points within 1e-8 outside the rectangle are pulled onto its boundary.

    Returns:
        (triangle indices with shape (n,), barycentric coordinates (n, 3) in
        the triangle's local vertex order)
    """

    points = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = points[:, 0], points[:, 1]
    outside = (
        (x < -_LOCATION_TOLERANCE)
        | (x > mesh.width + _LOCATION_TOLERANCE)
        | (y < -_LOCATION_TOLERANCE)
        | (y > mesh.height + _LOCATION_TOLERANCE)
    )
    if np.any(outside):
        worst = points[np.flatnonzero(outside)[0]]
        raise PointLocationError(
            f"point ({worst[0]:.6g}, {worst[1]:.6g}) lies outside the domain"
        )

    x = np.clip(x, 0.0, mesh.width)
    y = np.clip(y, 0.0, mesh.height)
    hx = mesh.width / mesh.nx
    hy = mesh.height / mesh.ny
    i = np.clip(np.floor(x / hx).astype(np.int64), 0, mesh.nx - 1)
    j = np.clip(np.floor(y / hy).astype(np.int64), 0, mesh.ny - 1)
    xi = x / hx - i
    eta = y / hy - j
    cell = j * mesh.nx + i

    if mesh.diagonal == "right":
        triangle = 2 * cell + (xi < eta).astype(np.int64)
    else:
        quadrant = np.select(
            [
                (eta <= xi) & (eta <= 1.0 - xi),
                (xi >= eta) & (xi >= 1.0 - eta),
                (eta >= xi) & (eta >= 1.0 - xi),
            ],
            [0, 1, 2],
            default=3,
        )
        triangle = 4 * cell + quadrant

    corners = mesh.vertices[mesh.triangles[triangle]]
    jac = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=2)
    rhs = np.stack([x, y], axis=1) - corners[:, 0]
    local = np.linalg.solve(jac, rhs[:, :, None])[:, :, 0]
    bary = np.column_stack([1.0 - local[:, 0] - local[:, 1], local[:, 0], local[:, 1]])
    bary = np.clip(bary, 0.0, 1.0)
    bary /= bary.sum(axis=1, keepdims=True)
    return triangle, bary
