#!/usr/bin/env python3
"""
Structured triangulation of the unit square
Each grid square is split along its lower-left to upper-right diagonal;
nodes are numbered row by row (index = row * (n + 1) + column).
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from errors import DegenerateElementError, MeshError

DEFAULT_MAX_SUBDIVISIONS = 512


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh of (0,1)^2; arrays are read-only after construction"""
    n: int
    nodes: np.ndarray           # (N, 2) float
    triangles: np.ndarray       # (T, 3) int, counter-clockwise
    boundary_mask: np.ndarray   # (N,) bool

    @property
    def h(self) -> float:
        return 1.0 / self.n if self.n else float("nan")

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    @cached_property
    def geometry(self) -> tuple[np.ndarray, np.ndarray]:
        """(areas (T,), basis gradients (T, 3, 2)) for every triangle"""
        return triangle_geometry(self.nodes[self.triangles])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)


def triangle_geometry(vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Areas and P1 basis gradients for a stack of triangles.

    vertices has shape (T, 3, 2). Raises DegenerateElementError on the first
    triangle whose signed area is not positive.
    """
    x = vertices[:, :, 0]
    y = vertices[:, :, 1]
    twice_area = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    bad = np.flatnonzero(~(twice_area > 0.0))
    if bad.size:
        raise DegenerateElementError(int(bad[0]), float(0.5 * twice_area[bad[0]]))

    grads = np.empty(vertices.shape, dtype=float)
    grads[:, 0, 0] = y[:, 1] - y[:, 2]
    grads[:, 0, 1] = x[:, 2] - x[:, 1]
    grads[:, 1, 0] = y[:, 2] - y[:, 0]
    grads[:, 1, 1] = x[:, 0] - x[:, 2]
    grads[:, 2, 0] = y[:, 0] - y[:, 1]
    grads[:, 2, 1] = x[:, 1] - x[:, 0]
    grads /= twice_area[:, None, None]
    return 0.5 * twice_area, grads


def build_structured_mesh(n: int, max_subdivisions: int = DEFAULT_MAX_SUBDIVISIONS) -> Mesh:
    """Uniform right-triangle mesh with n subdivisions per side"""
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        raise MeshError(f"Subdivisions must be an integer, got {n!r}")
    n = int(n)
    if n < 1:
        raise MeshError(f"Subdivisions must be >= 1, got {n}")
    if n > max_subdivisions:
        raise MeshError(f"Subdivisions {n} exceed the configured maximum {max_subdivisions}")

    coords = np.arange(n + 1, dtype=float) / n
    xx, yy = np.meshgrid(coords, coords)  # rows follow y
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    cols, rows = np.meshgrid(np.arange(n), np.arange(n))
    a = (rows * (n + 1) + cols).ravel()
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    lower = np.column_stack([a, b, c])
    upper = np.column_stack([a, c, d])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    on_edge = np.arange(n + 1)
    edge = (on_edge == 0) | (on_edge == n)
    boundary_mask = (edge[None, :] | edge[:, None]).ravel()

    for array in (nodes, triangles, boundary_mask):
        array.setflags(write=False)
    return Mesh(n=n, nodes=nodes, triangles=triangles, boundary_mask=boundary_mask)


def element_geometry(mesh: Mesh, t: int) -> tuple[float, np.ndarray]:
    """Area and the three basis gradients (3, 2) of triangle t"""
    if not 0 <= t < mesh.num_triangles:
        raise MeshError(f"Triangle index {t} out of range [0, {mesh.num_triangles})")
    areas, grads = triangle_geometry(mesh.nodes[mesh.triangles[t]][None, :, :])
    return float(areas[0]), grads[0]


def mesh_from_arrays(nodes, triangles, boundary_mask=None) -> Mesh:
    """Wrap explicit arrays as a Mesh (used for single-element checks)"""
    nodes = np.array(nodes, dtype=float)
    triangles = np.array(triangles, dtype=int)
    if boundary_mask is None:
        on_side = np.isclose(nodes, 0.0) | np.isclose(nodes, 1.0)
        boundary_mask = on_side.any(axis=1)
    boundary_mask = np.array(boundary_mask, dtype=bool)
    for array in (nodes, triangles, boundary_mask):
        array.setflags(write=False)
    return Mesh(n=0, nodes=nodes, triangles=triangles, boundary_mask=boundary_mask)
