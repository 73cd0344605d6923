#!/usr/bin/env python3
"""
P1 finite element core
Quadrature on triangles, nodal interpolation and pointwise evaluation of
piecewise-linear fields.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from errors import FieldError, MeshError, QuadratureError
from mesh import Mesh

ScalarFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
GradientFunction = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric triangle rule in barycentric coordinates; weights sum to 1"""
    points: np.ndarray   # (q, 3)
    weights: np.ndarray  # (q,)
    degree: int


def _orbit_3(a: float) -> list[tuple[float, float, float]]:
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


def _orbit_6(a: float, b: float) -> list[tuple[float, float, float]]:
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _build_rule(orbits: list[tuple[list, float]], degree: int) -> QuadratureRule:
    points, weights = [], []
    for orbit_points, weight in orbits:
        points.extend(orbit_points)
        weights.extend([weight] * len(orbit_points))
    return QuadratureRule(np.array(points), np.array(weights), degree)


# Dunavant rules
_RULES = {
    1: _build_rule([([(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)], 1.0)], 1),
    2: _build_rule([(_orbit_3(1.0 / 6.0), 1.0 / 3.0)], 2),
    4: _build_rule([
        (_orbit_3(0.445948490915965), 0.223381589678011),
        (_orbit_3(0.091576213509771), 0.109951743655322),
    ], 4),
    6: _build_rule([
        (_orbit_3(0.249286745170910), 0.116786275726379),
        (_orbit_3(0.063089014491502), 0.050844906370207),
        (_orbit_6(0.053145049844817, 0.310352451033784), 0.082851075618374),
    ], 6),
}


def quadrature_rule(degree: int) -> QuadratureRule:
    """Rule exact for polynomials up to the given degree (1, 2, 4 or 6)"""
    try:
        return _RULES[degree]
    except (KeyError, TypeError):
        raise QuadratureError(
            f"Unsupported quadrature degree {degree!r}; choose from {sorted(_RULES)}"
        ) from None


def quadrature_points(mesh: Mesh, rule: QuadratureRule) -> np.ndarray:
    """Physical coordinates of the rule's points on every triangle, shape (T, q, 2)"""
    vertices = mesh.nodes[mesh.triangles]  # (T, 3, 2)
    return np.einsum("qk,tkd->tqd", rule.points, vertices)


def _evaluate(f: ScalarFunction, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    values = np.asarray(f(x, y), dtype=float)
    return np.broadcast_to(values, np.shape(x)).copy()


def integrate_function(f: ScalarFunction, mesh: Mesh, degree: int = 6) -> float:
    """Integral of f over the mesh domain"""
    rule = quadrature_rule(degree)
    areas, _ = mesh.geometry
    pts = quadrature_points(mesh, rule)
    values = _evaluate(f, pts[..., 0], pts[..., 1])
    return float(np.sum(areas * (values @ rule.weights)))


def function_l2_norm(f: ScalarFunction, mesh: Mesh, degree: int = 6) -> float:
    """L2 norm of a closed-form function, by quadrature"""
    return math.sqrt(integrate_function(lambda x, y: _evaluate(f, x, y) ** 2, mesh, degree))


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal values of a P1 function on a mesh"""
    mesh: Mesh
    coefficients: np.ndarray

    def __post_init__(self):
        coefficients = np.asarray(self.coefficients, dtype=float)
        if coefficients.shape != (self.mesh.num_nodes,):
            raise FieldError(
                f"Field needs {self.mesh.num_nodes} coefficients, got shape {coefficients.shape}"
            )
        object.__setattr__(self, "coefficients", coefficients)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "Field":
        return cls(mesh, np.zeros(mesh.num_nodes))

    def gradients(self) -> np.ndarray:
        """Constant gradient on each triangle, shape (T, 2)"""
        _, grads = self.mesh.geometry
        return np.einsum("tk,tkd->td", self.coefficients[self.mesh.triangles], grads)

    def boundary_is_zero(self) -> bool:
        return bool(np.all(self.coefficients[self.mesh.boundary_mask] == 0.0))


def interpolate_nodal(f: ScalarFunction, mesh: Mesh) -> Field:
    """Nodal interpolant: coefficient i is f at node i"""
    values = _evaluate(f, mesh.nodes[:, 0], mesh.nodes[:, 1])
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        x, y = mesh.nodes[bad[0]]
        raise FieldError(f"Non-finite value {values[bad[0]]} at node {bad[0]} ({x}, {y})")
    return Field(mesh, values)


def _snap(g: float) -> float:
    nearest = round(g)
    return float(nearest) if abs(g - nearest) <= 1e-12 * max(1.0, abs(g)) else g


def _locate_structured(mesh: Mesh, x: float, y: float) -> tuple[np.ndarray, np.ndarray]:
    n = mesh.n
    gx, gy = _snap(x * n), _snap(y * n)
    i = min(int(math.floor(gx)), n - 1)
    j = min(int(math.floor(gy)), n - 1)
    s, t = gx - i, gy - j
    a = j * (n + 1) + i
    if t <= s:
        return np.array([a, a + 1, a + n + 2]), np.array([1.0 - s, s - t, t])
    return np.array([a, a + n + 2, a + n + 1]), np.array([1.0 - t, s, t - s])


def _locate_generic(mesh: Mesh, x: float, y: float) -> tuple[np.ndarray, np.ndarray]:
    areas, grads = mesh.geometry
    vertices = mesh.nodes[mesh.triangles]
    offset = np.array([x, y]) - vertices[:, 0, :]
    lam1 = np.einsum("td,td->t", grads[:, 1, :], offset)
    lam2 = np.einsum("td,td->t", grads[:, 2, :], offset)
    lam = np.column_stack([1.0 - lam1 - lam2, lam1, lam2])
    inside = np.flatnonzero(np.all(lam >= -1e-12, axis=1))
    if inside.size == 0:
        raise FieldError(f"Point ({x}, {y}) is not covered by the mesh")
    t = inside[0]
    return mesh.triangles[t], lam[t]


def evaluate_field(field: Field, point: tuple[float, float]) -> float:
    """Value of the P1 field at a point of the closed unit square"""
    x, y = float(point[0]), float(point[1])
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise FieldError(f"Point ({x}, {y}) lies outside [0,1]^2")
    if field.mesh.n > 0:
        nodes, weights = _locate_structured(field.mesh, x, y)
    else:
        nodes, weights = _locate_generic(field.mesh, x, y)
    values = field.coefficients[nodes]
    # exact at vertices
    hit = np.flatnonzero(weights == 1.0)
    if hit.size:
        return float(values[hit[0]])
    return float(np.dot(weights, values))


def check_same_mesh(mesh: Mesh, *fields: Field) -> None:
    for field in fields:
        if field.mesh is not mesh:
            raise MeshError("Field belongs to a different mesh than the one supplied")
