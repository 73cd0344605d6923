#!/usr/bin/env python3
"""
Manufactured solution for the coupled problem and discrete error norms

    ψ = 2 x²(x−1)² · y(y−1)(2y−1)
    θ = −2 y²(y−1)² · x(x−1)(2x−1)

Both vanish on the boundary of the unit square. Sources follow from the
equations with hand-coded derivatives:

    f1 = −Δψ − Ra ∂θ/∂x
    f2 = J(ψ,θ) − Δθ
"""

import math
from dataclasses import dataclass

import numpy as np

from femcore import Field, GradientFunction, check_same_mesh, ScalarFunction, quadrature_points, quadrature_rule
from mesh import Mesh

ERROR_QUADRATURE_DEGREE = 6


# a(s) = s²(s−1)², b(s) = s(s−1)(2s−1) and their derivatives
def _a(s):
    return s * s * (s - 1.0) ** 2


def _da(s):
    return 4.0 * s ** 3 - 6.0 * s ** 2 + 2.0 * s


def _d2a(s):
    return 12.0 * s ** 2 - 12.0 * s + 2.0


def _b(s):
    return s * (s - 1.0) * (2.0 * s - 1.0)


def _db(s):
    return 6.0 * s ** 2 - 6.0 * s + 1.0


def _d2b(s):
    return 12.0 * s - 6.0


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form pair with first derivatives and Laplacians"""
    name: str
    psi: ScalarFunction
    theta: ScalarFunction
    psi_grad: GradientFunction
    theta_grad: GradientFunction
    psi_laplacian: ScalarFunction
    theta_laplacian: ScalarFunction

    def sources(self, Ra: float) -> tuple[ScalarFunction, ScalarFunction]:
        """(f1, f2) making this pair an exact solution for the given Ra"""
        if not math.isfinite(Ra) or Ra < 0.0:
            raise ValueError(f"Rayleigh number must be finite and >= 0, got {Ra}")

        def f1(x, y):
            theta_x, _ = self.theta_grad(x, y)
            return -self.psi_laplacian(x, y) - Ra * theta_x

        def f2(x, y):
            psi_x, psi_y = self.psi_grad(x, y)
            theta_x, theta_y = self.theta_grad(x, y)
            return psi_x * theta_y - psi_y * theta_x - self.theta_laplacian(x, y)

        return f1, f2


def _coupled_pair() -> ExactSolution:
    return ExactSolution(
        name="coupled",
        psi=lambda x, y: 2.0 * _a(x) * _b(y),
        theta=lambda x, y: -2.0 * _a(y) * _b(x),
        psi_grad=lambda x, y: (2.0 * _da(x) * _b(y), 2.0 * _a(x) * _db(y)),
        theta_grad=lambda x, y: (-2.0 * _a(y) * _db(x), -2.0 * _da(y) * _b(x)),
        psi_laplacian=lambda x, y: 2.0 * (_d2a(x) * _b(y) + _a(x) * _d2b(y)),
        theta_laplacian=lambda x, y: -2.0 * (_a(y) * _d2b(x) + _d2a(y) * _b(x)),
    )


def _zeros(x, y):
    return np.zeros_like(np.asarray(x, dtype=float))


def _poisson_variant() -> ExactSolution:
    """Same ψ with θ ≡ 0: f2 vanishes and the ψ equation is a plain Poisson problem"""
    pair = _coupled_pair()
    return ExactSolution(
        name="poisson",
        psi=pair.psi,
        theta=_zeros,
        psi_grad=pair.psi_grad,
        theta_grad=lambda x, y: (_zeros(x, y), _zeros(x, y)),
        psi_laplacian=pair.psi_laplacian,
        theta_laplacian=_zeros,
    )


MANUFACTURED = _coupled_pair()
POISSON_VARIANT = _poisson_variant()

VARIANTS = {MANUFACTURED.name: MANUFACTURED, POISSON_VARIANT.name: POISSON_VARIANT}


def mms_exact(x, y) -> tuple:
    """(ψ, θ) of the manufactured pair"""
    return MANUFACTURED.psi(x, y), MANUFACTURED.theta(x, y)


def mms_sources(Ra: float, exact: ExactSolution = MANUFACTURED) -> tuple[ScalarFunction, ScalarFunction]:
    """Sources compatible with the manufactured pair"""
    return exact.sources(Ra)


def error_l2(field: Field, exact: ScalarFunction, mesh: Mesh, degree: int = ERROR_QUADRATURE_DEGREE) -> float:
    """||field − exact||_{L2} with the exact function sampled at quadrature points"""
    check_same_mesh(mesh, field)
    rule = quadrature_rule(degree)
    areas, _ = mesh.geometry
    pts = quadrature_points(mesh, rule)
    discrete = np.einsum("tk,qk->tq", field.coefficients[mesh.triangles], rule.points)
    reference = np.broadcast_to(np.asarray(exact(pts[..., 0], pts[..., 1]), dtype=float), discrete.shape)
    squared = (discrete - reference) ** 2
    return math.sqrt(float(np.sum(areas * (squared @ rule.weights))))


def error_h1_semi(
    field: Field,
    exact_grad: GradientFunction,
    mesh: Mesh,
    degree: int = ERROR_QUADRATURE_DEGREE,
) -> float:
    """||∇field − ∇exact||_{L2}; the field gradient is constant per triangle"""
    check_same_mesh(mesh, field)
    rule = quadrature_rule(degree)
    areas, _ = mesh.geometry
    pts = quadrature_points(mesh, rule)
    gx, gy = exact_grad(pts[..., 0], pts[..., 1])
    shape = pts.shape[:2]
    grad = field.gradients()
    dx = grad[:, 0, None] - np.broadcast_to(np.asarray(gx, dtype=float), shape)
    dy = grad[:, 1, None] - np.broadcast_to(np.asarray(gy, dtype=float), shape)
    return math.sqrt(float(np.sum(areas * ((dx * dx + dy * dy) @ rule.weights))))


def h1_seminorm(field: Field) -> float:
    """||∇field||_{L2}, exact for P1"""
    areas, _ = field.mesh.geometry
    grad = field.gradients()
    return math.sqrt(float(np.sum(areas * np.sum(grad * grad, axis=1))))
