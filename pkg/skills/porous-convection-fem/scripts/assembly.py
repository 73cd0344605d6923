#!/usr/bin/env python3
"""
Assembly of the coupled stream function / temperature system
Residual F(u) and Newton tangent DF(u) of

    ∫∇ψ·∇v − Ra∫(∂θ/∂x)v − ∫f1 v = 0
    ∫∇θ·∇τ + ∫J(ψ,θ)τ − ∫f2 τ = 0,   J(ψ,θ) = ψx θy − ψy θx

over P1 fields with zero boundary values. Unknowns are stacked as
[ψ on interior nodes, θ on interior nodes].
"""

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from errors import FieldError, MeshError
from femcore import Field, ScalarFunction, quadrature_points, quadrature_rule
from linalg import SparseMatrix, coo_to_csr, to_csr
from mesh import Mesh

SOURCE_QUADRATURE_DEGREE = 6

# ∫_T φ_i φ_j = area/12 * (1 + δ_ij)
_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def _zero(x, y):
    return np.zeros_like(x)


@dataclass(frozen=True)
class ProblemParams:
    """Rayleigh number and the two source terms"""
    Ra: float
    f1: ScalarFunction = _zero
    f2: ScalarFunction = _zero

    def __post_init__(self):
        if not math.isfinite(self.Ra) or self.Ra < 0.0:
            raise ValueError(f"Rayleigh number must be finite and >= 0, got {self.Ra}")

    def scaled(self, factor: float) -> "ProblemParams":
        """Same Ra, both sources multiplied by factor"""
        f1, f2 = self.f1, self.f2
        return replace(
            self,
            f1=lambda x, y: factor * np.asarray(f1(x, y), dtype=float),
            f2=lambda x, y: factor * np.asarray(f2(x, y), dtype=float),
        )


@dataclass(frozen=True, eq=False)
class CoupledState:
    """Discrete pair (ψ_h, θ_h); boundary coefficients are exactly zero"""
    psi: Field
    theta: Field

    def __post_init__(self):
        if self.psi.mesh is not self.theta.mesh:
            raise MeshError("psi and theta must live on the same mesh")
        for name, field in (("psi", self.psi), ("theta", self.theta)):
            if not field.boundary_is_zero():
                raise FieldError(f"{name} has non-zero boundary coefficients")

    @property
    def mesh(self) -> Mesh:
        return self.psi.mesh

    @classmethod
    def zeros(cls, mesh: Mesh) -> "CoupledState":
        return cls(Field.zeros(mesh), Field.zeros(mesh))

    @classmethod
    def from_interior_vector(cls, mesh: Mesh, vector: np.ndarray) -> "CoupledState":
        interior = mesh.interior_nodes
        m = interior.size
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (2 * m,):
            raise FieldError(f"Expected {2 * m} interior unknowns, got shape {vector.shape}")
        psi = np.zeros(mesh.num_nodes)
        theta = np.zeros(mesh.num_nodes)
        psi[interior] = vector[:m]
        theta[interior] = vector[m:]
        return cls(Field(mesh, psi), Field(mesh, theta))

    def interior_vector(self) -> np.ndarray:
        interior = self.mesh.interior_nodes
        return np.concatenate([self.psi.coefficients[interior], self.theta.coefficients[interior]])


def _scatter(mesh: Mesh, local: np.ndarray) -> SparseMatrix:
    """Sum element matrices (T, 3, 3) into a global N x N CSR matrix"""
    tri = mesh.triangles
    rows = np.broadcast_to(tri[:, :, None], local.shape)
    cols = np.broadcast_to(tri[:, None, :], local.shape)
    n = mesh.num_nodes
    return coo_to_csr(rows, cols, local, (n, n))


def assemble_stiffness(mesh: Mesh) -> SparseMatrix:
    """K_ij = ∫∇φ_i·∇φ_j over all nodes"""
    areas, grads = mesh.geometry
    local = areas[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
    return _scatter(mesh, local)


def assemble_mass(mesh: Mesh) -> SparseMatrix:
    """M_ij = ∫φ_i φ_j over all nodes"""
    areas, _ = mesh.geometry
    return _scatter(mesh, areas[:, None, None] * _LOCAL_MASS[None, :, :])


def assemble_convection_x(mesh: Mesh) -> SparseMatrix:
    """C_ij = ∫(∂φ_j/∂x) φ_i; row i is the test function"""
    areas, grads = mesh.geometry
    local = np.broadcast_to((areas / 3.0)[:, None, None] * grads[:, None, :, 0], (mesh.num_triangles, 3, 3))
    return _scatter(mesh, np.ascontiguousarray(local))


def load_vector(f: ScalarFunction, mesh: Mesh, degree: int = SOURCE_QUADRATURE_DEGREE) -> np.ndarray:
    """b_i = ∫f φ_i by quadrature"""
    rule = quadrature_rule(degree)
    areas, _ = mesh.geometry
    pts = quadrature_points(mesh, rule)
    values = np.broadcast_to(np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float), pts.shape[:2])
    local = areas[:, None] * np.einsum("tq,q,qk->tk", values, rule.weights, rule.points)
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.num_nodes)


def jacobian_determinant(psi: Field, theta: Field) -> np.ndarray:
    """J(ψ,θ) = ψx θy − ψy θx on each triangle (constant for P1)"""
    gp = psi.gradients()
    gt = theta.gradients()
    return gp[:, 0] * gt[:, 1] - gp[:, 1] * gt[:, 0]


def convection_load(psi: Field, theta: Field) -> np.ndarray:
    """j_i = ∫J(ψ,θ) φ_i over all nodes"""
    mesh = psi.mesh
    areas, _ = mesh.geometry
    per_node = (jacobian_determinant(psi, theta) * areas / 3.0)[:, None]
    local = np.broadcast_to(per_node, mesh.triangles.shape)
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.num_nodes)


def convection_energy(state: CoupledState) -> float:
    """∫J(ψ_h,θ_h)θ_h; vanishes for zero-boundary P1 fields up to round-off"""
    return float(np.dot(convection_load(state.psi, state.theta), state.theta.coefficients))


def restrict_to_interior(matrix: SparseMatrix, mesh: Mesh, blocks: int = 1) -> SparseMatrix:
    """Drop boundary rows and columns from a (blocks*N) x (blocks*N) matrix"""
    n = mesh.num_nodes
    free = np.concatenate([mesh.interior_nodes + k * n for k in range(blocks)])
    return to_csr(matrix[free][:, free])


class CoupledSystem:
    """Mesh-dependent operators of the coupled problem, built once per (mesh, params)"""

    def __init__(self, mesh: Mesh, params: ProblemParams, source_degree: int = SOURCE_QUADRATURE_DEGREE):
        self.mesh = mesh
        self.params = params
        self.stiffness = assemble_stiffness(mesh)
        self.convection = assemble_convection_x(mesh)
        self.load_psi = load_vector(params.f1, mesh, source_degree)
        self.load_theta = load_vector(params.f2, mesh, source_degree)
        self.interior = mesh.interior_nodes

    def _check(self, state: CoupledState) -> None:
        if state.mesh is not self.mesh:
            raise MeshError("State was built on a different mesh than the system")

    def residual_full(self, state: CoupledState) -> tuple[np.ndarray, np.ndarray]:
        """Residual rows for every node (boundary rows included)"""
        self._check(state)
        psi = state.psi.coefficients
        theta = state.theta.coefficients
        r_psi = self.stiffness @ psi - self.params.Ra * (self.convection @ theta) - self.load_psi
        r_theta = self.stiffness @ theta + convection_load(state.psi, state.theta) - self.load_theta
        return r_psi, r_theta

    def residual(self, state: CoupledState) -> np.ndarray:
        r_psi, r_theta = self.residual_full(state)
        return np.concatenate([r_psi[self.interior], r_theta[self.interior]])

    def tangent(self, state: CoupledState) -> SparseMatrix:
        self._check(state)
        mesh = self.mesh
        areas, grads = mesh.geometry
        gp = state.psi.gradients()
        gt = state.theta.gradients()
        third = (areas / 3.0)[:, None]

        # column l of each element block: derivative with respect to node l, same for every test row
        d_psi = third * (grads[:, :, 0] * gt[:, None, 1] - grads[:, :, 1] * gt[:, None, 0])
        d_theta = third * (gp[:, None, 0] * grads[:, :, 1] - gp[:, None, 1] * grads[:, :, 0])
        shape = (mesh.num_triangles, 3, 3)
        theta_psi = _scatter(mesh, np.ascontiguousarray(np.broadcast_to(d_psi[:, None, :], shape)))
        theta_theta = _scatter(mesh, np.ascontiguousarray(np.broadcast_to(d_theta[:, None, :], shape)))

        full = sp.bmat([
            [self.stiffness, -self.params.Ra * self.convection],
            [theta_psi, self.stiffness + theta_theta],
        ], format="csr")
        return restrict_to_interior(full, mesh, blocks=2)


def assemble_residual(state: CoupledState, params: ProblemParams, mesh: Mesh) -> np.ndarray:
    """F(u) tested against every interior basis function"""
    return CoupledSystem(mesh, params).residual(state)


def assemble_tangent(state: CoupledState, params: ProblemParams, mesh: Mesh) -> SparseMatrix:
    """DF(u), the exact derivative of F, on interior unknowns"""
    return CoupledSystem(mesh, params).tangent(state)
