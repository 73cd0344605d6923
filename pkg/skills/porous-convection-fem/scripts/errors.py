#!/usr/bin/env python3
"""
Exception hierarchy for the porous convection solver
"""

from typing import Any, Optional


class FemError(Exception):
    """Base class for solver errors"""


class MeshError(FemError, ValueError):
    """Invalid mesh request or mesh/state mismatch"""


class DegenerateElementError(FemError):
    """Triangle with zero (or negative) area"""

    def __init__(self, triangle: int, area: float):
        self.triangle = triangle
        self.area = area
        super().__init__(f"Degenerate triangle {triangle}: signed area {area:.3e}")


class QuadratureError(FemError, ValueError):
    """Unsupported quadrature degree"""


class FieldError(FemError, ValueError):
    """Bad field data: wrong size, non-finite values, point outside the domain"""


class SingularMatrixError(FemError):
    """Direct factorization hit a zero or negligible pivot"""

    def __init__(self, message: str, pivot: Optional[int] = None):
        self.pivot = pivot
        if pivot is not None:
            message = f"{message} (pivot {pivot})"
        super().__init__(message)


class LinearSolverConvergenceError(FemError):
    """Iterative solver stopped at its iteration cap"""

    def __init__(self, message: str, report: Any):
        self.report = report
        super().__init__(message)


class SingularTangentError(FemError):
    """Newton tangent could not be factorized"""

    def __init__(self, iteration: int, cause: SingularMatrixError):
        self.iteration = iteration
        self.pivot = cause.pivot
        super().__init__(f"Singular Newton tangent at iteration {iteration}: {cause}")


class EigenSolveError(FemError):
    """Inverse power iteration did not converge"""


class ConvergenceStudyError(FemError):
    """A mesh level failed; the rows computed so far are attached"""

    def __init__(self, message: str, partial: Any):
        self.partial = partial
        super().__init__(message)


class ConfigError(FemError, ValueError):
    """Invalid run configuration"""


class NewtonDivergenceError(FemError):
    """Newton stopped without meeting the correction tolerance"""

    def __init__(self, message: str, report: Any):
        self.report = report
        super().__init__(message)
