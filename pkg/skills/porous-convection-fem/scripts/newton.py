#!/usr/bin/env python3
"""
Newton iteration for the coupled system
Repeats: solve DF(u_i) w_i = F(u_i), set u_{i+1} = u_i − w_i, and stops as
soon as ||w_i|| < epsilon. Corrections live on interior unknowns only, so
every iterate keeps exactly zero boundary values.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from assembly import CoupledState, CoupledSystem, ProblemParams
from errors import MeshError, SingularMatrixError, SingularTangentError
from linalg import DIRECT, solve_linear
from mesh import Mesh

NORMS = {
    "l2": lambda v: float(np.linalg.norm(v)),
    "max": lambda v: float(np.max(np.abs(v), initial=0.0)),
}

LogFn = Callable[[str], None]


@dataclass(frozen=True)
class NewtonConfig:
    """Stopping rule for the Newton loop"""
    epsilon: float = 1e-8
    max_iterations: int = 25
    norm: str = "l2"
    # stop when ||F|| grows this many iterations in a row
    divergence_window: int = 3

    def __post_init__(self):
        if not (self.epsilon > 0.0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be a positive number, got {self.epsilon}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.norm not in NORMS:
            raise ValueError(f"Unknown norm {self.norm!r}; choose from {sorted(NORMS)}")
        if self.divergence_window < 1:
            raise ValueError(f"divergence_window must be >= 1, got {self.divergence_window}")

    def measure(self, vector: np.ndarray) -> float:
        return NORMS[self.norm](vector)


@dataclass
class NewtonReport:
    """Iteration history of one Newton solve"""
    iterations: int = 0
    correction_norms: list[float] = field(default_factory=list)
    residual_norms: list[float] = field(default_factory=list)
    converged: bool = False
    divergence_reason: Optional[str] = None

    def record(self, wnorm: float, fnorm: float) -> None:
        self.correction_norms.append(wnorm)
        self.residual_norms.append(fnorm)
        self.iterations = len(self.correction_norms)

    def log_lines(self) -> list[str]:
        return [
            format_iteration(k, w, f)
            for k, (w, f) in enumerate(zip(self.correction_norms, self.residual_norms))
        ]


def format_iteration(k: int, wnorm: float, fnorm: float) -> str:
    """One machine-parsable log record"""
    return f"iter={k} wnorm={wnorm:.6e} fnorm={fnorm:.6e}"


def _growing(history: list[float], window: int) -> bool:
    if len(history) <= window:
        return False
    recent = history[-(window + 1):]
    return all(b > a for a, b in zip(recent, recent[1:]))


def newton_solve(
    initial: CoupledState,
    params: ProblemParams,
    mesh: Mesh,
    config: Optional[NewtonConfig] = None,
    log: Optional[LogFn] = None,
    system: Optional[CoupledSystem] = None,
) -> tuple[CoupledState, NewtonReport]:
    """Plain Newton from `initial`; returns the last iterate and its history"""
    config = config or NewtonConfig()
    system = system or CoupledSystem(mesh, params)
    if initial.mesh is not mesh or system.mesh is not mesh:
        raise MeshError("Initial state, system and mesh must share one mesh")

    state = initial
    u = initial.interior_vector()
    report = NewtonReport()

    for k in range(config.max_iterations):
        residual = system.residual(state)
        fnorm = config.measure(residual)
        if not math.isfinite(fnorm):
            report.divergence_reason = f"non-finite residual at iteration {k}"
            break

        try:
            w, _ = solve_linear(system.tangent(state), residual, method=DIRECT)
        except SingularMatrixError as exc:
            raise SingularTangentError(k, exc) from exc

        wnorm = config.measure(w)
        report.record(wnorm, fnorm)
        if log is not None:
            log(format_iteration(k, wnorm, fnorm))

        if not math.isfinite(wnorm):
            report.divergence_reason = f"non-finite correction at iteration {k}"
            break

        u = u - w
        state = CoupledState.from_interior_vector(mesh, u)

        if wnorm < config.epsilon:
            report.converged = True
            break

        if _growing(report.residual_norms, config.divergence_window):
            report.divergence_reason = (
                f"residual norm grew for {config.divergence_window} consecutive iterations"
            )
            break
    else:
        report.divergence_reason = f"no convergence within {config.max_iterations} iterations"

    return state, report
