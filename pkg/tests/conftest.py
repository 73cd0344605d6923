"""Shared fixtures; puts the solver scripts and shared modules on sys.path"""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "shared"))
sys.path.insert(0, str(ROOT / "skills" / "porous-convection-fem" / "scripts"))

from assembly import CoupledState  # noqa: E402
from mesh import build_structured_mesh  # noqa: E402


@pytest.fixture(scope="session")
def mesh2():
    return build_structured_mesh(2)


@pytest.fixture(scope="session")
def mesh4():
    return build_structured_mesh(4)


@pytest.fixture(scope="session")
def mesh8():
    return build_structured_mesh(8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_state(mesh, rng, scale: float = 1.0) -> CoupledState:
    """Random pair with zero boundary values"""
    m = mesh.interior_nodes.size
    return CoupledState.from_interior_vector(mesh, scale * rng.standard_normal(2 * m))


@pytest.fixture(autouse=True)
def _isolate_env(monkeypatch):
    # FEM_* values from a developer's shell must not leak into tests
    for key in list(os.environ):
        if key.startswith("FEM_"):
            monkeypatch.delenv(key)
