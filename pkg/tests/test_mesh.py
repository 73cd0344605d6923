"""Tests for the structured mesh and element geometry"""

from collections import Counter

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from errors import DegenerateElementError, MeshError
from mesh import build_structured_mesh, element_geometry, mesh_from_arrays, triangle_geometry


def test_single_square():
    mesh = build_structured_mesh(1)
    assert mesh.num_nodes == 4
    assert mesh.num_triangles == 2
    assert mesh.boundary_nodes.size == 4
    assert mesh.interior_nodes.size == 0


def test_n2_counts_and_centre(mesh2):
    assert mesh2.num_nodes == 9
    assert mesh2.num_triangles == 8
    assert mesh2.boundary_nodes.size == 8
    assert mesh2.interior_nodes.tolist() == [4]
    assert mesh2.nodes[4].tolist() == [0.5, 0.5]


def test_n4_area_sum(mesh4):
    areas, _ = mesh4.geometry
    assert mesh4.num_nodes == 25
    assert mesh4.num_triangles == 32
    assert areas.sum() == pytest.approx(1.0, abs=1e-14)


@given(st.integers(min_value=1, max_value=40))
@settings(max_examples=25, deadline=None)
def test_counts_and_areas(n):
    mesh = build_structured_mesh(n)
    areas, _ = mesh.geometry
    assert mesh.num_nodes == (n + 1) ** 2
    assert mesh.num_triangles == 2 * n * n
    assert mesh.boundary_nodes.size == 4 * n
    assert np.allclose(areas, 0.5 / n ** 2, rtol=1e-12)
    assert abs(areas.sum() - 1.0) <= 1e-12


def test_lexicographic_numbering(mesh4):
    for row in range(5):
        for col in range(5):
            assert mesh4.nodes[row * 5 + col].tolist() == [col / 4, row / 4]


def test_boundary_mask_matches_coordinates(mesh8):
    x, y = mesh8.nodes[:, 0], mesh8.nodes[:, 1]
    expected = (x == 0.0) | (x == 1.0) | (y == 0.0) | (y == 1.0)
    assert np.array_equal(mesh8.boundary_mask, expected)


def test_edges_shared_by_two_triangles(mesh4):
    edges = Counter()
    for tri in mesh4.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            edges[tuple(sorted((int(a), int(b))))] += 1

    nodes = mesh4.nodes
    for (a, b), count in edges.items():
        pa, pb = nodes[a], nodes[b]
        same_side = any(
            pa[d] == pb[d] and pa[d] in (0.0, 1.0) for d in range(2)
        )
        assert count == (1 if same_side else 2)


def test_deterministic():
    first, second = build_structured_mesh(6), build_structured_mesh(6)
    assert np.array_equal(first.nodes, second.nodes)
    assert np.array_equal(first.triangles, second.triangles)


def test_arrays_are_read_only(mesh2):
    with pytest.raises(ValueError):
        mesh2.nodes[0, 0] = 3.0


@pytest.mark.parametrize("n", [0, -3])
def test_rejects_non_positive(n):
    with pytest.raises(MeshError):
        build_structured_mesh(n)


def test_rejects_non_integer():
    with pytest.raises(MeshError):
        build_structured_mesh(2.5)


def test_memory_guard():
    with pytest.raises(MeshError, match="maximum"):
        build_structured_mesh(65, max_subdivisions=64)


def test_right_triangle_gradients():
    h = 0.25
    areas, grads = triangle_geometry(np.array([[[0.0, 0.0], [h, 0.0], [0.0, h]]]))
    assert areas[0] == pytest.approx(h * h / 2)
    assert np.allclose(grads[0], [[-1 / h, -1 / h], [1 / h, 0.0], [0.0, 1 / h]])


def test_n2_element_areas(mesh2):
    for t in range(mesh2.num_triangles):
        area, grads = element_geometry(mesh2, t)
        assert area == 0.125
        assert np.allclose(grads.sum(axis=0), 0.0, atol=1e-14)


@given(
    st.lists(st.floats(min_value=-10, max_value=10, allow_nan=False), min_size=6, max_size=6)
)
def test_gradients_sum_to_zero(coords):
    vertices = np.array(coords).reshape(1, 3, 2)
    x, y = vertices[0, :, 0], vertices[0, :, 1]
    twice_area = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
    if twice_area <= 0.0:
        with pytest.raises(DegenerateElementError):
            triangle_geometry(vertices)
        return
    assume(twice_area > 1e-3)
    _, grads = triangle_geometry(vertices)
    assert np.allclose(grads[0].sum(axis=0), 0.0, atol=1e-8 * np.abs(grads).max())


def test_degenerate_triangle():
    with pytest.raises(DegenerateElementError) as info:
        mesh_from_arrays([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]]).geometry
    assert info.value.triangle == 0


def test_element_index_out_of_range(mesh2):
    with pytest.raises(MeshError):
        element_geometry(mesh2, 8)


def test_mesh_from_arrays_copies_input():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mesh = mesh_from_arrays(nodes, [[0, 1, 2]])
    nodes[0, 0] = 5.0
    assert mesh.nodes[0, 0] == 0.0
    assert nodes.flags.writeable
