"""Tests for stiffness and load assembly."""

import numpy as np
import pytest

from mortar_schwarz.assembly import (
    assemble_broken_system,
    assemble_load,
    assemble_stiffness,
    broken_numbering,
    element_stiffness,
    extract_blocks,
    interior_stiffness,
    local_stiffness,
    sine_source,
    triangle_weights,
)
from mortar_schwarz.coefficients import CoefficientField
from mortar_schwarz.experiments import Problem
from mortar_schwarz.geometry import Box, SubdomainMesh, build_subdomain_mesh
from mortar_schwarz.utils import ConfigurationError, MeshError
from tests.helpers import assert_positive_definite, assert_symmetric


@pytest.fixture
def channel_field(meshes_3x3: list[SubdomainMesh]) -> CoefficientField:
    """Coefficient 1000 on a vertical strip, 1 elsewhere."""
    return CoefficientField.from_function(
        meshes_3x3, lambda x, y: np.where(np.abs(x - 0.5) < 0.05, 1000.0, 1.0)
    )


def linear_source(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return 1.0 + 2.0 * x - y


def test_reference_element_stiffness():
    """Test the stiffness of the unit right triangle."""
    points = np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]])
    K = element_stiffness(points, np.array([2.0]))[0]
    expected = 2.0 * np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])

    assert np.allclose(K, expected)


def test_clockwise_triangle_rejected():
    """Test that negatively oriented triangles are reported."""
    points = np.array([[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]])
    with pytest.raises(MeshError):
        element_stiffness(points, np.ones(1))


def test_local_stiffness_energy_of_linear_function():
    """Test that a(x, x) equals the subdomain area times the coefficient."""
    mesh = build_subdomain_mesh(Box(0.25, 0.75, 0.0, 0.5), 5)
    K = local_stiffness(mesh, np.full(mesh.n_triangles, 3.0))
    u = mesh.nodes[:, 0]

    assert u @ (K @ u) == pytest.approx(3.0 * 0.25)
    assert np.allclose(K @ np.ones(mesh.n_nodes), 0.0)
    assert_symmetric(K.toarray())


def test_triangle_weights(
    meshes_3x3: list[SubdomainMesh], channel_field: CoefficientField
):
    """Test the true, type I and type II weights."""
    mesh = meshes_3x3[4]
    alpha = triangle_weights(channel_field, mesh, "alpha")
    type_1 = triangle_weights(channel_field, mesh, "I")
    type_2 = triangle_weights(channel_field, mesh, "II")

    assert alpha.max() == 1000.0
    assert np.all(type_1 == alpha.min())
    assert np.all(type_2[mesh.boundary_layer] == alpha[mesh.boundary_layer].min())
    assert np.array_equal(type_2[~mesh.boundary_layer], alpha[~mesh.boundary_layer])
    assert np.all(type_1 <= type_2) and np.all(type_2 <= alpha)
    with pytest.raises(ConfigurationError):
        triangle_weights(channel_field, mesh, "III")


def test_interior_stiffness_types_agree_for_constant_alpha(
    meshes_3x3: list[SubdomainMesh],
):
    """Test that all weights coincide when alpha is constant."""
    field = CoefficientField.constant(meshes_3x3, 7.0)
    mesh = meshes_3x3[2]
    A = interior_stiffness(mesh, field, "alpha")

    assert A.shape == (mesh.n_interior, mesh.n_interior)
    assert np.array_equal(interior_stiffness(mesh, field, "I"), A)
    assert np.array_equal(interior_stiffness(mesh, field, "II"), A)
    assert_positive_definite(A)


def test_broken_numbering(meshes_3x3: list[SubdomainMesh]):
    """Test that non-Dirichlet nodes are numbered subdomain by subdomain."""
    local_index, offsets = broken_numbering(meshes_3x3)

    assert offsets[0] == 0
    for mesh, index, start, stop in zip(meshes_3x3, local_index, offsets, offsets[1:]):
        free = index[~mesh.dirichlet]
        assert np.array_equal(free, np.arange(start, stop))
        assert np.all(index[mesh.dirichlet] == -1)


def test_assemble_stiffness_is_block_diagonal(
    meshes_3x3: list[SubdomainMesh], channel_field: CoefficientField
):
    """Test size, symmetry and block structure of the broken stiffness."""
    A = assemble_stiffness(meshes_3x3, channel_field)
    n = sum(int((~m.dirichlet).sum()) for m in meshes_3x3)

    assert A.shape == (n, n)
    assert_symmetric(A.toarray())
    _, offsets = broken_numbering(meshes_3x3)
    assert A[offsets[0] : offsets[1], offsets[1] : offsets[2]].nnz == 0


def test_load_rules_agree_on_linear_source(meshes_3x3: list[SubdomainMesh]):
    """Test that both rules are exact for linear right-hand sides."""
    low = assemble_load(meshes_3x3, linear_source, degree=2)
    high = assemble_load(meshes_3x3, linear_source, degree=5)

    assert np.allclose(low, high, rtol=1e-13, atol=1e-15)


def test_load_of_constant_source_sums_to_covered_area():
    """Test that the load of f = 1 sums to the area without boundary nodes."""
    mesh = build_subdomain_mesh(Box(1 / 3, 2 / 3, 1 / 3, 2 / 3), 4)
    b = assemble_load([mesh], lambda x, y: np.ones_like(x))

    assert b.sum() == pytest.approx(1 / 9)


def test_load_rules_close_on_smooth_source(meshes_3x3: list[SubdomainMesh]):
    """Test that the two rules agree closely for the sine source."""
    low = assemble_load(meshes_3x3, sine_source, degree=2)
    high = assemble_load(meshes_3x3, sine_source, degree=5)

    assert np.linalg.norm(low - high) <= 5e-2 * np.linalg.norm(high)
    with pytest.raises(ConfigurationError):
        assemble_load(meshes_3x3, sine_source, degree=3)


def test_assemble_broken_system(
    meshes_3x3: list[SubdomainMesh], channel_field: CoefficientField
):
    """Test that matrix, load and numbering agree in size."""
    broken = assemble_broken_system(meshes_3x3, channel_field)

    assert broken.A.shape == (broken.size, broken.size)
    assert broken.f.shape == (broken.size,)
    assert len(broken.interior(meshes_3x3[4])) == meshes_3x3[4].n_interior


def test_extract_blocks(problem_3x3: Problem):
    """Test the shapes and contents of the three blocks."""
    A = problem_3x3.system.A
    dofmap = problem_3x3.system.dofmap
    blocks = extract_blocks(A, dofmap)
    n_int = dofmap.n_interior

    assert blocks.a11.shape == A.shape
    assert blocks.a12.shape == (A.shape[0], n_int)
    assert blocks.a22.shape == (n_int, n_int)
    assert np.allclose(
        blocks.a22.toarray(), A.toarray()[dofmap.n_coarse :, dofmap.n_coarse :]
    )
    with pytest.raises(MeshError):
        extract_blocks(A[:-1, :-1], dofmap)
