"""Tests for the mortar projection and the constrained system."""

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from mortar_schwarz.assembly import (
    assemble_broken_system,
    assemble_load,
    local_stiffness,
)
from mortar_schwarz.coefficients import CoefficientField
from mortar_schwarz.geometry import (
    Box,
    CoarsePartition,
    SubdomainMesh,
    assign_sides,
    build_meshes,
    build_partition,
    build_subdomain_mesh,
)
from mortar_schwarz.mortar import (
    CORNER,
    INTERIOR,
    MORTAR,
    ConstrainedSystem,
    MortarCoupling,
    assemble_coupling,
    assemble_couplings,
    build_constrained_system,
    build_dofmap,
    build_test_space,
    hat_values,
    mass_between,
)
from mortar_schwarz.utils import ConfigurationError, MeshError
from tests.helpers import assert_positive_definite, assert_symmetric, random_vectors


@pytest.fixture
def coupling_2x1() -> MortarCoupling:
    """Vertical interface with 3 mortar and 5 nonmortar cells."""
    partition = build_partition(2, 1)
    meshes = build_meshes(partition, [3, 5])
    return assemble_coupling(partition.interfaces[0], meshes[0], meshes[1])


@pytest.fixture
def system_3x3(
    partition_3x3: CoarsePartition, meshes_3x3: list[SubdomainMesh]
) -> ConstrainedSystem:
    field = CoefficientField.from_function(meshes_3x3, lambda x, y: 1.0 + 10.0 * x * y)
    broken = assemble_broken_system(meshes_3x3, field)
    assignment = assign_sides(partition_3x3, meshes_3x3, "coarse")
    return build_constrained_system(partition_3x3, meshes_3x3, assignment, broken)


def test_test_space_shape():
    """Test that end hats are absorbed into the first and last test functions."""
    space = build_test_space(np.linspace(0.0, 1.0, 5))
    psi = space.coefficients

    assert space.n == 3
    assert psi.shape == (3, 5)
    assert np.array_equal(psi.sum(axis=0), np.ones(5))
    assert psi[0, 0] == 1.0 and psi[-1, -1] == 1.0


def test_test_space_needs_interior_node():
    """Test that a single-element nonmortar side is rejected."""
    with pytest.raises(ConfigurationError):
        build_test_space(np.array([0.0, 1.0]))


def test_hat_values_partition_of_unity():
    """Test that hats sum to one at arbitrary points."""
    breaks = np.array([0.0, 0.2, 0.5, 1.0])
    values = hat_values(breaks, np.linspace(0.0, 1.0, 17))

    assert np.allclose(values.sum(axis=1), 1.0)
    assert np.all(values >= 0.0)


def test_mass_between_matching_grid():
    """Test the standard P1 mass matrix on a uniform grid."""
    grid = np.array([0.0, 0.5, 1.0])
    expected = np.array(
        [[1 / 6, 1 / 12, 0.0], [1 / 12, 1 / 3, 1 / 12], [0.0, 1 / 12, 1 / 6]]
    )

    assert np.allclose(mass_between(grid, grid), expected)


def test_mass_between_nonmatching_grids():
    """Test total mass and transposition for nonmatching grids."""
    a = np.linspace(0.0, 1.0, 4)
    b = np.linspace(0.0, 1.0, 6)
    M = mass_between(a, b)

    assert M.shape == (4, 6)
    assert M.sum() == pytest.approx(1.0)
    assert np.allclose(M, mass_between(b, a).T)
    # row sums are the integrals of the hats of the first grid
    assert np.allclose(M.sum(axis=1), mass_between(a, a).sum(axis=1))


def test_coupling_shapes(coupling_2x1: MortarCoupling):
    """Test the dimensions of M, S and C."""
    assert coupling_2x1.n_s == 4
    assert coupling_2x1.n_m == 2
    assert coupling_2x1.M.shape == (4, 4)
    assert coupling_2x1.S.shape == (4, 4)
    assert coupling_2x1.C.shape == (4, 2)
    assert coupling_2x1.mortar == 0 and coupling_2x1.nonmortar == 1


def test_coupling_reproduces_constants(coupling_2x1: MortarCoupling):
    """Test that a constant trace is copied to the nonmortar side."""
    nu_s = coupling_2x1.slave_values(np.ones(4), np.ones(2))

    assert np.allclose(nu_s, 1.0, atol=1e-13)


def test_coupling_reproduces_linear_traces(coupling_2x1: MortarCoupling):
    """Test that linear traces are reproduced at the nonmortar nodes."""
    m = coupling_2x1.mortar_coords
    s = coupling_2x1.nonmortar_coords
    nu_s = coupling_2x1.slave_values(2.0 * m - 1.0, 2.0 * s[[0, -1]] - 1.0)

    assert np.allclose(nu_s, 2.0 * s[1:-1] - 1.0, atol=1e-13)
    residual = coupling_2x1.residual(2.0 * m - 1.0, nu_s, 2.0 * s[[0, -1]] - 1.0)
    assert np.max(np.abs(residual)) < 1e-14


def test_matching_coupling_is_identity():
    """Test that matching traces make every slave equal its mortar node."""
    partition = build_partition(2, 1)
    meshes = build_meshes(partition, [4, 4])
    coupling = assemble_coupling(partition.interfaces[0], meshes[0], meshes[1])
    nu_m = np.array([0.0, 0.3, -1.2, 2.5, 0.0])

    assert np.allclose(coupling.slave_values(nu_m, nu_m[[0, -1]]), nu_m[1:-1])


def test_coupling_requires_adjacent_meshes():
    """Test that a mesh off the interface is rejected."""
    partition = build_partition(3, 3)
    meshes = build_meshes(partition, [3] * 9)
    with pytest.raises(MeshError):
        assemble_coupling(partition.interfaces[0], meshes[0], meshes[4])


def test_dofmap_counts(system_3x3: ConstrainedSystem, meshes_3x3: list[SubdomainMesh]):
    """Test corner, mortar and interior counts for the 3/4 checkerboard."""
    dofmap = system_3x3.dofmap
    classes = dofmap.classes()

    assert dofmap.n_corner == 4
    assert dofmap.n_mortar == 12 * 2
    assert dofmap.n_interior == 5 * 4 + 4 * 9
    assert np.count_nonzero(classes == CORNER) == 4
    assert np.count_nonzero(classes == MORTAR) == 24
    assert np.count_nonzero(classes == INTERIOR) == 56
    for mesh in meshes_3x3:
        sl = dofmap.interior_slice(mesh.subdomain)
        assert sl.stop - sl.start == mesh.n_interior


def test_dofmap_rejects_missing_couplings(
    partition_3x3: CoarsePartition, meshes_3x3: list[SubdomainMesh]
):
    """Test that every interface needs a coupling."""
    assignment = assign_sides(partition_3x3, meshes_3x3)
    couplings = assemble_couplings(partition_3x3, meshes_3x3, assignment)
    broken = assemble_broken_system(meshes_3x3, CoefficientField.constant(meshes_3x3))

    with pytest.raises(MeshError):
        build_dofmap(partition_3x3, meshes_3x3, couplings[:-1], broken.local_index)


def test_constrained_matrix_is_spd(system_3x3: ConstrainedSystem):
    """Test symmetry and definiteness of T^T A T."""
    A = system_3x3.A.toarray()

    assert A.shape == (system_3x3.dofmap.n_free, system_3x3.dofmap.n_free)
    assert_symmetric(A)
    assert_positive_definite(A)


def test_mortar_condition_holds_for_random_vectors(system_3x3: ConstrainedSystem):
    """Test that every prolonged free vector satisfies the mortar condition."""
    dofmap = system_3x3.dofmap
    vectors = random_vectors(dofmap.n_free, 20, seed=1)

    for k in range(vectors.shape[1]):
        u = vectors[:, k]
        scale = max(np.max(np.abs(v)) for v in dofmap.nodal_values(u))
        for coupling, residual in zip(dofmap.couplings, dofmap.mortar_residuals(u)):
            bound = 1e-12 * scale * coupling.interface.length
            assert np.max(np.abs(residual)) <= bound


def test_constants_reach_slaves_between_cross_points(system_3x3: ConstrainedSystem):
    """Test constant reproduction on interfaces whose ends are both cross points."""
    dofmap = system_3x3.dofmap
    nodal = dofmap.nodal_values(np.ones(dofmap.n_free))
    inner = 0
    for coupling in dofmap.couplings:
        ends = dofmap.node_dofs[coupling.nonmortar][coupling.nonmortar_nodes[[0, -1]]]
        if np.all(ends >= 0):
            inner += 1
            _, nu_s, _ = dofmap.trace_values(coupling, nodal)
            assert np.allclose(nu_s, 1.0, atol=1e-12)
    assert inner == 4


def test_nodal_values_vanish_on_outer_boundary(
    system_3x3: ConstrainedSystem, meshes_3x3: list[SubdomainMesh]
):
    """Test that prolonged vectors are zero on Dirichlet nodes."""
    nodal = system_3x3.dofmap.nodal_values(np.ones(system_3x3.dofmap.n_free))

    for mesh, values in zip(meshes_3x3, nodal):
        assert np.all(values[mesh.dirichlet] == 0.0)
        assert np.all(values[mesh.interior] == 1.0)


def test_conforming_limit():
    """Test that matching grids reproduce the conforming solution on the merged mesh."""
    partition = build_partition(2, 1)
    meshes = build_meshes(partition, [4, 4])
    field = CoefficientField.constant(meshes)
    broken = assemble_broken_system(meshes, field)
    system = build_constrained_system(
        partition, meshes, assign_sides(partition, meshes), broken
    )
    nodal = system.dofmap.nodal_values(spla.spsolve(system.A.tocsc(), system.f))

    merged = build_subdomain_mesh(Box(0.0, 1.0, 0.0, 1.0), 8, ny_cells=4)
    free = np.flatnonzero(~merged.dirichlet)
    K = local_stiffness(merged, np.ones(merged.n_triangles)).tocsr()[free][:, free]
    reference = np.zeros(merged.n_nodes)
    reference[free] = spla.spsolve(K.tocsc(), assemble_load([merged]))

    for mesh, values in zip(meshes, nodal):
        cols = np.rint(mesh.nodes[:, 0] / 0.125).astype(int)
        rows = np.rint(mesh.nodes[:, 1] / 0.25).astype(int)
        assert np.max(np.abs(values - reference[rows * 9 + cols])) <= 1e-10
