"""Tests for the coarse partition and the subdomain meshes."""

import numpy as np
import pytest

from mortar_schwarz.geometry import (
    Box,
    CoarsePartition,
    SubdomainMesh,
    assign_sides,
    build_meshes,
    build_partition,
    build_subdomain_mesh,
    resolution_layout,
)
from mortar_schwarz.utils import ConfigurationError, MeshError


def test_partition_counts():
    """Test subdomain, interface and cross point counts of a 3x2 partition."""
    partition = build_partition(3, 2)

    assert partition.n_subdomains == 6
    assert len(partition.interfaces) == 2 * 2 + 3 * 1
    assert len(partition.cross_points) == 2
    assert partition.H == pytest.approx(0.5)


def test_partition_interfaces_are_ordered():
    """Test that vertical interfaces come first and pair lower with higher ids."""
    partition = build_partition(3, 3)
    orientations = [iface.orientation for iface in partition.interfaces]

    assert orientations == ["vertical"] * 6 + ["horizontal"] * 6
    for index, iface in enumerate(partition.interfaces):
        assert iface.index == index
        assert iface.first < iface.second
        assert iface.length == pytest.approx(1 / 3)


def test_interface_edges(partition_3x3: CoarsePartition):
    """Test that each side of an interface names the matching mesh edge."""
    vertical = partition_3x3.interfaces[0]
    horizontal = partition_3x3.interfaces[6]

    assert vertical.edge_of(vertical.first) == "right"
    assert vertical.edge_of(vertical.second) == "left"
    assert horizontal.edge_of(horizontal.first) == "top"
    assert horizontal.edge_of(horizontal.second) == "bottom"
    with pytest.raises(MeshError):
        vertical.edge_of(8)


def test_interfaces_of_center_subdomain(partition_3x3: CoarsePartition):
    """Test that the center subdomain touches four interfaces."""
    assert len(partition_3x3.interfaces_of(4)) == 4
    assert len(partition_3x3.interfaces_of(0)) == 2


def test_cross_point_index(partition_3x3: CoarsePartition):
    """Test cross point lookup for interior and boundary vertices."""
    assert partition_3x3.cross_point_index(1, 1) == 0
    assert partition_3x3.cross_point_index(2, 2) == 3
    assert partition_3x3.cross_point_index(0, 1) is None
    assert partition_3x3.cross_points[3] == pytest.approx((2 / 3, 2 / 3))


def test_partition_rejects_zero_subdomains():
    """Test that empty partitions are rejected."""
    with pytest.raises(ConfigurationError):
        build_partition(0, 2)


def test_mesh_sizes():
    """Test node, triangle and interior counts of a 4x4 mesh."""
    mesh = build_subdomain_mesh(Box(0.0, 0.5, 0.0, 0.5), 4)

    assert mesh.n_nodes == 25
    assert mesh.n_triangles == 32
    assert mesh.n_interior == 9
    assert mesh.h == pytest.approx(0.125)
    assert mesh.areas.sum() == pytest.approx(0.25)


def test_mesh_node_classes():
    """Test that nodes split into interior, edge and corner classes."""
    mesh = build_subdomain_mesh(Box(0.0, 0.5, 0.0, 0.5), 4)
    counts = np.bincount(mesh.node_classes(), minlength=3)

    assert counts.tolist() == [9, 12, 4]


def test_mesh_triangles_are_counterclockwise():
    """Test that every triangle has positive orientation."""
    mesh = build_subdomain_mesh(Box(0.2, 0.4, 0.1, 0.5), 3)
    p = mesh.nodes[mesh.triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]

    assert np.all(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] > 0)


def test_mesh_boundary_layer():
    """Test that the layer holds the triangles touching the subdomain boundary."""
    mesh = build_subdomain_mesh(Box(0.0, 1.0, 0.0, 1.0), 4)

    assert mesh.boundary_layer.sum() == 32 - 8


def test_mesh_dirichlet_nodes():
    """Test that only nodes on the outer boundary are Dirichlet."""
    corner = build_subdomain_mesh(Box(0.0, 0.5, 0.0, 0.5), 4)
    inner = build_subdomain_mesh(Box(1 / 3, 2 / 3, 1 / 3, 2 / 3), 4)

    assert corner.dirichlet.sum() == 9
    assert inner.dirichlet.sum() == 0


def test_mesh_edges_are_sorted():
    """Test that edge nodes are listed by increasing coordinate."""
    mesh = build_subdomain_mesh(Box(0.0, 0.5, 0.5, 1.0), 5)

    for edge in ("bottom", "right", "top", "left"):
        coords = mesh.edge_coordinates(edge)
        assert len(coords) == 6
        assert np.all(np.diff(coords) > 0)
    assert mesh.nodes[mesh.corners[(1, 1)]] == pytest.approx([0.5, 1.0])


def test_mesh_rejects_single_cell():
    """Test that meshes without interior nodes are rejected."""
    with pytest.raises(ConfigurationError):
        build_subdomain_mesh(Box(0.0, 1.0, 0.0, 1.0), 1)


def test_checkerboard_layout(partition_3x3: CoarsePartition):
    """Test that the two resolutions alternate like a checkerboard."""
    assert resolution_layout(partition_3x3, 3, 4) == [3, 4, 3, 4, 3, 4, 3, 4, 3]
    assert resolution_layout(partition_3x3, 3, 4, "uniform") == [3] * 9
    with pytest.raises(ConfigurationError):
        resolution_layout(partition_3x3, 3, 4, "random")


def test_build_meshes_length_check(partition_3x3: CoarsePartition):
    """Test that one resolution is required per subdomain."""
    with pytest.raises(ConfigurationError):
        build_meshes(partition_3x3, [3, 4])


def test_neighbouring_traces_share_endpoints(meshes_3x3: list[SubdomainMesh]):
    """Test that the two traces of an interface span the same segment."""
    partition = build_partition(3, 3)
    for iface in partition.interfaces:
        a = meshes_3x3[iface.first].edge_coordinates(iface.edge_of(iface.first))
        b = meshes_3x3[iface.second].edge_coordinates(iface.edge_of(iface.second))
        assert a[0] == pytest.approx(b[0])
        assert a[-1] == pytest.approx(b[-1])
        assert len(a) != len(b)


def test_assign_sides_policies(
    partition_3x3: CoarsePartition, meshes_3x3: list[SubdomainMesh]
):
    """Test that the coarse policy picks the coarser trace and fine the finer."""
    coarse = assign_sides(partition_3x3, meshes_3x3, "coarse")
    fine = assign_sides(partition_3x3, meshes_3x3, "fine")

    for iface in partition_3x3.interfaces:
        m = coarse.mortar_of(iface)
        assert meshes_3x3[m].n_cells == 3
        assert meshes_3x3[fine.mortar_of(iface)].n_cells == 4
        assert coarse.nonmortar_of(iface) == iface.other(m)


def test_assign_sides_tie_goes_to_lower_id():
    """Test that matching traces make the lower subdomain the mortar."""
    partition = build_partition(2, 1)
    meshes = build_meshes(partition, [4, 4])
    assignment = assign_sides(partition, meshes, "fine")

    assert assignment.mortar == (0,)
    assert assignment.nonmortar == (1,)


def test_assign_sides_explicit_mapping():
    """Test explicit assignments and their validation."""
    partition = build_partition(2, 1)
    meshes = build_meshes(partition, [3, 4])

    assert assign_sides(partition, meshes, {0: 1}).mortar == (1,)
    with pytest.raises(ConfigurationError):
        assign_sides(partition, meshes, {})
    with pytest.raises(ConfigurationError):
        assign_sides(partition, meshes, {0: 5})
    with pytest.raises(ConfigurationError):
        assign_sides(partition, meshes, "finest")
