"""Mortar projections, slave elimination and the constrained system."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from mortar_schwarz.assembly import BrokenSystem
from mortar_schwarz.geometry import (
    CoarsePartition,
    Interface,
    InterfaceSideAssignment,
    SubdomainMesh,
)
from mortar_schwarz.utils import ConfigurationError, FactorizationError, MeshError

logger = logging.getLogger(__name__)

_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)

# Free-dof classes
CORNER, MORTAR, INTERIOR, SLAVE = 1, 2, 3, 4


@dataclass(frozen=True)
class MortarTestSpace:
    """Mortar test functions as combinations of the nonmortar hats s_0..s_{n_s+1}.

    Interior hats are kept; the first and last test functions absorb the
    endpoint hats, so they are constant on the two end elements.
    """

    coefficients: np.ndarray

    @property
    def n(self) -> int:
        return self.coefficients.shape[0]


def build_test_space(nonmortar_coords: np.ndarray) -> MortarTestSpace:
    """
    Test space of dimension n_s on a nonmortar side.

    Args:
        nonmortar_coords: Node coordinates s_0..s_{n_s+1} along the side

    Returns:
        The test space
    """
    n_s = len(nonmortar_coords) - 2
    if n_s < 1:
        raise ConfigurationError(
            "Nonmortar side has no interior nodes; refine the nonmortar subdomain"
        )
    psi = np.zeros((n_s, n_s + 2))
    psi[np.arange(n_s), np.arange(1, n_s + 1)] = 1.0
    psi[0, 0] = 1.0
    psi[-1, -1] = 1.0
    return MortarTestSpace(psi)


def hat_values(breaks: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Values of the 1D P1 hats on ``breaks`` at ``points``, shape (points, hats)."""
    idx = np.clip(np.searchsorted(breaks, points, side="right") - 1, 0, len(breaks) - 2)
    t = (points - breaks[idx]) / (breaks[idx + 1] - breaks[idx])
    values = np.zeros((len(points), len(breaks)))
    rows = np.arange(len(points))
    values[rows, idx] = 1.0 - t
    values[rows, idx + 1] = t
    return values


def mass_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Exact L2 products of the hats on two 1D grids of the same segment.

    The products are piecewise quadratic on the merged grid, so two Gauss
    points per merged subinterval integrate them exactly.

    Args:
        a: Breakpoints of the first grid (increasing)
        b: Breakpoints of the second grid (increasing, same endpoints)

    Returns:
        Matrix of shape (len(a), len(b))
    """
    merged = np.sort(np.concatenate([a, b]))
    tol = 1e-13 * (merged[-1] - merged[0])
    merged = merged[np.diff(merged, prepend=-np.inf) > tol]
    mid = 0.5 * (merged[1:] + merged[:-1])
    half = 0.5 * (merged[1:] - merged[:-1])
    points = (mid[:, None] + half[:, None] * _GAUSS[None, :]).ravel()
    weights = np.repeat(half, 2)
    return hat_values(a, points).T @ (weights[:, None] * hat_values(b, points))


@dataclass(frozen=True, eq=False)
class MortarCoupling:
    """Matrices M, S, C of one interface and the slave elimination.

    ``nu_s = S^{-1} (M nu_m - C nu_c)`` where ``nu_m`` holds the mortar trace
    at m_0..m_{n_m+1} and ``nu_c`` the nonmortar endpoint values.
    """

    interface: Interface
    mortar: int
    nonmortar: int
    mortar_nodes: np.ndarray
    nonmortar_nodes: np.ndarray
    mortar_coords: np.ndarray
    nonmortar_coords: np.ndarray
    test_space: MortarTestSpace
    M: np.ndarray
    S: np.ndarray
    C: np.ndarray
    elim_mortar: np.ndarray
    elim_corner: np.ndarray

    @property
    def n_s(self) -> int:
        return self.S.shape[0]

    @property
    def n_m(self) -> int:
        return self.M.shape[1] - 2

    def slave_values(self, nu_m: np.ndarray, nu_c: np.ndarray) -> np.ndarray:
        return self.elim_mortar @ nu_m - self.elim_corner @ nu_c

    def residual(
        self, nu_m: np.ndarray, nu_s: np.ndarray, nu_c: np.ndarray
    ) -> np.ndarray:
        """Mortar condition residual, one entry per test function."""
        return self.M @ nu_m - self.S @ nu_s - self.C @ nu_c


def assemble_coupling(
    interface: Interface, mortar_mesh: SubdomainMesh, nonmortar_mesh: SubdomainMesh
) -> MortarCoupling:
    """
    Build the mortar projection of one interface.

    Args:
        interface: The interface
        mortar_mesh: Mesh of the mortar subdomain
        nonmortar_mesh: Mesh of the nonmortar subdomain

    Returns:
        The coupling with its elimination matrices
    """
    m_edge = interface.edge_of(mortar_mesh.subdomain)
    s_edge = interface.edge_of(nonmortar_mesh.subdomain)
    m_coords = mortar_mesh.edge_coordinates(m_edge)
    s_coords = nonmortar_mesh.edge_coordinates(s_edge)
    length = interface.length
    if (
        abs(m_coords[0] - s_coords[0]) > 1e-12 * length
        or abs(m_coords[-1] - s_coords[-1]) > 1e-12 * length
    ):
        raise MeshError(f"Traces of interface {interface.index} do not match")

    test = build_test_space(s_coords)
    n_s = test.n
    psi = test.coefficients
    mass_ss = mass_between(s_coords, s_coords)
    mass_sm = mass_between(s_coords, m_coords)
    M = psi @ mass_sm
    S = psi @ mass_ss[:, 1 : n_s + 1]
    C = psi @ mass_ss[:, [0, n_s + 1]]

    lu, piv = la.lu_factor(S)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= np.finfo(float).eps * pivots.max() * n_s:
        raise FactorizationError(
            f"Singular nonmortar matrix on interface {interface.index}"
        )
    elim_mortar = la.lu_solve((lu, piv), M)
    elim_corner = la.lu_solve((lu, piv), C)

    return MortarCoupling(
        interface=interface,
        mortar=mortar_mesh.subdomain,
        nonmortar=nonmortar_mesh.subdomain,
        mortar_nodes=mortar_mesh.edges[m_edge],
        nonmortar_nodes=nonmortar_mesh.edges[s_edge],
        mortar_coords=m_coords,
        nonmortar_coords=s_coords,
        test_space=test,
        M=M,
        S=S,
        C=C,
        elim_mortar=elim_mortar,
        elim_corner=elim_corner,
    )


def assemble_couplings(
    partition: CoarsePartition,
    meshes: Sequence[SubdomainMesh],
    assignment: InterfaceSideAssignment,
) -> list[MortarCoupling]:
    """One coupling per interface, in interface order."""
    return [
        assemble_coupling(
            iface,
            meshes[assignment.mortar_of(iface)],
            meshes[assignment.nonmortar_of(iface)],
        )
        for iface in partition.interfaces
    ]


@dataclass(frozen=True, eq=False)
class FreeDofMap:
    """Free dofs ordered corners, mortars, interiors; slaves eliminated by T."""

    n_corner: int
    n_mortar: int
    n_interior: int
    node_dofs: tuple[np.ndarray, ...]
    node_kinds: tuple[np.ndarray, ...]
    interior_ranges: tuple[tuple[int, int], ...]
    local_index: tuple[np.ndarray, ...]
    T: sp.csr_matrix
    couplings: tuple[MortarCoupling, ...]

    @property
    def n_free(self) -> int:
        return self.n_corner + self.n_mortar + self.n_interior

    @property
    def n_coarse(self) -> int:
        return self.n_corner + self.n_mortar

    @property
    def interior_dofs(self) -> np.ndarray:
        return np.arange(self.n_coarse, self.n_free)

    def interior_slice(self, subdomain: int) -> slice:
        start, stop = self.interior_ranges[subdomain]
        return slice(start, stop)

    def classes(self) -> np.ndarray:
        """Class label (CORNER, MORTAR, INTERIOR) of every free dof."""
        return np.repeat(
            [CORNER, MORTAR, INTERIOR], [self.n_corner, self.n_mortar, self.n_interior]
        )

    def prolong(self, u: np.ndarray) -> np.ndarray:
        """Broken-space values of a free-dof vector."""
        return self.T @ u

    def nodal_values(self, u: np.ndarray) -> list[np.ndarray]:
        """Values at every node of every mesh (zero on the outer boundary)."""
        broken = self.prolong(u)
        result = []
        for index in self.local_index:
            values = np.zeros(len(index))
            mask = index >= 0
            values[mask] = broken[index[mask]]
            result.append(values)
        return result

    def trace_values(
        self, coupling: MortarCoupling, nodal: Sequence[np.ndarray]
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(nu_m, nu_s, nu_c) of an interface from nodal values."""
        mortar = nodal[coupling.mortar][coupling.mortar_nodes]
        side = nodal[coupling.nonmortar][coupling.nonmortar_nodes]
        return mortar, side[1:-1], side[[0, -1]]

    def mortar_residuals(self, u: np.ndarray) -> list[np.ndarray]:
        """Mortar-condition residuals of every interface for a free-dof vector."""
        nodal = self.nodal_values(u)
        return [c.residual(*self.trace_values(c, nodal)) for c in self.couplings]


@dataclass(frozen=True, eq=False)
class ConstrainedSystem:
    """A_free = T^T A T and f_free = T^T f with their dof map."""

    A: sp.csr_matrix
    f: np.ndarray
    dofmap: FreeDofMap


def build_dofmap(
    partition: CoarsePartition,
    meshes: Sequence[SubdomainMesh],
    couplings: Sequence[MortarCoupling],
    local_index: Sequence[np.ndarray],
) -> FreeDofMap:
    """
    Classify every broken node and build the prolongation T.

    Args:
        partition: The coarse partition
        meshes: One mesh per subdomain
        couplings: One coupling per interface
        local_index: Broken numbering per subdomain (-1 on the outer boundary)

    Returns:
        The free-dof map
    """
    if len(couplings) != len(partition.interfaces):
        raise MeshError(
            f"{len(couplings)} couplings for {len(partition.interfaces)} interfaces"
        )
    node_dofs = [np.full(m.n_nodes, -1, dtype=int) for m in meshes]
    node_kinds = [np.zeros(m.n_nodes, dtype=int) for m in meshes]

    def claim(
        sub: int, nodes: np.ndarray, kind: int, dofs: Optional[np.ndarray]
    ) -> None:
        if np.any(node_kinds[sub][nodes] != 0):
            raise MeshError(f"Node classified twice in subdomain {sub}")
        node_kinds[sub][nodes] = kind
        if dofs is not None:
            node_dofs[sub][nodes] = dofs

    for cp, (vi, vj) in enumerate(partition.cross_point_grid):
        for j in (vj - 1, vj):
            for i in (vi - 1, vi):
                sub = partition.subdomain_at(i, j)
                node = np.array([meshes[sub].corners[(vi - i, vj - j)]])
                claim(sub, node, CORNER, np.array([cp]))
    n_corner = len(partition.cross_points)

    next_dof = n_corner
    for c in couplings:
        nodes = c.mortar_nodes[1:-1]
        claim(c.mortar, nodes, MORTAR, next_dof + np.arange(len(nodes)))
        next_dof += len(nodes)
    n_mortar = next_dof - n_corner

    ranges = []
    for mesh in meshes:
        start = next_dof
        dofs = start + np.arange(mesh.n_interior)
        claim(mesh.subdomain, mesh.interior, INTERIOR, dofs)
        next_dof += mesh.n_interior
        ranges.append((start, next_dof))
    n_interior = next_dof - n_corner - n_mortar

    for c in couplings:
        claim(c.nonmortar, c.nonmortar_nodes[1:-1], SLAVE, None)

    for mesh in meshes:
        kinds = node_kinds[mesh.subdomain]
        gaps = (kinds == 0) != mesh.dirichlet
        if np.any(gaps):
            raise MeshError(
                f"Subdomain {mesh.subdomain}: {int(gaps.sum())} nodes left unclassified"
            )

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for mesh in meshes:
        sub = mesh.subdomain
        free = np.flatnonzero(node_dofs[sub] >= 0)
        rows.extend(local_index[sub][free])
        cols.extend(node_dofs[sub][free])
        vals.extend(np.ones(len(free)))

    for c in couplings:
        m_dofs = node_dofs[c.mortar][c.mortar_nodes]
        c_dofs = node_dofs[c.nonmortar][c.nonmortar_nodes[[0, -1]]]
        slave_rows = local_index[c.nonmortar][c.nonmortar_nodes[1:-1]]
        for k, row in enumerate(slave_rows):
            for j, dof in enumerate(m_dofs):
                if dof >= 0:
                    rows.append(row)
                    cols.append(dof)
                    vals.append(c.elim_mortar[k, j])
            for e, dof in enumerate(c_dofs):
                if dof >= 0:
                    rows.append(row)
                    cols.append(dof)
                    vals.append(-c.elim_corner[k, e])

    n_broken = int(max((idx.max() for idx in local_index if idx.size), default=-1)) + 1
    T = sp.csr_matrix((vals, (rows, cols)), shape=(n_broken, next_dof))
    logger.debug(
        "Free dofs: %d corner, %d mortar, %d interior (broken %d)",
        n_corner,
        n_mortar,
        n_interior,
        n_broken,
    )
    return FreeDofMap(
        n_corner=n_corner,
        n_mortar=n_mortar,
        n_interior=n_interior,
        node_dofs=tuple(node_dofs),
        node_kinds=tuple(node_kinds),
        interior_ranges=tuple(ranges),
        local_index=tuple(local_index),
        T=T,
        couplings=tuple(couplings),
    )


def build_constrained_system(
    partition: CoarsePartition,
    meshes: Sequence[SubdomainMesh],
    assignment: InterfaceSideAssignment,
    broken: BrokenSystem,
    couplings: Optional[Sequence[MortarCoupling]] = None,
) -> ConstrainedSystem:
    """
    Eliminate slave dofs: A_free = T^T A T, f_free = T^T f.

    Args:
        partition: The coarse partition
        meshes: One mesh per subdomain
        assignment: Mortar side of every interface
        broken: Broken-space stiffness and load
        couplings: Precomputed couplings, assembled when omitted

    Returns:
        The constrained system
    """
    if couplings is None:
        couplings = assemble_couplings(partition, meshes, assignment)
    dofmap = build_dofmap(partition, meshes, couplings, broken.local_index)
    T = dofmap.T
    A = (T.T @ broken.A @ T).tocsr()
    A = ((A + A.T) * 0.5).tocsr()
    f = T.T @ broken.f
    logger.info("Constrained system: %d free dofs, nnz %d", A.shape[0], A.nnz)
    return ConstrainedSystem(A=A, f=np.asarray(f), dofmap=dofmap)
