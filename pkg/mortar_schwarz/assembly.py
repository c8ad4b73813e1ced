"""P1 stiffness and load assembly on the broken space."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np
import scipy.sparse as sp

from mortar_schwarz.coefficients import CoefficientField, subdomain_minima
from mortar_schwarz.geometry import SubdomainMesh
from mortar_schwarz.utils import ConfigurationError, MeshError

if TYPE_CHECKING:
    from mortar_schwarz.mortar import FreeDofMap

logger = logging.getLogger(__name__)

# True coefficient, subdomain minimum (type I), boundary-layer minimum (type II)
WEIGHTS: tuple[str, ...] = ("alpha", "I", "II")

# Barycentric quadrature rules on the reference triangle: (points, weights)
_RULE_DEGREE_2 = (
    np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
    np.full(3, 1 / 3),
)
_A1, _B1, _W1 = 0.059715871789770, 0.470142064105115, 0.132394152788506
_A2, _B2, _W2 = 0.797426985353087, 0.101286507323456, 0.125939180544827
_RULE_DEGREE_5 = (
    np.array(
        [
            [1 / 3, 1 / 3, 1 / 3],
            [_A1, _B1, _B1],
            [_B1, _A1, _B1],
            [_B1, _B1, _A1],
            [_A2, _B2, _B2],
            [_B2, _A2, _B2],
            [_B2, _B2, _A2],
        ]
    ),
    np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2]),
)
QUADRATURE_RULES = {2: _RULE_DEGREE_2, 5: _RULE_DEGREE_5}

SourceFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def sine_source(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """f = 2 pi^2 sin(pi x) sin(pi y), whose exact solution is sin(pi x) sin(pi y)."""
    return 2.0 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y)


@dataclass(frozen=True, eq=False)
class BrokenSystem:
    """Stiffness and load over all non-Dirichlet nodes of all subdomain meshes.

    ``local_index[i][k]`` is the broken index of node ``k`` of subdomain ``i``
    or -1 for nodes on the outer boundary.
    """

    A: sp.csr_matrix
    f: np.ndarray
    local_index: tuple[np.ndarray, ...]
    offsets: np.ndarray

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def interior(self, mesh: SubdomainMesh) -> np.ndarray:
        """Broken indices of the interior nodes of ``mesh``."""
        return self.local_index[mesh.subdomain][mesh.interior]


@dataclass(frozen=True, eq=False)
class SystemBlocks:
    """A_N^(11) (all free dofs), A_N^(12) (interior columns) and A_N^(22)."""

    a11: sp.csr_matrix
    a12: sp.csr_matrix
    a22: sp.csr_matrix
    interior: np.ndarray


def broken_numbering(
    meshes: Sequence[SubdomainMesh],
) -> tuple[tuple[np.ndarray, ...], np.ndarray]:
    """Number non-Dirichlet nodes subdomain by subdomain."""
    local_index = []
    offsets = [0]
    for mesh in meshes:
        index = np.full(mesh.n_nodes, -1, dtype=int)
        free = np.flatnonzero(~mesh.dirichlet)
        index[free] = offsets[-1] + np.arange(len(free))
        local_index.append(index)
        offsets.append(offsets[-1] + len(free))
    return tuple(local_index), np.array(offsets)


def element_stiffness(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    P1 element stiffness matrices ``w * |T| * G^T G``.

    Args:
        points: Triangle vertices, shape (n, 3, 2)
        weights: Coefficient per triangle, shape (n,)

    Returns:
        Element matrices, shape (n, 3, 3)
    """
    x, y = points[..., 0], points[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (
        y[:, 1] - y[:, 0]
    )
    if np.any(det <= 0):
        raise MeshError("Degenerate or clockwise triangle")
    # gradient of the barycentric coordinate k, scaled by det
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    gram = gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :]
    return (weights / (2.0 * det))[:, None, None] * gram


def triangle_weights(
    field: CoefficientField, mesh: SubdomainMesh, weight: str
) -> np.ndarray:
    """Per-triangle coefficient for the requested bilinear form."""
    if weight not in WEIGHTS:
        raise ConfigurationError(
            f"Unknown weight '{weight}', expected one of {WEIGHTS}"
        )
    values = field.on(mesh)
    if weight == "alpha":
        return values
    low, low_layer = subdomain_minima(field, mesh)
    if weight == "I":
        return np.full_like(values, low)
    weights = values.copy()
    weights[mesh.boundary_layer] = low_layer
    return weights


def local_stiffness(mesh: SubdomainMesh, weights: np.ndarray) -> sp.csr_matrix:
    """Stiffness over all nodes of one mesh (no boundary conditions)."""
    elements = element_stiffness(mesh.nodes[mesh.triangles], weights)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    return sp.csr_matrix(
        (elements.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)
    )


def interior_stiffness(
    mesh: SubdomainMesh, field: CoefficientField, weight: str = "alpha"
) -> np.ndarray:
    """Dense stiffness restricted to the interior nodes of ``mesh``."""
    K = local_stiffness(mesh, triangle_weights(field, mesh, weight))
    return K[mesh.interior][:, mesh.interior].toarray()


def assemble_stiffness(
    meshes: Sequence[SubdomainMesh], field: CoefficientField, weight: str = "alpha"
) -> sp.csr_matrix:
    """
    Block-diagonal stiffness on the broken space with Dirichlet nodes removed.

    Args:
        meshes: One mesh per subdomain
        field: Coefficient per triangle
        weight: ``alpha``, ``I`` or ``II``

    Returns:
        Symmetric sparse matrix over the broken numbering
    """
    blocks = []
    for mesh in meshes:
        K = local_stiffness(mesh, triangle_weights(field, mesh, weight))
        free = np.flatnonzero(~mesh.dirichlet)
        blocks.append(K[free][:, free])
    A = sp.block_diag(blocks, format="csr")
    logger.debug(
        "Assembled %s stiffness of size %d (nnz %d)", weight, A.shape[0], A.nnz
    )
    return A


def assemble_load(
    meshes: Sequence[SubdomainMesh],
    f: SourceFunction = sine_source,
    degree: int = 2,
) -> np.ndarray:
    """
    Load vector of ``f`` against the P1 hats, Dirichlet entries dropped.

    Args:
        meshes: One mesh per subdomain
        f: Right-hand side f(x, y), vectorized
        degree: Exactness degree of the quadrature rule (2 or 5)

    Returns:
        Load vector over the broken numbering
    """
    if degree not in QUADRATURE_RULES:
        raise ConfigurationError(f"No quadrature rule of degree {degree}")
    bary, qw = QUADRATURE_RULES[degree]
    parts = []
    for mesh in meshes:
        points = mesh.nodes[mesh.triangles]
        qp = np.einsum("qk,tkd->tqd", bary, points)
        fq = np.asarray(f(qp[..., 0], qp[..., 1]), dtype=float) * np.ones(qp.shape[:2])
        contrib = mesh.areas[:, None] * np.einsum("tq,q,qk->tk", fq, qw, bary)
        b = np.bincount(
            mesh.triangles.ravel(), weights=contrib.ravel(), minlength=mesh.n_nodes
        )
        parts.append(b[~mesh.dirichlet])
    return np.concatenate(parts) if parts else np.zeros(0)


def assemble_broken_system(
    meshes: Sequence[SubdomainMesh],
    field: CoefficientField,
    f: SourceFunction = sine_source,
) -> BrokenSystem:
    """Stiffness, load and numbering of the broken space."""
    local_index, offsets = broken_numbering(meshes)
    return BrokenSystem(
        A=assemble_stiffness(meshes, field, "alpha"),
        f=assemble_load(meshes, f),
        local_index=local_index,
        offsets=offsets,
    )


def extract_blocks(A: sp.spmatrix, dofmap: "FreeDofMap") -> SystemBlocks:
    """
    Split the constrained matrix into the blocks used by the enriched coarse solve.

    Args:
        A: Matrix over the free dofs (corner, mortar, interior order)
        dofmap: Free-dof classification

    Returns:
        A_N^(11) = A, A_N^(12) = A[:, interior], A_N^(22) = A[interior, interior]
    """
    n = A.shape[0]
    counts = dofmap.n_corner + dofmap.n_mortar + dofmap.n_interior
    if counts != n:
        raise MeshError(f"Free-dof classes cover {counts} dofs, matrix has {n}")
    interior = dofmap.interior_dofs
    A = sp.csr_matrix(A)
    a12 = A[:, interior]
    return SystemBlocks(a11=A, a12=a12, a22=a12[interior], interior=interior)
