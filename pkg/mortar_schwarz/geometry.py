"""Coarse partition of the unit square and per-subdomain P1 triangulations."""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np

from mortar_schwarz.utils import ConfigurationError, MeshError

logger = logging.getLogger(__name__)

# Edge names in counterclockwise order; nodes on each edge are listed by
# increasing coordinate along the edge.
EDGES: tuple[str, ...] = ("bottom", "right", "top", "left")

SIDE_POLICIES: tuple[str, ...] = ("coarse", "fine")

LAYOUTS: tuple[str, ...] = ("checkerboard", "uniform")

_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle [x0, x1] x [y0, y1]."""

    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0


@dataclass(frozen=True)
class Interface:
    """A full edge shared by two adjacent subdomains.

    ``first`` is the left (vertical interface) or lower (horizontal interface)
    subdomain and always has the lower id.
    """

    index: int
    first: int
    second: int
    orientation: str
    start: tuple[float, float]
    end: tuple[float, float]

    @property
    def length(self) -> float:
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))

    @property
    def axis(self) -> int:
        """Coordinate that varies along the interface (1 = y, 0 = x)."""
        return 1 if self.orientation == "vertical" else 0

    def edge_of(self, subdomain: int) -> str:
        """Name of the edge of ``subdomain`` lying on this interface."""
        if subdomain == self.first:
            return "right" if self.orientation == "vertical" else "top"
        if subdomain == self.second:
            return "left" if self.orientation == "vertical" else "bottom"
        raise MeshError(
            f"Subdomain {subdomain} is not adjacent to interface {self.index}"
        )

    def other(self, subdomain: int) -> int:
        return self.second if subdomain == self.first else self.first


@dataclass(frozen=True)
class CoarsePartition:
    """Uniform nx x ny partition of the unit square into rectangles."""

    nx: int
    ny: int
    boxes: tuple[Box, ...]
    interfaces: tuple[Interface, ...]
    cross_points: tuple[tuple[float, float], ...]
    cross_point_grid: tuple[tuple[int, int], ...]

    @property
    def H(self) -> float:
        return max(1.0 / self.nx, 1.0 / self.ny)

    @property
    def n_subdomains(self) -> int:
        return self.nx * self.ny

    def grid_position(self, subdomain: int) -> tuple[int, int]:
        return subdomain % self.nx, subdomain // self.nx

    def subdomain_at(self, i: int, j: int) -> int:
        return j * self.nx + i

    def interfaces_of(self, subdomain: int) -> list[Interface]:
        return [
            iface
            for iface in self.interfaces
            if subdomain in (iface.first, iface.second)
        ]

    def cross_point_index(self, vi: int, vj: int) -> Optional[int]:
        """Index of the partition vertex (vi, vj) in ``cross_points``, if interior."""
        if 1 <= vi <= self.nx - 1 and 1 <= vj <= self.ny - 1:
            return (vj - 1) * (self.nx - 1) + (vi - 1)
        return None


@dataclass(frozen=True, eq=False)
class SubdomainMesh:
    """Structured P1 triangulation of one subdomain.

    Node ``r * (nx_cells + 1) + c`` sits at column ``c`` and row ``r``; every
    cell is split along its lower-left to upper-right diagonal.
    """

    subdomain: int
    box: Box
    nx_cells: int
    ny_cells: int
    nodes: np.ndarray
    triangles: np.ndarray
    interior: np.ndarray
    edges: dict[str, np.ndarray]
    corners: dict[tuple[int, int], int]
    boundary_layer: np.ndarray
    dirichlet: np.ndarray = field(repr=False)

    @property
    def n_cells(self) -> int:
        return self.nx_cells

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @property
    def h(self) -> float:
        return max(self.box.width / self.nx_cells, self.box.height / self.ny_cells)

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def node_classes(self) -> np.ndarray:
        """Label each node 0 (interior), 1 (edge, not corner) or 2 (corner)."""
        labels = np.full(self.n_nodes, -1, dtype=int)
        labels[self.interior] = 0
        for nodes in self.edges.values():
            labels[nodes[1:-1]] = 1
        labels[list(self.corners.values())] = 2
        if np.any(labels < 0):
            raise MeshError(f"Unclassified nodes in subdomain {self.subdomain}")
        return labels

    def edge_coordinates(self, edge: str) -> np.ndarray:
        """Coordinates of the nodes of ``edge`` along the edge direction."""
        axis = 0 if edge in ("bottom", "top") else 1
        return self.nodes[self.edges[edge], axis]

    def cells_along(self, edge: str) -> int:
        return self.nx_cells if edge in ("bottom", "top") else self.ny_cells


def build_partition(nx: int, ny: int) -> CoarsePartition:
    """
    Partition the unit square into nx x ny congruent rectangles.

    Args:
        nx: Subdomains along x
        ny: Subdomains along y

    Returns:
        The partition with its interfaces (vertical first) and cross points
    """
    if nx < 1 or ny < 1:
        raise ConfigurationError(f"Subdomain counts must be positive, got ({nx}, {ny})")

    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    boxes = tuple(
        Box(float(xs[i]), float(xs[i + 1]), float(ys[j]), float(ys[j + 1]))
        for j in range(ny)
        for i in range(nx)
    )

    interfaces: list[Interface] = []
    for j in range(ny):
        for i in range(nx - 1):
            x = float(xs[i + 1])
            interfaces.append(
                Interface(
                    len(interfaces),
                    j * nx + i,
                    j * nx + i + 1,
                    "vertical",
                    (x, float(ys[j])),
                    (x, float(ys[j + 1])),
                )
            )
    for j in range(ny - 1):
        for i in range(nx):
            y = float(ys[j + 1])
            interfaces.append(
                Interface(
                    len(interfaces),
                    j * nx + i,
                    (j + 1) * nx + i,
                    "horizontal",
                    (float(xs[i]), y),
                    (float(xs[i + 1]), y),
                )
            )

    grid = tuple((vi, vj) for vj in range(1, ny) for vi in range(1, nx))
    cross_points = tuple((float(xs[vi]), float(ys[vj])) for vi, vj in grid)

    logger.debug(
        "Partition %dx%d: %d interfaces, %d cross points",
        nx,
        ny,
        len(interfaces),
        len(cross_points),
    )
    return CoarsePartition(nx, ny, boxes, tuple(interfaces), cross_points, grid)


def build_subdomain_mesh(
    box: Box, n_cells: int, subdomain: int = 0, ny_cells: Optional[int] = None
) -> SubdomainMesh:
    """
    Triangulate a rectangle with a structured right-triangle mesh.

    Args:
        box: The subdomain rectangle
        n_cells: Cells along x (and along y unless ``ny_cells`` is given)
        subdomain: Id stored on the mesh
        ny_cells: Cells along y, defaults to ``n_cells``

    Returns:
        The mesh with node classification, boundary layer and Dirichlet mask
    """
    nxc = n_cells
    nyc = n_cells if ny_cells is None else ny_cells
    if nxc < 2 or nyc < 2:
        raise ConfigurationError(
            f"Need at least 2 cells per axis for interior nodes, got ({nxc}, {nyc})"
        )

    xs = np.linspace(box.x0, box.x1, nxc + 1)
    ys = np.linspace(box.y0, box.y1, nyc + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def node(c: np.ndarray, r: np.ndarray) -> np.ndarray:
        return r * (nxc + 1) + c

    C, R = np.meshgrid(np.arange(nxc), np.arange(nyc))
    C, R = C.ravel(), R.ravel()
    a, b, d, e = node(C, R), node(C + 1, R), node(C + 1, R + 1), node(C, R + 1)
    triangles = np.empty((2 * nxc * nyc, 3), dtype=int)
    triangles[0::2] = np.column_stack([a, b, d])
    triangles[1::2] = np.column_stack([a, d, e])

    cols = np.arange(nxc + 1)
    rows = np.arange(nyc + 1)
    edges = {
        "bottom": node(cols, np.zeros_like(cols)),
        "right": node(np.full_like(rows, nxc), rows),
        "top": node(cols, np.full_like(cols, nyc)),
        "left": node(np.zeros_like(rows), rows),
    }
    corners = {
        (0, 0): int(node(np.array(0), np.array(0))),
        (1, 0): int(node(np.array(nxc), np.array(0))),
        (1, 1): int(node(np.array(nxc), np.array(nyc))),
        (0, 1): int(node(np.array(0), np.array(nyc))),
    }
    ic, ir = np.meshgrid(np.arange(1, nxc), np.arange(1, nyc))
    interior = node(ic.ravel(), ir.ravel())

    on_boundary = np.ones(len(nodes), dtype=bool)
    on_boundary[interior] = False
    boundary_layer = on_boundary[triangles].any(axis=1)

    dirichlet = (
        (np.abs(nodes[:, 0]) < _BOUNDARY_TOL)
        | (np.abs(nodes[:, 0] - 1.0) < _BOUNDARY_TOL)
        | (np.abs(nodes[:, 1]) < _BOUNDARY_TOL)
        | (np.abs(nodes[:, 1] - 1.0) < _BOUNDARY_TOL)
    )

    return SubdomainMesh(
        subdomain=subdomain,
        box=box,
        nx_cells=nxc,
        ny_cells=nyc,
        nodes=nodes,
        triangles=triangles,
        interior=interior,
        edges=edges,
        corners=corners,
        boundary_layer=boundary_layer,
        dirichlet=dirichlet,
    )


def resolution_layout(
    partition: CoarsePartition,
    cells: int,
    cells_alt: Optional[int] = None,
    layout: str = "checkerboard",
) -> list[int]:
    """
    Cells per subdomain edge for every subdomain.

    ``checkerboard`` gives ``cells`` to subdomains with even i + j and
    ``cells_alt`` to the others; ``uniform`` uses ``cells`` everywhere.
    """
    if layout not in LAYOUTS:
        raise ConfigurationError(
            f"Unknown layout '{layout}', expected one of {LAYOUTS}"
        )
    alt = cells if cells_alt is None else cells_alt
    result = []
    for sub in range(partition.n_subdomains):
        i, j = partition.grid_position(sub)
        result.append(cells if layout == "uniform" or (i + j) % 2 == 0 else alt)
    return result


def build_meshes(
    partition: CoarsePartition, cells: Sequence[int]
) -> list[SubdomainMesh]:
    """Mesh every subdomain of ``partition`` with its own resolution."""
    if len(cells) != partition.n_subdomains:
        raise ConfigurationError(
            f"Expected {partition.n_subdomains} resolutions, got {len(cells)}"
        )
    return [
        build_subdomain_mesh(box, int(n), subdomain=sub)
        for sub, (box, n) in enumerate(zip(partition.boxes, cells))
    ]


@dataclass(frozen=True)
class InterfaceSideAssignment:
    """Mortar and nonmortar subdomain of every interface."""

    mortar: tuple[int, ...]
    nonmortar: tuple[int, ...]
    policy: str

    def mortar_of(self, iface: Interface) -> int:
        return self.mortar[iface.index]

    def nonmortar_of(self, iface: Interface) -> int:
        return self.nonmortar[iface.index]


def assign_sides(
    partition: CoarsePartition,
    meshes: Sequence[SubdomainMesh],
    policy: Union[str, Mapping[int, int]] = "coarse",
) -> InterfaceSideAssignment:
    """
    Choose the mortar side of every interface.

    Args:
        partition: The coarse partition
        meshes: One mesh per subdomain
        policy: ``coarse`` (fewer interface nodes is mortar), ``fine`` (more
            interface nodes is mortar), or a mapping interface index -> mortar
            subdomain. Ties go to the lower subdomain id.

    Returns:
        The assignment
    """
    mortar: list[int] = []
    nonmortar: list[int] = []
    for iface in partition.interfaces:
        if isinstance(policy, Mapping):
            if iface.index not in policy:
                raise ConfigurationError(
                    f"No mortar side given for interface {iface.index}"
                )
            m = int(policy[iface.index])
            if m not in (iface.first, iface.second):
                raise ConfigurationError(
                    f"Subdomain {m} is not a side of interface {iface.index}"
                )
        else:
            if policy not in SIDE_POLICIES:
                raise ConfigurationError(
                    f"Unknown mortar policy '{policy}', expected one of {SIDE_POLICIES}"
                )
            n_first = meshes[iface.first].cells_along(iface.edge_of(iface.first))
            n_second = meshes[iface.second].cells_along(iface.edge_of(iface.second))
            if n_first == n_second:
                m = iface.first
            elif (n_first < n_second) == (policy == "coarse"):
                m = iface.first
            else:
                m = iface.second
        mortar.append(m)
        nonmortar.append(iface.other(m))
    tag = "explicit" if isinstance(policy, Mapping) else policy
    return InterfaceSideAssignment(tuple(mortar), tuple(nonmortar), tag)
