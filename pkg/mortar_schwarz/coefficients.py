"""Piecewise-constant coefficients and the periodic channel pattern."""

import logging
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np

from mortar_schwarz.geometry import Box, CoarsePartition, SubdomainMesh
from mortar_schwarz.utils import FIELD_COLUMNS, ConfigurationError, MeshError, write_csv

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChannelPattern:
    """Background, crossing and corner channels repeated every ``period`` subdomains.

    Lengths are measured in subdomain sizes except ``channel_width``, which
    counts fine cells of a subdomain with ``cells`` cells per edge. Inside one
    period block, crossing channels are a horizontal and a vertical strip
    through the block middle; corner channels are L-shaped strips around every
    interior vertex of the block, each arm crossing one interface.
    """

    alpha_b: float = 1.0
    alpha_c: float = 1.0
    alpha_i: float = 1.0
    channel_width: float = 1.0
    cells: int = 6
    period: int = 3
    corner_offset: float = 0.25
    corner_arm: float = 0.5

    def __post_init__(self) -> None:
        for name in ("alpha_b", "alpha_c", "alpha_i"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(
                    f"{name} must be positive, got {getattr(self, name)}"
                )
        if self.channel_width <= 0 or self.cells < 1 or self.period < 1:
            raise ConfigurationError("Channel width, cells and period must be positive")

    @property
    def width(self) -> float:
        return self.channel_width / self.cells

    def crossing_regions(self) -> list[Box]:
        p, w = float(self.period), self.width
        mid = p / 2
        return [Box(0.0, p, mid, mid + w), Box(mid, mid + w, 0.0, p)]

    def corner_regions(self) -> list[Box]:
        p, w = self.period, self.width
        o, arm = self.corner_offset, self.corner_arm
        regions = []
        for cy in range(1, p):
            for cx in range(1, p):
                sx = -1.0 if cx < p / 2 else 1.0
                sy = -1.0 if cy < p / 2 else 1.0
                qx, qy = cx + sx * o, cy + sy * o
                regions.append(_span_box(qx, qx - sx * arm, qy, qy - sy * w))
                regions.append(_span_box(qx, qx - sx * w, qy, qy - sy * arm))
        return regions

    def evaluate(
        self, x: np.ndarray, y: np.ndarray, hx: float, hy: float
    ) -> np.ndarray:
        """
        Coefficient at physical points for subdomains of size hx x hy.

        Args:
            x: Abscissae
            y: Ordinates
            hx: Subdomain width
            hy: Subdomain height

        Returns:
            Values in {alpha_b, alpha_c, alpha_i}
        """
        xi = np.mod(np.asarray(x, dtype=float) / hx, self.period)
        eta = np.mod(np.asarray(y, dtype=float) / hy, self.period)
        values = np.full(xi.shape, self.alpha_b)
        for box in self.corner_regions():
            values[_inside(box, xi, eta)] = self.alpha_c
        for box in self.crossing_regions():
            values[_inside(box, xi, eta)] = self.alpha_i
        return values


def _span_box(xa: float, xb: float, ya: float, yb: float) -> Box:
    return Box(min(xa, xb), max(xa, xb), min(ya, yb), max(ya, yb))


def _inside(box: Box, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    return (xi >= box.x0) & (xi < box.x1) & (eta >= box.y0) & (eta < box.y1)


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Strictly positive value per fine triangle, one array per subdomain."""

    values: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        for sub, vals in enumerate(self.values):
            if vals.size and not np.all(vals > 0):
                raise ConfigurationError(f"Nonpositive coefficient in subdomain {sub}")

    def on(self, mesh: SubdomainMesh) -> np.ndarray:
        """Values on the triangles of ``mesh``, checked against its size."""
        if mesh.subdomain >= len(self.values):
            raise MeshError(f"No coefficients for subdomain {mesh.subdomain}")
        vals = self.values[mesh.subdomain]
        if len(vals) != mesh.n_triangles:
            raise MeshError(
                f"Subdomain {mesh.subdomain}: {len(vals)} coefficients for "
                f"{mesh.n_triangles} triangles"
            )
        return vals

    def scaled(self, factor: float) -> "CoefficientField":
        return CoefficientField(tuple(factor * v for v in self.values))

    @classmethod
    def constant(
        cls, meshes: Sequence[SubdomainMesh], value: float = 1.0
    ) -> "CoefficientField":
        return cls(tuple(np.full(m.n_triangles, float(value)) for m in meshes))

    @classmethod
    def from_function(
        cls,
        meshes: Sequence[SubdomainMesh],
        func: Callable[[np.ndarray, np.ndarray], np.ndarray],
    ) -> "CoefficientField":
        """Evaluate ``func(x, y)`` at triangle barycenters."""
        values = []
        for mesh in meshes:
            bc = mesh.barycenters
            vals = np.asarray(func(bc[:, 0], bc[:, 1]), dtype=float)
            values.append(np.broadcast_to(vals, (mesh.n_triangles,)).copy())
        return cls(tuple(values))


def sample_pattern(
    pattern: ChannelPattern, partition: CoarsePartition, meshes: Sequence[SubdomainMesh]
) -> CoefficientField:
    """
    Assign every triangle the pattern value at its barycenter.

    Args:
        pattern: The channel pattern
        partition: Partition providing the subdomain size
        meshes: One mesh per subdomain

    Returns:
        The sampled coefficient field
    """
    hx, hy = 1.0 / partition.nx, 1.0 / partition.ny
    values = []
    for mesh in meshes:
        bc = mesh.barycenters
        values.append(pattern.evaluate(bc[:, 0], bc[:, 1], hx, hy))
    field = CoefficientField(tuple(values))
    logger.debug(
        "Sampled pattern (%g, %g, %g) on %d subdomains",
        pattern.alpha_b,
        pattern.alpha_c,
        pattern.alpha_i,
        len(meshes),
    )
    return field


def subdomain_minima(
    field: CoefficientField, mesh: SubdomainMesh
) -> tuple[float, float]:
    """Minimum of the coefficient over the subdomain and over its boundary layer."""
    vals = field.on(mesh)
    return float(vals.min()), float(vals[mesh.boundary_layer].min())


def export_field(
    field: CoefficientField, meshes: Sequence[SubdomainMesh], path: Union[str, Path]
) -> Path:
    """Write ``subdomain, triangle, x, y, alpha`` rows for visualization."""

    def rows() -> Iterator[tuple[int, int, float, float, float]]:
        for mesh in meshes:
            vals = field.on(mesh)
            for t, (bx, by) in enumerate(mesh.barycenters):
                yield mesh.subdomain, t, bx, by, vals[t]

    return write_csv(path, FIELD_COLUMNS, rows())
