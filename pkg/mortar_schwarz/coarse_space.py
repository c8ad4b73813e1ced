"""Averaging coarse space and its spectral enrichment."""

import logging
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from mortar_schwarz.assembly import interior_stiffness
from mortar_schwarz.coefficients import CoefficientField
from mortar_schwarz.geometry import SubdomainMesh
from mortar_schwarz.mortar import FreeDofMap
from mortar_schwarz.utils import (
    SPECTRUM_COLUMNS,
    ConfigurationError,
    FactorizationError,
    write_csv,
)

logger = logging.getLogger(__name__)

ENRICHMENT_TYPES: tuple[str, ...] = ("I", "II")

POLICY_KINDS: tuple[str, ...] = ("threshold", "fixed", "full", "none")


@dataclass(frozen=True, eq=False)
class AverageOperator:
    """Prolongation P_0 = R_0^T of the averaging interpolant I_0.

    Identity on corner and mortar dofs; every interior dof of a subdomain
    carries the weights of that subdomain's mean of side averages.
    ``boundary_weight[i]`` is the weight that fell on outer-boundary nodes,
    so each interior row sums to ``1 - boundary_weight[i]``.
    """

    P0: sp.csr_matrix
    n_sides: np.ndarray
    boundary_weight: np.ndarray
    dofmap: FreeDofMap

    @property
    def R0(self) -> sp.csr_matrix:
        return self.P0.T.tocsr()

    @property
    def n_coarse(self) -> int:
        return self.P0.shape[1]

    def apply(self, u: np.ndarray) -> np.ndarray:
        """I_0 u for a free-dof vector ``u``."""
        return self.P0 @ u[: self.n_coarse]

    def averages(self, u: np.ndarray) -> np.ndarray:
        """Mean of side averages per subdomain."""
        out = self.apply(u)
        return np.array(
            [
                out[start] if stop > start else 0.0
                for start, stop in self.dofmap.interior_ranges
            ]
        )


def side_average_weights(coords: np.ndarray) -> np.ndarray:
    """Trapezoid weights turning P1 nodal values into the mean over the side."""
    h = np.diff(coords)
    weights = np.zeros(len(coords))
    weights[:-1] += 0.5 * h
    weights[1:] += 0.5 * h
    return weights / (coords[-1] - coords[0])


def build_average_operator(
    dofmap: FreeDofMap, meshes: Sequence[SubdomainMesh]
) -> AverageOperator:
    """
    Assemble P_0 from the mortar traces of every subdomain side.

    Both the mortar sides of a subdomain and its nonmortar sides are averaged
    over the mortar trace of the interface. Sides on the outer boundary are
    not counted.

    Args:
        dofmap: Free-dof map with its couplings
        meshes: One mesh per subdomain

    Returns:
        The averaging operator
    """
    n_coarse = dofmap.n_coarse
    n_sub = len(meshes)
    accum: list[dict[int, float]] = [{} for _ in range(n_sub)]
    lost = np.zeros(n_sub)
    n_sides = np.zeros(n_sub, dtype=int)

    for c in dofmap.couplings:
        weights = side_average_weights(c.mortar_coords)
        dofs = dofmap.node_dofs[c.mortar][c.mortar_nodes]
        for sub in (c.mortar, c.nonmortar):
            n_sides[sub] += 1
            for dof, w in zip(dofs, weights):
                if dof >= 0:
                    accum[sub][int(dof)] = accum[sub].get(int(dof), 0.0) + w
                else:
                    lost[sub] += w

    rows = list(range(n_coarse))
    cols = list(range(n_coarse))
    vals = [1.0] * n_coarse
    for mesh in meshes:
        sub = mesh.subdomain
        if n_sides[sub] == 0:
            logger.debug("Subdomain %d has no interface sides; average is zero", sub)
            continue
        start, stop = dofmap.interior_ranges[sub]
        for dof, w in accum[sub].items():
            rows.extend(range(start, stop))
            cols.extend([dof] * (stop - start))
            vals.extend([w / n_sides[sub]] * (stop - start))

    P0 = sp.csr_matrix((vals, (rows, cols)), shape=(dofmap.n_free, n_coarse))
    boundary_weight = np.where(n_sides > 0, lost / np.maximum(n_sides, 1), 1.0)
    return AverageOperator(
        P0=P0, n_sides=n_sides, boundary_weight=boundary_weight, dofmap=dofmap
    )


@dataclass(frozen=True)
class SelectionPolicy:
    """Rule choosing how many leading eigenpairs enrich the coarse space."""

    kind: str = "threshold"
    value: float = 50.0

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ConfigurationError(
                f"Unknown policy '{self.kind}', expected one of {POLICY_KINDS}"
            )
        if self.kind == "fixed" and (self.value < 0 or self.value != int(self.value)):
            raise ConfigurationError(
                f"Fixed count must be a nonnegative integer, got {self.value}"
            )

    @classmethod
    def threshold(cls, tau: float = 50.0) -> "SelectionPolicy":
        return cls("threshold", float(tau))

    @classmethod
    def fixed(cls, m: int) -> "SelectionPolicy":
        return cls("fixed", int(m))

    def count(self, eigenvalues: np.ndarray) -> int:
        """Number of leading entries of nonincreasing ``eigenvalues`` to keep."""
        if self.kind == "threshold":
            return int(np.count_nonzero(eigenvalues > self.value))
        if self.kind == "fixed":
            return min(int(self.value), len(eigenvalues))
        if self.kind == "full":
            return len(eigenvalues)
        return 0

    def describe(self) -> str:
        if self.kind == "threshold":
            return f"threshold={self.value:g}"
        if self.kind == "fixed":
            return f"fixed={int(self.value)}"
        return self.kind


@dataclass(frozen=True, eq=False)
class LocalEigenBasis:
    """Eigenpairs of A_i x = lambda B_i x, nonincreasing, B-orthonormal columns."""

    subdomain: int
    type: str
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    selected: int = 0
    max_residual: float = 0.0

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def selected_values(self) -> np.ndarray:
        return self.eigenvalues[: self.selected]

    @property
    def selected_vectors(self) -> np.ndarray:
        return self.eigenvectors[:, : self.selected]

    def with_selection(self, count: int) -> "LocalEigenBasis":
        return replace(self, selected=count)

    def residuals(
        self, A: np.ndarray, B: np.ndarray, count: Optional[int] = None
    ) -> np.ndarray:
        """||A x - lambda B x|| / (lambda ||x||) for the leading ``count`` pairs."""
        k = self.n if count is None else count
        X, lam = self.eigenvectors[:, :k], self.eigenvalues[:k]
        R = A @ X - (B @ X) * lam
        return np.linalg.norm(R, axis=0) / (lam * np.linalg.norm(X, axis=0))


def solve_local_eigenproblem(
    A: np.ndarray, B: np.ndarray, subdomain: int = 0, type: str = "II"
) -> LocalEigenBasis:
    """
    Full spectrum of the symmetric-definite pencil (A, B).

    Args:
        A: Interior stiffness of the subdomain
        B: Interior matrix of the type I or type II bilinear form
        subdomain: Id stored on the result
        type: ``I`` or ``II``

    Returns:
        The basis with nothing selected yet
    """
    if type not in ENRICHMENT_TYPES:
        raise ConfigurationError(f"Unknown enrichment type '{type}'")
    if A.shape[0] == 0:
        return LocalEigenBasis(subdomain, type, np.zeros(0), np.zeros((0, 0)))
    try:
        lam, X = la.eigh(A, B)
    except la.LinAlgError as exc:
        raise FactorizationError(
            f"Type {type} matrix of subdomain {subdomain} is not positive definite"
        ) from exc
    return LocalEigenBasis(subdomain, type, lam[::-1].copy(), X[:, ::-1].copy())


def select_enrichment(basis: LocalEigenBasis, policy: SelectionPolicy) -> int:
    """Number M_i of leading eigenvectors kept under ``policy``."""
    return policy.count(basis.eigenvalues)


def build_local_bases(
    meshes: Sequence[SubdomainMesh],
    field: CoefficientField,
    type: str,
    policy: SelectionPolicy,
) -> list[LocalEigenBasis]:
    """Solve and select the eigenproblem of every subdomain."""
    bases = []
    for mesh in meshes:
        A = interior_stiffness(mesh, field, "alpha")
        B = interior_stiffness(mesh, field, type)
        basis = solve_local_eigenproblem(A, B, mesh.subdomain, type)
        count = select_enrichment(basis, policy)
        res = basis.residuals(A, B, count)
        worst = float(res.max()) if count else 0.0
        basis = replace(basis, selected=count, max_residual=worst)
        bases.append(basis)
    logger.info(
        "Type %s enrichment (%s): %d eigenvectors selected",
        type,
        policy.describe(),
        sum(b.selected for b in bases),
    )
    return bases


@dataclass(frozen=True, eq=False)
class EnrichedCoarseBasis:
    """P_c = [P_0 | selected eigenvectors extended by zero] and its Gram factor.

    ``W`` holds the selected eigenvectors as rows over the interior dofs;
    ``eigenvalues`` is the diagonal of D for those rows.
    """

    P: sp.csr_matrix
    n_average: int
    column_ranges: tuple[tuple[int, int], ...]
    W: sp.csr_matrix
    eigenvalues: np.ndarray
    gram_factor: tuple[np.ndarray, bool]
    min_pivot: float

    @property
    def dimension(self) -> int:
        return self.P.shape[1]

    @property
    def n_enrichment(self) -> int:
        return self.dimension - self.n_average


def build_enriched_basis(
    avg: AverageOperator,
    bases: Sequence[LocalEigenBasis],
    A: sp.spmatrix,
) -> EnrichedCoarseBasis:
    """
    Append the selected eigenvectors to P_0 and factor the coarse Gram matrix.

    Args:
        avg: The averaging operator
        bases: Local eigenbases with their selections, in subdomain order
        A: The constrained stiffness matrix

    Returns:
        The enriched coarse basis
    """
    dofmap = avg.dofmap
    n_int_offset = dofmap.n_coarse
    w_rows: list[int] = []
    w_cols: list[int] = []
    w_vals: list[float] = []
    eigenvalues = []
    ranges = []
    col = 0
    for basis in bases:
        start, stop = dofmap.interior_ranges[basis.subdomain]
        V = basis.selected_vectors
        if V.shape[0] != stop - start:
            raise ConfigurationError(
                f"Eigenbasis of subdomain {basis.subdomain} does not match its interior"
            )
        r, k = np.nonzero(V)
        w_rows.extend(col + k)
        w_cols.extend(start - n_int_offset + r)
        w_vals.extend(V[r, k])
        ranges.append((avg.n_coarse + col, avg.n_coarse + col + basis.selected))
        eigenvalues.append(basis.selected_values)
        col += basis.selected
    W = sp.csr_matrix((w_vals, (w_rows, w_cols)), shape=(col, dofmap.n_interior))
    E = sp.vstack(
        [sp.csr_matrix((dofmap.n_coarse, col)), W.T], format="csr"
    )
    P = sp.hstack([avg.P0, E], format="csr")

    gram = np.asarray((P.T @ A @ P).todense())
    gram = 0.5 * (gram + gram.T)
    if gram.shape[0]:
        try:
            factor = la.cho_factor(gram, lower=True)
        except la.LinAlgError as exc:
            raise FactorizationError(_rank_diagnostic(gram, ranges, bases)) from exc
        min_pivot = float(np.min(np.diag(factor[0])) ** 2)
    else:
        factor = (gram, True)
        min_pivot = 0.0
    logger.debug("Coarse space dimension %d (%d enrichment)", P.shape[1], col)
    return EnrichedCoarseBasis(
        P=P,
        n_average=avg.n_coarse,
        column_ranges=tuple(ranges),
        W=W,
        eigenvalues=np.concatenate(eigenvalues) if eigenvalues else np.zeros(0),
        gram_factor=factor,
        min_pivot=min_pivot,
    )


def _rank_diagnostic(
    gram: np.ndarray,
    ranges: Sequence[tuple[int, int]],
    bases: Sequence[LocalEigenBasis],
) -> str:
    worst, worst_ratio = None, np.inf
    for (start, stop), basis in zip(ranges, bases):
        if stop == start:
            continue
        block = gram[start:stop, start:stop]
        ev = np.linalg.eigvalsh(block)
        ratio = ev[0] / max(ev[-1], np.finfo(float).tiny)
        if ratio < worst_ratio:
            worst, worst_ratio = basis.subdomain, ratio
    if worst is None:
        return "Coarse Gram matrix is not positive definite (averaging columns)"
    return (
        f"Coarse Gram matrix is rank deficient; eigenvectors of subdomain {worst} "
        "are (nearly) dependent on the averaging columns"
    )


def export_spectra(bases: Sequence[LocalEigenBasis], path: Union[str, Path]) -> Path:
    """Write ``subdomain, type, index, eigenvalue, selected`` rows."""

    def rows() -> Iterator[tuple[int, str, int, float, bool]]:
        for basis in bases:
            for k, lam in enumerate(basis.eigenvalues):
                yield basis.subdomain, basis.type, k, lam, k < basis.selected

    return write_csv(path, SPECTRUM_COLUMNS, rows())
