"""Additive average Schwarz preconditioners with an enriched coarse solve."""

import logging
from collections.abc import Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from mortar_schwarz.assembly import SystemBlocks
from mortar_schwarz.coarse_space import AverageOperator, EnrichedCoarseBasis
from mortar_schwarz.mortar import FreeDofMap
from mortar_schwarz.utils import ConfigurationError, FactorizationError

logger = logging.getLogger(__name__)

MODES: tuple[str, ...] = ("reference", "blockwise")


def _factor(matrix: np.ndarray, what: str) -> tuple[np.ndarray, bool]:
    if matrix.shape[0] == 0:
        return matrix, True
    try:
        return la.cho_factor(matrix, lower=True)
    except la.LinAlgError as exc:
        raise FactorizationError(f"{what} is not positive definite") from exc


def _solve(factor: tuple[np.ndarray, bool], rhs: np.ndarray) -> np.ndarray:
    if factor[0].shape[0] == 0:
        return np.zeros_like(rhs, dtype=float)
    return la.cho_solve(factor, rhs)


class Preconditioner:
    """Symmetric positive definite action v -> B v on free-dof vectors.

    ``apply`` accepts a vector of length n or an (n, k) block of vectors.
    """

    n: int = 0

    def _apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError("This method should be implemented by subclasses.")

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.ndim not in (1, 2) or v.shape[0] != self.n:
            raise ConfigurationError(
                f"Preconditioner of size {self.n} applied to shape {v.shape}"
            )
        return self._apply(v)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)

    def to_dense(self) -> np.ndarray:
        """The matrix B, assembled column by column."""
        return self.apply(np.eye(self.n))


class LocalSolvers(Preconditioner):
    """Sum of R_i^T A_i^{-1} R_i over the subdomain interiors."""

    def __init__(self, A: sp.spmatrix, dofmap: FreeDofMap):
        self.n = A.shape[0]
        A = sp.csr_matrix(A)
        self.blocks = []
        for sub, (start, stop) in enumerate(dofmap.interior_ranges):
            if stop == start:
                continue
            local = A[start:stop, start:stop].toarray()
            self.blocks.append(
                (slice(start, stop), _factor(local, f"Local matrix of subdomain {sub}"))
            )

    def _apply(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v)
        for sl, factor in self.blocks:
            out[sl] = la.cho_solve(factor, v[sl])
        return out


class ReferencePreconditioner(LocalSolvers):
    """B = P_c A_c^{-1} P_c^T + sum_i R_i^T A_i^{-1} R_i with A_c = P_c^T A P_c."""

    def __init__(self, A: sp.spmatrix, coarse: EnrichedCoarseBasis, dofmap: FreeDofMap):
        super().__init__(A, dofmap)
        if coarse.P.shape[0] != self.n:
            raise ConfigurationError(
                f"Coarse basis has {coarse.P.shape[0]} rows, matrix has {self.n}"
            )
        self.P = coarse.P
        self.PT = coarse.P.T.tocsr()
        self.coarse_factor = coarse.gram_factor

    def _apply(self, v: np.ndarray) -> np.ndarray:
        out = super()._apply(v)
        out += self.P @ _solve(self.coarse_factor, self.PT @ v)
        return out


class BlockwisePreconditioner(LocalSolvers):
    """Same operator as the reference form with the coarse inverse split in blocks.

    With G = R_0 A^(12) W^T and D the selected eigenvalues, the coarse part
    needs only the Schur complement S = R_0 A^(11) R_0^T - G D^{-1} G^T,
    since the enrichment block W A^(22) W^T equals D.
    """

    def __init__(
        self,
        blocks: SystemBlocks,
        avg: AverageOperator,
        coarse: EnrichedCoarseBasis,
        dofmap: FreeDofMap,
    ):
        super().__init__(blocks.a11, dofmap)
        self.interior = blocks.interior
        self.R0 = avg.R0
        self.R0T = avg.P0
        self.W = coarse.W
        self.WT = coarse.W.T.tocsr()
        self.d = coarse.eigenvalues
        if np.any(self.d <= 0):
            raise FactorizationError("Selected eigenvalues must be positive")
        self.G = np.asarray((self.R0 @ blocks.a12 @ self.WT).todense())
        K = np.asarray((self.R0 @ blocks.a11 @ self.R0T).todense())
        S = K - (self.G / self.d) @ self.G.T
        self.schur_factor = _factor(0.5 * (S + S.T), "Coarse Schur complement")
        logger.debug(
            "Blockwise coarse solve: %d averaging and %d enrichment dofs",
            S.shape[0],
            len(self.d),
        )

    def _scale(self, w: np.ndarray) -> np.ndarray:
        return w / self.d if w.ndim == 1 else w / self.d[:, None]

    def _bc11(self, v: np.ndarray) -> np.ndarray:
        return self.R0T @ _solve(self.schur_factor, self.R0 @ v)

    def _bc12(self, z: np.ndarray) -> np.ndarray:
        return -(self.R0T @ _solve(self.schur_factor, self.G @ self._scale(self.W @ z)))

    def _bc21(self, v: np.ndarray) -> np.ndarray:
        y = _solve(self.schur_factor, self.R0 @ v)
        return -(self.WT @ self._scale(self.G.T @ y))

    def _bc22(self, z: np.ndarray) -> np.ndarray:
        dw = self._scale(self.W @ z)
        y = _solve(self.schur_factor, self.G @ dw)
        return self.WT @ (dw + self._scale(self.G.T @ y))

    def coarse_part(self, v: np.ndarray) -> np.ndarray:
        """The coarse correction as the sum of the four block actions."""
        z = v[self.interior]
        out = self._bc11(v) + self._bc12(z)
        out[self.interior] += self._bc21(v) + self._bc22(z)
        return out

    def _apply(self, v: np.ndarray) -> np.ndarray:
        out = super()._apply(v)
        r0 = self.R0 @ v
        dw = self._scale(self.W @ v[self.interior])
        y0 = _solve(self.schur_factor, r0 - self.G @ dw)
        y1 = dw - self._scale(self.G.T @ y0)
        out += self.R0T @ y0
        out[self.interior] += self.WT @ y1
        return out

    def dense_coarse_blocks(self) -> np.ndarray:
        """B_C as a dense matrix over (all free dofs, interior dofs)."""
        n, ni = self.n, len(self.interior)
        I_all, I_int = np.eye(n), np.eye(ni)
        top = np.hstack([self._bc11(I_all), self._bc12(I_int)])
        bottom = np.hstack([self._bc21(I_all), self._bc22(I_int)])
        return np.vstack([top, bottom])


def dense_block_inverse(
    blocks: SystemBlocks, avg: AverageOperator, coarse: EnrichedCoarseBasis
) -> np.ndarray:
    """
    Explicit inverse of the 2x2 coarse block matrix, for checking the block actions.

    Args:
        blocks: A^(11), A^(12), A^(22)
        avg: Averaging operator providing R_0
        coarse: Enriched basis providing W

    Returns:
        The dense matrix [R_0^T 0; 0 W^T] A_C^{-1} [R_0 0; 0 W]
    """
    R0 = avg.R0.toarray()
    W = coarse.W.toarray()
    a11, a12, a22 = (blocks.a11.toarray(), blocks.a12.toarray(), blocks.a22.toarray())
    AC = np.block(
        [
            [R0 @ a11 @ R0.T, R0 @ a12 @ W.T],
            [W @ a12.T @ R0.T, W @ a22 @ W.T],
        ]
    )
    L = np.block(
        [
            [R0, np.zeros((R0.shape[0], W.shape[1]))],
            [np.zeros((W.shape[0], R0.shape[1])), W],
        ]
    )
    return L.T @ np.linalg.solve(AC, L)


def build_reference(
    A: sp.spmatrix, coarse: EnrichedCoarseBasis, dofmap: FreeDofMap
) -> ReferencePreconditioner:
    return ReferencePreconditioner(A, coarse, dofmap)


def build_blockwise(
    blocks: SystemBlocks,
    avg: AverageOperator,
    coarse: EnrichedCoarseBasis,
    dofmap: FreeDofMap,
) -> BlockwisePreconditioner:
    return BlockwisePreconditioner(blocks, avg, coarse, dofmap)


def build_preconditioner(
    mode: str,
    blocks: SystemBlocks,
    avg: AverageOperator,
    coarse: EnrichedCoarseBasis,
    dofmap: FreeDofMap,
) -> Preconditioner:
    """Either form of the enriched average Schwarz preconditioner."""
    if mode == "reference":
        return build_reference(blocks.a11, coarse, dofmap)
    if mode == "blockwise":
        return build_blockwise(blocks, avg, coarse, dofmap)
    raise ConfigurationError(
        f"Unknown preconditioner mode '{mode}', expected one of {MODES}"
    )


def apply_all(prec: Preconditioner, vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Apply ``prec`` to several vectors at once, returned as columns."""
    return prec.apply(np.column_stack(vectors))
