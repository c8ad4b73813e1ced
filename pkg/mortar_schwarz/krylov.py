"""Preconditioned conjugate gradients and condition number estimates."""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from mortar_schwarz.utils import ConfigurationError, FactorizationError

logger = logging.getLogger(__name__)

RESIDUALS: tuple[str, ...] = ("relative", "preconditioned")

Operator = Union[sp.spmatrix, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def _as_callable(op: Optional[Any]) -> Callable[[np.ndarray], np.ndarray]:
    if op is None:
        return lambda v: v.copy()
    if sp.issparse(op) or isinstance(op, np.ndarray):
        return lambda v: op @ v
    if hasattr(op, "apply"):
        return op.apply
    if callable(op):
        return op
    raise ConfigurationError(f"Cannot use {type(op).__name__} as an operator")


@dataclass
class SolveReport:
    """Outcome of one PCG run with the coefficients needed for Lanczos.

    The condition number fields stay empty until ``estimate_condition`` fills
    them. ``dense`` estimates carry the extreme eigenvalues of B A, ``lanczos``
    estimates the extreme Ritz values.
    """

    iterations: int = 0
    converged: bool = False
    residuals: list[float] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    betas: list[float] = field(default_factory=list)
    kappa: Optional[float] = None
    kappa_method: Optional[str] = None
    lambda_min: Optional[float] = None
    lambda_max: Optional[float] = None

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else 0.0


def pcg(
    A: Operator,
    b: np.ndarray,
    prec: Optional[Any] = None,
    tol: float = 5e-6,
    max_iter: int = 10000,
    x0: Optional[np.ndarray] = None,
    residual: str = "relative",
) -> tuple[np.ndarray, SolveReport]:
    """
    Solve A x = b by preconditioned conjugate gradients.

    Args:
        A: SPD matrix or callable v -> A v
        b: Right-hand side
        prec: Preconditioner (object with ``apply``, callable or None)
        tol: Stopping tolerance on the chosen residual measure
        max_iter: Iteration cap
        x0: Initial guess (zero when omitted)
        residual: ``relative`` stops on ||r|| / ||b||, ``preconditioned``
            on sqrt(r^T B r) / sqrt(r_0^T B r_0)

    Returns:
        Solution and report
    """
    if residual not in RESIDUALS:
        raise ConfigurationError(
            f"Unknown residual '{residual}', expected one of {RESIDUALS}"
        )
    if tol <= 0 or max_iter < 1:
        raise ConfigurationError("Tolerance and iteration cap must be positive")
    matvec = _as_callable(A)
    precond = _as_callable(prec)
    b = np.asarray(b, dtype=float)
    report = SolveReport()

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        report.converged = True
        return np.zeros_like(b), report

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x)
    z = precond(r)
    rz = float(r @ z)
    if rz < 0:
        raise FactorizationError("Preconditioner is not positive definite")
    p = z.copy()

    def measure(r: np.ndarray, rz: float) -> float:
        if residual == "relative":
            return float(np.linalg.norm(r)) / bnorm
        return float(np.sqrt(max(rz, 0.0)))

    reference = 1.0 if residual == "relative" else (measure(r, rz) or 1.0)
    report.residuals.append(measure(r, rz) / reference)

    while report.residuals[-1] > tol and report.iterations < max_iter:
        Ap = matvec(p)
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise FactorizationError(
                f"Nonpositive curvature p^T A p = {pAp:.3e} "
                f"at iteration {report.iterations}"
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = precond(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise FactorizationError("Preconditioner is not positive definite")
        beta = rz_new / rz
        p = z + beta * p
        rz = rz_new
        report.alphas.append(alpha)
        report.betas.append(beta)
        report.iterations += 1
        report.residuals.append(measure(r, rz) / reference)

    report.converged = report.residuals[-1] <= tol
    if not report.converged:
        logger.warning(
            "PCG stopped after %d iterations at residual %.3e",
            report.iterations,
            report.residuals[-1],
        )
    else:
        logger.info("PCG converged in %d iterations", report.iterations)
    return x, report


def lanczos_tridiagonal(
    alphas: list[float], betas: list[float]
) -> tuple[np.ndarray, np.ndarray]:
    """
    Diagonal and off-diagonal of the Lanczos matrix built from CG coefficients.

    Args:
        alphas: Step lengths alpha_0..alpha_{k-1}
        betas: Direction updates beta_0..beta_{k-1}

    Returns:
        (diagonal of length k, off-diagonal of length k - 1)
    """
    a = np.asarray(alphas, dtype=float)
    bt = np.asarray(betas, dtype=float)
    k = len(a)
    diag = 1.0 / a
    diag[1:] += bt[: k - 1] / a[: k - 1]
    off = np.sqrt(bt[: k - 1]) / a[: k - 1]
    return diag, off


def ritz_values(report: SolveReport) -> np.ndarray:
    """Eigenvalues of the Lanczos matrix, increasing."""
    diag, off = lanczos_tridiagonal(report.alphas, report.betas)
    if len(diag) == 1:
        return diag
    return la.eigh_tridiagonal(diag, off, eigvals_only=True)


def condition_number_lanczos(report: SolveReport) -> float:
    """
    Ratio of the extreme Ritz values from a PCG run.

    Args:
        report: Report of a PCG run

    Returns:
        The estimate of kappa(BA)
    """
    if report.iterations < 3 and not (report.converged and report.iterations > 0):
        raise ConfigurationError(
            f"Lanczos estimate needs at least 3 iterations, got {report.iterations}"
        )
    theta = ritz_values(report)
    if theta[0] <= 0:
        raise FactorizationError("Nonpositive Ritz value")
    return float(theta[-1] / theta[0])


def _dense(matrix: Any) -> np.ndarray:
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)


def dense_spectrum(
    A: Operator, prec: Optional[Any] = None, cap: int = 20000
) -> np.ndarray:
    """
    All eigenvalues of B A via the symmetric form L^T A L with B = L L^T.

    Args:
        A: SPD matrix
        prec: Preconditioner (object with ``apply``, callable on blocks, or None)
        cap: Largest size handled

    Returns:
        Eigenvalues, increasing
    """
    A = _dense(A)
    n = A.shape[0]
    if n > cap:
        raise ConfigurationError(f"Dense spectrum limited to {cap} unknowns, got {n}")
    if prec is None:
        return np.linalg.eigvalsh(0.5 * (A + A.T))
    B = np.asarray(_as_callable(prec)(np.eye(n)), dtype=float)
    B = 0.5 * (B + B.T)
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            "Preconditioner matrix is not positive definite"
        ) from exc
    M = L.T @ A @ L
    return np.linalg.eigvalsh(0.5 * (M + M.T))


def condition_number_dense(
    A: Operator, prec: Optional[Any] = None, cap: int = 20000
) -> float:
    """Exact kappa(B A) from the dense spectrum."""
    ev = dense_spectrum(A, prec, cap)
    if ev[0] <= 0:
        raise FactorizationError(
            f"Nonpositive eigenvalue {ev[0]:.3e} of the preconditioned operator"
        )
    return float(ev[-1] / ev[0])


def estimate_condition(
    report: SolveReport,
    A: Operator,
    prec: Optional[Any] = None,
    method: str = "dense",
    cap: int = 20000,
) -> float:
    """
    Estimate kappa(B A) and store it on ``report``.

    Args:
        report: Report of the PCG run with ``A`` and ``prec``
        A: SPD matrix
        prec: The preconditioner used for the run
        method: ``dense`` (exact spectrum) or ``lanczos`` (Ritz values)
        cap: Largest size handled by the dense method

    Returns:
        The estimate, also stored as ``report.kappa``
    """
    if method == "dense":
        ev = dense_spectrum(A, prec, cap)
        if ev[0] <= 0:
            raise FactorizationError(
                f"Preconditioned operator has eigenvalue {ev[0]:.3e}"
            )
        low, high = float(ev[0]), float(ev[-1])
        kappa = high / low
    elif method == "lanczos":
        kappa = condition_number_lanczos(report)
        theta = ritz_values(report)
        low, high = float(theta[0]), float(theta[-1])
    else:
        raise ConfigurationError(
            f"Unknown condition number method '{method}', expected dense or lanczos"
        )
    report.lambda_min, report.lambda_max = low, high
    report.kappa = kappa
    report.kappa_method = method
    return kappa
