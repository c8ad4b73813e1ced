"""Assertion helpers and shared constructions for the tests."""

import numpy as np

from mortar_schwarz.experiments import Problem


def random_vectors(n: int, count: int = 20, seed: int = 0) -> np.ndarray:
    """
    Seeded standard normal vectors as the columns of an (n, count) array.

    Args:
        n: Vector length
        count: Number of vectors
        seed: Generator seed

    Returns:
        The vectors
    """
    return np.random.default_rng(seed).standard_normal((n, count))


def relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    """Largest absolute deviation relative to the largest expected entry."""
    scale = float(np.max(np.abs(expected)))
    return float(np.max(np.abs(actual - expected))) / (scale or 1.0)


def assert_symmetric(matrix: np.ndarray, rtol: float = 1e-12) -> None:
    """Assert that a dense matrix equals its transpose up to ``rtol``."""
    error = relative_error(matrix, matrix.T)
    assert error <= rtol, f"Matrix is not symmetric: relative deviation {error:.3e}"


def assert_positive_definite(matrix: np.ndarray) -> None:
    """Assert that the symmetric part of a dense matrix is positive definite."""
    smallest = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))[0]
    assert smallest > 0, f"Smallest eigenvalue {smallest:.3e} is not positive"


def dense_matrix(problem: Problem) -> np.ndarray:
    """The constrained stiffness matrix of a problem as a dense array."""
    return problem.system.A.toarray()
