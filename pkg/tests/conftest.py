"""Pytest configuration and fixtures."""

import tempfile
from collections.abc import Generator
from pathlib import Path

import pytest

from mortar_schwarz.experiments import ExperimentConfig, Problem, build_problem
from mortar_schwarz.geometry import (
    CoarsePartition,
    SubdomainMesh,
    build_meshes,
    build_partition,
    resolution_layout,
)


@pytest.fixture
def temp_output_dir() -> Generator[Path, None, None]:
    """Create a temporary directory for written results."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def partition_3x3() -> CoarsePartition:
    return build_partition(3, 3)


@pytest.fixture
def meshes_3x3(partition_3x3: CoarsePartition) -> list[SubdomainMesh]:
    """Checkerboard of 3 and 4 cells per subdomain edge."""
    return build_meshes(partition_3x3, resolution_layout(partition_3x3, 3, 4))


@pytest.fixture
def small_config() -> ExperimentConfig:
    """2x2 subdomains with moderate contrast and a fixed enrichment."""
    return ExperimentConfig(
        subdomains=(2, 2),
        cells=3,
        cells_alt=4,
        alpha_b=1.0,
        alpha_c=1e2,
        alpha_i=1e3,
        policy="fixed",
        fixed=2,
    )


@pytest.fixture(scope="module")
def problem_3x3() -> Problem:
    """Assembled 3x3 problem with channels and its blockwise preconditioner."""
    config = ExperimentConfig(
        subdomains=(3, 3),
        cells=4,
        cells_alt=6,
        alpha_b=1.0,
        alpha_c=1e2,
        alpha_i=1e3,
        policy="fixed",
        fixed=3,
    )
    return build_problem(config)


@pytest.fixture(scope="module")
def constant_problem() -> Problem:
    """3x3 problem with alpha = 1 everywhere and the threshold policy."""
    config = ExperimentConfig(
        subdomains=(3, 3),
        cells=4,
        cells_alt=5,
        alpha_b=1.0,
        alpha_c=1.0,
        alpha_i=1.0,
    )
    return build_problem(config)
