"""Experiment configuration, the solver pipeline and the table sweeps."""

import json
import logging
import time
from collections.abc import Iterator, Mapping, Sequence
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import scipy.sparse.linalg as spla

from mortar_schwarz.assembly import (
    BrokenSystem,
    SystemBlocks,
    assemble_broken_system,
    extract_blocks,
)
from mortar_schwarz.coarse_space import (
    ENRICHMENT_TYPES,
    POLICY_KINDS,
    AverageOperator,
    EnrichedCoarseBasis,
    LocalEigenBasis,
    SelectionPolicy,
    build_average_operator,
    build_enriched_basis,
    build_local_bases,
    export_spectra,
)
from mortar_schwarz.coefficients import (
    ChannelPattern,
    CoefficientField,
    export_field,
    sample_pattern,
)
from mortar_schwarz.geometry import (
    LAYOUTS,
    SIDE_POLICIES,
    CoarsePartition,
    InterfaceSideAssignment,
    SubdomainMesh,
    assign_sides,
    build_meshes,
    build_partition,
    resolution_layout,
)
from mortar_schwarz.krylov import (
    RESIDUALS,
    SolveReport,
    condition_number_dense,
    condition_number_lanczos,
    estimate_condition,
    pcg,
)
from mortar_schwarz.mortar import ConstrainedSystem, build_constrained_system
from mortar_schwarz.preconditioner import MODES, Preconditioner, build_preconditioner
from mortar_schwarz.utils import (
    HISTOGRAM_COLUMNS,
    TABLE_COLUMNS,
    ConfigurationError,
    MortarSchwarzError,
    StageError,
    export_coordinate_text,
    write_csv,
)

logger = logging.getLogger(__name__)

KAPPA_METHODS: tuple[str, ...] = ("auto", "dense", "lanczos", "none")

# Coefficient triples of the jump-robustness tables
MODERATE_CONTRAST = (1.0, 1e3, 1e4)
HIGH_CONTRAST = (1.0, 1e4, 1e6)


@dataclass(frozen=True)
class ExperimentConfig:
    """One solver run. Every field has a default matching the high-contrast 6x6 case."""

    subdomains: tuple[int, int] = (6, 6)
    cells: int = 6
    cells_alt: int = 9
    layout: str = "checkerboard"
    matching: bool = False
    mortar: str = "coarse"
    alpha_b: float = 1.0
    alpha_c: float = 1e4
    alpha_i: float = 1e6
    channel_width: float = 1.0
    type: str = "II"
    policy: str = "threshold"
    threshold: float = 50.0
    fixed: int = 0
    tol: float = 5e-6
    max_iter: int = 10000
    residual: str = "relative"
    kappa_method: str = "auto"
    dense_cap: int = 20000
    preconditioner: str = "blockwise"
    baseline: bool = False
    verify: bool = True
    seed: int = 0
    export_dir: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "subdomains", tuple(int(n) for n in self.subdomains))
        if len(self.subdomains) != 2 or min(self.subdomains) < 1:
            raise ConfigurationError(
                f"Subdomains must be two positive counts, got {self.subdomains}"
            )
        if self.cells < 2 or self.cells_alt < 2:
            raise ConfigurationError("Every subdomain needs at least 2 cells per edge")
        for name in ("alpha_b", "alpha_c", "alpha_i", "channel_width", "tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(
                    f"{name} must be positive, got {getattr(self, name)}"
                )
        if self.threshold < 0 or self.fixed < 0:
            raise ConfigurationError("threshold and fixed must be nonnegative")
        if self.max_iter < 1 or self.dense_cap < 1:
            raise ConfigurationError("max_iter and dense_cap must be at least 1")
        choices = {
            "layout": LAYOUTS,
            "mortar": SIDE_POLICIES,
            "type": ENRICHMENT_TYPES,
            "policy": POLICY_KINDS,
            "residual": RESIDUALS,
            "kappa_method": KAPPA_METHODS,
            "preconditioner": MODES,
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigurationError(
                    f"Unknown {name} '{getattr(self, name)}', expected one of {allowed}"
                )
        equal = self.cells == self.cells_alt
        if self.layout == "checkerboard" and equal and not self.matching:
            raise ConfigurationError(
                "cells and cells_alt must differ for nonmatching grids; "
                "set matching to use equal grids"
            )

    @property
    def alphas(self) -> tuple[float, float, float]:
        return (self.alpha_b, self.alpha_c, self.alpha_i)

    @property
    def selection(self) -> SelectionPolicy:
        value = self.fixed if self.policy == "fixed" else self.threshold
        return SelectionPolicy(self.policy, value)

    @property
    def resolutions(self) -> tuple[int, int]:
        """Cells on the two checkerboard colors; equal for matching or uniform grids."""
        single = self.matching or self.layout == "uniform"
        return (self.cells, self.cells if single else self.cells_alt)

    def label(self) -> str:
        nx, ny = self.subdomains
        return (
            f"{nx}x{ny} type {self.type} {self.selection.describe()} "
            f"alpha=({self.alpha_b:g},{self.alpha_c:g},{self.alpha_i:g}) "
            f"{self.mortar} mortar"
        )

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["subdomains"] = list(self.subdomains)
        return data

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"Unknown config keys: {', '.join(unknown)}")
        values = dict(data)
        if "subdomains" in values:
            values["subdomains"] = tuple(values["subdomains"])
        return cls(**values)

    def merged(self, overrides: Mapping[str, Any]) -> "ExperimentConfig":
        """Copy with the non-None entries of ``overrides`` applied."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        if "subdomains" in changes:
            changes["subdomains"] = tuple(changes["subdomains"])
        return replace(self, **changes)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read a JSON object of config fields; missing fields keep their defaults."""
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"Cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config {path} must hold a JSON object")
    return ExperimentConfig.from_mapping(data)


@dataclass
class RunRecord:
    """Outcome of one run; ``error`` is set when a stage failed."""

    config: ExperimentConfig
    kappa: Optional[float] = None
    kappa_method: Optional[str] = None
    lambda_min: Optional[float] = None
    lambda_max: Optional[float] = None
    kappa_lanczos: Optional[float] = None
    kappa_unpreconditioned: Optional[float] = None
    iterations: Optional[int] = None
    converged: Optional[bool] = None
    final_residual: Optional[float] = None
    selected: tuple[int, ...] = ()
    n_free: int = 0
    coarse_dimension: int = 0
    coarse_min_pivot: Optional[float] = None
    eigen_residual: Optional[float] = None
    symmetry_error: Optional[float] = None
    energy_error: Optional[float] = None
    timings: dict[str, float] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def total_eigenfunctions(self) -> int:
        return sum(self.selected)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_row(self) -> list[Any]:
        c = self.config
        values = {
            "subdomains": c.subdomains,
            "cells": c.resolutions[0],
            "cells_alt": c.resolutions[1],
            "mortar": c.mortar,
            "alpha_b": c.alpha_b,
            "alpha_c": c.alpha_c,
            "alpha_i": c.alpha_i,
            "type": c.type,
            "policy": c.selection.describe(),
            "kappa": self.kappa,
            "kappa_method": self.kappa_method,
            "iterations": self.iterations,
            "converged": self.converged,
            "total_eigenfunctions": (
                self.total_eigenfunctions if self.selected else None
            ),
            "error": self.error,
        }
        return [values[col] for col in TABLE_COLUMNS]

    def to_dict(self) -> dict[str, Any]:
        data = {col: value for col, value in zip(TABLE_COLUMNS, self.to_row())}
        data["subdomains"] = list(self.config.subdomains)
        data.update(
            {
                "config": self.config.to_dict(),
                "selected": list(self.selected),
                "lambda_min": self.lambda_min,
                "lambda_max": self.lambda_max,
                "kappa_lanczos": self.kappa_lanczos,
                "kappa_unpreconditioned": self.kappa_unpreconditioned,
                "final_residual": self.final_residual,
                "n_free": self.n_free,
                "coarse_dimension": self.coarse_dimension,
                "coarse_min_pivot": self.coarse_min_pivot,
                "eigen_residual": self.eigen_residual,
                "symmetry_error": self.symmetry_error,
                "energy_error": self.energy_error,
                "timings": dict(self.timings),
            }
        )
        return data


@dataclass(eq=False)
class Problem:
    """Every intermediate object of the pipeline for one configuration."""

    config: ExperimentConfig
    partition: CoarsePartition
    meshes: list[SubdomainMesh]
    coefficients: CoefficientField
    assignment: InterfaceSideAssignment
    broken: BrokenSystem
    system: ConstrainedSystem
    blocks: SystemBlocks
    bases: list[LocalEigenBasis] = field(default_factory=list)
    average: Optional[AverageOperator] = None
    coarse: Optional[EnrichedCoarseBasis] = None
    preconditioner: Optional[Preconditioner] = None


@contextmanager
def _stage(name: str, timings: dict[str, float]) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - start
        logger.debug("Stage %s took %.3fs", name, timings[name])


def assemble_problem(config: ExperimentConfig) -> Problem:
    """Geometry, coefficients, assembly and mortar elimination."""
    partition = build_partition(*config.subdomains)
    cells, alt = config.resolutions
    layout = resolution_layout(partition, cells, alt, config.layout)
    meshes = build_meshes(partition, layout)
    pattern = ChannelPattern(
        *config.alphas, channel_width=config.channel_width, cells=config.cells
    )
    coefficients = sample_pattern(pattern, partition, meshes)
    assignment = assign_sides(partition, meshes, config.mortar)
    broken = assemble_broken_system(meshes, coefficients)
    system = build_constrained_system(partition, meshes, assignment, broken)
    return Problem(
        config=config,
        partition=partition,
        meshes=meshes,
        coefficients=coefficients,
        assignment=assignment,
        broken=broken,
        system=system,
        blocks=extract_blocks(system.A, system.dofmap),
    )


def solve_eigenproblems(problem: Problem) -> None:
    config = problem.config
    problem.bases = build_local_bases(
        problem.meshes, problem.coefficients, config.type, config.selection
    )


def build_coarse_solver(problem: Problem) -> None:
    """Averaging operator, enriched basis and preconditioner."""
    dofmap = problem.system.dofmap
    problem.average = build_average_operator(dofmap, problem.meshes)
    problem.coarse = build_enriched_basis(
        problem.average, problem.bases, problem.system.A
    )
    problem.preconditioner = build_preconditioner(
        problem.config.preconditioner,
        problem.blocks,
        problem.average,
        problem.coarse,
        dofmap,
    )


def build_problem(config: ExperimentConfig) -> Problem:
    """The assembled problem with its preconditioner, without timing or stage labels."""
    problem = assemble_problem(config)
    solve_eigenproblems(problem)
    build_coarse_solver(problem)
    return problem


def _estimate_condition(
    record: RunRecord, problem: Problem, report: SolveReport
) -> None:
    config = problem.config
    A = problem.system.A
    method = config.kappa_method
    if method == "auto":
        method = "dense" if A.shape[0] <= config.dense_cap else "lanczos"
        if method == "lanczos":
            logger.warning(
                "%d unknowns exceed the dense cap %d; using the Lanczos estimate",
                A.shape[0],
                config.dense_cap,
            )
    if report.iterations >= 3 or (report.converged and report.iterations > 0):
        record.kappa_lanczos = condition_number_lanczos(report)
    if method != "none":
        estimate_condition(
            report, A, problem.preconditioner, method, config.dense_cap
        )
    record.kappa = report.kappa
    record.kappa_method = report.kappa_method
    record.lambda_min, record.lambda_max = report.lambda_min, report.lambda_max
    if config.baseline:
        record.kappa_unpreconditioned = condition_number_dense(
            A, None, config.dense_cap
        )


def _verify(record: RunRecord, problem: Problem, x: np.ndarray) -> None:
    """Symmetry of B on random vectors and the A-norm distance to a direct solve."""
    assert problem.preconditioner is not None
    rng = np.random.default_rng(problem.config.seed)
    n = problem.system.A.shape[0]
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    Bu, Bv = problem.preconditioner.apply(u), problem.preconditioner.apply(v)
    scale = float(np.linalg.norm(u) * np.linalg.norm(Bv))
    record.symmetry_error = float(abs(u @ Bv - v @ Bu)) / (scale or 1.0)

    A = problem.system.A
    direct = spla.spsolve(A.tocsc(), problem.system.f)
    diff = x - direct
    scale = float(np.sqrt(direct @ (A @ direct)))
    record.energy_error = float(np.sqrt(max(diff @ (A @ diff), 0.0))) / (scale or 1.0)


def _export(problem: Problem, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    export_spectra(problem.bases, directory / "spectra.csv")
    export_field(problem.coefficients, problem.meshes, directory / "field.csv")
    export_coordinate_text(problem.system.A, directory / "matrix.txt")


def run_single(config: ExperimentConfig) -> RunRecord:
    """
    Run the whole pipeline for one configuration.

    Args:
        config: The experiment configuration

    Returns:
        The run record

    Raises:
        StageError: When a stage fails, labeled with the stage name
    """
    record = RunRecord(config=config)
    timings = record.timings
    logger.info("Running %s", config.label())

    with _stage("assembly", timings):
        problem = assemble_problem(config)
    record.n_free = problem.system.A.shape[0]

    with _stage("eigensolves", timings):
        solve_eigenproblems(problem)
    record.selected = tuple(b.selected for b in problem.bases)
    record.eigen_residual = max((b.max_residual for b in problem.bases), default=0.0)

    with _stage("factorization", timings):
        build_coarse_solver(problem)
    assert problem.coarse is not None
    record.coarse_dimension = problem.coarse.dimension
    record.coarse_min_pivot = problem.coarse.min_pivot

    with _stage("pcg", timings):
        x, report = pcg(
            problem.system.A,
            problem.system.f,
            problem.preconditioner,
            tol=config.tol,
            max_iter=config.max_iter,
            residual=config.residual,
        )
    record.iterations = report.iterations
    record.converged = report.converged
    record.final_residual = report.final_residual

    with _stage("condition", timings):
        _estimate_condition(record, problem, report)

    if config.verify:
        with _stage("verification", timings):
            _verify(record, problem, x)

    if config.export_dir:
        with _stage("export", timings):
            _export(problem, Path(config.export_dir))

    logger.info(
        "kappa=%s iterations=%d eigenfunctions=%d",
        f"{record.kappa:.3e}" if record.kappa is not None else "-",
        record.iterations,
        record.total_eigenfunctions,
    )
    return record


def run_table(
    configs: Sequence[ExperimentConfig], out: Optional[Union[str, Path]] = None
) -> list[RunRecord]:
    """
    Run every configuration in order; failures are recorded in their row.

    Args:
        configs: The sweep
        out: CSV destination; a JSON file with the same stem is written next to it

    Returns:
        One record per configuration
    """
    if not configs:
        raise ConfigurationError("Empty sweep")
    records = []
    for config in configs:
        try:
            record = run_single(config)
        except MortarSchwarzError as exc:
            logger.error("Run %s failed: %s", config.label(), exc)
            record = RunRecord(config=config, error=str(exc))
        records.append(record)
    if out is not None:
        write_records(records, out)
    return records


def write_records(
    records: Sequence[RunRecord], out: Union[str, Path]
) -> tuple[Path, Path]:
    """Write the sweep CSV and its JSON mirror."""
    csv_path = write_csv(out, TABLE_COLUMNS, (r.to_row() for r in records))
    json_path = csv_path.with_suffix(".json")
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump([r.to_dict() for r in records], f, indent=2)
    return csv_path, json_path


@dataclass(frozen=True)
class Histogram:
    """Selected eigenfunction count per subdomain."""

    type: str
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def max_count(self) -> int:
        return max(self.counts, default=0)

    def rows(self) -> list[tuple[int, int]]:
        return list(enumerate(self.counts))


def run_histogram(
    config: ExperimentConfig, out: Optional[Union[str, Path]] = None
) -> Histogram:
    """
    Per-subdomain counts of the threshold selection.

    Args:
        config: Configuration with a threshold policy
        out: Optional CSV destination

    Returns:
        The histogram data
    """
    if config.policy != "threshold":
        raise ConfigurationError("Histograms need a threshold policy")
    problem = assemble_problem(config)
    solve_eigenproblems(problem)
    histogram = Histogram(config.type, tuple(b.selected for b in problem.bases))
    if out is not None:
        write_csv(out, HISTOGRAM_COLUMNS, histogram.rows())
    logger.info(
        "Type %s: %d eigenfunctions, at most %d per subdomain",
        config.type,
        histogram.total,
        histogram.max_count,
    )
    return histogram


def table1_configs(base: Optional[ExperimentConfig] = None) -> list[ExperimentConfig]:
    """Threshold selection on 6x6 and 9x9 for both triples and both mortar sides."""
    base = ExperimentConfig() if base is None else base
    return [
        replace(
            base,
            subdomains=(n, n),
            alpha_b=alphas[0],
            alpha_c=alphas[1],
            alpha_i=alphas[2],
            mortar=mortar,
            policy="threshold",
        )
        for n in (6, 9)
        for alphas in (MODERATE_CONTRAST, HIGH_CONTRAST)
        for mortar in SIDE_POLICIES
    ]


def table2_configs(
    base: Optional[ExperimentConfig] = None, counts: Optional[Sequence[int]] = None
) -> list[ExperimentConfig]:
    """Fixed number of eigenfunctions in every subdomain, 0 to 7 by default."""
    base = ExperimentConfig() if base is None else base
    counts = range(8) if counts is None else counts
    return [replace(base, policy="fixed", fixed=m) for m in counts]


def table3_configs(base: Optional[ExperimentConfig] = None) -> list[ExperimentConfig]:
    """Type I against type II at the threshold for both triples and mortar sides."""
    base = ExperimentConfig() if base is None else base
    return [
        replace(
            base,
            type=kind,
            alpha_b=alphas[0],
            alpha_c=alphas[1],
            alpha_i=alphas[2],
            mortar=mortar,
            policy="threshold",
        )
        for alphas in (MODERATE_CONTRAST, HIGH_CONTRAST)
        for mortar in SIDE_POLICIES
        for kind in ENRICHMENT_TYPES
    ]


TABLES = {1: table1_configs, 2: table2_configs, 3: table3_configs}
