"""Shared exceptions, writers and report formatting."""

import csv
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any, Union

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

# Columns of the sweep CSV, in output order
TABLE_COLUMNS: list[str] = [
    "subdomains",
    "cells",
    "cells_alt",
    "mortar",
    "alpha_b",
    "alpha_c",
    "alpha_i",
    "type",
    "policy",
    "kappa",
    "kappa_method",
    "iterations",
    "converged",
    "total_eigenfunctions",
    "error",
]

HISTOGRAM_COLUMNS: list[str] = ["subdomain", "selected"]

SPECTRUM_COLUMNS: list[str] = ["subdomain", "type", "index", "eigenvalue", "selected"]

FIELD_COLUMNS: list[str] = ["subdomain", "triangle", "x", "y", "alpha"]


class MortarSchwarzError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(MortarSchwarzError):
    """Invalid parameters or mismatched dimensions."""


class MeshError(MortarSchwarzError):
    """Inconsistent mesh, field or degree-of-freedom classification."""


class FactorizationError(MortarSchwarzError):
    """A matrix expected to be SPD or nonsingular failed to factorize."""


class StageError(MortarSchwarzError):
    """A pipeline stage failed; carries the stage label."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def write_csv(
    path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> Path:
    """
    Write rows to a CSV file, creating parent directories.

    Args:
        path: Destination file
        header: Column names
        rows: Row values in column order

    Returns:
        The path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])
    logger.debug("Wrote %s", path)
    return path


def format_value(value: Any) -> str:
    """Render a cell value reproducibly (floats in repr precision)."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (tuple, list)):
        return "x".join(str(v) for v in value)
    return str(value)


def export_coordinate_text(matrix: Any, path: Union[str, Path]) -> Path:
    """
    Write a matrix as ``row col value`` lines (upper triangle for symmetric input).

    Args:
        matrix: Dense array or scipy sparse matrix
        path: Destination file

    Returns:
        The path written
    """
    coo = sp.coo_matrix(matrix)
    symmetric = coo.shape[0] == coo.shape[1] and _is_symmetric(coo)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"% {coo.shape[0]} {coo.shape[1]} symmetric={symmetric}\n")
        order = np.lexsort((coo.col, coo.row))
        for k in order:
            row, col, value = int(coo.row[k]), int(coo.col[k]), float(coo.data[k])
            if symmetric and row > col:
                continue
            f.write(f"{row} {col} {value!r}\n")
    return path


def _is_symmetric(coo: sp.coo_matrix) -> bool:
    csr = coo.tocsr()
    diff = abs(csr - csr.T)
    scale = abs(csr).max() if csr.nnz else 0.0
    return bool(diff.max() <= 1e-14 * scale) if csr.nnz else True


def format_table(rows: list[dict[str, Any]], columns: Sequence[str]) -> str:
    """
    Format records as a fixed-width text table.

    Args:
        rows: Records keyed by column name
        columns: Columns to display, in order

    Returns:
        The table as a single string
    """
    cells = [[_short(row.get(col)) for col in columns] for row in rows]
    widths = [
        max([len(col)] + [len(line[i]) for line in cells])
        for i, col in enumerate(columns)
    ]
    header = "  ".join(col.ljust(w) for col, w in zip(columns, widths))
    output_lines = [header, "  ".join("-" * w for w in widths)]
    for line in cells:
        output_lines.append("  ".join(c.ljust(w) for c, w in zip(line, widths)))
    return "\n".join(output_lines)


def _short(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.3e}"
    if isinstance(value, (tuple, list)):
        return "x".join(str(v) for v in value)
    return str(value)
