"""Tests for the exceptions, writers and report formatting in utils."""

from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from mortar_schwarz.utils import (
    ConfigurationError,
    FactorizationError,
    MeshError,
    MortarSchwarzError,
    StageError,
    export_coordinate_text,
    format_table,
    format_value,
    write_csv,
)


def test_exceptions_share_base_class():
    """Test that every package error derives from the common base."""
    for cls in (ConfigurationError, MeshError, FactorizationError):
        assert issubclass(cls, MortarSchwarzError)
    assert issubclass(StageError, MortarSchwarzError)


def test_stage_error_carries_label():
    """Test that a stage error names the failing stage and keeps the cause."""
    cause = FactorizationError("not SPD")
    error = StageError("eigensolves", cause)

    assert error.stage == "eigensolves"
    assert error.cause is cause
    assert str(error) == "[eigensolves] not SPD"


def test_format_value():
    """Test reproducible rendering of CSV cells."""
    assert format_value(None) == ""
    assert format_value(True) == "true"
    assert format_value(np.bool_(False)) == "false"
    assert format_value(0.1) == "0.1"
    assert format_value(np.float64(1e-7)) == "1e-07"
    assert format_value((6, 9)) == "6x9"
    assert format_value("II") == "II"
    assert format_value(7) == "7"


def test_write_csv_creates_parent_directories(temp_output_dir: Path):
    """Test that CSV output creates missing directories and writes all rows."""
    path = temp_output_dir / "nested" / "table.csv"
    written = write_csv(path, ["a", "b"], [(1, 0.5), ((2, 2), None)])

    assert written == path
    assert path.read_text().splitlines() == ["a,b", "1,0.5", "2x2,"]


def test_export_coordinate_text_symmetric(temp_output_dir: Path):
    """Test that symmetric matrices are written as their upper triangle."""
    matrix = sp.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    path = export_coordinate_text(matrix, temp_output_dir / "matrix.txt")

    lines = path.read_text().splitlines()
    assert lines[0] == "% 2 2 symmetric=True"
    assert lines[1:] == ["0 0 2.0", "0 1 -1.0", "1 1 2.0"]


def test_export_coordinate_text_general(temp_output_dir: Path):
    """Test that nonsymmetric matrices are written in full."""
    matrix = np.array([[1.0, 3.0], [0.0, 4.0]])
    path = export_coordinate_text(matrix, temp_output_dir / "matrix.txt")

    lines = path.read_text().splitlines()
    assert lines[0] == "% 2 2 symmetric=False"
    assert len(lines) == 4


def test_format_table_aligns_columns():
    """Test fixed-width formatting of records."""
    rows = [{"name": "a", "kappa": 12.5}, {"name": "long", "kappa": None}]
    table = format_table(rows, ["name", "kappa"])
    lines = table.splitlines()

    assert lines[0].split() == ["name", "kappa"]
    assert "1.250e+01" in lines[2]
    assert lines[3].split() == ["long", "-"]
    assert len(lines[0]) == len(lines[1])


def test_format_table_header_only_when_empty():
    """Test that an empty record list still yields a header."""
    table = format_table([], ["x"])
    assert table.splitlines()[0] == "x"


@pytest.mark.parametrize("value", [float("nan"), float("inf")])
def test_format_value_special_floats(value: float):
    """Test that special floats keep their repr."""
    assert format_value(value) == repr(value)
