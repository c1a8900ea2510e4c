"""Typed tabular data: CSV ingestion, role binding, cohort stratification.

Tables are immutable after load and safe for concurrent reads. Cell values
are int, float, bool, str, or None (missing, from an empty CSV field).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum

from .errors import (
    DataError,
    EmptyInput,
    MissingColumn,
    NegativeWeight,
    NonBinaryTarget,
    NonCategoricalColumn,
    RaggedRows,
    UndecodableBytes,
)

Cell = int | float | bool | str | None


class ColumnType(str, Enum):
    INTEGER = "integer"
    DECIMAL = "decimal"
    BOOLEAN = "boolean"
    CATEGORICAL = "categorical"


_BOOL_TOKENS = {"true": True, "false": False}


def cell_token(value: Cell) -> str:
    """Canonical string form of a cell, used for labels and positive-label
    matching across column types."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class DataTable:
    column_names: tuple[str, ...]
    column_types: tuple[ColumnType, ...]
    columns: tuple[tuple[Cell, ...], ...]
    row_count: int

    def column(self, name: str) -> tuple[Cell, ...]:
        try:
            index = self.column_names.index(name)
        except ValueError:
            raise MissingColumn(f"column {name!r} not in table") from None
        return self.columns[index]

    def column_type(self, name: str) -> ColumnType:
        try:
            index = self.column_names.index(name)
        except ValueError:
            raise MissingColumn(f"column {name!r} not in table") from None
        return self.column_types[index]

    def has_column(self, name: str) -> bool:
        return name in self.column_names


#: Zero-column, zero-row table for contexts with no data bound.
EMPTY_TABLE = DataTable(column_names=(), column_types=(), columns=(), row_count=0)


@dataclass(frozen=True)
class RoleBindings:
    """Semantic roles over a table's columns.

    target/prediction are binary columns with an explicitly designated
    positive label (matched against cell_token, never inferred).
    """

    target: str
    target_positive: str
    group: str | None = None
    prediction: str | None = None
    prediction_positive: str | None = None
    weight: str | None = None


def _infer_column(raw: list[str | None]) -> tuple[ColumnType, tuple[Cell, ...]]:
    present = [v for v in raw if v is not None]
    if present and all(v.lower() in _BOOL_TOKENS for v in present):
        return ColumnType.BOOLEAN, tuple(
            None if v is None else _BOOL_TOKENS[v.lower()] for v in raw
        )
    try:
        if present:
            ints = {v: int(v) for v in present}
            return ColumnType.INTEGER, tuple(
                None if v is None else ints[v] for v in raw
            )
    except ValueError:
        pass
    try:
        if present:
            floats = {v: float(v) for v in present}
            return ColumnType.DECIMAL, tuple(
                None if v is None else floats[v] for v in raw
            )
    except ValueError:
        pass
    return ColumnType.CATEGORICAL, tuple(raw)


def load_table(source: bytes, format: str = "csv", has_header: bool = True) -> DataTable:
    """Load RFC 4180 CSV bytes into a typed table.

    Empty fields become missing values. Column types are inferred per
    column: boolean, integer, decimal, else categorical.
    """
    if format != "csv":
        raise ValueError(f"unsupported format {format!r}")
    try:
        text = source.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise UndecodableBytes(f"input is not valid UTF-8: {exc}") from exc

    reader = csv.reader(io.StringIO(text, newline=""))
    rows = []
    header: list[str] | None = None
    for row in reader:
        if header is None:
            if has_header:
                header = [name.strip() for name in row]
                continue
            header = [f"col{i + 1}" for i in range(len(row))]
        if len(row) != len(header):
            raise RaggedRows(
                f"line {reader.line_num}: expected {len(header)} cells, got {len(row)}"
            )
        rows.append(row)
    if header is None:
        raise EmptyInput("no header row in input")
    if len(set(header)) != len(header):
        raise DataError(f"duplicate column names in header: {header}")

    raw_columns: list[list[str | None]] = [[] for _ in header]
    for row in rows:
        for i, cell in enumerate(row):
            raw_columns[i].append(cell if cell != "" else None)

    types: list[ColumnType] = []
    columns: list[tuple[Cell, ...]] = []
    for raw in raw_columns:
        ctype, values = _infer_column(raw)
        types.append(ctype)
        columns.append(values)

    return DataTable(
        column_names=tuple(header),
        column_types=tuple(types),
        columns=tuple(columns),
        row_count=len(rows),
    )


def dump_table(table: DataTable) -> bytes:
    """Serialize a table back to CSV (missing values as empty fields)."""
    buffer = io.StringIO(newline="")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(table.column_names)
    for i in range(table.row_count):
        writer.writerow(
            ["" if col[i] is None else cell_token(col[i]) for col in table.columns]
        )
    return buffer.getvalue().encode("utf-8")


def _check_binary(table: DataTable, name: str, role: str) -> None:
    distinct = {cell_token(v) for v in table.column(name) if v is not None}
    if len(distinct) > 2:
        raise NonBinaryTarget(
            f"{role} column {name!r} has {len(distinct)} distinct values, expected <= 2"
        )


def bind_roles(
    table: DataTable,
    target: str,
    target_positive: str,
    *,
    group: str | None = None,
    prediction: str | None = None,
    prediction_positive: str | None = None,
    weight: str | None = None,
) -> RoleBindings:
    """Validate and bind semantic roles against a table."""
    for name in (target, group, prediction, weight):
        if name is not None and not table.has_column(name):
            raise MissingColumn(f"bound column {name!r} not in table")

    _check_binary(table, target, "target")
    if prediction is not None:
        if prediction_positive is None:
            raise ValueError("prediction binding requires an explicit positive label")
        _check_binary(table, prediction, "prediction")

    if weight is not None:
        for i, value in enumerate(table.column(weight)):
            if value is None:
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise NegativeWeight(
                    f"weight column {weight!r} row {i + 1}: non-numeric value {value!r}"
                )
            if not value >= 0:
                raise NegativeWeight(
                    f"weight column {weight!r} row {i + 1}: value {value!r} is not >= 0"
                )

    return RoleBindings(
        target=target,
        target_positive=target_positive,
        group=group,
        prediction=prediction,
        prediction_positive=prediction_positive,
        weight=weight,
    )


def stratify(table: DataTable, by: str) -> list[tuple[str, DataTable]]:
    """Partition rows by the distinct values of a categorical column.

    Strata are ordered by label and together cover every row exactly once.
    """
    if table.column_type(by) is not ColumnType.CATEGORICAL:
        raise NonCategoricalColumn(
            f"column {by!r} is {table.column_type(by).value}, stratification needs categorical"
        )
    groups: dict[str, list[int]] = {}
    for i, value in enumerate(table.column(by)):
        groups.setdefault(cell_token(value), []).append(i)

    strata = []
    for label in sorted(groups):
        indexes = groups[label]
        columns = tuple(
            tuple(col[i] for i in indexes) for col in table.columns
        )
        strata.append(
            (
                label,
                DataTable(
                    column_names=table.column_names,
                    column_types=table.column_types,
                    columns=columns,
                    row_count=len(indexes),
                ),
            )
        )
    return strata
