"""In-memory single-table store with a small query executor.

Execution follows the usual order: WHERE filter, GROUP BY, HAVING,
SELECT aggregation/projection, ORDER BY, LIMIT. AND binds tighter than
OR; `like` is case-insensitive substring containment; `between` is
inclusive. Stored data is null-free by construction (rejected at load).
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Union

from .sqlast import (
    Aggregator,
    ColumnRef,
    Condition,
    Connector,
    Operator,
    OrderDir,
    RootValue,
    SqlQuery,
    normalize_number,
)

log = logging.getLogger(__name__)


class TableFormatError(ValueError):
    """Raised when a tables file line violates the schema."""


class ExecutionError(ValueError):
    """Raised when a query cannot be executed against the store."""


@dataclass(frozen=True)
class Column:
    name: str
    type: str  # "text" | "number"


@dataclass(frozen=True)
class Table:
    id: str
    name: str
    columns: tuple
    rows: tuple

    def column_index(self, name: str) -> int:
        target = name.lower()
        for i, col in enumerate(self.columns):
            if col.name.lower() == target:
                return i
        raise ExecutionError(f"unknown column {name!r} in table {self.id!r}")

    def column_type(self, name: str) -> str:
        return self.columns[self.column_index(name)].type


def _check_cell(value: Any, col: Column, where: str) -> Any:
    if value is None:
        raise TableFormatError(f"{where}: null cells are not supported")
    if col.type == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TableFormatError(f"{where}: expected a number for column {col.name!r}")
        return normalize_number(value)
    if not isinstance(value, str):
        raise TableFormatError(f"{where}: expected text for column {col.name!r}")
    return value


def decode_table(data: Union[str, dict], where: str = "table") -> Table:
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise TableFormatError(f"{where}: malformed JSON ({exc})") from None
    if not isinstance(data, dict):
        raise TableFormatError(f"{where}: expected an object")
    for key in ("id", "name", "columns", "rows"):
        if key not in data:
            raise TableFormatError(f"{where}: missing field {key!r}")

    columns = []
    seen = set()
    for i, raw in enumerate(data["columns"]):
        if not isinstance(raw, dict) or "name" not in raw or "type" not in raw:
            raise TableFormatError(f"{where}: columns[{i}] must have name and type")
        if raw["type"] not in ("text", "number"):
            raise TableFormatError(f"{where}: columns[{i}] has unknown type {raw['type']!r}")
        lowered = str(raw["name"]).lower()
        if lowered in seen:
            raise TableFormatError(f"{where}: duplicate column name {raw['name']!r}")
        seen.add(lowered)
        columns.append(Column(name=str(raw["name"]), type=raw["type"]))

    rows = []
    for r, raw_row in enumerate(data["rows"]):
        if not isinstance(raw_row, list) or len(raw_row) != len(columns):
            raise TableFormatError(
                f"{where}: rows[{r}] has {len(raw_row) if isinstance(raw_row, list) else '?'} cells, "
                f"expected {len(columns)}"
            )
        rows.append(tuple(_check_cell(v, columns[c], f"{where}: rows[{r}][{c}]") for c, v in enumerate(raw_row)))

    return Table(id=str(data["id"]), name=str(data["name"]), columns=tuple(columns), rows=tuple(rows))


@dataclass
class TableStore:
    tables: dict = field(default_factory=dict)

    def add(self, table: Table) -> None:
        if table.id in self.tables:
            raise TableFormatError(f"duplicate table id {table.id!r}")
        self.tables[table.id] = table

    def get(self, table_id: str) -> Table:
        try:
            return self.tables[table_id]
        except KeyError:
            raise ExecutionError(f"unknown table {table_id!r}") from None

    def __contains__(self, table_id: str) -> bool:
        return table_id in self.tables

    def __len__(self) -> int:
        return len(self.tables)


def load_tables(lines: Iterable[str]) -> TableStore:
    """Build a store from line-delimited JSON; errors carry line numbers."""
    store = TableStore()
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        store.add(decode_table(line, where=f"line {lineno}"))
    return store


@dataclass(frozen=True)
class ResultSet:
    rows: tuple
    columns: tuple
    ordered: bool = False


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def _compare(cell: Any, op: Operator, value: Any, col_type: str) -> bool:
    if isinstance(value, RootValue):
        raise ExecutionError("root marker cannot be executed")
    if op is Operator.BETWEEN:
        lo, hi = value
        if col_type != "number":
            raise ExecutionError("between requires a numeric column")
        return lo <= cell <= hi
    if op is Operator.LIKE:
        return str(value).lower() in str(cell).lower()
    if col_type == "number":
        if isinstance(value, str):
            raise ExecutionError(f"cannot compare number column with text value {value!r}")
    else:
        if not isinstance(value, str):
            raise ExecutionError(f"cannot compare text column with non-text value {value!r}")
    if op in (Operator.EQ, Operator.IN):
        return cell == value
    if op in (Operator.NE, Operator.NOT_IN):
        return cell != value
    if op is Operator.GT:
        return cell > value
    if op is Operator.LT:
        return cell < value
    if op is Operator.GE:
        return cell >= value
    if op is Operator.LE:
        return cell <= value
    raise ExecutionError(f"unsupported operator {op.value}")


def _row_passes(row: tuple, conds: tuple, table: Table) -> bool:
    if not conds:
        return True
    # AND binds tighter than OR: split the pairwise-connected list into
    # AND-runs and accept the row if any run is fully satisfied.
    runs = [[]]
    for i, cond in enumerate(conds):
        runs[-1].append(cond)
        if i < len(conds) - 1 and cond.conn is Connector.OR:
            runs.append([])
    for run in runs:
        ok = True
        for cond in run:
            idx = table.column_index(cond.col.name)
            if not _compare(row[idx], cond.op, cond.value, table.columns[idx].type):
                ok = False
                break
        if ok:
            return True
    return False


def _aggregate(agg: Aggregator, values: list, col_type: str) -> Any:
    if agg is Aggregator.COUNT:
        return len(values)
    if col_type != "number":
        raise ExecutionError(f"aggregate {agg.value} requires a numeric column")
    if not values:
        return None  # SQL-style NULL for an empty aggregate
    if agg is Aggregator.MAX:
        return max(values)
    if agg is Aggregator.MIN:
        return min(values)
    if agg is Aggregator.SUM:
        return normalize_number(float(sum(values)))
    if agg is Aggregator.AVG:
        return sum(values) / len(values)
    raise ExecutionError(f"unsupported aggregator {agg.value}")


def _group_value(group_rows: list, table: Table, col: ColumnRef, agg: Optional[Aggregator], group_cols: tuple) -> Any:
    if agg and agg is not Aggregator.NONE:
        idx = table.column_index(col.name)
        return _aggregate(agg, [row[idx] for row in group_rows], table.columns[idx].type)
    if col.name.lower() not in {c.name.lower() for c in group_cols}:
        raise ExecutionError(f"column {col.name!r} must be grouped or aggregated")
    idx = table.column_index(col.name)
    return group_rows[0][idx]


def execute(query: SqlQuery, store: TableStore) -> ResultSet:
    if len(query.table_refs) != 1:
        raise ExecutionError("joins are not supported; query must reference one table")
    table = store.get(query.table_refs[0])

    for cond in query.where + query.having:
        if isinstance(cond.value, RootValue):
            raise ExecutionError("root marker cannot be executed")

    filtered = [row for row in table.rows if _row_passes(row, query.where, table)]

    target_col = query.select_col
    target_idx = table.column_index(target_col.name)
    out_name = target_col.name
    if query.select_agg is not Aggregator.NONE:
        out_name = f"{query.select_agg.value}({target_col.name})"

    if query.group_by:
        group_cols = query.group_by
        key_idx = [table.column_index(c.name) for c in group_cols]
        groups: dict = {}
        for row in filtered:
            groups.setdefault(tuple(row[i] for i in key_idx), []).append(row)

        kept = []
        for key in groups:
            rows = groups[key]
            ok = True
            for cond in query.having:
                lhs = _group_value(rows, table, cond.col, cond.agg, group_cols)
                idx = table.column_index(cond.col.name)
                lhs_type = "number" if (cond.agg and cond.agg is not Aggregator.NONE) else table.columns[idx].type
                if not _compare(lhs, cond.op, cond.value, lhs_type):
                    ok = False
                    break
            if ok:
                kept.append((key, rows))

        out_rows = []
        for key, rows in kept:
            value = _group_value(rows, table, target_col, query.select_agg, group_cols)
            sort_key = None
            if query.order_by:
                sort_key = _group_value(rows, table, query.order_by.col, query.order_by.agg, group_cols)
            out_rows.append((sort_key, (value,)))
    else:
        if query.order_by and query.order_by.agg and query.order_by.agg is not Aggregator.NONE:
            raise ExecutionError("aggregate in order_by requires group_by")
        if query.select_agg is not Aggregator.NONE:
            value = _aggregate(
                query.select_agg,
                [row[target_idx] for row in filtered],
                table.columns[target_idx].type,
            )
            out_rows = [(None, (value,))]
        else:
            out_rows = []
            for row in filtered:
                sort_key = row[table.column_index(query.order_by.col.name)] if query.order_by else None
                out_rows.append((sort_key, (row[target_idx],)))

    ordered = query.order_by is not None
    if ordered:
        out_rows.sort(key=lambda item: item[0], reverse=query.order_by.direction is OrderDir.DESC)
        if query.order_by.limit is not None:
            out_rows = out_rows[: query.order_by.limit]

    return ResultSet(rows=tuple(r for _, r in out_rows), columns=(out_name,), ordered=ordered)


def execution_match(a: SqlQuery, b: SqlQuery, store: TableStore) -> bool:
    """Compare execution results; an error on either side counts as a miss."""
    try:
        ra = execute(a, store)
        rb = execute(b, store)
    except ExecutionError as exc:
        log.debug("execution_match treated error as non-match: %s", exc)
        return False
    if ra.ordered or rb.ordered:
        return ra.rows == rb.rows
    return Counter(ra.rows) == Counter(rb.rows)
