"""Structured SQL parse objects, slot addressing, canonical form and matching.

The query shape covers a single-table sketch (SELECT agg col ... WHERE ...)
plus GROUP BY / HAVING / ORDER BY extensions. Queries arrive structured
(JSON), never as SQL text.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional, Union


class QueryFormatError(ValueError):
    """Raised when a query record violates the schema; message names the path."""


class Aggregator(str, Enum):
    NONE = "none"
    MAX = "max"
    MIN = "min"
    COUNT = "count"
    SUM = "sum"
    AVG = "avg"


class Operator(str, Enum):
    EQ = "eq"
    GT = "gt"
    LT = "lt"
    GE = "ge"
    LE = "le"
    NE = "ne"
    IN = "in"
    NOT_IN = "not_in"
    LIKE = "like"
    BETWEEN = "between"


class Connector(str, Enum):
    AND = "and"
    OR = "or"


class OrderDir(str, Enum):
    ASC = "asc"
    DESC = "desc"


class RootValue:
    """Placeholder for a value computed by a nested query.

    Never executable; rendered but rejected by the executor.
    """

    _instance: Optional["RootValue"] = None

    def __new__(cls) -> "RootValue":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ROOT"

    def __hash__(self) -> int:
        return hash("RootValue")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RootValue)


ROOT = RootValue()

#: A condition payload: text literal, number, inclusive numeric pair, or ROOT.
Value = Union[str, int, float, tuple, RootValue]


@dataclass(frozen=True)
class ColumnRef:
    """A column name, optionally qualified by the table it belongs to."""

    name: str
    table: Optional[str] = None

    def dotted(self) -> str:
        return f"{self.table}.{self.name}" if self.table else self.name

    @classmethod
    def from_dotted(cls, text: str) -> "ColumnRef":
        if "." in text:
            table, name = text.split(".", 1)
            return cls(name=name, table=table)
        return cls(name=text)

    def folded(self) -> "ColumnRef":
        return ColumnRef(
            name=self.name.lower(),
            table=self.table.lower() if self.table else None,
        )


@dataclass(frozen=True)
class Condition:
    """One WHERE/HAVING condition. ``agg`` is used only inside HAVING.

    ``conn`` is the connector joining this condition to the next one;
    it is irrelevant on the last condition of a list.
    """

    col: ColumnRef
    op: Operator
    value: Value
    conn: Connector = Connector.AND
    agg: Optional[Aggregator] = None


@dataclass(frozen=True)
class OrderBy:
    col: ColumnRef
    direction: OrderDir
    agg: Optional[Aggregator] = None
    limit: Optional[int] = None


@dataclass(frozen=True)
class SqlQuery:
    select_agg: Aggregator
    select_col: ColumnRef
    where: tuple = ()
    group_by: tuple = ()
    having: tuple = ()
    order_by: Optional[OrderBy] = None
    table_refs: tuple = ()

    def __post_init__(self) -> None:
        if not self.table_refs:
            raise QueryFormatError("table_ids: at least one table required")
        if self.having and not self.group_by:
            raise QueryFormatError("having: requires a non-empty group_by")
        if self.order_by and self.order_by.limit is not None and self.order_by.limit < 1:
            raise QueryFormatError("order_by.limit: must be >= 1")
        for i, cond in enumerate(self.where):
            _check_condition(cond, f"where[{i}]")
        for j, cond in enumerate(self.having):
            _check_condition(cond, f"having[{j}]")


def _check_condition(cond: Condition, path: str) -> None:
    if cond.op is Operator.BETWEEN:
        ok = (
            isinstance(cond.value, tuple)
            and len(cond.value) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in cond.value)
        )
        if not ok:
            raise QueryFormatError(f"{path}.val: between requires two numeric endpoints")
    else:
        if isinstance(cond.value, tuple):
            raise QueryFormatError(f"{path}.val: operator {cond.op.value} takes a single value")


# ---------------------------------------------------------------------------
# Slot addressing
# ---------------------------------------------------------------------------

SLOT_KINDS = (
    "select.col",
    "select.agg",
    "where.count",
    "where.col",
    "where.op",
    "where.val",
    "where.conn",
    "groupby.col",
    "having.col",
    "having.agg",
    "having.op",
    "having.val",
    "orderby.col",
    "orderby.agg",
    "orderby.dir",
    "orderby.limit",
)

_INDEXED_KINDS = frozenset(
    {"where.col", "where.op", "where.val", "where.conn", "having.col", "having.agg", "having.op", "having.val"}
)

# Slots the parser decides on its own; clarification questions never address
# them (counts have no question template, limits ride on the direction slot).
NON_ASKABLE_KINDS = frozenset({"where.count", "orderby.limit"})


@dataclass(frozen=True)
class SlotId:
    """Address of one predicted SQL component inside a query."""

    kind: str
    index: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in SLOT_KINDS:
            raise QueryFormatError(f"slot: unknown kind {self.kind!r}")
        if self.kind in _INDEXED_KINDS:
            if self.index is None or self.index < 0:
                raise QueryFormatError(f"slot {self.kind}: requires a non-negative index")
        elif self.index is not None:
            raise QueryFormatError(f"slot {self.kind}: takes no index")

    @property
    def askable(self) -> bool:
        return self.kind not in NON_ASKABLE_KINDS

    def __str__(self) -> str:
        if self.index is None:
            return self.kind
        if self.kind == "where.conn":
            return f"where.connector[{self.index}]"
        clause, _, part = self.kind.partition(".")
        return f"{clause}[{self.index}].{part}"

    @classmethod
    def parse(cls, text: str) -> "SlotId":
        if "[" not in text:
            return cls(kind=text)
        if text.startswith("where.connector["):
            idx = text[len("where.connector[") : -1]
            return cls(kind="where.conn", index=int(idx))
        clause, rest = text.split("[", 1)
        idx_text, _, part = rest.partition("].")
        return cls(kind=f"{clause}.{part}", index=int(idx_text))


# ---------------------------------------------------------------------------
# Canonical form and matching
# ---------------------------------------------------------------------------


def normalize_number(v: Union[int, float]) -> Union[int, float]:
    """Collapse float representations of integers: 2.0 -> 2, 2.50 -> 2.5."""
    if isinstance(v, bool):
        raise QueryFormatError("val: boolean is not a number")
    if isinstance(v, float) and v.is_integer():
        return int(v)
    return v


def _canonical_value(v: Value) -> Value:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return normalize_number(v)
    if isinstance(v, tuple):
        return tuple(normalize_number(x) for x in v)
    return v


def render_value(v: Value) -> str:
    if isinstance(v, RootValue):
        return "(SELECT ...)"
    if isinstance(v, tuple):
        return f"{render_value(v[0])} AND {render_value(v[1])}"
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return str(normalize_number(v))
    return "'" + str(v).replace("'", "''") + "'"


def _canonical_condition(cond: Condition) -> Condition:
    return replace(
        cond,
        col=cond.col.folded(),
        value=_canonical_value(cond.value),
    )


def _sort_key(cond: Condition) -> tuple:
    agg = cond.agg.value if cond.agg else ""
    return (cond.col.dotted(), cond.op.value, agg, render_value(cond.value))


def _canonical_conditions(conds: tuple) -> tuple:
    normed = tuple(_canonical_condition(c) for c in conds)
    if all(c.conn is Connector.AND for c in normed):
        return tuple(sorted(normed, key=_sort_key))
    # Mixed AND/OR keeps its original order: the grouping is meaningful and
    # there is no agreed reordering rule for it.
    return normed


def canonicalize(query: SqlQuery) -> SqlQuery:
    """Deterministic normal form used by query matching.

    Case-folds identifiers, normalizes numeric literals, sorts all-AND
    condition lists, and sorts table references (they match as a set).
    Text literals are left byte-exact. Idempotent.
    """
    order_by = query.order_by
    if order_by is not None:
        order_by = replace(order_by, col=order_by.col.folded())
    return SqlQuery(
        select_agg=query.select_agg,
        select_col=query.select_col.folded(),
        where=_canonical_conditions(query.where),
        group_by=tuple(c.folded() for c in query.group_by),
        having=_canonical_conditions(query.having),
        order_by=order_by,
        table_refs=tuple(sorted(t.lower() for t in query.table_refs)),
    )


def query_match(a: SqlQuery, b: SqlQuery) -> bool:
    """True iff the two queries are structurally equal in canonical form."""
    return canonicalize(a) == canonicalize(b)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_OP_SQL = {
    Operator.EQ: "=",
    Operator.GT: ">",
    Operator.LT: "<",
    Operator.GE: ">=",
    Operator.LE: "<=",
    Operator.NE: "!=",
    Operator.IN: "IN",
    Operator.NOT_IN: "NOT IN",
    Operator.LIKE: "LIKE",
    Operator.BETWEEN: "BETWEEN",
}


def _render_target(col: ColumnRef, agg: Optional[Aggregator]) -> str:
    name = col.dotted()
    if agg and agg is not Aggregator.NONE:
        return f"{agg.value}({name})"
    return name


def _render_condition(cond: Condition) -> str:
    lhs = _render_target(cond.col, cond.agg)
    op = _OP_SQL[cond.op]
    if cond.op in (Operator.IN, Operator.NOT_IN):
        return f"{lhs} {op} ({render_value(cond.value)})"
    return f"{lhs} {op} {render_value(cond.value)}"


def _render_condition_list(conds: tuple) -> str:
    parts = []
    for i, cond in enumerate(conds):
        parts.append(_render_condition(cond))
        if i < len(conds) - 1:
            parts.append(cond.conn.value.upper())
    return " ".join(parts)


def render_sql(query: SqlQuery) -> str:
    """Stable SQL-like display text for transcripts and the UI."""
    select = _render_target(query.select_col, query.select_agg)
    out = [f"SELECT {select} FROM {', '.join(query.table_refs)}"]
    if query.where:
        out.append(f"WHERE {_render_condition_list(query.where)}")
    if query.group_by:
        out.append("GROUP BY " + ", ".join(c.dotted() for c in query.group_by))
    if query.having:
        out.append(f"HAVING {_render_condition_list(query.having)}")
    if query.order_by:
        ob = query.order_by
        out.append(f"ORDER BY {_render_target(ob.col, ob.agg)} {ob.direction.value.upper()}")
        if ob.limit is not None:
            out.append(f"LIMIT {ob.limit}")
    return " ".join(out)


# ---------------------------------------------------------------------------
# JSON codec (gold-query schema)
# ---------------------------------------------------------------------------


def _decode_enum(enum_cls, code: Any, path: str):
    try:
        return enum_cls(code)
    except ValueError:
        raise QueryFormatError(f"{path}: unknown {enum_cls.__name__.lower()} code {code!r}") from None


def _decode_value(raw: Any, op: Operator, path: str) -> Value:
    if raw is None:
        return ROOT
    if op is Operator.BETWEEN:
        if not isinstance(raw, list) or len(raw) != 2:
            raise QueryFormatError(f"{path}: between requires a two-element list")
        lo, hi = raw
        for v in (lo, hi):
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise QueryFormatError(f"{path}: between endpoints must be numeric")
        return (lo, hi)
    if isinstance(raw, bool) or not isinstance(raw, (str, int, float)):
        raise QueryFormatError(f"{path}: unsupported value payload {raw!r}")
    return raw


def _encode_value(v: Value) -> Any:
    if isinstance(v, RootValue):
        return None
    if isinstance(v, tuple):
        return [v[0], v[1]]
    return v


def _decode_condition(raw: Any, path: str, with_agg: bool) -> Condition:
    if not isinstance(raw, dict):
        raise QueryFormatError(f"{path}: expected an object")
    for key in ("col", "op"):
        if key not in raw:
            raise QueryFormatError(f"{path}.{key}: missing")
    if "val" not in raw:
        raise QueryFormatError(f"{path}.val: missing")
    op = _decode_enum(Operator, raw["op"], f"{path}.op")
    agg = None
    if raw.get("agg") is not None:
        if not with_agg:
            raise QueryFormatError(f"{path}.agg: aggregator only allowed in having")
        agg = _decode_enum(Aggregator, raw["agg"], f"{path}.agg")
    conn = _decode_enum(Connector, raw.get("conn", "and"), f"{path}.conn")
    cond = Condition(
        col=ColumnRef.from_dotted(str(raw["col"])),
        op=op,
        value=_decode_value(raw["val"], op, f"{path}.val"),
        conn=conn,
        agg=agg,
    )
    _check_condition(cond, path)
    return cond


def _encode_condition(cond: Condition) -> dict:
    out: dict = {"col": cond.col.dotted(), "op": cond.op.value, "val": _encode_value(cond.value)}
    if cond.agg is not None:
        out["agg"] = cond.agg.value
    if cond.conn is not Connector.AND:
        out["conn"] = cond.conn.value
    return out


def decode_query(data: Union[str, dict]) -> SqlQuery:
    """Decode one gold-query JSON object (text or already-parsed dict)."""
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise QueryFormatError(f"query: malformed JSON ({exc})") from None
    if not isinstance(data, dict):
        raise QueryFormatError("query: expected a JSON object")

    table_refs = data.get("table_ids")
    if not isinstance(table_refs, list) or not table_refs or not all(isinstance(t, str) for t in table_refs):
        raise QueryFormatError("table_ids: expected a non-empty list of strings")

    select = data.get("select")
    if not isinstance(select, dict) or "col" not in select:
        raise QueryFormatError("select: expected an object with agg and col")
    select_agg = _decode_enum(Aggregator, select.get("agg", "none"), "select.agg")
    select_col = ColumnRef.from_dotted(str(select["col"]))

    where_raw = data.get("where", [])
    if not isinstance(where_raw, list):
        raise QueryFormatError("where: expected a list")
    where = tuple(_decode_condition(c, f"where[{i}]", with_agg=False) for i, c in enumerate(where_raw))

    group_raw = data.get("group_by") or []
    if not isinstance(group_raw, list):
        raise QueryFormatError("group_by: expected a list")
    group_by = tuple(ColumnRef.from_dotted(str(c)) for c in group_raw)

    having_raw = data.get("having") or []
    if not isinstance(having_raw, list):
        raise QueryFormatError("having: expected a list")
    having = tuple(_decode_condition(c, f"having[{j}]", with_agg=True) for j, c in enumerate(having_raw))

    order_by = None
    order_raw = data.get("order_by")
    if order_raw is not None:
        if not isinstance(order_raw, dict) or "col" not in order_raw or "dir" not in order_raw:
            raise QueryFormatError("order_by: expected an object with col and dir")
        agg = None
        if order_raw.get("agg") is not None:
            agg = _decode_enum(Aggregator, order_raw["agg"], "order_by.agg")
        limit = order_raw.get("limit")
        if limit is not None and (not isinstance(limit, int) or isinstance(limit, bool) or limit < 1):
            raise QueryFormatError("order_by.limit: must be a positive integer")
        order_by = OrderBy(
            col=ColumnRef.from_dotted(str(order_raw["col"])),
            direction=_decode_enum(OrderDir, order_raw["dir"], "order_by.dir"),
            agg=agg,
            limit=limit,
        )

    return SqlQuery(
        select_agg=select_agg,
        select_col=select_col,
        where=where,
        group_by=group_by,
        having=having,
        order_by=order_by,
        table_refs=tuple(table_refs),
    )


def query_to_dict(query: SqlQuery) -> dict:
    out: dict = {
        "table_ids": list(query.table_refs),
        "select": {"agg": query.select_agg.value, "col": query.select_col.dotted()},
        "where": [_encode_condition(c) for c in query.where],
    }
    if query.group_by:
        out["group_by"] = [c.dotted() for c in query.group_by]
    if query.having:
        out["having"] = [_encode_condition(c) for c in query.having]
    if query.order_by:
        ob: dict = {"col": query.order_by.col.dotted(), "dir": query.order_by.direction.value}
        if query.order_by.agg is not None:
            ob["agg"] = query.order_by.agg.value
        if query.order_by.limit is not None:
            ob["limit"] = query.order_by.limit
        out["order_by"] = ob
    return out


def encode_query(query: SqlQuery) -> str:
    return json.dumps(query_to_dict(query), separators=(", ", ": "))
