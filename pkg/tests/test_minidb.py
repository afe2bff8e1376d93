import random
from collections import Counter

import pytest

from oracles import naive_execute, random_and_query, random_table
from sqlclarify.minidb import (
    ExecutionError,
    TableFormatError,
    TableStore,
    execute,
    execution_match,
    load_tables,
)
from sqlclarify.sqlast import (
    Aggregator,
    ColumnRef,
    Condition,
    Connector,
    Operator,
    OrderBy,
    OrderDir,
    ROOT,
    SqlQuery,
    canonicalize,
)


def q(agg, col, where=(), table="t1", **kwargs):
    return SqlQuery(
        select_agg=Aggregator(agg),
        select_col=ColumnRef(col),
        where=tuple(where),
        table_refs=(table,),
        **kwargs,
    )


def cond(col, op, val, conn="and", agg=None):
    return Condition(
        col=ColumnRef(col),
        op=Operator(op),
        value=val,
        conn=Connector(conn),
        agg=Aggregator(agg) if agg else None,
    )


# ---------------------------------------------------------------------------
# load_tables
# ---------------------------------------------------------------------------

GOOD_LINE = '{"id": "x", "name": "X", "columns": [{"name": "a", "type": "text"}], "rows": [["hi"]]}'


def test_load_single_table():
    store = load_tables([GOOD_LINE])
    assert len(store) == 1 and store.get("x").rows == (("hi",),)


def test_row_arity_mismatch_names_line():
    bad = '{"id": "x", "name": "X", "columns": [{"name": "a", "type": "text"}], "rows": [["hi", "extra"]]}'
    with pytest.raises(TableFormatError, match=r"line 2.*2 cells.*expected 1"):
        load_tables([GOOD_LINE.replace('"x"', '"y"'), bad])


def test_duplicate_table_id_rejected():
    with pytest.raises(TableFormatError, match="duplicate table id"):
        load_tables([GOOD_LINE, GOOD_LINE])


def test_null_cells_rejected():
    bad = '{"id": "x", "name": "X", "columns": [{"name": "a", "type": "text"}], "rows": [[null]]}'
    with pytest.raises(TableFormatError, match="null"):
        load_tables([bad])


def test_type_mismatch_rejected():
    bad = '{"id": "x", "name": "X", "columns": [{"name": "a", "type": "number"}], "rows": [["oops"]]}'
    with pytest.raises(TableFormatError, match="expected a number"):
        load_tables([bad])


def test_duplicate_column_names_rejected():
    bad = '{"id": "x", "name": "X", "columns": [{"name": "a", "type": "text"}, {"name": "A", "type": "text"}], "rows": []}'
    with pytest.raises(TableFormatError, match="duplicate column"):
        load_tables([bad])


# ---------------------------------------------------------------------------
# execute on the three-row fixture
# ---------------------------------------------------------------------------


def test_max_with_filter(t1_store):
    # hand scan: ohio rows are (ann, 30) and (cal, 30) -> max age 30
    result = execute(q("max", "age", [cond("place", "eq", "ohio")]), t1_store)
    assert result.rows == ((30,),)


def test_full_scan_projection(t1_store):
    result = execute(q("none", "player"), t1_store)
    assert Counter(result.rows) == Counter([("ann",), ("bob",), ("cal",)])


def test_count_of_empty_filter(t1_store):
    result = execute(q("count", "player", [cond("age", "gt", 40)]), t1_store)
    assert result.rows == ((0,),)


def test_like_between_and_or(t1_store):
    assert Counter(execute(q("none", "player", [cond("place", "like", "OH")]), t1_store).rows) == Counter(
        [("ann",), ("cal",)]
    )
    assert Counter(execute(q("none", "player", [cond("age", "between", (25, 29))]), t1_store).rows) == Counter(
        [("bob",)]
    )
    # age < 26 OR place = ohio -> bob plus ann, cal
    mixed = q("none", "player", [cond("age", "lt", 26, conn="or"), cond("place", "eq", "ohio")])
    assert Counter(execute(mixed, t1_store).rows) == Counter([("ann",), ("bob",), ("cal",)])


def test_and_binds_tighter_than_or(t1_store):
    # place=iowa OR (place=ohio AND age<31): all three rows qualify
    query = q(
        "none",
        "player",
        [cond("place", "eq", "iowa", conn="or"), cond("place", "eq", "ohio"), cond("age", "lt", 31)],
    )
    assert Counter(execute(query, t1_store).rows) == Counter([("ann",), ("bob",), ("cal",)])


def test_order_by_and_limit(t1_store):
    query = q("none", "player", order_by=OrderBy(col=ColumnRef("age"), direction=OrderDir.DESC, limit=2))
    result = execute(query, t1_store)
    assert result.ordered and len(result.rows) == 2
    assert set(result.rows) <= {("ann",), ("cal",)}


def test_group_by_having(t1_store):
    query = q(
        "count",
        "player",
        group_by=(ColumnRef("place"),),
        having=(cond("player", "gt", 1, agg="count"),),
    )
    assert execute(query, t1_store).rows == ((2,),)


def test_group_by_projects_keys(t1_store):
    query = q("none", "place", group_by=(ColumnRef("place"),))
    assert Counter(execute(query, t1_store).rows) == Counter([("ohio",), ("iowa",)])


@pytest.mark.parametrize(
    "query, match",
    [
        (q("max", "player"), "numeric"),
        (q("none", "nope"), "unknown column"),
        (q("none", "player", [cond("age", "eq", ROOT)]), "root marker"),
        (q("none", "player", table="missing"), "unknown table"),
    ],
)
def test_execute_errors(t1_store, query, match):
    with pytest.raises(ExecutionError, match=match):
        execute(query, t1_store)


def test_join_rejected(t1_table):
    store = TableStore()
    store.add(t1_table)
    query = SqlQuery(
        select_agg=Aggregator.NONE,
        select_col=ColumnRef("player"),
        table_refs=("t1", "t2"),
    )
    with pytest.raises(ExecutionError, match="join"):
        execute(query, store)


# ---------------------------------------------------------------------------
# execution_match
# ---------------------------------------------------------------------------


def test_execution_match_reflexive_and_canonical(t1_store):
    query = q("max", "age", [cond("place", "eq", "ohio"), cond("age", "gt", 1)])
    assert execution_match(query, query, t1_store)
    assert execution_match(query, canonicalize(query), t1_store)


def test_execution_match_multiset_cardinality(t1_store):
    # age of ann -> {30}; age where place=ohio -> {30, 30}
    a = q("none", "age", [cond("player", "eq", "ann")])
    b = q("none", "age", [cond("place", "eq", "ohio")])
    assert not execution_match(a, b, t1_store)


def test_execution_match_error_is_false_not_crash(t1_store):
    bad = q("none", "player", [cond("age", "eq", ROOT)])
    good = q("none", "player")
    assert execution_match(bad, good, t1_store) is False


def test_execution_match_ordered_comparison(t1_store):
    asc = q("none", "age", order_by=OrderBy(col=ColumnRef("age"), direction=OrderDir.ASC))
    desc = q("none", "age", order_by=OrderBy(col=ColumnRef("age"), direction=OrderDir.DESC))
    assert not execution_match(asc, desc, t1_store)
    assert execution_match(asc, asc, t1_store)


# ---------------------------------------------------------------------------
# properties against the independent oracle
# ---------------------------------------------------------------------------


def test_random_queries_agree_with_naive_oracle():
    rng = random.Random(101)
    for trial in range(300):
        table = random_table(rng, f"r{trial}")
        store = TableStore()
        store.add(table)
        query = random_and_query(rng, table)
        expected = naive_execute(query, table)
        got = Counter(execute(query, store).rows)
        assert got == expected, f"trial {trial}: {query}"
        assert Counter(execute(canonicalize(query), store).rows) == expected


def test_adding_a_condition_never_increases_rows():
    rng = random.Random(55)
    for trial in range(100):
        table = random_table(rng, f"m{trial}")
        if not table.rows:
            continue
        store = TableStore()
        store.add(table)
        query = random_and_query(rng, table)
        base = q("none", table.columns[0].name, where=query.where, table=table.id)
        extra_col = rng.choice([c for c in table.columns if c.type == "number"] or list(table.columns))
        if extra_col.type == "number":
            extra = cond(extra_col.name, "lt", rng.randint(0, 20))
        else:
            extra = cond(extra_col.name, "eq", "ash")
        narrowed = q("none", table.columns[0].name, where=tuple(base.where) + (extra,), table=table.id)
        assert len(execute(narrowed, store).rows) <= len(execute(base, store).rows)
