"""Synthetic desk-scale dataset generator.

Produces the bundled tables and question/gold pairs used by the test
suite and the demo CLI runs. Questions are engineered against the
heuristic parser: most slots are phrased so the parser nails them with
high confidence, while a controlled share carries a "trap" (a weak agg
or operator synonym, or a column mentioned only by a shared token) that
flips the argmax but keeps the right option near the top of the ranking.

Regenerate with ``python -m sqlclarify.datagen`` (rewrites the bundled
files in place; tests freeze numbers measured on the committed files).
"""
from __future__ import annotations

import json
import random
from importlib import resources
from pathlib import Path

from .minidb import TableStore, load_tables
from .sqlast import query_to_dict

ENTITY_COLS = ["player", "singer", "driver", "writer", "rider", "pilot", "chef", "skater"]
TEXT_COLS = {
    "place": ["ohio", "iowa", "texas", "utah", "maine", "idaho"],
    "team": ["falcons", "tigers", "comets", "rangers", "wolves", "hornets"],
    "position": ["keeper", "winger", "striker", "libero", "pivot", "anchor"],
    "country": ["spain", "japan", "brazil", "norway", "chile", "kenya"],
    "college": ["auburn", "dayton", "tulane", "drake", "baylor", "lehigh"],
    "division": ["alpha", "delta", "omega", "sigma", "kappa", "theta"],
    "genre": ["jazz", "folk", "blues", "opera", "tango", "swing"],
    "sponsor": ["acme", "zenith", "orbit", "nimbus", "vertex", "quasar"],
}
NUMBER_COLS = {
    "age": (18, 40),
    "score": (50, 99),
    "height": (150, 210),
    "salary": (12, 98),
    "wins": (1, 30),
    "losses": (1, 30),
    "points": (10, 99),
    "laps": (2, 60),
    "medals": (1, 12),
    "goals": (1, 45),
}
# Decoy pairs share exactly one token; questions in "column trap" examples
# mention only the shared token, so neither column matches outright.
DECOY_PAIRS = [
    ("home town", "town hall", "text"),
    ("home state", "state code", "text"),
    ("final score", "score margin", "number"),
    ("birth year", "year band", "number"),
]
DECOY_VALUES = {
    "home town": ["akron", "salem", "fargo", "boise", "waco", "provo"],
    "town hall": ["plaza", "annex", "dome", "pavilion", "rotunda", "forum"],
    "home state": ["oregon", "kansas", "nevada", "vermont", "georgia", "montana"],
    "state code": ["ks", "nv", "vt", "ga", "mt", "id"],
    "final score": (50, 99),
    "score margin": (1, 30),
    "birth year": (1970, 2005),
    "year band": (1, 9),
}

ENTITY_NAMES = ["ann", "bob", "cal", "dee", "eli", "fay", "gil", "hana", "ivan", "june", "kira", "liam"]

OPENINGS = ["what is", "show", "tell me", "give", "list"]
TAILS = ["", "", "", " please", " exactly", " for me"]

AGG_STRONG = {"max": ["maximum", "highest"], "min": ["minimum", "lowest"], "avg": ["average"], "sum": ["total"]}
AGG_WEAK = {"max": ["largest", "biggest"], "min": ["smallest", "fewest"], "avg": ["mean"], "sum": ["combined"]}
OP_STRONG = {"gt": ["more than", "over"], "lt": ["less than", "under"]}
OP_WEAK = {"gt": ["higher than", "larger than", "above"], "lt": ["lower than", "smaller than", "fewer than"]}


def _shared_token(full: str, decoy: str) -> str:
    shared = set(full.split()) & set(decoy.split())
    assert len(shared) == 1
    return shared.pop()


def make_tables(rng: random.Random, n_tables: int = 24) -> list:
    tables = []
    for t in range(n_tables):
        entity = ENTITY_COLS[t % len(ENTITY_COLS)]
        used_tokens = set(entity.split())
        columns = [{"name": entity, "type": "text"}]

        pair = None
        if t % 2 == 0:
            pair = DECOY_PAIRS[(t // 2) % len(DECOY_PAIRS)]
            for name in pair[:2]:
                columns.append({"name": name, "type": pair[2]})
                used_tokens |= set(name.split())

        text_pool = [c for c in TEXT_COLS if not (set(c.split()) & used_tokens)]
        for name in rng.sample(text_pool, 2):
            columns.append({"name": name, "type": "text"})
            used_tokens |= set(name.split())
        num_pool = [c for c in NUMBER_COLS if not (set(c.split()) & used_tokens)]
        for name in rng.sample(num_pool, 3):
            columns.append({"name": name, "type": "number"})
            used_tokens |= set(name.split())

        n_rows = rng.randint(5, 9)
        rows = []
        names = rng.sample(ENTITY_NAMES, n_rows)
        for r in range(n_rows):
            row = []
            for col in columns:
                name = col["name"]
                if name == entity:
                    row.append(names[r])
                elif col["type"] == "text":
                    pool = TEXT_COLS.get(name) or DECOY_VALUES[name]
                    row.append(rng.choice(pool))
                else:
                    lo, hi = NUMBER_COLS.get(name) or DECOY_VALUES[name]
                    row.append(rng.randint(lo, hi))
            rows.append(row)

        tables.append(
            {
                "id": f"t{t:02d}",
                "name": f"{entity} records {t:02d}",
                "columns": columns,
                "rows": rows,
                "_entity": entity,
                "_pair": pair,
            }
        )
    return tables


def _distinct_cells(table: dict, col_name: str) -> list:
    idx = next(i for i, c in enumerate(table["columns"]) if c["name"] == col_name)
    seen = []
    for row in table["rows"]:
        if row[idx] not in seen:
            seen.append(row[idx])
    return seen


def _cond_phrase(rng: random.Random, mention: str, op: str, value, trap_op: bool) -> str:
    val_text = str(value)
    if op == "eq":
        verb = rng.choice(["is", "equals"])
        return f"whose {mention} {verb} {val_text}"
    pool = OP_WEAK[op] if trap_op else OP_STRONG[op]
    return f"whose {mention} is {rng.choice(pool)} {val_text}"


def make_examples(rng: random.Random, tables: list, per_table: int = 10) -> list:
    examples = []
    for table in tables:
        entity = table["_entity"]
        pair = table["_pair"]
        text_cols = [c["name"] for c in table["columns"] if c["type"] == "text" and c["name"] != entity]
        num_cols = [c["name"] for c in table["columns"] if c["type"] == "number"]
        decoy_main = pair[0] if pair else None

        for e in range(per_table):
            ex_id = f'{table["id"]}-e{e:02d}'
            draw = rng.random()
            trap_agg = draw < 0.20
            trap_op = 0.20 <= draw < 0.42
            trap_col = 0.42 <= draw < 0.62 and pair is not None

            # --- select target -------------------------------------------------
            agg = "none"
            kind = rng.random()
            if kind < 0.22:
                agg = "count"
            elif kind < 0.55:
                agg = rng.choice(["max", "min", "avg", "sum"])

            if agg == "count":
                sel_col = entity
            elif agg != "none":
                sel_col = rng.choice(num_cols)
            else:
                sel_col = rng.choice(num_cols + text_cols)

            # --- conditions -----------------------------------------------------
            n_conds = rng.choices([0, 1, 2], weights=[12, 55, 33])[0]
            cond_pool = [c for c in text_cols + num_cols if c != sel_col]
            if trap_col and decoy_main != sel_col and decoy_main in cond_pool:
                cond_cols = [decoy_main] + rng.sample([c for c in cond_pool if c != decoy_main], max(0, n_conds - 1))
                cond_cols = cond_cols[: max(1, n_conds)]
                n_conds = len(cond_cols)
            else:
                n_conds = min(n_conds, len(cond_pool))
                cond_cols = rng.sample(cond_pool, n_conds)

            conds = []
            phrases = []
            for c_i, col in enumerate(cond_cols):
                col_type = next(c["type"] for c in table["columns"] if c["name"] == col)
                value = rng.choice(_distinct_cells(table, col))
                if col_type == "number" and rng.random() < 0.55:
                    op = rng.choice(["gt", "lt"])
                else:
                    op = "eq"
                use_trap_op = trap_op and op in ("gt", "lt") and c_i == 0
                mention = col
                if trap_col and col == decoy_main:
                    mention = _shared_token(pair[0], pair[1])
                phrases.append(_cond_phrase(rng, mention, op, value, use_trap_op))
                conds.append({"col": col, "op": op, "val": value})

            cond_text = ""
            if phrases:
                cond_text = " " + " and ".join(phrases)

            # --- select mention / agg phrasing ---------------------------------
            sel_mention = sel_col
            if trap_col and sel_col == decoy_main and not any(c["col"] == decoy_main for c in conds):
                sel_mention = _shared_token(pair[0], pair[1])

            # The entity column is only mentioned when it is the gold select
            # target (count questions); otherwise it would hand the column
            # scorer a spurious full-token match on every condition slot.
            opening = rng.choice(OPENINGS)
            tail = rng.choice(TAILS)
            if agg == "count":
                if trap_agg:
                    question = f"{opening} the count of {entity} records{cond_text}{tail}"
                else:
                    question = f"how many {entity} records are there{cond_text}{tail}"
            elif agg == "none":
                subject = rng.choice(["of the entry", "for the entry", "on file"])
                question = f"{opening} the {sel_mention} {subject}{cond_text}{tail}"
            else:
                word = rng.choice(AGG_WEAK[agg]) if trap_agg else rng.choice(AGG_STRONG[agg])
                subject = rng.choice(["across all entries", "among all entries", "on record"])
                question = f"{opening} the {word} {sel_mention} {subject}{cond_text}{tail}"

            gold = {
                "table_ids": [table["id"]],
                "select": {"agg": agg, "col": sel_col},
                "where": [{"col": c["col"], "op": c["op"], "val": c["val"]} for c in conds],
            }
            examples.append(
                {"id": ex_id, "table_id": table["id"], "question": question, "gold": gold}
            )
    return examples


def make_spider_examples(rng: random.Random, tables: list, count: int = 40) -> list:
    """Demo examples exercising GROUP BY / HAVING / ORDER BY / OR phrasing
    (spider mode)."""
    examples = []
    i = 0
    while len(examples) < count:
        table = tables[i % len(tables)]
        i += 1
        entity = table["_entity"]
        text_cols = [c["name"] for c in table["columns"] if c["type"] == "text" and c["name"] != entity]
        num_cols = [c["name"] for c in table["columns"] if c["type"] == "number"]
        ex_id = f'{table["id"]}-s{len(examples):02d}'
        flavor = len(examples) % 5

        if flavor == 0:
            group_col = rng.choice(text_cols)
            question = f"how many {entity} records appear per {group_col}"
            gold = {
                "table_ids": [table["id"]],
                "select": {"agg": "count", "col": entity},
                "where": [],
                "group_by": [group_col],
            }
        elif flavor == 1:
            sel_col = rng.choice(num_cols)
            order_col = rng.choice([c for c in num_cols if c != sel_col] or text_cols)
            question = f"list the {sel_col} of all entries sorted by {order_col}"
            gold = {
                "table_ids": [table["id"]],
                "select": {"agg": "none", "col": sel_col},
                "where": [],
                "order_by": {"col": order_col, "dir": "asc"},
            }
        elif flavor == 2:
            sel_col = rng.choice(num_cols)
            order_col = rng.choice([c for c in num_cols if c != sel_col] or num_cols)
            limit = rng.randint(2, 5)
            question = f"list the top {limit} {sel_col} of all entries sorted by {order_col}"
            gold = {
                "table_ids": [table["id"]],
                "select": {"agg": "none", "col": sel_col},
                "where": [],
                "order_by": {"col": order_col, "dir": "desc", "limit": limit},
            }
        elif flavor == 3:
            group_col = rng.choice(text_cols)
            threshold = rng.randint(2, 4)
            question = f"how many {entity} records appear per {group_col} with at least {threshold} {entity} entries"
            gold = {
                "table_ids": [table["id"]],
                "select": {"agg": "count", "col": entity},
                "where": [],
                "group_by": [group_col],
                "having": [{"col": entity, "op": "ge", "val": threshold, "agg": "count"}],
            }
        else:
            cols = rng.sample(text_cols, 2)
            vals = [rng.choice(_distinct_cells(table, c)) for c in cols]
            sel_col = rng.choice(num_cols)
            question = (
                f"show the {sel_col} for entries whose {cols[0]} is {vals[0]}"
                f" or whose {cols[1]} is {vals[1]}"
            )
            gold = {
                "table_ids": [table["id"]],
                "select": {"agg": "none", "col": sel_col},
                "where": [
                    {"col": cols[0], "op": "eq", "val": vals[0], "conn": "or"},
                    {"col": cols[1], "op": "eq", "val": vals[1]},
                ],
            }
        examples.append({"id": ex_id, "table_id": table["id"], "question": question, "gold": gold})
    return examples


def generate(seed: int = 2024) -> tuple:
    rng = random.Random(seed)
    tables = make_tables(rng)
    wikisql = make_examples(rng, tables)
    spider = make_spider_examples(rng, tables)
    public_tables = [{k: v for k, v in t.items() if not k.startswith("_")} for t in tables]
    return public_tables, wikisql, spider


def write_bundle(out_dir: Path, seed: int = 2024) -> None:
    tables, wikisql, spider = generate(seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "tables.jsonl", "w", encoding="utf-8") as fh:
        for t in tables:
            fh.write(json.dumps(t) + "\n")
    with open(out_dir / "examples_wikisql.jsonl", "w", encoding="utf-8") as fh:
        for e in wikisql:
            fh.write(json.dumps(e) + "\n")
    with open(out_dir / "examples_spider.jsonl", "w", encoding="utf-8") as fh:
        for e in spider:
            fh.write(json.dumps(e) + "\n")


def bundled_path(name: str):
    return resources.files("sqlclarify.data").joinpath("bundled").joinpath(name)


def load_bundled(mode: str = "wikisql") -> tuple:
    """Returns (TableStore, [Example]) for the bundled dataset."""
    from .harness import load_examples

    store = load_tables(bundled_path("tables.jsonl").read_text(encoding="utf-8").splitlines())
    name = "examples_wikisql.jsonl" if mode == "wikisql" else "examples_spider.jsonl"
    examples = load_examples(bundled_path(name).read_text(encoding="utf-8").splitlines())
    return store, examples


if __name__ == "__main__":
    target = Path(__file__).resolve().parent / "data" / "bundled"
    write_bundle(target)
    print(f"wrote bundled dataset to {target}")
