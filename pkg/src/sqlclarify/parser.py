"""Stepwise base parsers.

A parser yields one Decision per SQL component in a fixed left-to-right
slot order, honors per-slot forbidden-option sets, and can produce
perturbed probability passes for uncertainty estimation.

Two parsers ship here: a scripted parser that replays a configured
distribution sequence (the oracle for agent-level tests), and a heuristic
lexical parser that scores options from surface overlap between the
question and the table schema/contents.
"""
from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from .minidb import Table
from .sqlast import (
    Aggregator,
    ColumnRef,
    Connector,
    Operator,
    OrderDir,
    ROOT,
    RootValue,
    SlotId,
    render_value,
)


class NoCondition:
    """Option value meaning "this clause has no condition" (HAVING only)."""

    _instance: Optional["NoCondition"] = None

    def __new__(cls) -> "NoCondition":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NO_CONDITION"

    def __hash__(self) -> int:
        return hash("NoCondition")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, NoCondition)


NO_CONDITION = NoCondition()


@dataclass(frozen=True)
class OrderChoice:
    """Joint (direction, limit) option for the orderby.dir slot."""

    direction: OrderDir
    limit: Optional[int] = None


@dataclass(frozen=True)
class Decision:
    """One stepwise prediction: a slot plus a distribution over options."""

    slot: SlotId
    options: tuple
    probs: tuple
    chosen: int

    def __post_init__(self) -> None:
        if not self.options:
            raise ValueError(f"decision for {self.slot}: empty option list")
        if len(self.options) != len(self.probs):
            raise ValueError(f"decision for {self.slot}: options/probs length mismatch")
        if any(p < 0 for p in self.probs):
            raise ValueError(f"decision for {self.slot}: negative probability")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError(f"decision for {self.slot}: probabilities sum to {sum(self.probs)}")
        if self.probs[self.chosen] < max(self.probs) - 1e-12:
            raise ValueError(f"decision for {self.slot}: chosen index is not maximal")

    @property
    def chosen_value(self) -> Any:
        return self.options[self.chosen]

    @property
    def chosen_prob(self) -> float:
        return self.probs[self.chosen]


def make_decision(slot: SlotId, options: Sequence[Any], probs: Sequence[float]) -> Decision:
    """Normalize and pick the argmax, breaking ties by lowest index."""
    total = float(sum(probs))
    if total <= 0:
        raise ValueError(f"decision for {slot}: non-positive probability mass")
    if abs(total - 1.0) < 1e-12:
        normed = tuple(probs)  # already normalized; keep values bit-exact
    else:
        normed = tuple(p / total for p in probs)
    chosen = max(range(len(normed)), key=lambda i: (normed[i], -i))
    return Decision(slot=slot, options=tuple(options), probs=normed, chosen=chosen)


@dataclass
class ConstraintSet:
    """Per-slot sets of forbidden option values."""

    forbidden: dict = field(default_factory=dict)

    def forbid(self, slot: SlotId, value: Any) -> None:
        self.forbidden.setdefault(slot, set()).add(value)

    def allowed(self, slot: SlotId, options: Iterable[Any]) -> list:
        banned = self.forbidden.get(slot, ())
        return [o for o in options if o not in banned]

    def is_forbidden(self, slot: SlotId, value: Any) -> bool:
        return value in self.forbidden.get(slot, ())

    def copy(self) -> "ConstraintSet":
        return ConstraintSet({slot: set(vals) for slot, vals in self.forbidden.items()})


@dataclass(frozen=True)
class PerturbationConfig:
    n_passes: int = 10
    drop_rate: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_passes < 1:
            raise ValueError("n_passes must be >= 1")
        if not (0.0 <= self.drop_rate < 1.0):
            raise ValueError("drop_rate must be in [0, 1)")


@dataclass(frozen=True)
class ParseContext:
    """Everything a parser may condition on besides the partial parse."""

    example_id: str
    question: str
    table: Table
    mode: str = "wikisql"  # "wikisql" | "spider"


def apply_constraints(slot: SlotId, options: Sequence[Any], probs: Sequence[float], constraints: ConstraintSet) -> Decision:
    """Drop forbidden options and renormalize the rest."""
    kept = [(o, p) for o, p in zip(options, probs) if not constraints.is_forbidden(slot, o)]
    if not kept:
        raise ValueError(f"all options forbidden for slot {slot}")
    return make_decision(slot, [o for o, _ in kept], [p for _, p in kept])


# ---------------------------------------------------------------------------
# Option value <-> JSON codec (scripted configs, transcripts)
# ---------------------------------------------------------------------------


def option_to_json(slot: SlotId, value: Any) -> Any:
    kind = slot.kind
    if kind.endswith(".col") or kind == "groupby.col":
        if isinstance(value, NoCondition):
            return None
        return value.dotted()
    if kind.endswith(".agg"):
        return value.value
    if kind.endswith(".op"):
        return value.value
    if kind.endswith(".val"):
        if isinstance(value, RootValue):
            return None
        if isinstance(value, tuple):
            return [value[0], value[1]]
        return value
    if kind == "where.count":
        return int(value)
    if kind == "where.conn":
        return value.value
    if kind == "orderby.dir":
        return {"dir": value.direction.value, "limit": value.limit}
    if kind == "orderby.limit":
        return value
    raise ValueError(f"no option codec for slot kind {kind}")


def option_from_json(slot: SlotId, raw: Any) -> Any:
    kind = slot.kind
    if kind.endswith(".col") or kind == "groupby.col":
        if raw is None:
            return NO_CONDITION
        return ColumnRef.from_dotted(str(raw))
    if kind.endswith(".agg"):
        return Aggregator(raw)
    if kind.endswith(".op"):
        return Operator(raw)
    if kind.endswith(".val"):
        if raw is None:
            return ROOT
        if isinstance(raw, list):
            return (raw[0], raw[1])
        return raw
    if kind == "where.count":
        return int(raw)
    if kind == "where.conn":
        return Connector(raw)
    if kind == "orderby.dir":
        if isinstance(raw, str):
            return OrderChoice(direction=OrderDir(raw))
        return OrderChoice(direction=OrderDir(raw["dir"]), limit=raw.get("limit"))
    if kind == "orderby.limit":
        return raw
    raise ValueError(f"no option codec for slot kind {kind}")


def option_sort_key(slot: SlotId, value: Any) -> str:
    """Stable lexicographic key used for deterministic tie-breaking."""
    return json.dumps(option_to_json(slot, value), sort_keys=True)


# ---------------------------------------------------------------------------
# Scripted parser
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScriptEntry:
    slot: SlotId
    options: tuple
    probs: tuple
    passes: Optional[tuple] = None


class ScriptedParser:
    """Replays a configured decision sequence per example id.

    Config (JSON): {example_id: [{"slot": str, "options": [...],
    "probs": [...], "passes": [...]?}, ...]}. Option payloads use the
    per-slot JSON encoding of :func:`option_from_json`.
    """

    def __init__(self, scripts: dict):
        self.scripts = scripts

    @classmethod
    def from_config(cls, config: dict) -> "ScriptedParser":
        scripts = {}
        for example_id, entries in config.items():
            parsed = []
            for raw in entries:
                slot = SlotId.parse(raw["slot"])
                options = tuple(option_from_json(slot, o) for o in raw["options"])
                probs = tuple(float(p) for p in raw["probs"])
                passes = tuple(raw["passes"]) if raw.get("passes") else None
                parsed.append(ScriptEntry(slot=slot, options=options, probs=probs, passes=passes))
            scripts[example_id] = tuple(parsed)
        return cls(scripts)

    @classmethod
    def from_file(cls, path: str) -> "ScriptedParser":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_config(json.load(fh))

    def _entries(self, ctx: ParseContext) -> tuple:
        try:
            return self.scripts[ctx.example_id]
        except KeyError:
            raise KeyError(f"no script for example {ctx.example_id!r}") from None

    def next_decision(self, ctx: ParseContext, committed: dict, constraints: ConstraintSet) -> Optional[Decision]:
        for entry in self._entries(ctx):
            if entry.slot not in committed:
                return apply_constraints(entry.slot, entry.options, entry.probs, constraints)
        return None

    def perturbed_passes(
        self, ctx: ParseContext, decision: Decision, committed: dict, config: PerturbationConfig
    ) -> list:
        for entry in self._entries(ctx):
            if entry.slot == decision.slot and entry.passes is not None:
                return list(entry.passes)[: config.n_passes]
        return [decision.chosen_prob] * config.n_passes


# ---------------------------------------------------------------------------
# Heuristic lexical parser
# ---------------------------------------------------------------------------

# Trigger weights are tiered: primary keywords decide outright, weaker
# synonyms leave the default on top (so the prediction is wrong but the
# right option stays near the front of the ranking).
_AGG_BASE = {Aggregator.NONE: 5.0}
_AGG_TRIGGERS = {
    Aggregator.COUNT: (("how many", 9.0), ("number of", 9.0), ("count of", 2.5)),
    Aggregator.AVG: (("average", 9.0), ("mean", 2.5), ("typical", 2.5)),
    Aggregator.MAX: (("maximum", 9.0), ("most", 9.0), ("highest", 9.0), ("largest", 2.5), ("biggest", 2.5), ("greatest", 2.5)),
    Aggregator.MIN: (("minimum", 9.0), ("least", 9.0), ("lowest", 9.0), ("smallest", 2.5), ("fewest", 2.5), ("shortest", 2.5)),
    Aggregator.SUM: (("total", 9.0), ("sum", 9.0), ("combined", 2.5), ("altogether", 2.5)),
}

_OP_BASE = {Operator.EQ: 4.0}
_OP_TRIGGERS = {
    Operator.GT: (
        ("more than", 8.0),
        ("over", 8.0),
        ("greater", 8.0),
        ("older than", 1.5),
        ("taller than", 1.5),
        ("higher than", 1.5),
        ("larger than", 1.5),
        ("longer than", 1.5),
        ("above", 1.5),
        ("exceeding", 1.5),
        ("beyond", 1.5),
    ),
    Operator.LT: (
        ("less than", 8.0),
        ("under", 8.0),
        ("below", 8.0),
        ("younger than", 1.5),
        ("smaller than", 1.5),
        ("shorter than", 1.5),
        ("lower than", 1.5),
        ("fewer than", 1.5),
    ),
}

_OP_TRIGGERS_SPIDER = {
    Operator.GE: (("at least", 8.0), ("or more", 8.0), ("no less than", 8.0)),
    Operator.LE: (("at most", 8.0), ("or fewer", 8.0), ("no more than", 8.0)),
    Operator.NE: (("not equal", 8.0), ("other than", 8.0), ("excluding", 8.0)),
    Operator.LIKE: (("contains", 8.0), ("containing", 8.0), ("like", 8.0)),
    Operator.BETWEEN: (("between", 8.0),),
}

_WIKISQL_OPS = (Operator.EQ, Operator.GT, Operator.LT)
_SPIDER_OPS = (
    Operator.EQ,
    Operator.GT,
    Operator.LT,
    Operator.GE,
    Operator.LE,
    Operator.NE,
    Operator.LIKE,
    Operator.BETWEEN,
)

_GROUPBY_RE = re.compile(r"\b(per|for each|by each|in each)\b")
_ORDERBY_RE = re.compile(r"\b(order|ordered|sort|sorted|rank|ranked|top)\b")
_LIMIT_RE = re.compile(r"\btop (\d+)\b")
_DESC_RE = re.compile(r"\b(descending|decreasing|most|highest|largest|top)\b")
_ASC_RE = re.compile(r"\b(ascending|increasing|alphabetical|lowest|smallest)\b")
_HAVING_RE = re.compile(r"\b(at least|at most|more than|fewer than|having|with over)\b")

_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")
_QUOTED_RE = re.compile(r"'([^']+)'|\"([^\"]+)\"")
_CAP_WORD_RE = re.compile(r"[A-Z][a-z0-9]*")

# Words that open a condition/qualifier clause; the select target is named
# before them, so its scorer only reads the prefix.
_CLAUSE_MARKER_RE = re.compile(r"\b(whose|where|sorted|ordered|ranked|per|grouped)\b")


def _tokens(text: str) -> list:
    return re.findall(r"[a-z0-9]+", text.lower())


def _trigrams(text: str) -> frozenset:
    joined = " ".join(_tokens(text))
    if len(joined) < 3:
        return frozenset((joined,)) if joined else frozenset()
    return frozenset(joined[i : i + 3] for i in range(len(joined) - 2))


def _phrase_present(phrase: str, text: str) -> bool:
    return re.search(r"\b" + re.escape(phrase) + r"\b", text) is not None


def _parse_number(text: str) -> Any:
    value = float(text)
    return int(value) if value.is_integer() else value


def extract_value_spans(question: str, table: Table) -> list:
    """Candidate literals: numbers, quoted spans, capitalized runs, and
    table cell values occurring verbatim in the question. Order is stable.
    Numbers naming a "top N" result limit are not condition literals and
    are blanked out first."""
    for m in reversed(list(_LIMIT_RE.finditer(question.lower()))):
        start, end = m.span(1)
        question = question[:start] + " " * (end - start) + question[end:]

    spans: list = []
    seen: set = set()

    def add(value: Any) -> None:
        key = (type(value).__name__, value)
        if key not in seen:
            seen.add(key)
            spans.append(value)

    for m in _NUMBER_RE.finditer(question):
        add(_parse_number(m.group(0)))
    for m in _QUOTED_RE.finditer(question):
        add(m.group(1) or m.group(2))

    words = question.split()
    run: list = []
    for word in words:
        stripped = re.sub(r"[^A-Za-z0-9]", "", word)
        if stripped and _CAP_WORD_RE.fullmatch(stripped):
            run.append(stripped)
        else:
            if run:
                add(" ".join(run))
            run = []
    if run:
        add(" ".join(run))

    q_tokens = _tokens(question)
    q_text = " ".join(q_tokens)
    for col_idx, col in enumerate(table.columns):
        for row in table.rows:
            cell = row[col_idx]
            if col.type == "text":
                cell_tokens = " ".join(_tokens(str(cell)))
                if cell_tokens and _phrase_present(cell_tokens, q_text):
                    add(cell)
            else:
                if str(cell) in q_tokens:
                    add(cell)
    return spans


class HeuristicParser:
    """Keyword/overlap scorer standing in for a learned stepwise model.

    All scores decompose into additive feature contributions so that
    perturbation passes can zero individual features; probabilities come
    from exponential normalization at temperature ``tau``.
    """

    def __init__(self, tau: float = 1.0):
        self.tau = tau
        self._span_cache: dict = {}
        self._breakdown_cache: dict = {}

    # -- slot planning -----------------------------------------------------

    def _where_count(self, committed: dict) -> Optional[int]:
        value = committed.get(SlotId("where.count"))
        return None if value is None else int(value)

    def plan_next_slot(self, ctx: ParseContext, committed: dict) -> Optional[SlotId]:
        for slot in (SlotId("select.col"), SlotId("select.agg"), SlotId("where.count")):
            if slot not in committed:
                return slot
        count = self._where_count(committed)
        for i in range(count):
            for kind in ("where.col", "where.op", "where.val"):
                slot = SlotId(kind, i)
                if slot not in committed:
                    return slot
        if ctx.mode != "spider":
            return None

        question = ctx.question.lower()
        for i in range(count - 1):
            slot = SlotId("where.conn", i)
            if slot not in committed:
                return slot
        if _GROUPBY_RE.search(question):
            if SlotId("groupby.col") not in committed:
                return SlotId("groupby.col")
            having_col = SlotId("having.col", 0)
            if having_col not in committed:
                return having_col
            if not isinstance(committed[having_col], NoCondition):
                for kind in ("having.agg", "having.op", "having.val"):
                    slot = SlotId(kind, 0)
                    if slot not in committed:
                        return slot
        if _ORDERBY_RE.search(question):
            for kind in ("orderby.col", "orderby.agg", "orderby.dir"):
                slot = SlotId(kind)
                if slot not in committed:
                    return slot
        return None

    # -- feature scoring ---------------------------------------------------

    def _spans(self, ctx: ParseContext) -> list:
        key = (ctx.example_id, ctx.question, ctx.table.id)
        if key not in self._span_cache:
            self._span_cache[key] = extract_value_spans(ctx.question, ctx.table)
        return self._span_cache[key]

    def _committed_cols(self, committed: dict) -> list:
        cols = []
        for slot, value in committed.items():
            if slot.kind.endswith(".col") and isinstance(value, ColumnRef):
                cols.append(value)
        return cols

    def _effective_text(self, ctx: ParseContext, committed: dict, slot_kind: str = "") -> str:
        """Question text with tokens already claimed by committed column
        slots removed (first occurrence each), so later column decisions
        condition on the corrected prefix. The select target additionally
        reads only the part before the first condition marker."""
        question = ctx.question
        if slot_kind == "select.col":
            m = _CLAUSE_MARKER_RE.search(question.lower())
            if m:
                question = question[: m.start()]
        remaining = _tokens(question)
        for col in self._committed_cols(committed):
            for tok in _tokens(col.name):
                if tok in remaining:
                    remaining.remove(tok)
        return " ".join(remaining)

    def _column_features(self, text: str, columns: Sequence[ColumnRef]) -> dict:
        text_tris = _trigrams(text)
        text_tokens = _tokens(text)
        text_toks = set(text_tokens)
        out = {}
        for col in columns:
            tris = _trigrams(col.name)
            overlap = len(tris & text_tris) / max(1, len(tris))
            col_toks = _tokens(col.name)
            whole = 5.0 if col_toks and all(t in text_toks for t in col_toks) else 0.0
            feats = [2.0 * overlap, whole]
            # Mention position: columns named earlier fill earlier slots.
            positions = [text_tokens.index(t) for t in col_toks if t in text_toks]
            if positions and text_tokens:
                feats.append(2.0 * (1.0 - min(positions) / len(text_tokens)))
            out[col] = feats
        return out

    def _trigger_features(
        self,
        trigger_text: str,
        options: Sequence[Any],
        triggers: dict,
        base: dict,
        overlap_text: Optional[str] = None,
    ) -> dict:
        # The last feature is a small trigram-overlap term against the
        # option's trigger vocabulary; it varies smoothly with the question
        # wording instead of flipping decisions. ``overlap_text`` lets a
        # scoped trigger search keep the smooth term on the whole question.
        q_tris = _trigrams(overlap_text if overlap_text is not None else trigger_text)
        out = {}
        for opt in options:
            feats = [base.get(opt, 0.0)]
            phrase_tris: set = set()
            for phrase, weight in triggers.get(opt, ()):
                phrase_tris |= _trigrams(phrase)
                if _phrase_present(phrase, trigger_text):
                    feats.append(weight)
            if phrase_tris and q_tris:
                feats.append(2.0 * len(phrase_tris & q_tris) / len(q_tris))
            out[opt] = feats
        return out

    def _condition_col(self, slot: SlotId, committed: dict) -> Optional[ColumnRef]:
        if slot.kind in ("where.op", "where.val"):
            value = committed.get(SlotId("where.col", slot.index))
        elif slot.kind in ("having.op", "having.val"):
            value = committed.get(SlotId("having.col", slot.index))
        else:
            value = None
        return value if isinstance(value, ColumnRef) else None

    def _condition_scope(self, ctx: ParseContext, cond_col: Optional[ColumnRef]) -> str:
        """The clause segment an operator trigger must appear in: from the
        condition column's mention to the next connective/clause marker.
        Keeps one condition's phrasing from leaking into another's."""
        question = ctx.question.lower()
        if cond_col is None:
            return question
        tokens = _tokens(question)
        positions = [tokens.index(t) for t in _tokens(cond_col.name) if t in tokens]
        if not positions:
            return question
        start = min(positions)
        stop = len(tokens)
        for j in range(max(positions) + 1, len(tokens)):
            if tokens[j] in ("whose", "where", "and", "or"):
                stop = j
                break
        return " ".join(tokens[start:stop])

    def _token_position(self, tokens: list, value: Any) -> Optional[int]:
        want = _tokens(str(value))
        if not want:
            return None
        try:
            return tokens.index(want[0])
        except ValueError:
            return None

    def _value_features(self, ctx: ParseContext, cond_col: Optional[ColumnRef]) -> dict:
        spans = self._spans(ctx)
        table = ctx.table
        col_cells: set = set()
        col_type = None
        if cond_col is not None:
            try:
                idx = table.column_index(cond_col.name)
                col_type = table.columns[idx].type
                col_cells = {row[idx] for row in table.rows}
            except Exception:
                col_cells = set()

        # Values are tied to their condition by proximity: the span closest
        # to where the condition's column is mentioned scores highest.
        q_tokens = _tokens(ctx.question)
        col_pos = None
        if cond_col is not None:
            positions = []
            for tok in _tokens(cond_col.name):
                pos = self._token_position(q_tokens, tok)
                if pos is not None:
                    positions.append(pos)
            col_pos = min(positions) if positions else None

        out = {}
        candidates = spans or sorted({str(c) for c in col_cells})[:8] or [""]
        for value in candidates:
            feats = [1.0 if spans else 0.5]
            if value in col_cells:
                feats.append(4.0)
            if col_type == "number" and isinstance(value, (int, float)):
                feats.append(0.5)
            elif col_type == "text" and isinstance(value, str):
                feats.append(0.5)
            if col_pos is not None and q_tokens:
                span_pos = self._token_position(q_tokens, value)
                if span_pos is not None:
                    # A value normally follows its column mention; spans
                    # before it are discounted.
                    delta = span_pos - col_pos
                    dist = delta if delta >= 0 else -delta + 2.0
                    feats.append(2.0 * max(0.0, 1.0 - dist / len(q_tokens)))
            out[value] = feats
        return out

    def feature_breakdown(self, ctx: ParseContext, slot: SlotId, committed: dict) -> dict:
        """Per-option additive feature contributions, computed fresh."""
        kind = slot.kind
        question = ctx.question.lower()
        columns = [ColumnRef(c.name) for c in ctx.table.columns]

        if kind in ("select.col", "where.col", "groupby.col", "orderby.col"):
            return self._column_features(self._effective_text(ctx, committed, kind), columns)

        if kind == "having.col":
            feats = self._column_features(self._effective_text(ctx, committed, kind), columns)
            none_base = 0.5 if _HAVING_RE.search(question) else 8.0
            out = {NO_CONDITION: [none_base]}
            out.update(feats)
            return out

        if kind in ("select.agg", "having.agg", "orderby.agg"):
            return self._trigger_features(question, list(Aggregator), _AGG_TRIGGERS, _AGG_BASE)

        if kind in ("where.op", "having.op"):
            if ctx.mode == "spider":
                options: tuple = _SPIDER_OPS
                triggers = {**_OP_TRIGGERS, **_OP_TRIGGERS_SPIDER}
            else:
                options = _WIKISQL_OPS
                triggers = _OP_TRIGGERS
            scope = self._condition_scope(ctx, self._condition_col(slot, committed))
            return self._trigger_features(scope, list(options), triggers, _OP_BASE, overlap_text=question)

        if kind in ("where.val", "having.val"):
            return self._value_features(ctx, self._condition_col(slot, committed))

        if kind == "where.count":
            detected_spans = self._spans(ctx)
            if ctx.mode == "spider":
                # Literals mentioned after a grouping marker belong to the
                # HAVING clause, not to WHERE conditions.
                m = _GROUPBY_RE.search(question)
                if m:
                    prefix_tokens = set(_tokens(question[: m.start()]))
                    detected_spans = [
                        v for v in detected_spans if (_tokens(str(v)) or [""])[0] in prefix_tokens
                    ]
            detected = min(4, len(detected_spans))
            return {k: [3.0 if k == detected else 0.0, -1.0 * abs(k - detected)] for k in range(5)}

        if kind == "where.conn":
            or_hit = _phrase_present("or", question) and not _phrase_present("and", question)
            return {
                Connector.AND: [4.0 if not or_hit else 0.5],
                Connector.OR: [4.0 if or_hit else 0.5],
            }

        if kind == "orderby.dir":
            limit = None
            m = _LIMIT_RE.search(question)
            if m:
                limit = int(m.group(1))
            desc_hit = _DESC_RE.search(question) is not None
            asc_hit = _ASC_RE.search(question) is not None
            out = {}
            for direction in (OrderDir.ASC, OrderDir.DESC):
                base = 0.5 if direction is OrderDir.ASC else 0.0
                hit = 4.0 if (direction is OrderDir.DESC and desc_hit) or (direction is OrderDir.ASC and asc_hit) else 0.0
                limits = [None] if limit is None else [None, limit]
                for lim in limits:
                    feats = [base, hit]
                    if limit is not None and lim == limit:
                        feats.append(4.0)
                    out[OrderChoice(direction=direction, limit=lim)] = feats
            return out

        raise ValueError(f"heuristic parser cannot score slot kind {kind}")

    def _cache_key(self, ctx: ParseContext, slot: SlotId, committed: dict) -> tuple:
        cond_col = self._condition_col(slot, committed)
        cols = tuple(c.dotted() for c in self._committed_cols(committed))
        return (ctx.example_id, ctx.question, ctx.table.id, ctx.mode, str(slot), cond_col, cols)

    def _scored_options(self, ctx: ParseContext, slot: SlotId, committed: dict) -> tuple:
        key = self._cache_key(ctx, slot, committed)
        cached = self._breakdown_cache.get(key)
        if cached is None:
            breakdown = self.feature_breakdown(ctx, slot, committed)
            options = sorted(breakdown, key=lambda o: option_sort_key(slot, o))
            cached = (tuple(options), tuple(tuple(breakdown[o]) for o in options))
            self._breakdown_cache[key] = cached
        return cached

    def _softmax(self, scores: Sequence[float]) -> list:
        peak = max(scores)
        weights = [math.exp((s - peak) / self.tau) for s in scores]
        total = sum(weights)
        return [w / total for w in weights]

    def next_decision(self, ctx: ParseContext, committed: dict, constraints: ConstraintSet) -> Optional[Decision]:
        slot = self.plan_next_slot(ctx, committed)
        if slot is None:
            return None
        options, features = self._scored_options(ctx, slot, committed)
        probs = self._softmax([sum(f) for f in features])
        return apply_constraints(slot, options, probs, constraints)

    def perturbed_passes(
        self, ctx: ParseContext, decision: Decision, committed: dict, config: PerturbationConfig
    ) -> list:
        """Prediction probabilities of the chosen option over ``n_passes``
        randomized scorings, each feature contribution zeroed independently
        with probability ``drop_rate``. Fully seeded and reproducible."""
        options, features = self._scored_options(ctx, decision.slot, committed)
        index = {o: i for i, o in enumerate(options)}
        live = [index[o] for o in decision.options]
        chosen_pos = decision.chosen

        passes = []
        for pass_i in range(config.n_passes):
            rng = random.Random(f"{config.seed}|{ctx.example_id}|{decision.slot}|{pass_i}")
            scores = []
            for opt_i in live:
                score = 0.0
                for feat in features[opt_i]:
                    if rng.random() >= config.drop_rate:
                        score += feat
                scores.append(score)
            probs = self._softmax(scores)
            passes.append(probs[chosen_pos])
        return passes


def heuristic_features(
    question: str,
    table: Table,
    slot: SlotId,
    committed: Optional[dict] = None,
    mode: str = "wikisql",
    parser: Optional[HeuristicParser] = None,
) -> dict:
    """Per-option heuristic scores (summed feature contributions) for one
    slot, outside any session."""
    parser = parser or HeuristicParser()
    ctx = ParseContext(example_id="adhoc", question=question, table=table, mode=mode)
    breakdown = parser.feature_breakdown(ctx, slot, committed or {})
    return {option: sum(features) for option, features in breakdown.items()}


def parse_unassisted(parser: Any, ctx: ParseContext) -> dict:
    """Commit every argmax with no constraints; the no-interaction baseline."""
    committed: dict = {}
    constraints = ConstraintSet()
    while True:
        decision = parser.next_decision(ctx, committed, constraints)
        if decision is None:
            return committed
        committed[decision.slot] = decision.chosen_value
