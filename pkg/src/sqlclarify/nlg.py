"""Template-grammar question generation.

Every askable slot maps to exactly one rule given its clause context and
the class of the asked value (coverage is validated at load time and
exercised in tests). Rules and the phrase lexicon live in JSON data files
next to this module so they can be edited without touching code.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Any, Optional

from .parser import NoCondition, OrderChoice
from .sqlast import Aggregator, ColumnRef, Connector, Operator, OrderDir, RootValue, SlotId

MODES = ("wikisql", "spider")


class NlgError(ValueError):
    """Raised for elements outside the lexicon or slots with no rule."""


@dataclass(frozen=True)
class LexiconEntry:
    phrase: str
    category: str  # "Agg" | "Op" | "Order"
    payload: str


@dataclass(frozen=True)
class QRule:
    id: str
    template: str
    slots: tuple
    modes: tuple
    value: str  # "any" | "named" | "none" | "literal" | "root" | "and" | "or" | "no_condition"


@dataclass(frozen=True)
class QuestionContext:
    """Clause context the templates draw on beyond the asked value itself."""

    table_name: str
    multi_table: bool = False
    col: Optional[ColumnRef] = None  # clause column (select/condition/order target)
    op: Optional[Operator] = None  # committed operator, for value questions
    group_col: Optional[ColumnRef] = None
    order_agg: Optional[Aggregator] = None
    col_i: Optional[ColumnRef] = None  # connector questions: columns of the
    col_j: Optional[ColumnRef] = None  # two conditions being joined


def _load_json(name: str) -> dict:
    return json.loads(resources.files("sqlclarify.data").joinpath(name).read_text(encoding="utf-8"))


class Lexicon:
    def __init__(self, entries: list):
        self.entries = tuple(entries)
        self._by_payload = {}
        self._by_phrase = {}
        for entry in entries:
            key = (entry.category, entry.payload)
            if key in self._by_payload:
                raise NlgError(f"duplicate lexicon entry for {key}")
            self._by_payload[key] = entry
            self._by_phrase[(entry.category, entry.phrase)] = entry

    @classmethod
    def load(cls) -> "Lexicon":
        raw = _load_json("lexicon.json")
        return cls([LexiconEntry(**e) for e in raw["entries"]])

    def phrase(self, category: str, payload: str) -> str:
        try:
            return self._by_payload[(category, payload)].phrase
        except KeyError:
            raise NlgError(f"no lexicon phrase for {category}[{payload}]") from None

    def payload(self, category: str, phrase: str) -> str:
        try:
            return self._by_phrase[(category, phrase)].payload
        except KeyError:
            raise NlgError(f"no lexicon payload for {category} phrase {phrase!r}") from None


class Grammar:
    def __init__(self, rules: list, order_limit_suffix: str):
        self.rules = tuple(rules)
        self.order_limit_suffix = order_limit_suffix
        self._index = {}
        for rule in rules:
            for slot in rule.slots:
                for mode in rule.modes:
                    key = (slot, mode, rule.value)
                    if key in self._index:
                        raise NlgError(f"rules {self._index[key].id} and {rule.id} both apply to {key}")
                    self._index[key] = rule

    @classmethod
    def load(cls) -> "Grammar":
        raw = _load_json("grammar.json")
        rules = [
            QRule(
                id=r["id"],
                template=r["template"],
                slots=tuple(r["applies_to"]["slots"]),
                modes=tuple(r["applies_to"]["modes"]),
                value=r["applies_to"]["value"],
            )
            for r in raw["rules"]
        ]
        return cls(rules, raw["order_limit_suffix"])

    def find(self, slot_kind: str, mode: str, value_class: str) -> QRule:
        rule = self._index.get((slot_kind, mode, value_class))
        if rule is None and value_class not in ("any",):
            rule = self._index.get((slot_kind, mode, "any"))
        if rule is None:
            raise NlgError(f"no question rule for slot {slot_kind} (mode={mode}, value={value_class})")
        return rule


class QuestionGenerator:
    def __init__(self, lexicon: Optional[Lexicon] = None, grammar: Optional[Grammar] = None):
        self.lexicon = lexicon or Lexicon.load()
        self.grammar = grammar or Grammar.load()

    # -- element descriptions ------------------------------------------------

    def describe(self, element: Any, context: Optional[QuestionContext] = None) -> str:
        """NL description of a column, aggregator, operator or direction."""
        if isinstance(element, ColumnRef):
            if context is not None and context.multi_table:
                table = element.table or context.table_name
                return f'"{element.name}" in table "{table}"'
            return f'"{element.name}"'
        if isinstance(element, Aggregator):
            if element is Aggregator.NONE:
                raise NlgError("aggregator 'none' has no lexicon phrase; a dedicated rule covers it")
            return self.lexicon.phrase("Agg", element.value)
        if isinstance(element, Operator):
            return self.lexicon.phrase("Op", element.value)
        if isinstance(element, OrderDir):
            return self.lexicon.phrase("Order", element.value)
        raise NlgError(f"cannot describe element {element!r}")

    def describe_order(self, choice: OrderChoice) -> str:
        phrase = self.lexicon.phrase("Order", choice.direction.value)
        if choice.limit is not None:
            phrase += self.grammar.order_limit_suffix.format(limit=choice.limit)
        return phrase

    def _render_literal(self, value: Any) -> str:
        if isinstance(value, tuple):
            return f"{self._render_literal(value[0])} and {self._render_literal(value[1])}"
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            if isinstance(value, float) and value.is_integer():
                return str(int(value))
            return str(value)
        return f'"{value}"'

    # -- question derivation ---------------------------------------------------

    def value_class(self, slot: SlotId, value: Any) -> str:
        kind = slot.kind
        if kind.endswith(".agg"):
            return "none" if value is Aggregator.NONE else "named"
        if kind == "having.col":
            return "no_condition" if isinstance(value, NoCondition) else "named"
        if kind.endswith(".val"):
            return "root" if isinstance(value, RootValue) else "literal"
        if kind == "where.conn":
            return "and" if value is Connector.AND else "or"
        return "any"

    def generate_question(self, slot: SlotId, value: Any, context: QuestionContext, mode: str) -> str:
        if mode not in MODES:
            raise NlgError(f"unknown dataset mode {mode!r}")
        if not slot.askable:
            raise NlgError(f"slot {slot} is never asked")
        rule = self.grammar.find(slot.kind, mode, self.value_class(slot, value))
        holes = self._holes(rule, slot, value, context)
        return rule.template.format(**holes)

    def _holes(self, rule: QRule, slot: SlotId, value: Any, context: QuestionContext) -> dict:
        kind = slot.kind
        holes: dict = {}
        need = rule.template

        if "{col}" in need:
            if kind.endswith(".col"):
                col = value if isinstance(value, ColumnRef) else context.col
            else:
                col = context.col
            if col is None:
                raise NlgError(f"rule {rule.id}: missing clause column for {slot}")
            holes["col"] = self.describe(col, context)
        if "{agg}" in need:
            agg = value if isinstance(value, Aggregator) else context.order_agg
            holes["agg"] = self.describe(agg, context)
        if "{op}" in need:
            op = value if isinstance(value, Operator) else context.op
            if op is None:
                raise NlgError(f"rule {rule.id}: missing operator for {slot}")
            holes["op"] = self.describe(op, context)
        if "{val}" in need:
            holes["val"] = self._render_literal(value)
        if "{tab}" in need:
            holes["tab"] = f'"{context.table_name}"'
        if "{col_g}" in need:
            if context.group_col is None:
                raise NlgError(f"rule {rule.id}: missing group column for {slot}")
            holes["col_g"] = self.describe(context.group_col, context)
        if "{col_i}" in need or "{col_j}" in need:
            if context.col_i is None or context.col_j is None:
                raise NlgError(f"rule {rule.id}: missing condition columns for {slot}")
            holes["col_i"] = self.describe(context.col_i, context)
            holes["col_j"] = self.describe(context.col_j, context)
        if "{target}" in need:
            if context.col is None:
                raise NlgError(f"rule {rule.id}: missing order target for {slot}")
            target = self.describe(context.col, context)
            if context.order_agg is not None and context.order_agg is not Aggregator.NONE:
                target = f"{self.describe(context.order_agg, context)} {target}"
            holes["target"] = target
        if "{order}" in need:
            choice = value if isinstance(value, OrderChoice) else None
            if choice is None:
                raise NlgError(f"rule {rule.id}: expected an order choice for {slot}")
            holes["order"] = self.describe_order(choice)
        return holes
