"""The interaction loop: ask, incorporate feedback, re-predict, commit.

A session walks the base parser's slot sequence. Each decision is either
committed silently (non-askable slot, confident prediction, or a departed
user) or validated with up to K+1 binary questions: the original
prediction first, then up to K alternatives after negations. If the user
negates everything, the original prediction is kept. Negating a value adds
it to the slot's forbidden set and the parser re-predicts the same slot
with the remaining options renormalized; committed slots are never
revised.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .detector import Detector, DetectorConfig
from .minidb import Table
from .nlg import QuestionContext, QuestionGenerator
from .parser import (
    ConstraintSet,
    Decision,
    NoCondition,
    OrderChoice,
    ParseContext,
    option_from_json,
    option_to_json,
)
from .sqlast import (
    Aggregator,
    ColumnRef,
    Condition,
    Connector,
    Operator,
    OrderBy,
    OrderDir,
    SlotId,
    SqlQuery,
    render_value,
)

ANSWERS = ("yes", "no", "left")


@dataclass(frozen=True)
class AgentConfig:
    k_alternatives: int = 3
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    mode: str = "wikisql"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k_alternatives < 0:
            raise ValueError("k_alternatives must be >= 0")
        if self.mode not in ("wikisql", "spider"):
            raise ValueError(f"unknown dataset mode {self.mode!r}")


@dataclass
class CommittedSlot:
    value: Any
    prob: float
    passes: Optional[list] = None


@dataclass
class AgentState:
    """Partial parse plus the metadata needed for detection and replay."""

    committed: dict = field(default_factory=dict)  # SlotId -> CommittedSlot
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    question_counts: dict = field(default_factory=dict)  # SlotId -> int
    terminal: bool = False

    def values(self) -> dict:
        return {slot: c.value for slot, c in self.committed.items()}

    def value(self, slot: SlotId) -> Any:
        entry = self.committed.get(slot)
        return entry.value if entry else None


@dataclass
class TranscriptEvent:
    slot: SlotId
    value: Any
    question: str
    answer: str
    category: Optional[str] = None  # right | wrong_solved | wrong_unsolved

    def to_dict(self) -> dict:
        return {
            "slot": str(self.slot),
            "value": option_to_json(self.slot, self.value),
            "question": self.question,
            "answer": self.answer,
            "category": self.category,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TranscriptEvent":
        slot = SlotId.parse(raw["slot"])
        return cls(
            slot=slot,
            value=option_from_json(slot, raw["value"]),
            question=raw["question"],
            answer=raw["answer"],
            category=raw.get("category"),
        )


@dataclass
class Transcript:
    example_id: str
    seed: int
    events: list = field(default_factory=list)
    early_exit: bool = False
    final_query: Optional[SqlQuery] = None
    started_at: float = 0.0
    finished_at: float = 0.0

    @property
    def n_questions(self) -> int:
        return len(self.events)

    def to_json_line(self) -> str:
        from .sqlast import query_to_dict

        return json.dumps(
            {
                "example_id": self.example_id,
                "seed": self.seed,
                "early_exit": self.early_exit,
                "events": [e.to_dict() for e in self.events],
                "final": query_to_dict(self.final_query) if self.final_query else None,
                "started_at": self.started_at,
                "finished_at": self.finished_at,
            },
            separators=(", ", ": "),
        )


@dataclass
class PendingAsk:
    decision: Decision
    original: Any
    question: str
    questions_asked: int = 1


def transition(state: AgentState, feedback: str, decision: Decision, k: int) -> str:
    """Apply one yes/no answer about the pending decision to the state.

    Returns what the loop must do next: "committed" (move on) or
    "re-predict" (same slot, with the negated value now forbidden).
    Committing is done by the caller via :func:`commit` so it can attach
    metadata uniformly.
    """
    if feedback not in ("yes", "no"):
        raise ValueError(f"invalid feedback {feedback!r}")
    slot = decision.slot
    asked = state.question_counts.get(slot, 0)
    if asked == 0:
        raise ValueError(f"feedback for {slot} without a pending question")
    if feedback == "yes":
        return "committed"
    state.constraints.forbid(slot, decision.chosen_value)
    if asked >= k + 1:
        return "committed"  # original plus K alternatives all negated
    remaining = state.constraints.allowed(slot, decision.options)
    if not remaining:
        return "committed"
    return "re-predict"


@dataclass
class SessionResult:
    query: SqlQuery
    transcript: Transcript


class InteractiveSession:
    """One strictly sequential clarification session.

    Drives the parser until it needs an answer (``pending`` is set) or the
    parse is complete (``done``). ``answer()`` feeds one yes/no back in;
    ``abandon()`` finishes the parse silently (user departure).
    """

    def __init__(
        self,
        parser: Any,
        nlg: QuestionGenerator,
        table: Table,
        question: str,
        config: AgentConfig,
        example_id: str = "live",
        leave_signal: Optional[Callable[[], bool]] = None,
        on_commit: Optional[Callable[[SlotId, Any, bool], None]] = None,
    ):
        self.parser = parser
        self.detector = Detector(config.detector)
        self.nlg = nlg
        self.table = table
        self.config = config
        self.ctx = ParseContext(example_id=example_id, question=question, table=table, mode=config.mode)
        self.state = AgentState()
        self.leave_signal = leave_signal
        self.on_commit = on_commit
        self.pending: Optional[PendingAsk] = None
        self.final_query: Optional[SqlQuery] = None
        self.transcript = Transcript(example_id=example_id, seed=config.seed, started_at=time.time())
        self._advance()

    @property
    def done(self) -> bool:
        return self.final_query is not None

    def partial_sql(self) -> str:
        return render_partial(self.state.values(), self.table)

    def _commit(self, decision: Decision, value: Any, passes: Optional[list], was_asked: bool) -> None:
        self.state.committed[decision.slot] = CommittedSlot(value=value, prob=decision.chosen_prob, passes=passes)
        if self.on_commit is not None:
            self.on_commit(decision.slot, value, was_asked)

    def _finish(self) -> None:
        self.state.terminal = True
        self.final_query = assemble_query(self.state.values(), self.table)
        self.transcript.final_query = self.final_query
        self.transcript.finished_at = time.time()

    def _user_gone(self) -> bool:
        return self.transcript.early_exit or (self.leave_signal is not None and self.leave_signal())

    def _advance(self) -> None:
        while True:
            decision = self.parser.next_decision(self.ctx, self.state.values(), self.state.constraints)
            if decision is None:
                self._finish()
                return
            passes = None
            if self._user_gone():
                self.transcript.early_exit = True
                self._commit(decision, decision.chosen_value, None, was_asked=False)
                continue
            if self.detector.needs_passes and decision.slot.askable:
                passes = self.parser.perturbed_passes(
                    self.ctx, decision, self.state.values(), self.detector.config.perturbation
                )
            ask, _score = self.detector.should_ask(decision, passes)
            if not ask:
                self._commit(decision, decision.chosen_value, passes, was_asked=False)
                continue
            self.state.question_counts[decision.slot] = 1
            self.pending = PendingAsk(
                decision=decision,
                original=decision.chosen_value,
                question=self._question_for(decision),
            )
            return

    def _question_for(self, decision: Decision) -> str:
        context = build_question_context(decision.slot, self.state.values(), self.table)
        return self.nlg.generate_question(decision.slot, decision.chosen_value, context, self.config.mode)

    def answer(self, feedback: str) -> None:
        if self.pending is None:
            raise ValueError("no pending question")
        if feedback not in ANSWERS:
            raise ValueError(f"invalid answer {feedback!r}")
        pending = self.pending
        self.transcript.events.append(
            TranscriptEvent(
                slot=pending.decision.slot,
                value=pending.decision.chosen_value,
                question=pending.question,
                answer=feedback,
            )
        )
        if feedback == "left":
            self.transcript.early_exit = True
            self.pending = None
            self._commit(pending.decision, pending.decision.chosen_value, None, was_asked=False)
            self._advance()
            return

        outcome = transition(self.state, feedback, pending.decision, self.config.k_alternatives)
        if outcome == "committed":
            value = pending.decision.chosen_value if feedback == "yes" else pending.original
            self._commit(pending.decision, value, None, was_asked=True)
            self.pending = None
            self._advance()
            return

        decision = self.parser.next_decision(self.ctx, self.state.values(), self.state.constraints)
        if decision is None or decision.slot != pending.decision.slot:
            raise RuntimeError(f"parser did not re-predict pending slot {pending.decision.slot}")
        count = self.state.question_counts[decision.slot] + 1
        self.state.question_counts[decision.slot] = count
        self.pending = PendingAsk(
            decision=decision,
            original=pending.original,
            question=self._question_for(decision),
            questions_asked=count,
        )

    def abandon(self) -> None:
        """Finish the session without further questions (user departure)."""
        self.transcript.early_exit = True
        if self.pending is not None:
            pending = self.pending
            self.pending = None
            self._commit(pending.decision, pending.decision.chosen_value, None, was_asked=False)
        self._advance()


def run_session(
    parser: Any,
    nlg: QuestionGenerator,
    answerer: Any,
    table: Table,
    question: str,
    config: AgentConfig,
    example_id: str = "session",
) -> SessionResult:
    """Drive a full session against an answer channel.

    ``answerer`` is called as ``answerer(slot, value, question_text)`` and
    returns "yes", "no" or "left". Optional attributes: ``departed`` (the
    session stops asking once true) and ``on_commit(slot, value, was_asked)``
    (observes every committed component).
    """
    leave_signal = None
    if hasattr(answerer, "departed"):
        leave_signal = lambda: bool(answerer.departed)
    on_commit = getattr(answerer, "on_commit", None)

    session = InteractiveSession(
        parser,
        nlg,
        table,
        question,
        config,
        example_id=example_id,
        leave_signal=leave_signal,
        on_commit=on_commit,
    )
    while not session.done:
        pending = session.pending
        assert pending is not None
        feedback = answerer(pending.decision.slot, pending.decision.chosen_value, pending.question)
        session.answer(feedback)
    return SessionResult(query=session.final_query, transcript=session.transcript)


# ---------------------------------------------------------------------------
# Partial-parse plumbing shared by the session machinery
# ---------------------------------------------------------------------------


def _condition_from(values: dict, clause: str, index: int) -> Optional[Condition]:
    col = values.get(SlotId(f"{clause}.col", index))
    if col is None or isinstance(col, NoCondition):
        return None
    op = values.get(SlotId(f"{clause}.op", index))
    val = values.get(SlotId(f"{clause}.val", index))
    if op is None or val is None:
        raise ValueError(f"incomplete {clause} condition {index}: col committed without op/val")
    conn = values.get(SlotId("where.conn", index), Connector.AND) if clause == "where" else Connector.AND
    agg = None
    if clause == "having":
        agg = values.get(SlotId("having.agg", index))
        if agg is Aggregator.NONE:
            agg = None
    return Condition(col=col, op=op, value=val, conn=conn, agg=agg)


def assemble_query(values: dict, table: Table) -> SqlQuery:
    """Build the full query from committed slot values."""
    select_col = values.get(SlotId("select.col"))
    if select_col is None:
        raise ValueError("cannot assemble a query without select.col")
    select_agg = values.get(SlotId("select.agg"), Aggregator.NONE)

    where = []
    i = 0
    while SlotId("where.col", i) in values:
        cond = _condition_from(values, "where", i)
        if cond is not None:
            where.append(cond)
        i += 1

    group_col = values.get(SlotId("groupby.col"))
    group_by = (group_col,) if isinstance(group_col, ColumnRef) else ()

    having = []
    j = 0
    while SlotId("having.col", j) in values:
        cond = _condition_from(values, "having", j)
        if cond is not None:
            having.append(cond)
        j += 1

    order_by = None
    order_col = values.get(SlotId("orderby.col"))
    if isinstance(order_col, ColumnRef):
        choice = values.get(SlotId("orderby.dir"), OrderChoice(direction=OrderDir.ASC))
        agg = values.get(SlotId("orderby.agg"))
        if agg is Aggregator.NONE:
            agg = None
        limit = values.get(SlotId("orderby.limit"), choice.limit)
        order_by = OrderBy(col=order_col, direction=choice.direction, agg=agg, limit=limit)

    return SqlQuery(
        select_agg=select_agg,
        select_col=select_col,
        where=tuple(where),
        group_by=group_by,
        having=tuple(having) if group_by else (),
        order_by=order_by,
        table_refs=(table.id,),
    )


def render_partial(values: dict, table: Table) -> str:
    """Best-effort SQL text for an incomplete parse (transcript display)."""
    parts = []
    select_col = values.get(SlotId("select.col"))
    agg = values.get(SlotId("select.agg"))
    if select_col is not None:
        target = select_col.dotted()
        if agg is not None and agg is not Aggregator.NONE:
            target = f"{agg.value}({target})"
        parts.append(f"SELECT {target} FROM {table.id}")
    else:
        parts.append(f"SELECT ? FROM {table.id}")
    conds = []
    i = 0
    while SlotId("where.col", i) in values:
        col = values[SlotId("where.col", i)]
        op = values.get(SlotId("where.op", i))
        val = values.get(SlotId("where.val", i))
        piece = col.dotted()
        if op is not None:
            piece += f" {op.value}"
        if val is not None:
            piece += f" {render_value(val)}"
        conds.append(piece)
        i += 1
    if conds:
        parts.append("WHERE " + " AND ".join(conds))
    group_col = values.get(SlotId("groupby.col"))
    if isinstance(group_col, ColumnRef):
        parts.append(f"GROUP BY {group_col.dotted()}")
    order_col = values.get(SlotId("orderby.col"))
    if isinstance(order_col, ColumnRef):
        parts.append(f"ORDER BY {order_col.dotted()}")
    return " ".join(parts)


def build_question_context(slot: SlotId, values: dict, table: Table) -> QuestionContext:
    """Assemble the clause context a question template needs."""
    kind = slot.kind
    col: Optional[ColumnRef] = None
    op: Optional[Operator] = None
    if kind == "select.agg":
        col = values.get(SlotId("select.col"))
    elif kind in ("where.op", "where.val"):
        col = values.get(SlotId("where.col", slot.index))
        if kind == "where.val":
            op = values.get(SlotId("where.op", slot.index))
    elif kind in ("having.agg", "having.op", "having.val"):
        col = values.get(SlotId("having.col", slot.index))
        if kind == "having.val":
            op = values.get(SlotId("having.op", slot.index))
    elif kind in ("orderby.agg", "orderby.dir"):
        col = values.get(SlotId("orderby.col"))

    col_i = col_j = None
    if kind == "where.conn":
        col_i = values.get(SlotId("where.col", slot.index))
        col_j = values.get(SlotId("where.col", slot.index + 1))

    order_agg = values.get(SlotId("orderby.agg"))
    if order_agg is Aggregator.NONE:
        order_agg = None

    group_col = values.get(SlotId("groupby.col"))
    if not isinstance(group_col, ColumnRef):
        group_col = None

    return QuestionContext(
        table_name=table.name,
        multi_table=False,
        col=col if isinstance(col, ColumnRef) else None,
        op=op,
        group_col=group_col,
        order_agg=order_agg,
        col_i=col_i,
        col_j=col_j,
    )
