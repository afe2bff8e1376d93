"""Simulation evaluation: simulated user, metrics, and budget search.

The simulated user answers from the gold query. Iteration happens in
"turns" (the full question sequence for one slot); three consecutive
turns that end without the slot matching gold make the user leave, after
which the agent finishes alone. Reports carry query-match accuracy,
execution accuracy (wikisql mode) or exact-match accuracy (spider mode),
the mean number of questions, and a per-question breakdown into
right / wrong-but-solved / wrong-unsolved.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from .agent import AgentConfig, Transcript, run_session
from .detector import DetectorConfig
from .minidb import TableStore, execution_match
from .nlg import QuestionGenerator
from .parser import (
    ConstraintSet,
    NoCondition,
    OrderChoice,
    ParseContext,
    PerturbationConfig,
    parse_unassisted,
)
from .sqlast import (
    Aggregator,
    ColumnRef,
    Condition,
    RootValue,
    SlotId,
    SqlQuery,
    decode_query,
    query_match,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Example:
    id: str
    table_id: str
    question: str
    gold: SqlQuery


def load_examples(lines: Iterable[str]) -> list:
    examples = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
            examples.append(
                Example(
                    id=str(raw["id"]),
                    table_id=str(raw["table_id"]),
                    question=str(raw["question"]),
                    gold=decode_query(raw["gold"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ValueError(f"examples line {lineno}: {exc}") from None
    return examples


def _values_equal(a: Any, b: Any) -> bool:
    if isinstance(a, ColumnRef) and isinstance(b, ColumnRef):
        return a.name.lower() == b.name.lower()
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(_values_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, (int, float)) and isinstance(b, (int, float)) and not isinstance(a, bool) and not isinstance(b, bool):
        return float(a) == float(b)
    return a == b


class SimUser:
    """Answers yes/no from a gold query; leaves after repeated failures.

    WHERE/HAVING conditions are aligned greedily: when a predicted
    condition's column commits, it claims the first still-unmatched gold
    condition with that column; op/val questions then compare against the
    claimed condition.
    """

    def __init__(self, gold: SqlQuery, patience: Optional[int] = 3):
        self.gold = gold
        self.patience = patience
        self.failures = 0
        self.departed = False
        self._bound: dict = {}  # (clause, index) -> gold Condition or None
        self._claimed: dict = {"where": set(), "having": set()}
        self.ask_log: list = []  # (slot, value, was_right)
        self.turn_log: dict = {}  # slot -> final turn outcome (bool)

    # -- alignment ---------------------------------------------------------

    def _gold_conds(self, clause: str) -> Sequence[Condition]:
        return self.gold.where if clause == "where" else self.gold.having

    def _unmatched_gold_with_col(self, clause: str, col: ColumnRef) -> Optional[int]:
        for g, cond in enumerate(self._gold_conds(clause)):
            if g in self._claimed[clause]:
                continue
            if _values_equal(cond.col, col):
                return g
        return None

    def _bind(self, clause: str, index: int, col: Any) -> None:
        if not isinstance(col, ColumnRef):
            self._bound[(clause, index)] = None
            return
        g = self._unmatched_gold_with_col(clause, col)
        if g is None:
            self._bound[(clause, index)] = None
        else:
            self._claimed[clause].add(g)
            self._bound[(clause, index)] = self._gold_conds(clause)[g]

    def _aligned(self, clause: str, index: int) -> Optional[Condition]:
        return self._bound.get((clause, index))

    # -- gold comparison per slot -------------------------------------------

    def value_is_right(self, slot: SlotId, value: Any) -> bool:
        kind = slot.kind
        gold = self.gold
        if kind == "select.col":
            return _values_equal(value, gold.select_col)
        if kind == "select.agg":
            return value is gold.select_agg
        if kind == "where.count":
            return int(value) == len(gold.where)
        if kind == "where.col":
            return isinstance(value, ColumnRef) and self._unmatched_gold_with_col("where", value) is not None
        if kind == "having.col":
            if isinstance(value, NoCondition):
                return not gold.having
            return isinstance(value, ColumnRef) and self._unmatched_gold_with_col("having", value) is not None
        if kind in ("where.op", "where.val", "having.agg", "having.op", "having.val"):
            clause = "where" if kind.startswith("where") else "having"
            aligned = self._aligned(clause, slot.index)
            if aligned is None:
                return False
            if kind.endswith(".op"):
                return value is aligned.op
            if kind.endswith(".val"):
                return _values_equal(value, aligned.value)
            gold_agg = aligned.agg or Aggregator.NONE
            return value is gold_agg
        if kind == "where.conn":
            aligned = self._aligned("where", slot.index)
            return aligned is not None and value is aligned.conn
        if kind == "groupby.col":
            return isinstance(value, ColumnRef) and any(_values_equal(value, c) for c in gold.group_by)
        if kind == "orderby.col":
            return gold.order_by is not None and _values_equal(value, gold.order_by.col)
        if kind == "orderby.agg":
            if gold.order_by is None:
                return False
            gold_agg = gold.order_by.agg or Aggregator.NONE
            return value is gold_agg
        if kind == "orderby.dir":
            if gold.order_by is None or not isinstance(value, OrderChoice):
                return False
            return value.direction is gold.order_by.direction and value.limit == gold.order_by.limit
        if kind == "orderby.limit":
            return gold.order_by is not None and value == gold.order_by.limit
        raise ValueError(f"simulated user cannot judge slot kind {kind}")

    # -- answer channel protocol ---------------------------------------------

    def __call__(self, slot: SlotId, value: Any, question: str) -> str:
        if self.departed:
            return "left"
        right = self.value_is_right(slot, value)
        self.ask_log.append((slot, value, right))
        return "yes" if right else "no"

    def on_commit(self, slot: SlotId, value: Any, was_asked: bool) -> None:
        right = self.value_is_right(slot, value)
        if slot.kind in ("where.col", "having.col"):
            clause = slot.kind.split(".", 1)[0]
            self._bind(clause, slot.index, value)
        if was_asked:
            self.turn_log[slot] = right
            self.update_patience(right)

    def update_patience(self, turn_succeeded: bool) -> None:
        if self.departed or self.patience is None:
            return
        if turn_succeeded:
            self.failures = 0
        else:
            self.failures += 1
            if self.failures >= self.patience:
                self.departed = True


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass
class ExampleRow:
    example_id: str
    correct_qm: bool
    correct_ex: Optional[bool]
    n_questions: int
    n_right: int
    n_wrong_solved: int
    n_wrong_unsolved: int
    early_exit: bool

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "correct_qm": self.correct_qm,
            "correct_ex": self.correct_ex,
            "n_questions": self.n_questions,
            "n_right": self.n_right,
            "n_wrong_solved": self.n_wrong_solved,
            "n_wrong_unsolved": self.n_wrong_unsolved,
            "early_exit": self.early_exit,
        }


@dataclass
class EvalReport:
    mode: str
    detector: str
    acc_qm: float
    acc_ex: Optional[float]
    acc_em: Optional[float]
    avg_questions: float
    q_right_pct: float
    n_examples: int
    n_questions: int
    n_right: int
    n_wrong_solved: int
    n_wrong_unsolved: int
    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self, with_rows: bool = True) -> dict:
        out = {
            "mode": self.mode,
            "detector": self.detector,
            "acc_qm": self.acc_qm,
            "acc_ex": self.acc_ex,
            "acc_em": self.acc_em,
            "avg_questions": self.avg_questions,
            "q_right_pct": self.q_right_pct,
            "n_examples": self.n_examples,
            "n_questions": self.n_questions,
            "n_right": self.n_right,
            "n_wrong_solved": self.n_wrong_solved,
            "n_wrong_unsolved": self.n_wrong_unsolved,
            "config": self.config,
        }
        if with_rows:
            out["rows"] = [r.to_dict() for r in self.rows]
        return out


def categorize_questions(transcript: Transcript, sim: SimUser) -> tuple:
    """Label each asked question right / wrong_solved / wrong_unsolved."""
    n_right = n_solved = n_unsolved = 0
    for event, (slot, value, was_right) in zip(transcript.events, sim.ask_log):
        if was_right:
            event.category = "right"
            n_right += 1
        elif sim.turn_log.get(slot, False):
            event.category = "wrong_solved"
            n_solved += 1
        else:
            event.category = "wrong_unsolved"
            n_unsolved += 1
    return n_right, n_solved, n_unsolved


def evaluate(
    examples: Sequence[Example],
    store: TableStore,
    parser: Any,
    config: AgentConfig,
    patience: Optional[int] = 3,
    nlg: Optional[QuestionGenerator] = None,
    collect_transcripts: Optional[list] = None,
) -> EvalReport:
    """Run one simulated session per example and aggregate the metrics."""
    nlg = nlg or QuestionGenerator()
    rows = []
    n_correct_qm = 0
    n_correct_ex = 0
    totals = [0, 0, 0]
    total_questions = 0

    for example in examples:
        table = store.get(example.table_id)
        sim = SimUser(example.gold, patience=patience)
        try:
            result = run_session(
                parser, nlg, sim, table, example.question, config, example_id=example.id
            )
        except Exception:
            log.exception("session failed for example %s; counted as incorrect", example.id)
            rows.append(
                ExampleRow(
                    example_id=example.id,
                    correct_qm=False,
                    correct_ex=False if config.mode == "wikisql" else None,
                    n_questions=0,
                    n_right=0,
                    n_wrong_solved=0,
                    n_wrong_unsolved=0,
                    early_exit=False,
                )
            )
            continue

        n_right, n_solved, n_unsolved = categorize_questions(result.transcript, sim)
        correct_qm = query_match(result.query, example.gold)
        correct_ex = None
        if config.mode == "wikisql":
            correct_ex = execution_match(result.query, example.gold, store)
            n_correct_ex += int(correct_ex)
        n_correct_qm += int(correct_qm)
        totals[0] += n_right
        totals[1] += n_solved
        totals[2] += n_unsolved
        total_questions += result.transcript.n_questions
        rows.append(
            ExampleRow(
                example_id=example.id,
                correct_qm=correct_qm,
                correct_ex=correct_ex,
                n_questions=result.transcript.n_questions,
                n_right=n_right,
                n_wrong_solved=n_solved,
                n_wrong_unsolved=n_unsolved,
                early_exit=result.transcript.early_exit,
            )
        )
        if collect_transcripts is not None:
            collect_transcripts.append(result.transcript)

    n = len(examples)
    acc_qm = n_correct_qm / n if n else 0.0
    report = EvalReport(
        mode=config.mode,
        detector=config.detector.kind,
        acc_qm=acc_qm,
        acc_ex=(n_correct_ex / n if n else 0.0) if config.mode == "wikisql" else None,
        acc_em=acc_qm if config.mode == "spider" else None,
        avg_questions=total_questions / n if n else 0.0,
        q_right_pct=(100.0 * totals[0] / total_questions) if total_questions else 0.0,
        n_examples=n,
        n_questions=total_questions,
        n_right=totals[0],
        n_wrong_solved=totals[1],
        n_wrong_unsolved=totals[2],
        rows=rows,
        config={
            "detector": config.detector.kind,
            "p_star": config.detector.p_star,
            "s_star": config.detector.s_star,
            "k": config.k_alternatives,
            "seed": config.seed,
            "patience": patience,
        },
    )
    return report


def unlimit_run(
    examples: Sequence[Example],
    store: TableStore,
    parser: Any,
    k: int,
    mode: str = "wikisql",
    patience: Optional[int] = None,
    seed: int = 0,
) -> EvalReport:
    """Ask about every askable component with up to K+1 questions each."""
    config = AgentConfig(
        k_alternatives=k,
        detector=DetectorConfig(kind="unlimit"),
        mode=mode,
        seed=seed,
    )
    return evaluate(examples, store, parser, config, patience=patience)


def baseline_queries(examples: Sequence[Example], store: TableStore, parser: Any, mode: str) -> dict:
    """Unassisted argmax parses, keyed by example id."""
    from .agent import assemble_query

    out = {}
    for example in examples:
        table = store.get(example.table_id)
        ctx = ParseContext(example_id=example.id, question=example.question, table=table, mode=mode)
        out[example.id] = assemble_query(parse_unassisted(parser, ctx), table)
    return out


def gold_rank_profile(examples: Sequence[Example], store: TableStore, parser: Any, mode: str) -> list:
    """Rank of the gold option in each decision under gold-forced prefixes.

    Walks every example committing gold values, recording where the gold
    option sits in each decision's option ranking (1-based; None when the
    gold value is not offered at all). Used to audit dataset difficulty.
    """
    ranks = []
    for example in examples:
        table = store.get(example.table_id)
        ctx = ParseContext(example_id=example.id, question=example.question, table=table, mode=mode)
        sim = SimUser(example.gold, patience=None)
        committed: dict = {}
        constraints = ConstraintSet()
        while True:
            decision = parser.next_decision(ctx, committed, constraints)
            if decision is None:
                break
            order = sorted(range(len(decision.options)), key=lambda i: (-decision.probs[i], i))
            gold_rank = None
            gold_value = None
            for pos, i in enumerate(order, start=1):
                if sim.value_is_right(decision.slot, decision.options[i]):
                    gold_rank = pos
                    gold_value = decision.options[i]
                    break
            ranks.append((example.id, decision.slot, gold_rank))
            value = gold_value if gold_value is not None else decision.chosen_value
            committed[decision.slot] = value
            sim.on_commit(decision.slot, value, was_asked=False)
    return ranks


# ---------------------------------------------------------------------------
# Budget-matched threshold search
# ---------------------------------------------------------------------------


class BudgetInfeasibleError(ValueError):
    def __init__(self, target: float, tolerance: float, closest_threshold: float, closest_avg: float):
        self.target = target
        self.tolerance = tolerance
        self.closest_threshold = closest_threshold
        self.closest_avg = closest_avg
        super().__init__(
            f"no threshold lands within {tolerance} of target {target}; "
            f"closest is {closest_threshold} with avg questions {closest_avg}"
        )


@dataclass
class BudgetResult:
    kind: str
    threshold: float
    avg_questions: float
    target: float
    tolerance: float
    report: EvalReport


def _observed_scores(
    examples: Sequence[Example],
    store: TableStore,
    parser: Any,
    kind: str,
    mode: str,
    perturbation: PerturbationConfig,
) -> list:
    """Candidate thresholds: distinct chosen-probabilities (prob) or
    distinct perturbation-stddev scores (dropout) under the unassisted
    parse of every example."""
    from statistics import pstdev

    scores = set()
    for example in examples:
        table = store.get(example.table_id)
        ctx = ParseContext(example_id=example.id, question=example.question, table=table, mode=mode)
        committed: dict = {}
        constraints = ConstraintSet()
        while True:
            decision = parser.next_decision(ctx, committed, constraints)
            if decision is None:
                break
            if decision.slot.askable:
                if kind == "prob":
                    scores.add(decision.chosen_prob)
                else:
                    passes = parser.perturbed_passes(ctx, decision, committed, perturbation)
                    scores.add(pstdev(passes))
            committed[decision.slot] = decision.chosen_value
    # Both rules are strict inequalities, so the extreme observed score can
    # never fire itself; add the boundary candidates that reach the
    # ask-everything end of the curve.
    if kind == "prob":
        scores.add(1.0)
    else:
        positive = [s for s in scores if s > 0]
        if positive:
            scores.add(min(positive) / 2)
    return sorted(scores)


def threshold_sweep(
    examples: Sequence[Example],
    store: TableStore,
    parser: Any,
    kind: str,
    mode: str = "wikisql",
    k: int = 3,
    patience: Optional[int] = 3,
    seed: int = 0,
    perturbation: Optional[PerturbationConfig] = None,
) -> list:
    """Evaluate every candidate threshold; returns [(threshold, report)]."""
    if kind not in ("prob", "dropout"):
        raise ValueError("budget search applies to prob or dropout detectors")
    perturbation = perturbation or PerturbationConfig(seed=seed)
    candidates = _observed_scores(examples, store, parser, kind, mode, perturbation)
    sweep = []
    for threshold in candidates:
        if kind == "prob":
            detector = DetectorConfig(kind="prob", p_star=threshold)
        else:
            detector = DetectorConfig(kind="dropout", s_star=threshold, perturbation=perturbation)
        config = AgentConfig(k_alternatives=k, detector=detector, mode=mode, seed=seed)
        report = evaluate(examples, store, parser, config, patience=patience)
        sweep.append((threshold, report))
    return sweep


def budget_search(
    examples: Sequence[Example],
    store: TableStore,
    parser: Any,
    kind: str,
    target: float,
    tolerance: float = 0.015,
    mode: str = "wikisql",
    k: int = 3,
    patience: Optional[int] = 3,
    seed: int = 0,
    sweep: Optional[list] = None,
) -> BudgetResult:
    """Find the detector threshold whose measured average number of
    questions lands closest to ``target``; fails when nothing lands within
    ``tolerance``. A precomputed ``sweep`` may be shared across targets."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if sweep is None:
        sweep = threshold_sweep(examples, store, parser, kind, mode=mode, k=k, patience=patience, seed=seed)
    if not sweep:
        raise ValueError("no candidate thresholds observed")
    best_threshold, best_report = min(sweep, key=lambda tr: (abs(tr[1].avg_questions - target), tr[0]))
    achieved = best_report.avg_questions
    if abs(achieved - target) > tolerance:
        raise BudgetInfeasibleError(target, tolerance, best_threshold, achieved)
    return BudgetResult(
        kind=kind,
        threshold=best_threshold,
        avg_questions=achieved,
        target=target,
        tolerance=tolerance,
        report=best_report,
    )
