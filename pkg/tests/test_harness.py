import pytest

from oracles import scripted_suite
from sqlclarify.agent import AgentConfig
from sqlclarify.detector import DetectorConfig
from sqlclarify.harness import (
    BudgetInfeasibleError,
    Example,
    SimUser,
    baseline_queries,
    budget_search,
    evaluate,
    load_examples,
    threshold_sweep,
    unlimit_run,
)
from sqlclarify.parser import NO_CONDITION, OrderChoice, ScriptedParser
from sqlclarify.sqlast import (
    Aggregator,
    ColumnRef,
    Operator,
    OrderDir,
    SlotId,
    decode_query,
    query_match,
)


def gold(agg="none", col="name", where=(), **extra):
    raw = {"table_ids": ["s000"], "select": {"agg": agg, "col": col}, "where": list(where)}
    raw.update(extra)
    return decode_query(raw)


def prob_config(p_star=0.95, k=3):
    return AgentConfig(k_alternatives=k, detector=DetectorConfig(kind="prob", p_star=p_star), mode="wikisql", seed=5)


# ---------------------------------------------------------------------------
# simulate_answer / alignment
# ---------------------------------------------------------------------------


def test_select_col_match_answers_yes():
    sim = SimUser(gold(col="name"))
    assert sim(SlotId("select.col"), ColumnRef("Name"), "q?") == "yes"


def test_agg_mismatch_answers_no():
    sim = SimUser(gold(agg="none"))
    assert sim(SlotId("select.agg"), Aggregator.MAX, "q?") == "no"


def test_departed_user_answers_left():
    sim = SimUser(gold())
    sim.departed = True
    assert sim(SlotId("select.col"), ColumnRef("name"), "q?") == "left"


def test_where_alignment_is_greedy_over_unmatched_golds():
    g = gold(
        where=[
            {"col": "city", "op": "eq", "val": "ohio"},
            {"col": "city", "op": "ne", "val": "iowa"},
        ]
    )
    sim = SimUser(g)
    # first predicted condition on "city" claims gold condition 0
    assert sim.value_is_right(SlotId("where.col", 0), ColumnRef("city"))
    sim.on_commit(SlotId("where.col", 0), ColumnRef("city"), was_asked=False)
    assert sim.value_is_right(SlotId("where.op", 0), Operator.EQ)
    assert not sim.value_is_right(SlotId("where.op", 0), Operator.NE)
    # second predicted condition on "city" claims the remaining gold
    sim.on_commit(SlotId("where.col", 1), ColumnRef("city"), was_asked=False)
    assert sim.value_is_right(SlotId("where.op", 1), Operator.NE)
    assert sim.value_is_right(SlotId("where.val", 1), "iowa")
    # a third condition on "city" has nothing left to claim
    assert not sim.value_is_right(SlotId("where.col", 2), ColumnRef("city"))


def test_unaligned_condition_op_val_answer_no():
    sim = SimUser(gold(where=[{"col": "city", "op": "eq", "val": "ohio"}]))
    sim.on_commit(SlotId("where.col", 0), ColumnRef("age"), was_asked=False)  # no gold condition on age
    assert not sim.value_is_right(SlotId("where.op", 0), Operator.EQ)
    assert not sim.value_is_right(SlotId("where.val", 0), "ohio")


def test_numeric_values_compare_numerically():
    sim = SimUser(gold(where=[{"col": "age", "op": "eq", "val": 30}]))
    sim.on_commit(SlotId("where.col", 0), ColumnRef("age"), was_asked=False)
    assert sim.value_is_right(SlotId("where.val", 0), 30.0)


def test_having_none_matches_empty_gold_having():
    g = gold(group_by=["city"])
    sim = SimUser(g)
    assert sim.value_is_right(SlotId("having.col", 0), NO_CONDITION)
    g2 = gold(group_by=["city"], having=[{"col": "age", "op": "gt", "val": 1, "agg": "count"}])
    assert not SimUser(g2).value_is_right(SlotId("having.col", 0), NO_CONDITION)


def test_orderby_dir_compares_direction_and_limit():
    g = gold(order_by={"col": "age", "dir": "desc", "limit": 3})
    sim = SimUser(g)
    assert sim.value_is_right(SlotId("orderby.dir"), OrderChoice(OrderDir.DESC, 3))
    assert not sim.value_is_right(SlotId("orderby.dir"), OrderChoice(OrderDir.DESC))
    assert not sim.value_is_right(SlotId("orderby.dir"), OrderChoice(OrderDir.ASC, 3))


# ---------------------------------------------------------------------------
# patience automaton
# ---------------------------------------------------------------------------


def test_corrected_turn_resets_counter():
    sim = SimUser(gold(), patience=3)
    sim.update_patience(False)
    sim.update_patience(False)
    sim.update_patience(True)
    assert sim.failures == 0 and not sim.departed


def test_three_consecutive_failures_depart():
    sim = SimUser(gold(), patience=3)
    for _ in range(3):
        sim.update_patience(False)
    assert sim.departed


def test_fail_fail_correct_fail_stays():
    sim = SimUser(gold(), patience=3)
    for outcome in (False, False, True, False):
        sim.update_patience(outcome)
    assert sim.failures == 1 and not sim.departed


def test_infinite_patience_never_departs():
    sim = SimUser(gold(), patience=None)
    for _ in range(50):
        sim.update_patience(False)
    assert not sim.departed


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def test_two_example_set_half_right():
    # example 0 parses to gold unaided; example 1 has gold out of reach
    store, examples, config = scripted_suite(
        seed=3, n_instances=2, gold_ranks_for=lambda i: {"select.col": 5} if i == 1 else {}
    )
    parser = ScriptedParser.from_config(config)
    report = evaluate(examples, store, parser, prob_config(p_star=0.0001), patience=3)
    # p* so small nothing is asked: accuracy is down to the base ranks
    assert report.avg_questions == 0.0
    assert report.acc_qm == 0.5


def test_detector_off_is_no_interaction_baseline():
    store, examples, config = scripted_suite(seed=4, n_instances=6, gold_ranks_for=lambda i: {"select.agg": i % 3})
    parser = ScriptedParser.from_config(config)
    off = AgentConfig(k_alternatives=3, detector=DetectorConfig(kind="off"), mode="wikisql", seed=5)
    report = evaluate(examples, store, parser, off, patience=3)
    assert report.avg_questions == 0.0
    base = baseline_queries(examples, store, parser, "wikisql")
    expected = sum(query_match(base[e.id], e.gold) for e in examples) / len(examples)
    assert report.acc_qm == expected


def test_all_gold_scripted_parser_is_perfect_and_all_questions_right():
    store, examples, config = scripted_suite(seed=5, n_instances=5)
    parser = ScriptedParser.from_config(config)
    report = evaluate(examples, store, parser, prob_config(p_star=1.0), patience=3)
    assert report.acc_qm == 1.0
    if report.n_questions:
        assert report.q_right_pct == 100.0
        assert report.n_right == report.n_questions


def test_category_counts_sum_to_total_questions():
    store, examples, config = scripted_suite(
        seed=6, n_instances=10, gold_ranks_for=lambda i: {"select.agg": i % 6, "select.col": (i * 2) % 5}
    )
    parser = ScriptedParser.from_config(config)
    report = evaluate(examples, store, parser, prob_config(), patience=3)
    assert report.n_right + report.n_wrong_solved + report.n_wrong_unsolved == report.n_questions
    for row in report.rows:
        assert row.n_right + row.n_wrong_solved + row.n_wrong_unsolved == row.n_questions


def test_transcript_categories_recompute_q_r():
    store, examples, config = scripted_suite(
        seed=8, n_instances=8, gold_ranks_for=lambda i: {"select.agg": i % 4}
    )
    parser = ScriptedParser.from_config(config)
    transcripts = []
    report = evaluate(examples, store, parser, prob_config(), patience=3, collect_transcripts=transcripts)
    events = [e for t in transcripts for e in t.events]
    assert all(e.category in ("right", "wrong_solved", "wrong_unsolved") for e in events)
    n_right = sum(1 for e in events if e.category == "right")
    assert abs(report.q_right_pct - (100.0 * n_right / len(events) if events else 0.0)) < 1e-12


def test_session_error_counts_as_incorrect():
    store, examples, config = scripted_suite(seed=9, n_instances=2)
    del config[examples[1].id]  # parser has no script: session raises
    parser = ScriptedParser.from_config(config)
    report = evaluate(examples, store, parser, prob_config(), patience=3)
    assert report.acc_qm == 0.5
    assert not report.rows[1].correct_qm


# ---------------------------------------------------------------------------
# unlimit runs
# ---------------------------------------------------------------------------


def test_unlimit_recovers_everything_within_top_k_plus_one():
    store, examples, config = scripted_suite(
        seed=10, n_instances=12, gold_ranks_for=lambda i: {"select.col": i % 4, "select.agg": (i + 1) % 4}
    )
    parser = ScriptedParser.from_config(config)
    report = unlimit_run(examples, store, parser, k=3, patience=None)
    assert report.acc_qm == 1.0


def test_unlimit_rank_k_plus_two_fails_exactly_that_example():
    store, examples, config = scripted_suite(
        seed=11, n_instances=10, gold_ranks_for=lambda i: {"select.col": 4} if i == 6 else {}
    )
    parser = ScriptedParser.from_config(config)
    report = unlimit_run(examples, store, parser, k=3, patience=None)
    wrong = [row.example_id for row in report.rows if not row.correct_qm]
    assert wrong == [examples[6].id]


def test_unlimit10_at_least_unlimit3():
    store, examples, config = scripted_suite(
        seed=12, n_instances=20, gold_ranks_for=lambda i: {"select.col": i % 6, "select.agg": (i * 3) % 6}
    )
    parser = ScriptedParser.from_config(config)
    acc10 = unlimit_run(examples, store, parser, k=10, patience=None).acc_qm
    acc3 = unlimit_run(examples, store, parser, k=3, patience=None).acc_qm
    assert acc10 >= acc3


# ---------------------------------------------------------------------------
# budget search
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def budget_suite():
    store, examples, config = scripted_suite(
        seed=14, n_instances=40, gold_ranks_for=lambda i: {"select.agg": i % 4}
    )
    return store, examples, ScriptedParser.from_config(config)


def test_budget_target_zero_returns_no_ask_extreme(budget_suite):
    store, examples, parser = budget_suite
    result = budget_search(examples, store, parser, "prob", target=0.0, tolerance=0.015)
    assert result.avg_questions == 0.0


def test_budget_infeasible_target_reports_closest(budget_suite):
    store, examples, parser = budget_suite
    with pytest.raises(BudgetInfeasibleError) as info:
        budget_search(examples, store, parser, "prob", target=50.0, tolerance=0.015)
    assert info.value.closest_avg < 50.0
    assert info.value.closest_threshold > 0


def test_budget_result_reverifies_at_returned_threshold(budget_suite):
    store, examples, parser = budget_suite
    sweep = threshold_sweep(examples, store, parser, "prob", mode="wikisql", k=3, patience=3, seed=5)
    feasible_targets = sorted({round(r.avg_questions, 3) for _, r in sweep if r.avg_questions > 0})
    target = feasible_targets[len(feasible_targets) // 2]
    result = budget_search(examples, store, parser, "prob", target=target, tolerance=0.015, sweep=sweep)
    config = prob_config(p_star=result.threshold)
    recheck = evaluate(examples, store, parser, config, patience=3)
    assert abs(recheck.avg_questions - result.avg_questions) < 1e-12
    assert abs(result.avg_questions - target) <= 0.015


def test_budget_rejects_bad_tolerance(budget_suite):
    store, examples, parser = budget_suite
    with pytest.raises(ValueError, match="tolerance"):
        budget_search(examples, store, parser, "prob", target=1.0, tolerance=0.0)


# ---------------------------------------------------------------------------
# loaders
# ---------------------------------------------------------------------------


def test_load_examples_reports_line_numbers():
    with pytest.raises(ValueError, match="line 2"):
        load_examples(['{"id": "a", "table_id": "t", "question": "q", "gold": {"table_ids": ["t"], "select": {"agg": "none", "col": "x"}}}', "{bad"])


def test_load_examples_round_trip(bundled_wikisql):
    store, examples = bundled_wikisql
    assert len(store) >= 20 and len(examples) >= 200
    assert all(e.table_id in store for e in examples)
