"""Report rendering: JSON, aligned text tables, per-example CSV, figures.

A simulation run directory contains report.json, report.txt,
examples.csv, transcripts.jsonl and a figures/ subdirectory; ``report``
re-renders the table and figures from report.json alone.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .harness import EvalReport


def _fmt(value, digits: int = 3) -> str:
    if value is None:
        return "N/A"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def _detector_label(kind: str, cfg: dict) -> str:
    if kind == "prob":
        return f"prob p*={_fmt(cfg.get('p_star'), 4)}"
    if kind == "dropout":
        return f"dropout s*={_fmt(cfg.get('s_star'), 4)}"
    if kind == "unlimit":
        return f"unlimit K={cfg.get('k')}"
    return "no interaction"


def _acc_second(data: dict, mode: str):
    return data["acc_em"] if mode == "spider" else data["acc_ex"]


def table_from_dict(data: dict) -> str:
    """Aligned accuracy table, one row per system, from a report dict."""
    mode = data["mode"]
    headers = ["System", "Acc_qm", "Acc_em" if mode == "spider" else "Acc_ex", "Avg #q", "Q_r%"]
    rows = []
    if data.get("baseline"):
        b = data["baseline"]
        rows.append(["no interaction", _fmt(b["acc_qm"]), _fmt(_acc_second(b, mode)), "N/A", "N/A"])
    rows.append(
        [
            _detector_label(data["detector"], data.get("config", {})),
            _fmt(data["acc_qm"]),
            _fmt(_acc_second(data, mode)),
            _fmt(data["avg_questions"]),
            _fmt(data["q_right_pct"], 1),
        ]
    )
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
    return "\n".join(lines) + "\n"


def render_text_table(report: EvalReport, baseline: Optional[EvalReport] = None) -> str:
    data = report.to_dict(with_rows=False)
    if baseline is not None:
        data["baseline"] = baseline.to_dict(with_rows=False)
    return table_from_dict(data)


def write_examples_csv(rows: list, path: Path) -> None:
    fields = [
        "example_id",
        "correct_qm",
        "correct_ex",
        "n_questions",
        "n_right",
        "n_wrong_solved",
        "n_wrong_unsolved",
        "early_exit",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for raw in rows:
            raw = dict(raw)
            raw["correct_ex"] = "" if raw["correct_ex"] is None else int(raw["correct_ex"])
            raw["correct_qm"] = int(raw["correct_qm"])
            raw["early_exit"] = int(raw["early_exit"])
            writer.writerow(raw)


def _questions_histogram(report_dict: dict, path: Path) -> None:
    counts = [row["n_questions"] for row in report_dict.get("rows", [])]
    fig, ax = plt.subplots(figsize=(6, 4))
    upper = max(counts, default=0) + 1
    ax.hist(counts, bins=range(0, upper + 1), align="left", rwidth=0.85, color="#3b6ea5")
    ax.set_xlabel("questions per example")
    ax.set_ylabel("examples")
    ax.set_title("Question volume")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _category_bars(report_dict: dict, path: Path) -> None:
    labels = ["right", "wrong solved", "wrong unsolved"]
    values = [
        report_dict.get("n_right", 0),
        report_dict.get("n_wrong_solved", 0),
        report_dict.get("n_wrong_unsolved", 0),
    ]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(labels, values, color=["#4c9f70", "#3b6ea5", "#b5544d"])
    ax.set_ylabel("questions")
    ax.set_title("Question categories")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_figures(report_dict: dict, figures_dir: Path) -> list:
    figures_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, fn in (
        ("questions_per_example.png", _questions_histogram),
        ("question_categories.png", _category_bars),
    ):
        out = figures_dir / name
        fn(report_dict, out)
        written.append(out)
    return written


def plot_budget_curve(sweep_points: list, path: Path, title: str = "Accuracy vs. question budget") -> None:
    """sweep_points: [(threshold, avg_questions, acc_qm, acc_second)]."""
    points = sorted(sweep_points, key=lambda p: p[1])
    xs = [p[1] for p in points]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, [p[2] for p in points], marker=".", label="Acc_qm", color="#3b6ea5")
    if any(p[3] is not None for p in points):
        ax.plot(xs, [p[3] for p in points], marker=".", label="Acc_ex", color="#4c9f70")
    ax.set_xlabel("avg questions per example")
    ax.set_ylabel("accuracy")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_run_dir(
    out_dir: Path,
    report: EvalReport,
    baseline: Optional[EvalReport] = None,
    transcripts: Optional[list] = None,
) -> dict:
    """Persist a full simulation run; returns the paths written."""
    out_dir.mkdir(parents=True, exist_ok=True)
    report_dict = report.to_dict()
    if baseline is not None:
        report_dict["baseline"] = baseline.to_dict(with_rows=False)
    paths = {
        "report_json": out_dir / "report.json",
        "report_txt": out_dir / "report.txt",
        "csv": out_dir / "examples.csv",
    }
    paths["report_json"].write_text(json.dumps(report_dict, indent=2), encoding="utf-8")
    paths["report_txt"].write_text(table_from_dict(report_dict), encoding="utf-8")
    write_examples_csv(report_dict["rows"], paths["csv"])
    if transcripts is not None:
        lines = "\n".join(t.to_json_line() for t in transcripts)
        (out_dir / "transcripts.jsonl").write_text(lines + ("\n" if lines else ""), encoding="utf-8")
        paths["transcripts"] = out_dir / "transcripts.jsonl"
    paths["figures"] = render_figures(report_dict, out_dir / "figures")
    return paths


def rerender_run_dir(run_dir: Path) -> str:
    """Rebuild report.txt, examples.csv and figures from report.json."""
    data = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))
    text = table_from_dict(data)
    (run_dir / "report.txt").write_text(text, encoding="utf-8")
    if data.get("rows"):
        write_examples_csv(data["rows"], run_dir / "examples.csv")
    render_figures(data, run_dir / "figures")
    return text
