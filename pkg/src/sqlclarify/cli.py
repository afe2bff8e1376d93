"""Command-line interface.

Subcommands: ingest (validate/normalize a dataset), simulate (simulated-
user evaluation run), budget (threshold search for a question budget),
serve (HTTP session API), report (re-render a run directory).

Flags override a key=value config file; the file is taken from --config
or the MISP_CONFIG environment variable. Without --tables/--examples the
bundled synthetic dataset is used.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .agent import AgentConfig
from .datagen import load_bundled
from .detector import DetectorConfig
from .harness import (
    BudgetInfeasibleError,
    budget_search,
    evaluate,
    load_examples,
    threshold_sweep,
)
from .minidb import TableFormatError, load_tables
from .parser import HeuristicParser, PerturbationConfig

CONFIG_ENV = "MISP_CONFIG"


# detector.* keys are accepted as spelled out as well as in flag form
_KEY_ALIASES = {
    "detector.kind": "detector",
    "detector.p_star": "p_star",
    "detector.s_star": "s_star",
    "detector.n_passes": "n_passes",
    "detector.drop_rate": "drop_rate",
    "detector.seed": "seed",
}


def load_config_file(path: str) -> dict:
    config = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SystemExit(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        config[_KEY_ALIASES.get(key, key)] = value.strip()
    return config


def _resolve(args: argparse.Namespace, config: dict, key: str, default=None, cast=None):
    value = getattr(args, key, None)
    if value is None:
        value = config.get(key)
    if value is None:
        return default
    if cast is not None and isinstance(value, str):
        return cast(value)
    return value


def _load_dataset(args, config):
    tables_path = _resolve(args, config, "tables")
    examples_path = _resolve(args, config, "examples")
    mode = _resolve(args, config, "mode", default="wikisql")
    if tables_path is None and examples_path is None:
        store, examples = load_bundled(mode)
        return store, examples, mode
    if tables_path is None or examples_path is None:
        raise SystemExit("--tables and --examples must be given together")
    with open(tables_path, "r", encoding="utf-8") as fh:
        store = load_tables(fh)
    with open(examples_path, "r", encoding="utf-8") as fh:
        examples = load_examples(fh)
    return store, examples, mode


def _detector_config(args, config) -> DetectorConfig:
    kind = _resolve(args, config, "detector", default="prob")
    perturbation = PerturbationConfig(
        n_passes=_resolve(args, config, "n_passes", default=10, cast=int),
        drop_rate=_resolve(args, config, "drop_rate", default=0.1, cast=float),
        seed=_resolve(args, config, "seed", default=0, cast=int),
    )
    if kind == "prob":
        return DetectorConfig(kind="prob", p_star=_resolve(args, config, "p_star", default=0.95, cast=float))
    if kind == "dropout":
        return DetectorConfig(
            kind="dropout",
            s_star=_resolve(args, config, "s_star", default=0.05, cast=float),
            perturbation=perturbation,
        )
    return DetectorConfig(kind=kind)


def cmd_ingest(args, config) -> int:
    out_dir = Path(_resolve(args, config, "out", default="ingested"))
    try:
        with open(args.tables, "r", encoding="utf-8") as fh:
            store = load_tables(fh)
        with open(args.examples, "r", encoding="utf-8") as fh:
            examples = load_examples(fh)
    except (TableFormatError, ValueError, OSError) as exc:
        print(f"ingest failed: {exc}", file=sys.stderr)
        return 1
    missing = [e.id for e in examples if e.table_id not in store]
    if missing:
        print(f"ingest failed: examples reference unknown tables: {missing[:5]}", file=sys.stderr)
        return 1
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, src in (("tables.jsonl", args.tables), ("examples.jsonl", args.examples)):
        (out_dir / name).write_text(Path(src).read_text(encoding="utf-8"), encoding="utf-8")
    manifest = {"tables": len(store), "examples": len(examples)}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    print(f"ingested {len(store)} tables, {len(examples)} examples -> {out_dir}")
    return 0


def cmd_simulate(args, config) -> int:
    from .report import table_from_dict, write_run_dir

    store, examples, mode = _load_dataset(args, config)
    detector = _detector_config(args, config)
    agent_config = AgentConfig(
        k_alternatives=_resolve(args, config, "k", default=3, cast=int),
        detector=detector,
        mode=mode,
        seed=_resolve(args, config, "seed", default=0, cast=int),
    )
    patience = _resolve(args, config, "patience", default=3, cast=int)
    parser = HeuristicParser()

    transcripts: list = []
    report = evaluate(examples, store, parser, agent_config, patience=patience, collect_transcripts=transcripts)
    baseline_config = AgentConfig(k_alternatives=agent_config.k_alternatives, detector=DetectorConfig(kind="off"), mode=mode, seed=agent_config.seed)
    baseline = evaluate(examples, store, parser, baseline_config, patience=patience)

    out = _resolve(args, config, "out")
    if out:
        paths = write_run_dir(Path(out), report, baseline=baseline, transcripts=transcripts)
        print(f"wrote {paths['report_json'].parent}")
    data = report.to_dict(with_rows=False)
    data["baseline"] = baseline.to_dict(with_rows=False)
    print(table_from_dict(data), end="")
    return 0


def cmd_budget(args, config) -> int:
    from .report import plot_budget_curve

    store, examples, mode = _load_dataset(args, config)
    kind = _resolve(args, config, "detector", default="prob")
    if kind not in ("prob", "dropout"):
        raise SystemExit("budget search requires --detector prob or dropout")
    target = _resolve(args, config, "target", cast=float)
    if target is None:
        raise SystemExit("--target is required")
    tolerance = _resolve(args, config, "tolerance", default=0.015, cast=float)
    k = _resolve(args, config, "k", default=3, cast=int)
    seed = _resolve(args, config, "seed", default=0, cast=int)
    patience = _resolve(args, config, "patience", default=3, cast=int)
    parser = HeuristicParser()

    sweep = threshold_sweep(examples, store, parser, kind, mode=mode, k=k, patience=patience, seed=seed)
    out = _resolve(args, config, "out")
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        points = [(t, r.avg_questions, r.acc_qm, r.acc_em if mode == "spider" else r.acc_ex) for t, r in sweep]
        plot_budget_curve(points, out_dir / "budget_curve.png")
        (out_dir / "sweep.json").write_text(
            json.dumps([{"threshold": t, "avg_questions": r.avg_questions, "acc_qm": r.acc_qm} for t, r in sweep], indent=2),
            encoding="utf-8",
        )
    try:
        result = budget_search(
            examples, store, parser, kind, target, tolerance=tolerance, mode=mode, k=k, patience=patience, seed=seed, sweep=sweep
        )
    except BudgetInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 1
    print(
        f"{kind} threshold {result.threshold:.6f}: avg #q {result.avg_questions:.4f} "
        f"(target {target} +/- {tolerance}), Acc_qm {result.report.acc_qm:.4f}"
    )
    return 0


def cmd_serve(args, config) -> int:
    import uvicorn

    from .service import build_app

    store, _examples, mode = _load_dataset(args, config)
    detector = _detector_config(args, config)
    agent_config = AgentConfig(
        k_alternatives=_resolve(args, config, "k", default=3, cast=int),
        detector=detector,
        mode=mode,
        seed=_resolve(args, config, "seed", default=0, cast=int),
    )
    addr = _resolve(args, config, "addr", default="127.0.0.1:8080")
    host, _, port = addr.rpartition(":")
    log_path = _resolve(args, config, "transcript_log")
    app = build_app(store, HeuristicParser(), agent_config, transcript_log=Path(log_path) if log_path else None)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def cmd_report(args, config) -> int:
    from .report import rerender_run_dir

    run_dir = Path(args.run_dir)
    if not (run_dir / "report.json").exists():
        print(f"no report.json under {run_dir}", file=sys.stderr)
        return 1
    print(rerender_run_dir(run_dir), end="")
    return 0


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqlclarify", description=__doc__)
    parser.add_argument("--config", help=f"key=value config file (or ${CONFIG_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and normalize a dataset")
    p.add_argument("--tables", required=True)
    p.add_argument("--examples", required=True)
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="run a simulated-user evaluation")
    p.add_argument("--mode", choices=["wikisql", "spider"])
    p.add_argument("--detector", choices=["prob", "dropout", "unlimit", "off"])
    p.add_argument("--p-star", dest="p_star", type=float)
    p.add_argument("--s-star", dest="s_star", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--n-passes", dest="n_passes", type=int)
    p.add_argument("--drop-rate", dest="drop_rate", type=float)
    p.add_argument("--out")
    p.add_argument("--tables")
    p.add_argument("--examples")

    p = sub.add_parser("budget", help="search a detector threshold for a question budget")
    p.add_argument("--target", type=float)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--detector", choices=["prob", "dropout"])
    p.add_argument("--mode", choices=["wikisql", "spider"])
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--out")
    p.add_argument("--tables")
    p.add_argument("--examples")

    p = sub.add_parser("serve", help="serve the HTTP session API")
    p.add_argument("--addr")
    p.add_argument("--mode", choices=["wikisql", "spider"])
    p.add_argument("--detector", choices=["prob", "dropout", "unlimit", "off"])
    p.add_argument("--p-star", dest="p_star", type=float)
    p.add_argument("--s-star", dest="s_star", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--transcript-log", dest="transcript_log")
    p.add_argument("--tables")
    p.add_argument("--examples")

    p = sub.add_parser("report", help="re-render tables and figures for a run directory")
    p.add_argument("--in", dest="run_dir", required=True)

    return parser


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    config_path = args.config or os.environ.get(CONFIG_ENV)
    config = load_config_file(config_path) if config_path else {}
    handlers = {
        "ingest": cmd_ingest,
        "simulate": cmd_simulate,
        "budget": cmd_budget,
        "serve": cmd_serve,
        "report": cmd_report,
    }
    return handlers[args.command](args, config)


if __name__ == "__main__":
    raise SystemExit(main())
