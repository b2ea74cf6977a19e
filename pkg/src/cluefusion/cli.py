"""Command-line entry point: run, score, trace, sweep, cache, fixtures."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .backends import RecordingProvider, cache_stats, purge_cache
from .config import HIER_CHOICES, PipelineConfig
from .core import DIMENSIONS
from .errors import ClueFusionError
from .evalkit import geocoder_standardizer, score_run
from .pipeline import (
    build_backends,
    load_dataset,
    read_predictions,
    run_dataset,
    sweep,
    trace_filename,
)
from .retriever import MODES


def _add_run_flags(p: argparse.ArgumentParser, dataset_required: bool = True) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--dataset", required=dataset_required, help="JSON Lines dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ht", type=int, help="hash threshold")
    p.add_argument("--rt", type=float, help="retrieval threshold (0-100)")
    p.add_argument("--schedule", help="comma list of singles, pairs, kN, all")
    p.add_argument("--retrieval-mode", choices=MODES)
    p.add_argument("--no-filter", action="store_true", default=None)
    p.add_argument("--no-retrieval", action="store_true", default=None)
    p.add_argument("--hier", choices=HIER_CHOICES, help="restrict to one hierarchy level")
    p.add_argument("--workers", type=int)
    p.add_argument("--cache-dir")
    p.add_argument("--replay", help="replay fixture instead of live backends")
    p.add_argument("--record", help="save every backend exchange to this fixture file")


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {
        "ht": args.ht, "rt": args.rt, "schedule": args.schedule,
        "retrieval_mode": args.retrieval_mode, "no_filter": args.no_filter,
        "no_retrieval": args.no_retrieval, "workers": args.workers, "cache_dir": args.cache_dir,
    }
    if args.hier == "1":
        overrides.update(hier_1_only=True, hier_3_only=False)
    elif args.hier == "3":
        overrides.update(hier_1_only=False, hier_3_only=True)
    elif args.hier == "all":
        overrides.update(hier_1_only=False, hier_3_only=False)
    return PipelineConfig.load(args.config, **overrides)


def _backends(args, config):
    image_root = str(Path(args.dataset).resolve().parent) if getattr(args, "dataset", None) else None
    return build_backends(config, args.replay, bool(args.record), image_root)


def _save_recording(args, backends) -> None:
    if args.record and isinstance(backends.provider, RecordingProvider):
        backends.provider.save(args.record)
        print(f"recorded {len(backends.provider.entries)} exchanges to {args.record}")


def cmd_run(args) -> int:
    config = config_from_args(args)
    backends = _backends(args, config)
    try:
        arts = run_dataset(args.dataset, config, backends, args.out)
    finally:
        _save_recording(args, backends)
    print(f"predictions: {arts.predictions_path}")
    print(f"traces:      {arts.traces_dir}")
    if arts.resumed:
        print(f"resumed {len(arts.resumed)} finished task(s)")
    for task_id, err in sorted(arts.failed.items()):
        print(f"FAILED {task_id}: {err}", file=sys.stderr)
    if arts.report is not None:
        print(json.dumps(arts.report.means, indent=1, sort_keys=True))
    return 1 if arts.failed else 0


def cmd_score(args) -> int:
    config = PipelineConfig.load(args.config)
    backends = build_backends(config, args.replay)
    tasks = load_dataset(args.dataset)
    preds, choices = read_predictions(args.predictions)
    report = score_run(tasks, preds, geocoder_standardizer(backends.geocode), choices)
    print(report.to_csv() if args.csv else report.to_json(), end="")
    return 0


def format_trace(data: dict) -> str:
    lines = [f"task {data['task_id']}"]
    if data.get("error"):
        lines.append(f"  ERROR {data['error']}")
    lines.append("clues:")
    for c in data["perception"]["clues"]:
        lines.append(f"  [{c['clue_id']}] {c['kind']}: {c['text']}")
    for warning in data.get("warnings", []):
        lines.append(f"  warning: {warning}")
    for dim in DIMENSIONS:
        section = data.get("passes", {}).get(dim)
        if section is None:
            continue
        lines.append(f"{dim}:")
        for rec in section.get("combinations", []):
            cand = (rec.get("candidate") or {}).get("normalized")
            verdict = rec.get("verdict") or {}
            status = "bypass" if verdict.get("bypass") else (
                "accepted" if verdict.get("accepted") else "rejected") if verdict else rec.get("note")
            vote = f" votes={rec['vote']}" if rec.get("vote") else ""
            stop = " EARLY STOP" if rec.get("early_stop") else ""
            lines.append(f"  L{rec['level']} {rec['clue_ids']}: {rec.get('raw_answer')!r} -> "
                         f"{cand} ({status}){vote}{stop}")
        retrieval = section.get("retrieval")
        if retrieval and retrieval.get("record"):
            rec = retrieval["record"]
            lines.append(f"  search {rec['query']!r} kept {rec['kept']} of "
                         f"{[round(s, 2) for s in rec['scores']]}")
            for ex in retrieval["extractions"]:
                cand = (ex.get("candidate") or {}).get("normalized")
                lines.append(f"    result {ex['index']}: {ex.get('raw_answer')!r} -> {cand}")
        elif retrieval:
            lines.append(f"  retrieval skipped: {retrieval.get('skipped')}")
        pred = data["predictions"].get(dim)
        lines.append(f"  => {pred['label'] if pred else None}"
                     + (f" ({pred['vote_count']} votes)" if pred else ""))
    for group, picked in sorted(data.get("choices", {}).items()):
        lines.append(f"choice {group}: {picked}")
    return "\n".join(lines) + "\n"


def cmd_trace(args) -> int:
    path = Path(args.out) / "traces" / trace_filename(args.task_id)
    if not path.exists():
        print(f"no trace for {args.task_id!r} under {args.out}", file=sys.stderr)
        return 1
    data = json.loads(path.read_text(encoding="utf-8"))
    print(json.dumps(data, indent=2, sort_keys=True) if args.json else format_trace(data), end="")
    return 0


def cmd_sweep(args) -> int:
    config = config_from_args(args)
    backends = _backends(args, config)
    values = [v for v in args.values.split(",") if v.strip()]
    try:
        rows = sweep(args.dataset, config, backends, args.param, values, args.out)
    finally:
        _save_recording(args, backends)
    print(json.dumps(rows, indent=1))
    return 0


def cmd_cache(args) -> int:
    if args.action == "stats":
        print(json.dumps(cache_stats(args.cache_dir), indent=1, sort_keys=True))
    else:
        print(f"removed {purge_cache(args.cache_dir)} entries")
    return 0


def cmd_fixtures(args) -> int:
    if not args.record:
        print("fixtures needs --record PATH", file=sys.stderr)
        return 2
    return cmd_run(args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cluefusion",
                                     description="Infer when and where an image was taken.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the pipeline over a dataset")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="score a predictions file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--config")
    p.add_argument("--replay", help="fixture answering geocode requests for gold labels")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("trace", help="pretty-print one task's reasoning trace")
    p.add_argument("task_id")
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("sweep", help="one run per threshold value")
    _add_run_flags(p)
    p.add_argument("--param", required=True, choices=("ht", "rt"))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cache", help="inspect or clear the response cache")
    p.add_argument("action", choices=("stats", "purge"))
    p.add_argument("--cache-dir", required=True)
    p.set_defaults(func=cmd_cache)

    p = sub.add_parser("fixtures", help="run live and record a replay fixture")
    _add_run_flags(p)
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ClueFusionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
