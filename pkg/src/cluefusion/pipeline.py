"""End-to-end orchestration: one task, a dataset, and threshold sweeps."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from .backends import (
    Backends,
    CachingProvider,
    HttpProvider,
    HttpSettings,
    Provider,
    RecordingProvider,
    ReplayProvider,
)
from .combiner import Combiner, VoteBoard, finalize
from .config import PipelineConfig
from .core import DIMENSIONS, LOCATION, TIME, ImageTask, Prediction, TaskTrace
from .errors import ClueFusionError, DatasetError, EmptyInput, TaskFailed
from .evalkit import ScoreReport, geocoder_standardizer, score_run
from .noise_filter import NoiseFilter
from .perceiver import Perceiver
from .reasoner import Reasoner
from .retriever import WebRetriever

log = logging.getLogger(__name__)

_TIME_GROUP = re.compile(r"time|period|year|date|era|decade", re.I)


@dataclass
class TaskResult:
    time: Optional[Prediction]
    location: Optional[Prediction]
    trace: TaskTrace


def build_backends(
    config: PipelineConfig,
    replay: Optional[str | os.PathLike] = None,
    record: bool = False,
    image_root: Optional[str] = None,
) -> Backends:
    """Replay fixture when given, else the HTTP provider; cache and recorder wrap it."""
    provider: Provider
    if replay is not None:
        provider = ReplayProvider.load(replay)
    else:
        provider = HttpProvider(HttpSettings.from_env(config.endpoints, image_root=image_root))
        if config.cache_dir:
            provider = CachingProvider(provider, config.cache_dir)
    if record:
        provider = RecordingProvider(provider)
    return Backends(provider, chat_model=config.chat_model, vision_model=config.vision_model,
                    embed_model=config.embed_model)


def choice_dimension(group: str) -> str:
    return TIME if _TIME_GROUP.search(group) else LOCATION


def run_task(task: ImageTask, config: PipelineConfig, backends: Backends) -> TaskResult:
    """Perceive, then settle location and time through hierarchy, retrieval and voting."""
    reasoner = Reasoner(backends, config.epoch)
    noise_filter = NoiseFilter(backends, fail_open=config.fail_open)
    combiner = Combiner(reasoner, noise_filter, config.combination_schedule(),
                        no_filter=config.no_filter,
                        coarsen_time=config.time_granularity == "year")
    retriever = WebRetriever(backends, combiner, config.rt, config.retrieval_mode, config.top_k)
    perceiver = Perceiver(backends, config.extractors, fail_hard=config.fail_hard)

    seen = perceiver.perceive(task.image_ref)
    trace = TaskTrace(task.id, list(seen.clues), dict(seen.raw_answers), list(seen.warnings))
    if not seen.clues:
        trace.warnings.append("no clues extracted")

    for dim in DIMENSIONS:
        board = VoteBoard(dim, config.ht)
        section: dict[str, Any] = {"combinations": [], "retrieval": None}
        try:
            section["combinations"] = combiner.run_hierarchy(task.image_ref, seen.clues, dim, board)
        except TaskFailed as exc:
            trace.warnings.append(str(exc))
            section["board"] = board.snapshot()
            section["prediction"] = None
            trace.passes[dim] = section
            trace.predictions[dim] = None
            continue
        if seen.clues:
            section["retrieval"] = retriever.maybe_retrieve(
                task.image_ref, board, seen.clues, noise_filter,
                no_retrieval=config.no_retrieval, filter_retrieval=config.filter_retrieval)
        pred = finalize(board)
        section["board"] = board.snapshot()
        section["early_stop"] = board.stopped_early
        section["prediction"] = pred.to_dict() if pred else None
        trace.passes[dim] = section
        trace.predictions[dim] = pred

    for group, options in sorted((task.choices or {}).items()):
        pred = trace.predictions.get(choice_dimension(group))
        if pred is None:
            trace.choices[group] = ""
            continue
        try:
            trace.choices[group] = reasoner.select_choice(pred.label(), options)
        except ClueFusionError as exc:
            trace.warnings.append(f"choice {group} failed: {exc}")
            trace.choices[group] = ""
    return TaskResult(trace.predictions.get(TIME), trace.predictions.get(LOCATION), trace)


# -- dataset I/O -------------------------------------------------------------

def parse_task(record: dict) -> ImageTask:
    if not isinstance(record, dict):
        raise DatasetError("dataset line must be a JSON object")
    image = record.get("image_path") or record.get("image_ref")
    if not image:
        raise DatasetError(f"task {record.get('id')!r} has no image_path")
    try:
        return ImageTask(str(record["id"]), image, record.get("gold_time"),
                         record.get("gold_location"), record.get("choices"),
                         record.get("gold_choices"))
    except (KeyError, ValueError, TypeError) as exc:
        raise DatasetError(f"bad task record: {exc}") from exc


def load_dataset(path: str | os.PathLike) -> list[ImageTask]:
    tasks, ids = [], set()
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            task = parse_task(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:{n}: {exc}") from exc
        except DatasetError as exc:
            raise DatasetError(f"{path}:{n}: {exc}") from exc
        if task.id in ids:
            raise DatasetError(f"{path}:{n}: duplicate task id {task.id!r}")
        ids.add(task.id)
        tasks.append(task)
    return tasks


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def dump_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def trace_filename(task_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", task_id) + ".json"


@dataclass
class RunArtifacts:
    out_dir: Path
    predictions_path: Path
    traces_dir: Path
    score_path: Path
    config_path: Path
    report: Optional[ScoreReport] = None
    resumed: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)


def _prediction_row(task_id: str, trace: dict) -> dict:
    return {"id": task_id, "time": trace["predictions"].get(TIME),
            "location": trace["predictions"].get(LOCATION), "choices": trace.get("choices", {}),
            "error": trace.get("error")}


def read_predictions(path: str | os.PathLike) -> tuple[dict, dict]:
    """Predictions and choices keyed by task id from a predictions.jsonl file."""
    preds, choices = {}, {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        preds[row["id"]] = {dim: (Prediction.from_dict(row[dim]) if row.get(dim) else None)
                            for dim in (TIME, LOCATION)}
        choices[row["id"]] = row.get("choices") or {}
    return preds, choices


def _load_marker(path: Path) -> Optional[dict]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    if data.get("error"):
        return None
    return data


def run_dataset(
    dataset: str | os.PathLike | Sequence[ImageTask],
    config: PipelineConfig,
    backends: Backends,
    out_dir: str | os.PathLike,
    standardizer: Optional[Callable] = None,
) -> RunArtifacts:
    """Run every task, persisting traces, predictions, scores and the config.

    A trace file without an error doubles as the completion marker, so a
    rerun into the same directory skips finished tasks.
    """
    tasks = load_dataset(dataset) if isinstance(dataset, (str, os.PathLike)) else list(dataset)
    out = Path(out_dir)
    arts = RunArtifacts(out, out / "predictions.jsonl", out / "traces", out / "score.json",
                        out / "config.json")
    arts.traces_dir.mkdir(parents=True, exist_ok=True)
    atomic_write(arts.config_path, dump_json(config.to_dict()))

    def work(task: ImageTask) -> dict:
        path = arts.traces_dir / trace_filename(task.id)
        done = _load_marker(path)
        if done is not None:
            arts.resumed.append(task.id)
            return done
        try:
            data = run_task(task, config, backends).trace.to_dict()
        except ClueFusionError as exc:
            log.error("task %s failed: %s", task.id, exc)
            data = TaskTrace(task.id, predictions={TIME: None, LOCATION: None}).to_dict()
            data["error"] = f"{type(exc).__name__}: {exc}"
        atomic_write(path, dump_json(data))
        return data

    if config.workers == 1:
        traces = [work(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            traces = list(pool.map(work, tasks))

    rows = [_prediction_row(t.id, tr) for t, tr in zip(tasks, traces)]
    arts.failed = {r["id"]: r["error"] for r in rows if r["error"]}
    atomic_write(arts.predictions_path,
                 "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows))
    arts.resumed.sort()

    if any(t.gold_time or t.gold_location or t.gold_choices for t in tasks):
        if standardizer is None:
            standardizer = geocoder_standardizer(backends.geocode)
        preds, choices = read_predictions(arts.predictions_path)
        arts.report = score_run(tasks, preds, standardizer, choices)
        atomic_write(arts.score_path, arts.report.to_json())
    return arts


# -- sweeps ------------------------------------------------------------------

SWEEP_PARAMS = {"ht": int, "rt": float}


def sweep(
    dataset: str | os.PathLike | Sequence[ImageTask],
    config: PipelineConfig,
    backends: Backends,
    parameter: str,
    values: Sequence,
    out_dir: str | os.PathLike,
    standardizer: Optional[Callable] = None,
) -> list[dict]:
    """One full run per value; rows carry aggregate X-F1-beta and run counters."""
    parameter = parameter.lower()
    if parameter not in SWEEP_PARAMS:
        raise ValueError(f"can only sweep {sorted(SWEEP_PARAMS)}")
    if not values:
        raise EmptyInput("no sweep values")
    out = Path(out_dir)
    rows = []
    for value in values:
        value = SWEEP_PARAMS[parameter](value)
        cfg = config.replace(**{parameter: value})
        arts = run_dataset(dataset, cfg, backends, out / f"{parameter}={value}", standardizer)
        kept = 0
        for trace_path in sorted(arts.traces_dir.glob("*.json")):
            data = json.loads(trace_path.read_text(encoding="utf-8"))
            for section in data.get("passes", {}).values():
                record = (section.get("retrieval") or {}).get("record")
                if record:
                    kept += len(record["kept"])
        means = arts.report.means if arts.report else {}
        counts = arts.report.counts if arts.report else {}
        rows.append({
            parameter: value,
            "time_xf1_beta": means.get("time_xf1_beta"),
            "location_xf1_beta": means.get("location_xf1_beta"),
            "early_stops": counts.get("early_stops", 0),
            "retrievals": counts.get("retrievals", 0),
            "kept": kept,
        })
    atomic_write(out / "sweep.json", dump_json(rows))
    atomic_write(out / "sweep.csv", sweep_csv(rows))
    return rows


def sweep_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()
