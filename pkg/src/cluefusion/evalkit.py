"""Scoring: component sets, Example-F1, brevity-penalized Example-F1, accuracies."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from . import geo
from .core import (
    LOCATION,
    TIME,
    LocationValue,
    Prediction,
    TimeRange,
    is_canonical_time,
    normalize_location,
)
from .errors import BadGoldLabel, DimensionMismatch, EmptyInput, LengthMismatch, NormalizationFailed

TIME_SLOTS = ("year", "month", "day")
LOCATION_SLOTS = ("continent", "country", "city", "area")

Standardizer = Callable[[str], LocationValue]


@dataclass(frozen=True)
class ComponentSet:
    dimension: str
    components: tuple[tuple[str, str], ...]

    def __post_init__(self):
        slots = [s for s, _ in self.components]
        if len(set(slots)) != len(slots):
            raise ValueError("duplicate slots")
        allowed = TIME_SLOTS if self.dimension == TIME else LOCATION_SLOTS
        if any(s not in allowed for s in slots):
            raise ValueError(f"bad slot for {self.dimension}: {slots}")
        if self.dimension == TIME and slots != list(TIME_SLOTS[:len(slots)]):
            raise ValueError(f"time slots must be a prefix of year/month/day: {slots}")

    def __len__(self):
        return len(self.components)

    def get(self, slot: str) -> Optional[str]:
        return dict(self.components).get(slot)

    @classmethod
    def time(cls, *values: str) -> "ComponentSet":
        return cls(TIME, tuple(zip(TIME_SLOTS, values)))

    @classmethod
    def location(cls, **values: Optional[str]) -> "ComponentSet":
        return cls(LOCATION, tuple((s, values[s]) for s in LOCATION_SLOTS if values.get(s)))


def _time_components(label: str) -> ComponentSet:
    text = label.strip()
    if ".." in text:
        # a range scores as its start year
        if not is_canonical_time(text):
            raise BadGoldLabel(f"unparseable time label {label!r}")
        return ComponentSet.time(text.split("..")[0])
    parts = text.split("-")
    if not 1 <= len(parts) <= 3 or not all(p.isdigit() for p in parts) or len(parts[0]) != 4:
        raise BadGoldLabel(f"unparseable time label {label!r}")
    return ComponentSet.time(parts[0], *[p.zfill(2) for p in parts[1:]])


def geocoder_standardizer(geocoder: Callable[[str], Optional[LocationValue]]) -> Standardizer:
    """Gold-label standardizer: geocode, then the bundled continent table."""

    def standardize(label: str) -> LocationValue:
        return normalize_location(label, geocoder, geo.continent_of)

    return standardize


def location_components(loc: LocationValue) -> ComponentSet:
    return ComponentSet.location(continent=loc.continent, country=loc.country, city=loc.city,
                                 area=loc.area)


def to_component_set(
    label: Union[str, LocationValue],
    dimension: str,
    standardizer: Optional[Standardizer] = None,
) -> ComponentSet:
    """Split a label into hierarchical slots.

    Time labels split on "-"; location labels go through ``standardizer``
    (usually geocoding plus the continent table) unless already structured.
    """
    if isinstance(label, LocationValue):
        return location_components(label)
    if not label or not label.strip():
        raise BadGoldLabel("empty label")
    if dimension == TIME:
        return _time_components(label)
    if standardizer is None:
        raise ValueError("location labels need a standardizer")
    try:
        return location_components(standardizer(label))
    except NormalizationFailed as exc:
        raise BadGoldLabel(f"cannot standardize {label!r}: {exc}") from exc


def _fold(value: str) -> str:
    return " ".join(value.split()).casefold()


def intersection_size(gt: ComponentSet, pred: ComponentSet) -> int:
    """Slot-paired matches; a time slot counts only if every coarser slot matches too."""
    if gt.dimension != pred.dimension:
        raise DimensionMismatch(f"{gt.dimension} vs {pred.dimension}")
    g, p = dict(gt.components), dict(pred.components)
    if gt.dimension == TIME:
        n = 0
        for slot in TIME_SLOTS:
            if slot in g and slot in p and _fold(g[slot]) == _fold(p[slot]):
                n += 1
            else:
                break
        return n
    return sum(1 for slot in LOCATION_SLOTS
               if slot in g and slot in p and _fold(g[slot]) == _fold(p[slot]))


def example_f1(gt: ComponentSet, pred: ComponentSet) -> float:
    """2|GT ∩ Pred| / (|GT| + |Pred|), zero when both are empty."""
    inter = intersection_size(gt, pred)
    denom = len(gt) + len(pred)
    if denom == 0:
        return 0.0
    return 2 * inter / denom


def brevity_penalty(gt_size: int, pred_size: int) -> float:
    return math.exp(-max(pred_size / gt_size - 1, 0))


def example_f1_beta(gt: ComponentSet, pred: ComponentSet) -> float:
    if len(gt) == 0:
        raise BadGoldLabel("gold component set is empty")
    f1 = example_f1(gt, pred)
    if len(pred) <= len(gt):
        return f1
    return brevity_penalty(len(gt), len(pred)) * f1


def exact_accuracy(
    gold: str,
    pred: Union[str, LocationValue, None],
    dimension: str,
    standardized: bool = False,
    standardizer: Optional[Standardizer] = None,
) -> int:
    if not gold or not gold.strip():
        raise BadGoldLabel("empty gold label")
    if pred is None or (isinstance(pred, str) and not pred.strip()):
        return 0
    if not standardized:
        pred_text = pred.label() if isinstance(pred, LocationValue) else pred
        return int(_fold(gold) == _fold(pred_text))
    g = to_component_set(gold, dimension, standardizer)
    try:
        p = to_component_set(pred, dimension, standardizer)
    except BadGoldLabel:
        return 0
    return int({(s, _fold(v)) for s, v in g.components} == {(s, _fold(v)) for s, v in p.components})


def multichoice_metrics(
    golds: Sequence[str], preds: Sequence[str], classes: Sequence[str]
) -> tuple[float, float, float]:
    """Accuracy in percent plus macro precision and macro F1 over ``classes``.

    Predictions outside ``classes`` are always wrong and count toward no
    class's precision; a class never predicted has precision 0.
    """
    if len(golds) != len(preds):
        raise LengthMismatch(f"{len(golds)} golds vs {len(preds)} predictions")
    if not golds:
        raise EmptyInput("no examples to score")
    if not classes:
        raise EmptyInput("no classes")
    accuracy = 100.0 * sum(g == p for g, p in zip(golds, preds)) / len(golds)
    precisions, f1s = [], []
    for c in classes:
        tp = sum(1 for g, p in zip(golds, preds) if g == c and p == c)
        predicted = sum(1 for p in preds if p == c)
        actual = sum(1 for g in golds if g == c)
        prec = tp / predicted if predicted else 0.0
        rec = tp / actual if actual else 0.0
        precisions.append(prec)
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return accuracy, sum(precisions) / len(classes), sum(f1s) / len(classes)


# -- run-level scoring -------------------------------------------------------

METRIC_COLUMNS = (
    "time_acc", "time_xf1", "time_xf1_beta",
    "location_acc", "location_std_acc", "location_xf1", "location_xf1_beta",
)


@dataclass
class ScoreReport:
    per_task: dict[str, dict[str, float]] = field(default_factory=dict)
    means: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    multichoice: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"means": self.means, "counts": self.counts, "multichoice": self.multichoice,
                "per_task": self.per_task}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        """One row in the column layout of a results table (percentages)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = [c for c in ("time_acc", "time_xf1_beta", "location_std_acc", "location_xf1_beta")
                if c in self.means]
        writer.writerow(["tasks"] + [f"{c}(%)" for c in cols])
        writer.writerow([self.counts.get("tasks", 0)] + [f"{100 * self.means[c]:.2f}" for c in cols])
        return buf.getvalue()


def _time_scores(gold: str, pred: Optional[Prediction]) -> dict[str, float]:
    gt = to_component_set(gold, TIME)
    if pred is None:
        return {"time_acc": 0.0, "time_xf1": 0.0, "time_xf1_beta": 0.0}
    p = to_component_set(pred.value, TIME)
    return {
        "time_acc": float(exact_accuracy(gold, pred.value, TIME)),
        "time_xf1": example_f1(gt, p),
        "time_xf1_beta": example_f1_beta(gt, p),
    }


def _location_scores(gold: str, pred: Optional[Prediction], standardizer: Standardizer) -> dict[str, float]:
    gt = to_component_set(gold, LOCATION, standardizer)
    if pred is None:
        return {"location_acc": 0.0, "location_std_acc": 0.0, "location_xf1": 0.0,
                "location_xf1_beta": 0.0}
    loc = pred.location or LocationValue.from_key(pred.value)
    p = location_components(loc)
    same = {(s, _fold(v)) for s, v in gt.components} == {(s, _fold(v)) for s, v in p.components}
    return {
        "location_acc": float(exact_accuracy(gold, loc, LOCATION)),
        "location_std_acc": float(same),
        "location_xf1": example_f1(gt, p),
        "location_xf1_beta": example_f1_beta(gt, p),
    }


def score_run(
    tasks: Sequence,
    predictions: dict[str, dict[str, Optional[Prediction]]],
    standardizer: Optional[Standardizer] = None,
    choices: Optional[dict[str, dict[str, str]]] = None,
) -> ScoreReport:
    """Per-task metrics and their means; a missing prediction scores 0 everywhere.

    ``tasks`` are ImageTask-like objects; ``predictions`` maps task id to
    {"time": Prediction|None, "location": Prediction|None}.
    """
    report = ScoreReport()
    sums: dict[str, list[float]] = {c: [] for c in METRIC_COLUMNS}
    early = retrieved = 0
    mc_golds: dict[str, list[str]] = {}
    mc_preds: dict[str, list[str]] = {}
    mc_classes: dict[str, list[str]] = {}
    for task in tasks:
        preds = predictions.get(task.id, {})
        row: dict[str, float] = {}
        if task.gold_time:
            row.update(_time_scores(task.gold_time, preds.get(TIME)))
        if task.gold_location:
            if standardizer is None:
                raise ValueError("location golds need a standardizer")
            row.update(_location_scores(task.gold_location, preds.get(LOCATION), standardizer))
        for key, value in row.items():
            sums[key].append(value)
        for p in preds.values():
            if p is not None:
                early += p.stopped_early
                retrieved += p.used_retrieval
        for group, gold in (task.gold_choices or {}).items():
            picked = ((choices or {}).get(task.id) or {}).get(group, "")
            mc_golds.setdefault(group, []).append(gold)
            mc_preds.setdefault(group, []).append(picked)
            mc_classes.setdefault(group, list((task.choices or {}).get(group) or []))
        report.per_task[task.id] = row
    report.means = {k: sum(v) / len(v) for k, v in sums.items() if v}
    report.counts = {"tasks": len(tasks), "early_stops": early, "retrievals": retrieved}
    for group in sorted(mc_golds):
        classes = mc_classes[group] or sorted(set(mc_golds[group]))
        acc, prec, f1 = multichoice_metrics(mc_golds[group], mc_preds[group], classes)
        report.multichoice[group] = {"accuracy": acc, "precision": prec, "f1": f1}
    return report


__all__ = [
    "ComponentSet", "LOCATION_SLOTS", "ScoreReport", "TIME_SLOTS", "TimeRange",
    "brevity_penalty", "example_f1", "example_f1_beta", "exact_accuracy", "intersection_size",
    "geocoder_standardizer", "location_components", "multichoice_metrics", "score_run", "to_component_set",
]
