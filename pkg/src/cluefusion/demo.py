"""A small scripted world and the bundled replay fixture recorded from it.

:class:`DemoWorld` answers every backend kind with fixed rules, so any
configuration runs offline. ``build_fixture`` records a set of
configurations against it into ``data/demo/replay.json``.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional

from . import prompts
from .backends import Backends, RecordingProvider
from .config import PipelineConfig
from .core import ImageTask
from .pipeline import run_dataset

DEMO_TASKS = (
    ImageTask("times_square", "images/times_square.jpg", gold_time="2020-06",
              gold_location="New York, United States",
              choices={"country": ["Canada", "United States", "Mexico"]},
              gold_choices={"country": "United States"}),
    ImageTask("duomo", "images/duomo.jpg", gold_time="2015-05",
              gold_location="Duomo di Milano, Milan, Italy",
              choices={"country": ["France", "Italy", "Spain"]},
              gold_choices={"country": "Italy"}),
    ImageTask("blank", "images/blank.jpg", gold_time="1999", gold_location="Paris, France",
              choices={"country": ["France", "Italy", "Spain"]},
              gold_choices={"country": "France"}),
)

_VISION = {
    "images/times_square.jpg": {
        "keywords": "protest, crowd, Times Square, signs",
        "ocr_text": "Justice for George Floyd",
        "check_celebrity": "No",
        "has_landmark": "Yes",
        "date_candidate": "2020",
        "initial_guess": "New York, Chicago, Boston",
    },
    "images/duomo.jpg": {
        "keywords": "cathedral, Duomo di Milano, square, pigeons",
        "ocr_text": "no text",
        "check_celebrity": "No",
        "has_landmark": "Yes",
        "date_candidate": "2015",
        "initial_guess": "Milan, Florence, Turin",
    },
    "images/blank.jpg": {
        "keywords": "none",
        "ocr_text": "no text",
        "check_celebrity": "No",
        "has_landmark": "No",
        "date_candidate": "none",
        "initial_guess": "none",
    },
}

# places the noise filter confirms per image
_CONFIRMED = {
    "images/times_square.jpg": {"New York", "2020", "2020-2021"},
    "images/duomo.jpg": {"Milan", "Italy", "2015"},
    "images/blank.jpg": set(),
}

_PLACES = {
    "new york": {"city": "New York", "country": "United States"},
    "new york city": {"city": "New York", "country": "United States"},
    "new york, united states": {"city": "New York", "country": "United States"},
    "times square": {"area": "Times Square", "city": "New York", "country": "United States"},
    "minneapolis": {"city": "Minneapolis", "country": "United States"},
    "milan": {"city": "Milan", "country": "Italy"},
    "milano": {"city": "Milan", "country": "Italy"},
    "duomo di milano": {"area": "Duomo di Milano", "city": "Milan", "country": "Italy"},
    "duomo di milano, milan, italy": {"area": "Duomo di Milano", "city": "Milan",
                                      "country": "Italy"},
    "paris, france": {"city": "Paris", "country": "France"},
}

_SEARCH = {
    "times square": [
        {"title": "Protesters march through Times Square",
         "snippet": "Thousands gathered in June 2020 to demand justice for George Floyd.",
         "url": "https://news.example/ts-june", "thumbnail_url": "thumbs/ts_march.jpg"},
        {"title": "Times Square rally",
         "snippet": "Protests for George Floyd continued in New York through 2020-2021.",
         "url": "https://news.example/ts-rally", "thumbnail_url": "thumbs/ts_rally.jpg"},
        {"title": "Times Square New Year",
         "snippet": "The ball drop seen on 2019-12-31.",
         "url": "https://news.example/ts-nye", "thumbnail_url": "thumbs/ts_nye.jpg"},
    ],
    "duomo": [
        {"title": "Milan Cathedral",
         "snippet": "The Duomo di Milano is the cathedral church of Milan, seen during Expo 2015.",
         "url": "https://travel.example/duomo", "thumbnail_url": "thumbs/duomo_front.jpg"},
        {"title": "Piazza del Duomo",
         "snippet": "The main square of Milan, busy with Expo 2015 visitors.",
         "url": "https://travel.example/piazza", "thumbnail_url": "thumbs/duomo_square.jpg"},
        {"title": "Cologne Cathedral",
         "snippet": "A Gothic cathedral in Cologne, photographed in 2009.",
         "url": "https://travel.example/koeln", "thumbnail_url": "thumbs/koeln.jpg"},
    ],
}

# similarity (0-100) of each item to the query image it belongs to
_SCORES = {
    ("image", "thumbs/ts_march.jpg"): 95.0,
    ("image", "thumbs/ts_rally.jpg"): 92.0,
    ("image", "thumbs/ts_nye.jpg"): 40.0,
    ("image", "thumbs/duomo_front.jpg"): 97.0,
    ("image", "thumbs/duomo_square.jpg"): 91.0,
    ("image", "thumbs/koeln.jpg"): 60.0,
}
_TEXT_SCORES = {"June 2020": 91.0, "2020-2021": 85.0, "ball drop": 30.0,
                "cathedral church": 93.0, "main square": 88.0, "Gothic": 55.0}


def _vector(score: float) -> list[float]:
    c = score / 100.0
    return [c, math.sqrt(max(0.0, 1.0 - c * c)), 0.0]


class DemoWorld:
    """Rule-based provider standing in for the five external capabilities."""

    def call(self, kind: str, request: dict) -> Any:
        return getattr(self, f"_{kind}")(request)

    def _vision(self, request: dict) -> str:
        image, prompt = request["image_ref"], request["prompt"]
        found = prompts.match(prompt)
        if found is None:
            return "No"
        name, slots = found
        if name in ("filter_location", "filter_date"):
            value = slots.get("loc") or slots.get("date")
            return "Yes" if value in _CONFIRMED.get(image, ()) else "No"
        return _VISION.get(image, {}).get(name, "No")

    def _chat(self, request: dict) -> str:
        prompt = request["messages"][-1][1]
        found = prompts.match(prompt)
        if found is None:
            return "No"
        name, s = found
        handler = getattr(self, f"_chat_{name}", None)
        return handler(s) if handler else "No"

    @staticmethod
    def _chat_location_candidate(s: dict) -> str:
        text = s["event"] + "\n" + s["keywords"]
        if "Duomo" in text and "2015" in text:
            return "Italy"
        if "Duomo" in text:
            return "Milano"
        if "Times Square" in text:
            return "New York"
        if "George Floyd" in text:
            return "Minneapolis"
        return "No"

    @staticmethod
    def _chat_time_candidate(s: dict) -> str:
        text = s["time_clue"]
        if "June 2020" in text:
            return "June 2020"
        if "signs" in text and "George Floyd" in text and "2020" in text:
            return "May 25, 2020"
        if "George Floyd" in text:
            return "2020-2021"
        for year in ("2020", "2015"):
            if year in text:
                return year
        return "No"

    @staticmethod
    def _chat_convert_date(s: dict) -> str:
        return {"June 2020": "2020-06", "May 25, 2020": "2020-05-25"}.get(
            s["date_candidate"].strip(), "No")

    @staticmethod
    def _chat_search_keywords(s: dict) -> str:
        text = s["main_text"]
        if "Duomo" in text:
            return "Duomo di Milano cathedral" + (" 2015" if s["contexts"] == "date" else "")
        if "Times Square" in text or "George Floyd" in text:
            if s["contexts"] == "date":
                return "Justice for George Floyd Times Square protest date"
            return "Times Square protest New York"
        return text.splitlines()[0]

    @staticmethod
    def _chat_snippet_location(s: dict) -> str:
        text = s["snippet"]
        if "Times Square" in text or "New York" in text:
            return "New York"
        if "Milan" in text:
            return "Milan"
        if "Cologne" in text:
            return "Cologne"
        return "No"

    @staticmethod
    def _chat_snippet_agreement(s: dict) -> str:
        loc, text = s["location_result"], s["snippet"]
        if loc in text or (loc == "New York" and "Times Square" in text):
            return "Yes"
        return "No"

    @staticmethod
    def _chat_check_location_validity(s: dict) -> str:
        return "Yes" if s["loc"].strip().lower() in _PLACES else "No"

    @staticmethod
    def _chat_get_continent(s: dict) -> str:
        return "No"

    @staticmethod
    def _chat_select_choice(s: dict) -> str:
        for option in s["options"].split("; "):
            if option in s["answer"]:
                return option
        return "None of them"

    def _embed(self, request: dict) -> list[float]:
        modality, payload = request["modality"], request["payload"]
        if modality == "image":
            return _vector(_SCORES.get((modality, payload), 100.0))
        for marker, score in _TEXT_SCORES.items():
            if marker in payload:
                return _vector(score)
        return _vector(50.0)

    def _search(self, request: dict) -> list[dict]:
        query = request["query"]
        for marker, results in _SEARCH.items():
            if marker in query.lower():
                return results[:request["top_k"]]
        return []

    def _geocode(self, request: dict) -> Optional[dict]:
        return _PLACES.get(request["query"].strip().lower())


def demo_backends(config: Optional[PipelineConfig] = None) -> Backends:
    config = config or PipelineConfig()
    return Backends(DemoWorld(), chat_model=config.chat_model, vision_model=config.vision_model,
                    embed_model=config.embed_model)


# configurations the bundled fixture covers
FIXTURE_VARIANTS = (
    {},
    {"no_filter": True},
    {"no_retrieval": True},
    {"hier_1_only": True},
    {"hier_3_only": True},
    {"rt": 0.0},
    {"rt": 100.0},
    {"retrieval_mode": "image_text"},
    {"ht": 1},
    {"ht": 10},
    {"time_granularity": "year"},
)


def demo_dir() -> Path:
    return Path(str(resources.files("cluefusion").joinpath("data", "demo")))


def dataset_lines(tasks: Iterable[ImageTask] = DEMO_TASKS) -> str:
    rows = []
    for t in tasks:
        row = {"id": t.id, "image_path": t.image_ref, "gold_time": t.gold_time,
               "gold_location": t.gold_location}
        if t.choices:
            row["choices"] = t.choices
            row["gold_choices"] = t.gold_choices
        rows.append(json.dumps(row, sort_keys=True))
    return "\n".join(rows) + "\n"


def build_fixture(out_dir: str | os.PathLike, variants: Iterable[dict] = FIXTURE_VARIANTS) -> Path:
    """Record every variant over the demo tasks; returns the fixture path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "dataset.jsonl").write_text(dataset_lines(), encoding="utf-8")
    recorder = RecordingProvider(DemoWorld())
    backends = Backends(recorder)
    with tempfile.TemporaryDirectory() as tmp:
        for i, changes in enumerate(variants):
            run_dataset(list(DEMO_TASKS), PipelineConfig(**changes), backends, Path(tmp) / str(i))
    path = out / "replay.json"
    recorder.save(path, merge=False)
    return path


if __name__ == "__main__":
    print(build_fixture(demo_dir()))
