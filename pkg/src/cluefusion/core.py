"""Domain types and the normalization rules that turn raw answers into hash keys."""

from __future__ import annotations

import calendar
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import geo
from .errors import NormalizationFailed, UnknownCountry

TIME = "time"
LOCATION = "location"
DIMENSIONS = (LOCATION, TIME)

KEYWORDS = "keywords"
OCR_TEXT = "ocr_text"
CELEBRITY = "celebrity"
LANDMARK = "landmark"
EVENT_SUMMARY = "event_summary"
INITIAL_GUESS = "initial_guess"
DIRECT_DATE = "direct_date"
CLUE_KINDS = (KEYWORDS, OCR_TEXT, CELEBRITY, LANDMARK, EVENT_SUMMARY, INITIAL_GUESS, DIRECT_DATE)

DEFAULT_EPOCH = 2021


@dataclass(frozen=True)
class ImageTask:
    id: str
    image_ref: str
    gold_time: Optional[str] = None
    gold_location: Optional[str] = None
    choices: Optional[dict[str, list[str]]] = None
    gold_choices: Optional[dict[str, str]] = None

    def __post_init__(self):
        if not self.id or not str(self.id).strip():
            raise ValueError("task id must be non-empty")
        for group, options in (self.choices or {}).items():
            if not options:
                raise ValueError(f"choice list {group!r} is empty")
            if len(set(options)) != len(options):
                raise ValueError(f"choice list {group!r} has duplicates")


@dataclass(frozen=True)
class Clue:
    clue_id: int
    kind: str
    text: str
    confidence_note: Optional[str] = None

    def __post_init__(self):
        if self.kind not in CLUE_KINDS:
            raise ValueError(f"unknown clue kind {self.kind!r}")
        if not self.text.strip():
            raise ValueError("clue text must be non-empty")


@dataclass(frozen=True)
class LocationValue:
    area: Optional[str] = None
    city: Optional[str] = None
    country: Optional[str] = None
    continent: Optional[str] = None

    def __post_init__(self):
        if not any((self.area, self.city, self.country, self.continent)):
            raise ValueError("LocationValue needs at least one field")
        if self.continent is not None and self.continent not in geo.CONTINENTS:
            raise ValueError(f"{self.continent!r} is not a canonical continent")

    def parts(self) -> tuple[Optional[str], ...]:
        return (self.area, self.city, self.country, self.continent)

    def key(self) -> str:
        return "|".join((p or "").strip().casefold() for p in self.parts())

    def display(self) -> str:
        """Finest available component."""
        return next(p for p in self.parts() if p)

    def label(self) -> str:
        return ", ".join(p for p in self.parts() if p)

    def to_dict(self) -> dict:
        return {"area": self.area, "city": self.city, "country": self.country,
                "continent": self.continent}

    @classmethod
    def from_dict(cls, data: dict) -> "LocationValue":
        return cls(**{k: data.get(k) or None for k in ("area", "city", "country", "continent")})

    @classmethod
    def from_key(cls, key: str) -> "LocationValue":
        parts = key.split("|")
        if len(parts) != 4:
            raise ValueError(f"not a location key: {key!r}")
        continent = geo.canonical_continent(parts[3], strict=True) if parts[3] else None
        return cls(parts[0] or None, parts[1] or None, parts[2] or None, continent)


@dataclass(frozen=True)
class TimeRange:
    start_year: int
    end_year: int
    start_month: Optional[int] = None
    start_day: Optional[int] = None
    end_month: Optional[int] = None
    end_day: Optional[int] = None

    def __post_init__(self):
        if self.start_bound() > self.end_bound():
            raise ValueError(f"empty time range {self}")

    def start_bound(self) -> tuple[int, int, int]:
        return (self.start_year, self.start_month or 1, self.start_day or 1)

    def end_bound(self) -> tuple[int, int, int]:
        return (self.end_year, self.end_month or 12, self.end_day or 31)

    @classmethod
    def from_normalized(cls, value: str) -> "TimeRange":
        """Interval covered by a canonical time string."""
        if ".." in value:
            start, end = value.split("..")
            return cls(int(start), int(end))
        parts = [int(p) for p in value.split("-")]
        year = parts[0]
        month = parts[1] if len(parts) > 1 else None
        day = parts[2] if len(parts) > 2 else None
        return cls(year, year, month, day, month, day)


@dataclass(frozen=True)
class Candidate:
    dimension: str
    raw: str
    normalized: str
    level: Optional[int] = None
    clue_ids: tuple[int, ...] = ()
    retrieval_index: Optional[int] = None
    location: Optional[LocationValue] = None

    def __post_init__(self):
        if not self.normalized:
            raise ValueError("normalized candidate must be non-empty")
        if self.dimension == TIME and not is_canonical_time(self.normalized):
            raise ValueError(f"{self.normalized!r} is not a canonical time")
        if (self.level is None) == (self.retrieval_index is None):
            raise ValueError("provenance is either a hierarchy level or a retrieval index")

    def display(self) -> str:
        if self.dimension == LOCATION and self.location is not None:
            return self.location.display()
        return display_time(self.normalized)

    def provenance(self) -> dict:
        if self.retrieval_index is not None:
            return {"retrieval": self.retrieval_index}
        return {"hierarchy_level": self.level, "clue_ids": list(self.clue_ids)}

    def to_dict(self) -> dict:
        out = {"dimension": self.dimension, "raw": self.raw, "normalized": self.normalized,
               "provenance": self.provenance()}
        if self.location is not None:
            out["location"] = self.location.to_dict()
        return out


@dataclass(frozen=True)
class Prediction:
    dimension: str
    value: str
    vote_count: int
    stopped_early: bool
    used_retrieval: bool
    location: Optional[LocationValue] = None

    def label(self) -> str:
        if self.location is not None:
            return self.location.label()
        return self.value

    def to_dict(self) -> dict:
        out = {"dimension": self.dimension, "value": self.value, "label": self.label(),
               "vote_count": self.vote_count, "stopped_early": self.stopped_early,
               "used_retrieval": self.used_retrieval}
        if self.location is not None:
            out["location"] = self.location.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Prediction":
        loc = data.get("location")
        return cls(data["dimension"], data["value"], data["vote_count"], data["stopped_early"],
                   data["used_retrieval"], LocationValue.from_dict(loc) if loc else None)


@dataclass
class TaskTrace:
    task_id: str
    clues: list[Clue] = field(default_factory=list)
    raw_answers: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    passes: dict[str, dict] = field(default_factory=dict)
    predictions: dict[str, Optional[Prediction]] = field(default_factory=dict)
    choices: dict[str, str] = field(default_factory=dict)

    SCHEMA_VERSION = 1

    def to_dict(self) -> dict:
        return {
            "schema_version": self.SCHEMA_VERSION,
            "task_id": self.task_id,
            "perception": {
                "clues": [
                    {"clue_id": c.clue_id, "kind": c.kind, "text": c.text,
                     "confidence_note": c.confidence_note}
                    for c in self.clues
                ],
                "raw_answers": self.raw_answers,
            },
            "warnings": self.warnings,
            "passes": self.passes,
            "predictions": {
                dim: (p.to_dict() if p else None) for dim, p in self.predictions.items()
            },
            "choices": self.choices,
        }


# -- time normalization ------------------------------------------------------

_YEAR = r"[12]\d{3}"
_CANON_RANGE = re.compile(rf"^({_YEAR})\.\.({_YEAR})$")
_CANON_DATE = re.compile(rf"^({_YEAR})(?:-(\d{{2}})(?:-(\d{{2}}))?)?$")
_LOCAL_RANGE = re.compile(rf"^({_YEAR})s?\s*(?:-|\u2013|\u2014|to|\.\.)\s*({_YEAR})s?$", re.I)
_OPEN_RANGE = re.compile(rf"^(?:post|after|since|from)[\s-]*({_YEAR})s?$", re.I)
_ANSWER_YMD = re.compile(rf"\b({_YEAR})[-/.](\d{{1,2}})[-/.](\d{{1,2}})\b")
_ANSWER_YM = re.compile(rf"\b({_YEAR})[-/.](\d{{1,2}})\b(?![-/.]\d)")
_ANSWER_Y = re.compile(rf"\b({_YEAR})\b")


def _valid_ymd(year: int, month: Optional[int], day: Optional[int]) -> bool:
    if month is None:
        return day is None
    if not 1 <= month <= 12:
        return False
    return day is None or 1 <= day <= calendar.monthrange(year, month)[1]


def is_canonical_time(value: str) -> bool:
    m = _CANON_RANGE.match(value)
    if m:
        return int(m.group(1)) < int(m.group(2))
    m = _CANON_DATE.match(value)
    if not m:
        return False
    year, month, day = m.groups()
    return _valid_ymd(int(year), int(month) if month else None, int(day) if day else None)


def _format_date(year: int, month: Optional[int] = None, day: Optional[int] = None) -> str:
    # zero or out-of-range finer parts are dropped rather than rejected
    if month is None or not 1 <= month <= 12:
        return f"{year:04d}"
    if day is None or not _valid_ymd(year, month, day):
        return f"{year:04d}-{month:02d}"
    return f"{year:04d}-{month:02d}-{day:02d}"


def _format_range(start: int, end: int) -> str:
    if start > end:
        raise NormalizationFailed(f"inverted range {start}..{end}")
    return f"{start}" if start == end else f"{start}..{end}"


def _parse_locally(text: str, epoch: int) -> Optional[str]:
    if is_canonical_time(text):
        return text
    m = _LOCAL_RANGE.match(text)
    if m:
        return _format_range(int(m.group(1)), int(m.group(2)))
    m = _OPEN_RANGE.match(text)
    if m:
        start = int(m.group(1))
        return _format_range(start, max(start, epoch))
    return None


def parse_time_answer(answer: str, epoch: int = DEFAULT_EPOCH) -> str:
    """Extract a canonical time from a free-text backend answer."""
    text = answer.strip().strip(".").strip()
    local = _parse_locally(text, epoch)
    if local is not None:
        return local
    m = _ANSWER_YMD.search(text)
    if m:
        return _format_date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
    m = _ANSWER_YM.search(text)
    if m:
        return _format_date(int(m.group(1)), int(m.group(2)))
    m = _ANSWER_Y.search(text)
    if m:
        return m.group(1)
    raise NormalizationFailed(f"no year in {answer!r}")


def normalize_time(
    raw: str,
    date_normalizer: Optional[Callable[[str], str]] = None,
    epoch: int = DEFAULT_EPOCH,
) -> str:
    """Bring a time candidate to "YYYY", "YYYY-MM", "YYYY-MM-DD" or "YYYY..YYYY".

    Canonical inputs and plain year ranges are resolved without consulting
    ``date_normalizer``; anything else is sent to it and its answer parsed.
    """
    text = (raw or "").strip()
    if not text:
        raise NormalizationFailed("empty time candidate")
    local = _parse_locally(text.strip(".").strip(), epoch)
    if local is not None:
        return local
    if date_normalizer is None:
        return parse_time_answer(text, epoch)
    return parse_time_answer(date_normalizer(text), epoch)


def coarsen_to_year(value: str) -> str:
    return value if ".." in value else value[:4]


def display_time(value: str) -> str:
    return value.replace("..", "-")


# -- location normalization --------------------------------------------------

def normalize_location(
    raw: str,
    geocoder: Callable[[str], Optional[LocationValue]],
    continent_source: Optional[Callable[[str], str]] = None,
    validator: Optional[Callable[[str], bool]] = None,
) -> LocationValue:
    """Standardize a free-form place into (area, city, country, continent).

    ``geocoder`` returns a LocationValue without continent, or None on a miss.
    Continents come from the bundled table first and ``continent_source``
    second. On a geocoder miss the raw string is kept in the finest field it
    is recognized as; ``validator`` decides whether an unknown name is a city.
    """
    text = (raw or "").strip()
    if not text:
        raise NormalizationFailed("empty location candidate")
    place = geocoder(text)
    if place is None:
        return _fallback_location(text, continent_source, validator)

    country = place.country
    if country:
        country = geo.canonical_country(country) or country.strip()
    continent = place.continent
    if country and continent is None:
        continent = geo.continent_of(country)
        if continent is None and continent_source is not None:
            try:
                continent = continent_source(country)
            except UnknownCountry:
                continent = None
    return LocationValue(place.area, place.city, country, continent)


def _fallback_location(text, continent_source, validator) -> LocationValue:
    country = geo.canonical_country(text)
    if country:
        return LocationValue(country=country, continent=geo.continent_of(country))
    continent = geo.canonical_continent(text, strict=True)
    if continent:
        return LocationValue(continent=continent)
    if validator is not None and validator(text):
        return LocationValue(city=text)
    raise NormalizationFailed(f"could not standardize location {text!r}")
