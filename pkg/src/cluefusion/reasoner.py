"""Candidate deduction and auxiliary text utilities over the chat backend."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

from . import geo, prompts
from .answers import is_refusal, parse_yes_no, single_line, truncate_words
from .backends import Backends
from .core import (
    DEFAULT_EPOCH,
    TIME,
    LocationValue,
    TimeRange,
    normalize_location,
    normalize_time,
)
from .errors import EmptyInput, UnknownCountry

MAX_QUERY_CHARS = 200

_RANGE_ANSWER = re.compile(r"^\s*([12]\d{3})\s*[-\u2013\u2014]\s*([12]\d{3})\s*$")


@dataclass(frozen=True)
class ReasonerAnswer:
    prompt_name: str
    filled_prompt: str
    raw_answer: str
    parsed: Optional[str]

    def to_dict(self) -> dict:
        return {"prompt_name": self.prompt_name, "filled_prompt": self.filled_prompt,
                "raw_answer": self.raw_answer, "parsed": self.parsed}


class Reasoner:
    def __init__(self, backends: Backends, epoch: int = DEFAULT_EPOCH):
        self.backends = backends
        self.epoch = epoch

    def _ask(self, prompt_name: str, **values: str) -> ReasonerAnswer:
        filled = prompts.fill(prompt_name, **values)
        answer = self.backends.chat(filled)
        return ReasonerAnswer(prompt_name, filled, answer, answer or None)

    # -- candidate deduction ------------------------------------------------
    def ask_location(self, texts: Sequence[str], keywords: str = "") -> ReasonerAnswer:
        """Location prompt; ``texts`` fill the event slot one per line."""
        if not texts or not any(t.strip() for t in texts):
            raise EmptyInput("no clue text to reason over")
        ans = self._ask("location_candidate", event="\n".join(texts), keywords=keywords)
        parsed = None if is_refusal(ans.raw_answer) else ans.raw_answer
        return ReasonerAnswer(ans.prompt_name, ans.filled_prompt, ans.raw_answer, parsed)

    def ask_time(self, texts: Sequence[str]) -> ReasonerAnswer:
        if not texts or not any(t.strip() for t in texts):
            raise EmptyInput("no clue text to reason over")
        ans = self._ask("time_candidate", time_clue="\n".join(texts))
        parsed = None if is_refusal(ans.raw_answer) else ans.raw_answer
        return ReasonerAnswer(ans.prompt_name, ans.filled_prompt, ans.raw_answer, parsed)

    def deduce_location(self, texts: Sequence[str], keywords: str = "") -> Optional[str]:
        return self.ask_location(texts, keywords).parsed

    def deduce_time(self, texts: Sequence[str]) -> Optional[str]:
        return self.ask_time(texts).parsed

    def conclude_event(self, event: str, keywords: str) -> str:
        if not (event or "").strip() and not (keywords or "").strip():
            raise EmptyInput("event and keywords are both empty")
        return self._ask("concrete_keywords", event=event or "", keywords=keywords or "").raw_answer

    # -- normalization helpers ----------------------------------------------
    def convert_date(self, date_candidate: str) -> str:
        return self._ask("convert_date", date_candidate=date_candidate).raw_answer

    def normalize_time(self, raw: str) -> str:
        return normalize_time(raw, self.convert_date, self.epoch)

    def validate_location(self, loc: str) -> bool:
        if not loc or not loc.strip():
            raise EmptyInput("empty location")
        return parse_yes_no(self._ask("check_location_validity", loc=loc).raw_answer) is True

    def infer_continent(self, country: str) -> str:
        if not country or not country.strip():
            raise EmptyInput("empty country")
        known = geo.continent_of(country)
        if known:
            return known
        answer = self._ask("get_continent", country=country).raw_answer
        continent = geo.canonical_continent(answer)
        if continent is None:
            raise UnknownCountry(f"no continent for {country!r} (answer {answer!r})")
        return continent

    def normalize_location(self, raw: str) -> LocationValue:
        return normalize_location(raw, self.backends.geocode, self.infer_continent,
                                  self.validate_location)

    # -- time ranges ----------------------------------------------------------
    def celebrity_time_range(self, name: str) -> Optional[TimeRange]:
        if not name or not name.strip():
            raise EmptyInput("empty celebrity name")
        answer = self._ask("time_range", name=name).raw_answer
        m = _RANGE_ANSWER.match(answer.strip().strip('."'))
        if not m:
            return None
        start, end = int(m.group(1)), int(m.group(2))
        if start > end:
            return None
        return TimeRange(start, end)

    # -- text utilities -------------------------------------------------------
    def clean_text(self, contexts: str, main_text: str) -> str:
        if not main_text or not main_text.strip():
            raise EmptyInput("empty main text")
        return self._ask("clean_text", contexts=contexts or "", main_text=main_text).raw_answer

    def build_search_query(self, evidence: Sequence[str], dimension: str) -> ReasonerAnswer:
        """One-line query of at most 200 characters built from the evidence."""
        lines = [e.strip() for e in evidence if e and e.strip()]
        if not lines:
            raise EmptyInput("no evidence for a search query")
        target = "date" if dimension == TIME else "location"
        ans = self._ask("search_keywords", contexts=target, main_text="\n".join(lines))
        query = single_line(ans.raw_answer).strip('"\' ')
        if not query:
            query = single_line(" ".join(lines))
        query = truncate_words(query, MAX_QUERY_CHARS)
        return ReasonerAnswer(ans.prompt_name, ans.filled_prompt, ans.raw_answer, query)

    def select_choice(self, answer: str, options: Sequence[str]) -> str:
        """Map an open-ended prediction onto one of ``options``.

        Falls back to the raw answer, which scorers treat as out of set.
        """
        raw = self._ask("select_choice", answer=answer, options="; ".join(options)).raw_answer
        return match_option(raw, options) or raw


def match_option(answer: str, options: Sequence[str]) -> Optional[str]:
    folded = single_line(answer).strip(" .\"'").casefold()
    for opt in options:
        if opt.casefold() == folded:
            return opt
    contained = [opt for opt in options if opt.casefold() in folded]
    if contained:
        return max(contained, key=len)
    return None


def intersect_time_ranges(a: TimeRange, b: TimeRange) -> Optional[TimeRange]:
    """Latest start to earliest end, or None when the ranges are disjoint."""
    start = max((a, b), key=lambda r: r.start_bound())
    end = min((a, b), key=lambda r: r.end_bound())
    if start.start_bound() > end.end_bound():
        return None
    return TimeRange(start.start_year, end.end_year, start.start_month, start.start_day,
                     end.end_month, end.end_day)


def range_alignment_check(time_range: TimeRange, date: str) -> bool:
    """Whether the interval of a canonical time string meets ``time_range``."""
    other = TimeRange.from_normalized(date)
    return (time_range.start_bound() <= other.end_bound()
            and other.start_bound() <= time_range.end_bound())

