"""Parsing rules for short free-text backend answers."""

from __future__ import annotations

import re
from typing import Iterable, Optional

DEFAULT_STOP_PHRASES = ("no text", "none", "n/a")

_YES_NO = re.compile(r"^(yes|no)\b")


def parse_yes_no(answer: str) -> Optional[bool]:
    """True/False for answers starting with yes/no, None when unparseable."""
    m = _YES_NO.match((answer or "").strip().casefold())
    if not m:
        return None
    return m.group(1) == "yes"


def is_yes(answer: str) -> bool:
    return parse_yes_no(answer) is True


def is_refusal(answer: str) -> bool:
    stripped = re.sub(r"[\W_]+", "", (answer or "").casefold())
    return stripped in ("", "no")


def is_vacuous(answer: str, stop_phrases: Iterable[str] = DEFAULT_STOP_PHRASES) -> bool:
    text = (answer or "").strip().strip(".!").strip().casefold()
    return not text or text in {p.casefold() for p in stop_phrases}


def single_line(text: str) -> str:
    return " ".join((text or "").split())


def truncate_words(text: str, limit: int) -> str:
    if len(text) <= limit:
        return text
    head = text[:limit]
    if text[limit] != " " and " " in head:
        head = head.rsplit(" ", 1)[0]
    return head.rstrip()
