"""Visual clue extraction through the vision-QA backend."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import prompts
from .answers import DEFAULT_STOP_PHRASES, is_vacuous, parse_yes_no
from .backends import Backends
from .core import (
    CELEBRITY,
    DIRECT_DATE,
    INITIAL_GUESS,
    KEYWORDS,
    LANDMARK,
    OCR_TEXT,
    Clue,
)
from .errors import BackendError, TaskFailed

log = logging.getLogger(__name__)

EXTRACTOR_ORDER = (KEYWORDS, OCR_TEXT, CELEBRITY, LANDMARK, INITIAL_GUESS, DIRECT_DATE)
DEFAULT_EXTRACTORS = (KEYWORDS, OCR_TEXT, CELEBRITY, LANDMARK, DIRECT_DATE)


@dataclass
class PerceiverOutput:
    clues: list[Clue] = field(default_factory=list)
    raw_answers: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


class Perceiver:
    """Runs the fixed catalog of visual prompts and turns answers into clues.

    Each ``extract_*`` / ``detect_*`` method returns an unnumbered clue
    (``clue_id`` 0) or None; :meth:`perceive` assigns dense ids afterwards.
    """

    def __init__(
        self,
        backends: Backends,
        extractors: Sequence[str] = DEFAULT_EXTRACTORS,
        stop_phrases: Sequence[str] = DEFAULT_STOP_PHRASES,
        fail_hard: bool = False,
    ):
        unknown = set(extractors) - set(EXTRACTOR_ORDER)
        if unknown:
            raise ValueError(f"unknown extractors {sorted(unknown)}")
        self.backends = backends
        self.extractors = tuple(k for k in EXTRACTOR_ORDER if k in extractors)
        self.stop_phrases = tuple(stop_phrases)
        self.fail_hard = fail_hard
        self._raw: dict[str, str] = {}

    def _ask(self, image_ref: str, prompt_name: str, key: str) -> str:
        answer = self.backends.ask_image(image_ref, prompts.fill(prompt_name))
        self._raw[key] = answer
        return answer

    def _text_clue(self, kind: str, answer: str) -> Optional[Clue]:
        if is_vacuous(answer, self.stop_phrases):
            return None
        return Clue(0, kind, answer.strip(), confidence_note=answer)

    def extract_keywords(self, image_ref: str) -> Optional[Clue]:
        return self._text_clue(KEYWORDS, self._ask(image_ref, "keywords", KEYWORDS))

    def extract_ocr_text(self, image_ref: str) -> Optional[Clue]:
        return self._text_clue(OCR_TEXT, self._ask(image_ref, "ocr_text", OCR_TEXT))

    def direct_date_guess(self, image_ref: str) -> Optional[Clue]:
        return self._text_clue(DIRECT_DATE, self._ask(image_ref, "date_candidate", DIRECT_DATE))

    def initial_guess(self, image_ref: str) -> Optional[Clue]:
        return self._text_clue(INITIAL_GUESS, self._ask(image_ref, "initial_guess", INITIAL_GUESS))

    def detect_celebrity(self, image_ref: str) -> Optional[Clue]:
        check = self._ask(image_ref, "check_celebrity", "celebrity_check")
        if parse_yes_no(check) is not True:
            return None
        name = self._ask(image_ref, "celebrity_name", CELEBRITY)
        return self._text_clue(CELEBRITY, name)

    def check_landmark(self, image_ref: str, keywords_answer: Optional[str] = None) -> Optional[Clue]:
        """Yes-gated; the payload is the keyword tokens that geocode to a place."""
        check = self._ask(image_ref, "has_landmark", "landmark_check")
        if parse_yes_no(check) is not True:
            return None
        if keywords_answer is None:
            keywords_answer = self._ask(image_ref, "keywords", KEYWORDS)
        places = []
        for token in keywords_answer.split(","):
            token = token.strip()
            if token and token not in places and self.backends.geocode(token) is not None:
                places.append(token)
        if not places:
            return None
        self._raw[LANDMARK] = ", ".join(places)
        return Clue(0, LANDMARK, ", ".join(places), confidence_note=check)

    def perceive(self, image_ref: str) -> PerceiverOutput:
        self._raw = {}
        out = PerceiverOutput()
        found: list[Clue] = []
        failures = 0
        for kind in self.extractors:
            try:
                if kind == KEYWORDS:
                    clue = self.extract_keywords(image_ref)
                elif kind == OCR_TEXT:
                    clue = self.extract_ocr_text(image_ref)
                elif kind == CELEBRITY:
                    clue = self.detect_celebrity(image_ref)
                elif kind == LANDMARK:
                    clue = self.check_landmark(image_ref, self._raw.get(KEYWORDS))
                elif kind == INITIAL_GUESS:
                    clue = self.initial_guess(image_ref)
                else:
                    clue = self.direct_date_guess(image_ref)
            except BackendError as exc:
                failures += 1
                msg = f"perceiver {kind} failed: {type(exc).__name__}: {exc}"
                log.warning(msg)
                out.warnings.append(msg)
                continue
            if clue is not None:
                found.append(clue)
        if self.fail_hard and self.extractors and failures == len(self.extractors):
            raise TaskFailed(f"every extractor failed for {image_ref!r}")
        out.clues = [dataclasses.replace(c, clue_id=i) for i, c in enumerate(found)]
        out.raw_answers = dict(self._raw)
        return out
