"""Binary image-grounded check gating candidates before they are voted."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from . import prompts
from .answers import parse_yes_no
from .backends import Backends
from .core import LOCATION, Candidate
from .errors import BackendError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterVerdict:
    candidate: Candidate
    raw_answer: str
    accepted: bool
    bypass: bool = False
    prompt: Optional[str] = None
    warning: Optional[str] = None

    def to_dict(self) -> dict:
        return {"raw_answer": self.raw_answer, "accepted": self.accepted, "bypass": self.bypass,
                "prompt": self.prompt, "warning": self.warning}


class NoiseFilter:
    def __init__(self, backends: Backends, fail_open: bool = False):
        self.backends = backends
        self.fail_open = fail_open

    def prompt_for(self, cand: Candidate) -> str:
        if cand.dimension == LOCATION:
            return prompts.fill("filter_location", loc=cand.display())
        return prompts.fill("filter_date", date=cand.display())

    def verify_candidate(self, image_ref: str, cand: Candidate) -> FilterVerdict:
        prompt = self.prompt_for(cand)
        try:
            answer = self.backends.ask_image(image_ref, prompt)
        except BackendError as exc:
            msg = f"noise filter failed for {cand.normalized!r}: {type(exc).__name__}: {exc}"
            log.warning(msg)
            return FilterVerdict(cand, "", self.fail_open, False, prompt, msg)
        return FilterVerdict(cand, answer, parse_yes_no(answer) is True, False, prompt)

    def filter_or_bypass(self, image_ref: str, cand: Candidate, no_filter: bool = False) -> FilterVerdict:
        if no_filter:
            return FilterVerdict(cand, "", True, True)
        return self.verify_candidate(image_ref, cand)
