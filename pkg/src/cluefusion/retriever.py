"""Web-search fallback for dimensions the hierarchy could not settle."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import prompts
from .answers import is_refusal, is_yes
from .backends import IMAGE, TEXT, Backends, SearchResult, similarity_score
from .combiner import Combiner, VoteBoard
from .core import LOCATION, Candidate, Clue
from .errors import BackendError, EmptyInput, NormalizationFailed
from .noise_filter import NoiseFilter

log = logging.getLogger(__name__)

IMAGE_IMAGE = "image_image"
IMAGE_TEXT = "image_text"
MODES = (IMAGE_IMAGE, IMAGE_TEXT)


@dataclass
class RetrievalRecord:
    query: str
    results: list[SearchResult] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    kept: list[int] = field(default_factory=list)
    mode: str = IMAGE_IMAGE
    rt: float = 90.0
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {"query": self.query, "mode": self.mode, "rt": self.rt,
                "results": [r.to_dict() for r in self.results], "scores": self.scores,
                "kept": self.kept, "error": self.error}


def kept_indices(scores: Sequence[float], rt: float) -> list[int]:
    """Results must score strictly above the retrieval threshold."""
    return [i for i, s in enumerate(scores) if s > rt]


class WebRetriever:
    def __init__(self, backends: Backends, combiner: Combiner, rt: float = 90.0,
                 mode: str = IMAGE_IMAGE, top_k: int = 5):
        if not 0 <= rt <= 100:
            raise ValueError("retrieval threshold must lie in [0, 100]")
        if mode not in MODES:
            raise ValueError(f"unknown retrieval mode {mode!r}")
        self.backends = backends
        self.combiner = combiner
        self.reasoner = combiner.reasoner
        self.rt = rt
        self.mode = mode
        self.top_k = top_k

    def _score(self, image_vec, result: SearchResult) -> float:
        try:
            if self.mode == IMAGE_IMAGE and result.thumbnail_ref:
                other = self.backends.embed(result.thumbnail_ref, IMAGE)
            else:
                other = self.backends.embed(result.text(), TEXT)
            return similarity_score(image_vec, other)
        except (BackendError, EmptyInput) as exc:
            log.warning("scoring result %d failed: %s", result.rank, exc)
            return 0.0

    def retrieve_and_filter(self, image_ref: str, query: str) -> RetrievalRecord:
        if not query or not query.strip():
            raise EmptyInput("empty retrieval query")
        record = RetrievalRecord(query, mode=self.mode, rt=self.rt)
        try:
            record.results = self.backends.web_search(query, self.top_k)
        except BackendError as exc:
            record.error = f"search failed: {type(exc).__name__}: {exc}"
            return record
        if not record.results:
            return record
        try:
            image_vec = self.backends.embed(image_ref, IMAGE)
        except BackendError as exc:
            record.error = f"image embedding failed: {type(exc).__name__}: {exc}"
            record.scores = [0.0] * len(record.results)
            return record
        record.scores = [self._score(image_vec, r) for r in record.results]
        record.kept = kept_indices(record.scores, self.rt)
        return record

    def _extract(self, result: SearchResult, dimension: str) -> tuple[Optional[Candidate], dict]:
        text = result.text()
        note = {"index": result.rank, "raw_answer": None, "agreement": None, "candidate": None,
                "note": None}
        try:
            if dimension == LOCATION:
                answer = self.backends.chat(prompts.fill("snippet_location", snippet=text))
                note["raw_answer"] = answer
                if is_refusal(answer):
                    note["note"] = "refusal"
                    return None, note
                agree = self.backends.chat(prompts.fill("snippet_agreement", snippet=text,
                                                        location_result=answer))
                note["agreement"] = agree
                if not is_yes(agree):
                    note["note"] = "snippet disagrees"
                    return None, note
            else:
                ans = self.reasoner.ask_time([text])
                answer = ans.raw_answer
                note["raw_answer"] = answer
                if ans.parsed is None:
                    note["note"] = "refusal"
                    return None, note
            cand = self.combiner.make_candidate(dimension, answer, retrieval_index=result.rank)
        except NormalizationFailed as exc:
            note["note"] = f"normalization failed: {exc}"
            return None, note
        except BackendError as exc:
            note["note"] = f"backend error: {type(exc).__name__}: {exc}"
            return None, note
        note["candidate"] = cand.to_dict()
        return cand, note

    def candidates_from_snippets(self, record: RetrievalRecord, dimension: str) -> tuple[list[Candidate], list[dict]]:
        """Candidates from kept results, in kept order, with per-snippet notes."""
        cands, notes = [], []
        for i in record.kept:
            cand, note = self._extract(record.results[i], dimension)
            notes.append(note)
            if cand is not None:
                cands.append(cand)
        return cands, notes

    def evidence(self, clues: Sequence[Clue], board: VoteBoard) -> list[str]:
        lines = [c.text for c in sorted(clues, key=lambda c: c.clue_id)]
        leader = board.leader()
        if leader is not None:
            lines.append(board.representative[leader].display())
        return lines

    def maybe_retrieve(
        self,
        image_ref: str,
        board: VoteBoard,
        clues: Sequence[Clue],
        noise_filter: NoiseFilter,
        no_retrieval: bool = False,
        filter_retrieval: bool = True,
    ) -> Optional[dict]:
        """Search once for a board that did not reach its threshold.

        Retrieved candidates go through the noise filter and vote like
        hierarchy candidates, and early stopping still applies.
        """
        if no_retrieval or board.stopped_early:
            return None
        dimension = board.dimension
        evidence = self.evidence(clues, board)
        if not evidence:
            return {"skipped": "no evidence", "record": None, "extractions": []}
        board.used_retrieval = True
        try:
            q = self.reasoner.build_search_query(evidence, dimension)
        except BackendError as exc:
            return {"skipped": f"query failed: {type(exc).__name__}: {exc}", "record": None,
                    "extractions": []}
        record = self.retrieve_and_filter(image_ref, q.parsed)
        skip_filter = self.combiner.no_filter or not filter_retrieval
        notes = []
        for i in record.kept:
            cand, note = self._extract(record.results[i], dimension)
            notes.append(note)
            if cand is None:
                continue
            verdict = noise_filter.filter_or_bypass(image_ref, cand, skip_filter)
            note["verdict"] = verdict.to_dict()
            if not verdict.accepted:
                continue
            stop = board.record(cand)
            note["vote"] = board.counts[cand.normalized]
            note["early_stop"] = stop
            if stop:
                break
        return {"query_prompt": q.filled_prompt, "query_answer": q.raw_answer,
                "record": record.to_dict(), "extractions": notes}

