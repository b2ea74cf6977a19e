"""Confidence-based hierarchical combination of clues with hash-threshold voting.

Clue subsets are evaluated level by level (singles, then pairs, then the
whole set by default). Every subset asks the reasoner for a candidate; a
candidate that survives the noise filter adds one vote to the per-dimension
board, and the pass stops the moment any candidate reaches the hash
threshold.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import KEYWORDS, LOCATION, TIME, Candidate, Clue, Prediction, coarsen_to_year
from .errors import BackendError, ConfigError, NormalizationFailed, TaskFailed
from .noise_filter import NoiseFilter
from .reasoner import Reasoner

log = logging.getLogger(__name__)

SINGLES = "singles"
PAIRS = "pairs"
ALL = "all"
DEFAULT_LEVELS = (SINGLES, PAIRS, ALL)


def _parse_level(token: str) -> str:
    token = token.strip().lower()
    if token in (SINGLES, PAIRS, ALL):
        return token
    for prefix in ("k_subsets:", "k_subsets=", "k"):
        if token.startswith(prefix) and token[len(prefix):].isdigit():
            k = int(token[len(prefix):])
            if k < 1:
                break
            return f"k{k}"
    raise ConfigError(f"bad schedule level {token!r}")


@dataclass(frozen=True)
class CombinationSchedule:
    """Ordered level specs: ``singles``, ``pairs``, ``kN`` (N-subsets) or ``all``."""

    levels: tuple[str, ...] = DEFAULT_LEVELS

    def __post_init__(self):
        if not self.levels:
            raise ConfigError("schedule needs at least one level")
        object.__setattr__(self, "levels", tuple(_parse_level(s) for s in self.levels))

    @classmethod
    def parse(cls, text: str | Sequence[str]) -> "CombinationSchedule":
        if isinstance(text, str):
            text = [s for s in text.split(",") if s.strip()]
        return cls(tuple(text))

    @staticmethod
    def subset_size(level: str, n: int) -> int:
        if level == SINGLES:
            return 1
        if level == PAIRS:
            return 2
        if level == ALL:
            return n
        return int(level[1:])

    @staticmethod
    def level_number(level: str) -> int:
        """Hierarchy level recorded in provenance (all clues counts as level 3)."""
        if level == ALL:
            return 3
        return CombinationSchedule.subset_size(level, 0)

    def __str__(self):
        return ",".join(self.levels)


@dataclass(frozen=True)
class Combination:
    index: int
    level: int
    clue_ids: tuple[int, ...]


def enumerate_combinations(n: int, schedule: CombinationSchedule = CombinationSchedule()) -> list[Combination]:
    """Subsets per level in lexicographic order; oversize levels and repeats are skipped."""
    if n < 1:
        raise ValueError("need at least one clue")
    seen: set[tuple[int, ...]] = set()
    out: list[Combination] = []
    for level in schedule.levels:
        k = schedule.subset_size(level, n)
        if k > n:
            continue
        for ids in itertools.combinations(range(n), k):
            if ids in seen:
                continue
            seen.add(ids)
            out.append(Combination(len(out), schedule.level_number(level), ids))
    return out


class VoteBoard:
    """Per-dimension hash map from normalized candidate to vote count."""

    def __init__(self, dimension: str, hash_threshold: float = 5):
        if hash_threshold < 1:
            raise ConfigError("hash threshold must be >= 1")
        self.dimension = dimension
        self.hash_threshold = hash_threshold
        self.counts: dict[str, int] = {}
        self.arrival_order: dict[str, int] = {}
        self.representative: dict[str, Candidate] = {}
        self.stopped_early = False
        self.used_retrieval = False

    def record(self, cand: Candidate) -> bool:
        """Add one vote; True when this vote reaches the threshold."""
        if self.stopped_early:
            raise RuntimeError("board already reached its hash threshold")
        if cand.dimension != self.dimension:
            raise ValueError(f"{cand.dimension} candidate on {self.dimension} board")
        key = cand.normalized
        if key not in self.counts:
            self.arrival_order[key] = len(self.arrival_order)
            self.representative[key] = cand
            self.counts[key] = 0
        self.counts[key] += 1
        if self.counts[key] >= self.hash_threshold:
            self.stopped_early = True
        return self.stopped_early

    def total_votes(self) -> int:
        return sum(self.counts.values())

    def leader(self) -> Optional[str]:
        if not self.counts:
            return None
        return min(self.counts, key=lambda k: (-self.counts[k], self.arrival_order[k]))

    def snapshot(self) -> list[dict]:
        return [
            {"candidate": k, "count": self.counts[k], "arrival": self.arrival_order[k]}
            for k in sorted(self.counts, key=self.arrival_order.__getitem__)
        ]


def record_vote(board: VoteBoard, cand: Candidate) -> tuple[VoteBoard, bool]:
    return board, board.record(cand)


def finalize(board: VoteBoard) -> Optional[Prediction]:
    """Highest count wins; ties go to the earliest arrival."""
    key = board.leader()
    if key is None:
        return None
    rep = board.representative[key]
    return Prediction(board.dimension, key, board.counts[key], board.stopped_early,
                      board.used_retrieval, rep.location)


def split_slots(clues: Sequence[Clue]) -> tuple[list[str], str]:
    """Event lines and keyword text for the location prompt, in clue-id order."""
    ordered = sorted(clues, key=lambda c: c.clue_id)
    event = [c.text for c in ordered if c.kind != KEYWORDS]
    keywords = [c.text for c in ordered if c.kind == KEYWORDS]
    if not event:
        return keywords, ""
    return event, "\n".join(keywords)


@dataclass
class Combiner:
    reasoner: Reasoner
    noise_filter: NoiseFilter
    schedule: CombinationSchedule = field(default_factory=CombinationSchedule)
    no_filter: bool = False
    coarsen_time: bool = False

    def make_candidate(self, dimension: str, raw: str, **provenance) -> Candidate:
        """Normalize a raw answer; raises NormalizationFailed or a backend error."""
        if dimension == TIME:
            value = self.reasoner.normalize_time(raw)
            if self.coarsen_time:
                value = coarsen_to_year(value)
            return Candidate(TIME, raw, value, **provenance)
        loc = self.reasoner.normalize_location(raw)
        return Candidate(LOCATION, raw, loc.key(), location=loc, **provenance)

    def evaluate_combination(
        self, clues: Sequence[Clue], combo: Combination, dimension: str
    ) -> tuple[Optional[Candidate], dict]:
        chosen = [c for c in clues if c.clue_id in combo.clue_ids]
        record = {"index": combo.index, "level": combo.level, "clue_ids": list(combo.clue_ids),
                  "prompt": None, "raw_answer": None, "candidate": None, "note": None}
        try:
            if dimension == LOCATION:
                event, keywords = split_slots(chosen)
                ans = self.reasoner.ask_location(event, keywords)
            else:
                ans = self.reasoner.ask_time([c.text for c in sorted(chosen, key=lambda c: c.clue_id)])
            record["prompt"] = ans.filled_prompt
            record["raw_answer"] = ans.raw_answer
            if ans.parsed is None:
                record["note"] = "refusal"
                return None, record
            cand = self.make_candidate(dimension, ans.parsed, level=combo.level,
                                       clue_ids=combo.clue_ids)
        except NormalizationFailed as exc:
            record["note"] = f"normalization failed: {exc}"
            return None, record
        except BackendError as exc:
            record["note"] = f"backend error: {type(exc).__name__}: {exc}"
            record["backend_error"] = True
            log.warning("combination %s skipped: %s", combo.clue_ids, exc)
            return None, record
        record["candidate"] = cand.to_dict()
        return cand, record

    def run_hierarchy(
        self, image_ref: str, clues: Sequence[Clue], dimension: str, board: VoteBoard
    ) -> list[dict]:
        """Evaluate, filter and vote combination by combination until early stop."""
        if not clues:
            return []
        records = []
        for combo in enumerate_combinations(len(clues), self.schedule):
            cand, record = self.evaluate_combination(clues, combo, dimension)
            record["verdict"] = None
            record["vote"] = None
            record["early_stop"] = False
            records.append(record)
            if cand is None:
                continue
            verdict = self.noise_filter.filter_or_bypass(image_ref, cand, self.no_filter)
            record["verdict"] = verdict.to_dict()
            if not verdict.accepted:
                continue
            stop = board.record(cand)
            record["vote"] = board.counts[cand.normalized]
            record["early_stop"] = stop
            if stop:
                break
        if records and all(r.get("backend_error") for r in records):
            raise TaskFailed(f"every {dimension} combination failed at the transport level")
        return records

