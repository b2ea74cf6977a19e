"""Offline providers: digest-keyed replay, recording, and readable lookup tables."""

from __future__ import annotations

import json
import os
import threading
from collections import Counter
from pathlib import Path
from typing import Any, Callable, Optional

from ..errors import BackendError, ReplayMiss
from .base import Provider, canonical_json, request_digest


class ReplayProvider:
    """Answers requests from a fixture mapping request digest to response.

    Fixture values are either the bare response or an object carrying it
    under ``"response"`` (the layout written by :class:`RecordingProvider`).
    """

    def __init__(self, entries: dict[str, Any]):
        self.entries = {}
        for digest, value in entries.items():
            if isinstance(value, dict) and "response" in value:
                value = value["response"]
            self.entries[digest] = value
        self.calls: Counter = Counter()
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ReplayProvider":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def call(self, kind: str, request: dict) -> Any:
        digest = request_digest(kind, request)
        with self._lock:
            self.calls[kind] += 1
        if digest not in self.entries:
            raise ReplayMiss(f"no {kind} response for {canonical_json(request)[:200]}")
        value = self.entries[digest]
        # hand out copies so callers cannot mutate the fixture
        return json.loads(json.dumps(value))


class RecordingProvider:
    """Passes calls through and remembers every successful exchange."""

    def __init__(self, inner: Provider):
        self.inner = inner
        self.entries: dict[str, dict] = {}
        self._lock = threading.Lock()

    def call(self, kind: str, request: dict) -> Any:
        response = self.inner.call(kind, request)
        with self._lock:
            self.entries[request_digest(kind, request)] = {
                "kind": kind, "request": request, "response": response,
            }
        return response

    def dumps(self) -> str:
        return json.dumps(self.entries, sort_keys=True, indent=1, ensure_ascii=False) + "\n"

    def save(self, path: str | os.PathLike, merge: bool = True):
        path = Path(path)
        if merge and path.exists():
            existing = json.loads(path.read_text(encoding="utf-8"))
            existing.update(self.entries)
            self.entries = existing
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")


class TableProvider:
    """Readable test double keyed by the meaningful part of each request.

    ``chat`` maps prompt to answer, ``vision`` maps (image_ref, prompt) to
    answer, ``embed`` maps (modality, payload) to a vector, ``search`` maps
    query to a result list, ``geocode`` maps query to a place dict or None.
    A value may be an exception instance, which is raised. Unknown requests
    fall through to ``fallback`` or raise :class:`ReplayMiss`.
    """

    def __init__(self, chat=None, vision=None, embed=None, search=None, geocode=None,
                 fallback: Optional[Callable[[str, dict], Any]] = None):
        self.tables = {
            "chat": dict(chat or {}),
            "vision": dict(vision or {}),
            "embed": dict(embed or {}),
            "search": dict(search or {}),
            "geocode": dict(geocode or {}),
        }
        self.fallback = fallback
        self.calls: Counter = Counter()
        self.log: list[tuple[str, dict]] = []
        self._lock = threading.Lock()

    @staticmethod
    def table_key(kind: str, request: dict):
        if kind == "chat":
            return request["messages"][-1][1]
        if kind == "vision":
            return (request["image_ref"], request["prompt"])
        if kind == "embed":
            return (request["modality"], request["payload"])
        if kind in ("search", "geocode"):
            return request["query"]
        raise ValueError(kind)

    def call(self, kind: str, request: dict) -> Any:
        with self._lock:
            self.calls[kind] += 1
            self.log.append((kind, request))
        key = self.table_key(kind, request)
        table = self.tables[kind]
        if key in table:
            value = table[key]
        elif self.fallback is not None:
            value = self.fallback(kind, request)
        else:
            raise ReplayMiss(f"no {kind} entry for {key!r}")
        if isinstance(value, BaseException):
            raise value
        return json.loads(json.dumps(value))

    def prompts(self, kind: str) -> list[str]:
        idx = 1 if kind == "vision" else None
        out = []
        for k, req in self.log:
            if k == kind:
                key = self.table_key(k, req)
                out.append(key[idx] if idx is not None else key)
        return out


class FailingProvider:
    """Raises the given error for every call; useful for failure contracts."""

    def __init__(self, error: BackendError):
        self.error = error
        self.calls: Counter = Counter()

    def call(self, kind: str, request: dict) -> Any:
        self.calls[kind] += 1
        raise self.error


def load_provider(path: str | os.PathLike) -> Provider:
    return ReplayProvider.load(path)
