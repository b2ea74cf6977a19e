"""Content-addressed on-disk response cache."""

from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
import threading
import time
from pathlib import Path
from typing import Any

from .base import Provider, canonical_json, request_digest

log = logging.getLogger(__name__)


class CachingProvider:
    """Wraps a provider; one JSON file per request digest under ``root``.

    Each file holds the canonical request, the response and a timestamp.
    Unreadable or corrupted entries count as misses, and write failures
    degrade to pass-through with a warning.
    """

    def __init__(self, inner: Provider, root: str | os.PathLike):
        self.inner = inner
        self.root = Path(root)
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def path_for(self, kind: str, digest: str) -> Path:
        return self.root / kind / digest[:2] / f"{digest}.json"

    def _load(self, path: Path, kind: str, request: dict):
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return False, None
        except (OSError, ValueError) as exc:
            log.warning("ignoring unreadable cache entry %s: %s", path, exc)
            return False, None
        if (not isinstance(entry, dict) or "response" not in entry
                or canonical_json(entry.get("request")) != canonical_json(request)
                or entry.get("kind") != kind):
            log.warning("ignoring corrupted cache entry %s", path)
            return False, None
        return True, entry["response"]

    def _store(self, path: Path, kind: str, request: dict, response: Any):
        entry = {"kind": kind, "request": request, "response": response, "timestamp": time.time()}
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False))
            os.replace(tmp, path)
        except OSError as exc:
            log.warning("cache write failed for %s: %s", path, exc)

    def call(self, kind: str, request: dict) -> Any:
        path = self.path_for(kind, request_digest(kind, request))
        found, response = self._load(path, kind, request)
        with self._lock:
            if found:
                self.hits += 1
            else:
                self.misses += 1
        if found:
            return response
        response = self.inner.call(kind, request)
        self._store(path, kind, request, response)
        return response


def with_cache(inner: Provider, root: str | os.PathLike) -> CachingProvider:
    return CachingProvider(inner, root)


def cache_stats(root: str | os.PathLike) -> dict:
    root = Path(root)
    per_kind: dict[str, int] = {}
    total_bytes = 0
    if root.exists():
        for path in root.rglob("*.json"):
            kind = path.relative_to(root).parts[0]
            per_kind[kind] = per_kind.get(kind, 0) + 1
            total_bytes += path.stat().st_size
    return {"root": str(root), "entries": sum(per_kind.values()), "per_kind": per_kind,
            "bytes": total_bytes}


def purge_cache(root: str | os.PathLike) -> int:
    stats = cache_stats(root)
    if Path(root).exists():
        shutil.rmtree(root)
    return stats["entries"]
