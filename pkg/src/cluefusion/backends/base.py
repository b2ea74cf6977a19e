"""Typed facade over the five external capabilities.

Every capability is reached through a provider's ``call(kind, request)``
where ``request`` is a canonical JSON-able dict and the response is a
normalized JSON value:

=========  =====================================================  ==========================
kind       request                                                response
=========  =====================================================  ==========================
chat       model_id, messages [[role, content]], temperature,     answer string
           max_tokens
vision     model_id, image_ref, prompt, temperature, max_tokens   answer string
embed      model_id, modality, payload                            list of floats
search     query, top_k                                           list of result dicts
geocode    query                                                  {area, city, country} or None
=========  =====================================================  ==========================

Because requests are canonical, the same digest addresses a response in the
disk cache and in replay fixtures.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol, Sequence

from ..core import LocationValue
from ..errors import DimensionMismatch, EmptyInput, EmptyQuery, MalformedResponse

KINDS = ("chat", "vision", "embed", "search", "geocode")
ROLES = ("system", "user", "assistant")
IMAGE = "image"
TEXT = "text"

_UNFILLED = re.compile(r"\{[a-z_]+\}")


class Provider(Protocol):
    def call(self, kind: str, request: dict) -> Any: ...


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def request_digest(kind: str, request: dict) -> str:
    """Stable hash of a canonical request; equal across process restarts."""
    blob = canonical_json({"kind": kind, "request": request}).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class CacheKey:
    backend_kind: str
    digest: str

    @classmethod
    def of(cls, kind: str, request: dict) -> "CacheKey":
        return cls(kind, request_digest(kind, request))


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self):
        if not self.messages:
            raise EmptyInput("chat request needs at least one message")
        for role, _ in self.messages:
            if role not in ROLES:
                raise ValueError(f"bad role {role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def canonical(self) -> dict:
        return {
            "model_id": self.model_id,
            "messages": [[role, content] for role, content in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class VisionRequest:
    model_id: str
    image_ref: str
    prompt: str
    max_tokens: int = 64
    temperature: float = 0.0

    def __post_init__(self):
        if _UNFILLED.search(self.prompt):
            raise ValueError(f"vision prompt has an unfilled slot: {self.prompt!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def canonical(self) -> dict:
        return {
            "model_id": self.model_id,
            "image_ref": self.image_ref,
            "prompt": self.prompt,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    modality: str

    def __post_init__(self):
        if not self.values:
            raise MalformedResponse("empty embedding")
        if not all(math.isfinite(v) for v in self.values):
            raise MalformedResponse("embedding has non-finite values")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class SearchResult:
    rank: int
    title: str
    snippet: str
    url: str
    thumbnail_ref: Optional[str] = None

    def text(self) -> str:
        """Title and snippet, the text side of image/text matching."""
        return "\n".join(p for p in (self.title.strip(), self.snippet.strip()) if p)

    def to_dict(self) -> dict:
        return {"rank": self.rank, "title": self.title, "snippet": self.snippet,
                "url": self.url, "thumbnail_url": self.thumbnail_ref}


def similarity_score(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """100 * max(0, cosine(a, b))."""
    if len(a) != len(b):
        raise DimensionMismatch(f"{len(a)} != {len(b)}")
    dot = math.fsum(x * y for x, y in zip(a.values, b.values))
    na = math.sqrt(math.fsum(x * x for x in a.values))
    nb = math.sqrt(math.fsum(y * y for y in b.values))
    if na == 0 or nb == 0:
        return 0.0
    cosine = min(1.0, dot / (na * nb))
    return 100.0 * max(0.0, cosine)


def _unit(values: Sequence[float]) -> tuple[float, ...]:
    norm = math.sqrt(math.fsum(v * v for v in values))
    if norm == 0:
        raise MalformedResponse("zero embedding vector")
    return tuple(v / norm for v in values)


@dataclass
class Backends:
    """The client surface every pipeline stage talks to."""

    provider: Provider
    chat_model: str = "gpt-3.5-turbo"
    vision_model: str = "blip2-flan-t5-xl"
    embed_model: str = "clip-vit-b-32"
    chat_max_tokens: int = 256
    vision_max_tokens: int = 64
    embedding_dim: Optional[int] = None
    calls: Counter = field(default_factory=Counter, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def _call(self, kind: str, request: dict) -> Any:
        with self._lock:
            self.calls[kind] += 1
        return self.provider.call(kind, request)

    # chat ---------------------------------------------------------------
    def chat_request(self, prompt: str) -> ChatRequest:
        return ChatRequest(self.chat_model, (("user", prompt),), 0.0, self.chat_max_tokens)

    def chat_complete(self, req: ChatRequest) -> str:
        answer = self._call("chat", req.canonical())
        if not isinstance(answer, str):
            raise MalformedResponse(f"chat answer is {type(answer).__name__}")
        return answer.strip()

    def chat(self, prompt: str) -> str:
        return self.chat_complete(self.chat_request(prompt))

    # vision -------------------------------------------------------------
    def vision_request(self, image_ref: str, prompt: str) -> VisionRequest:
        return VisionRequest(self.vision_model, image_ref, prompt, self.vision_max_tokens)

    def vision_qa(self, req: VisionRequest) -> str:
        answer = self._call("vision", req.canonical())
        if not isinstance(answer, str):
            raise MalformedResponse(f"vision answer is {type(answer).__name__}")
        return answer.strip()

    def ask_image(self, image_ref: str, prompt: str) -> str:
        return self.vision_qa(self.vision_request(image_ref, prompt))

    # embeddings ---------------------------------------------------------
    def embed(self, item: str, modality: str) -> EmbeddingVector:
        if modality not in (IMAGE, TEXT):
            raise ValueError(f"bad modality {modality!r}")
        if not item or not item.strip():
            raise EmptyInput(f"empty {modality} to embed")
        raw = self._call("embed", {"model_id": self.embed_model, "modality": modality,
                                   "payload": item})
        try:
            values = [float(v) for v in raw]
        except (TypeError, ValueError) as exc:
            raise MalformedResponse(f"bad embedding payload: {exc}") from exc
        if self.embedding_dim is not None and len(values) != self.embedding_dim:
            raise MalformedResponse(f"expected {self.embedding_dim} dims, got {len(values)}")
        vec = EmbeddingVector(tuple(values), modality)
        return EmbeddingVector(_unit(vec.values), modality)

    # search -------------------------------------------------------------
    def web_search(self, query: str, top_k: int = 5) -> list[SearchResult]:
        if not query or not query.strip():
            raise EmptyQuery("empty search query")
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        raw = self._call("search", {"query": query, "top_k": top_k})
        if not isinstance(raw, list):
            raise MalformedResponse("search response must be a list")
        results = []
        for rank, item in enumerate(raw[:top_k]):
            if not isinstance(item, dict):
                raise MalformedResponse("search result must be an object")
            results.append(SearchResult(
                rank=rank,
                title=str(item.get("title") or ""),
                snippet=str(item.get("snippet") or ""),
                url=str(item.get("url") or ""),
                thumbnail_ref=item.get("thumbnail_url") or None,
            ))
        return results

    # geocoding ----------------------------------------------------------
    def geocode(self, free_text: str) -> Optional[LocationValue]:
        """Structured place for ``free_text``; None signals a miss."""
        if not free_text or not free_text.strip():
            raise EmptyInput("empty geocode query")
        raw = self._call("geocode", {"query": free_text})
        if not raw:
            return None
        if not isinstance(raw, dict):
            raise MalformedResponse("geocode response must be an object or null")
        fields = {k: (str(raw[k]).strip() or None) if raw.get(k) else None
                  for k in ("area", "city", "country")}
        if not any(fields.values()):
            return None
        return LocationValue(**fields)
