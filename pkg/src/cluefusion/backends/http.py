"""Live HTTP provider speaking the JSON wire protocols of each capability."""

from __future__ import annotations

import base64
import logging
import mimetypes
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import httpx

from ..errors import (
    BackendError,
    BackendTimeout,
    GeocodeUnavailable,
    InputUnreadable,
    MalformedResponse,
    QuotaExceeded,
    RateLimited,
)

log = logging.getLogger(__name__)

ENV_ENDPOINTS = {
    "chat": "CHAT_ENDPOINT",
    "vision": "VISION_ENDPOINT",
    "embed": "EMBED_ENDPOINT",
    "search": "SEARCH_ENDPOINT",
    "geocode": "GEOCODE_ENDPOINT",
}
ENV_KEYS = {
    "chat": "CHAT_API_KEY",
    "vision": "CHAT_API_KEY",
    "embed": "CHAT_API_KEY",
    "search": "SEARCH_API_KEY",
    "geocode": "GEOCODE_API_KEY",
}

# finer-to-coarser address components accepted from geocoders
_AREA_KEYS = ("area", "attraction", "tourism", "amenity", "building", "leisure",
              "neighbourhood", "suburb", "borough", "quarter")
_CITY_KEYS = ("city", "town", "village", "municipality", "hamlet")


@dataclass
class HttpSettings:
    endpoints: dict[str, str] = field(default_factory=dict)
    api_keys: dict[str, str] = field(default_factory=dict)
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 1.0
    max_concurrent: int = 4
    min_interval: float = 0.0
    image_root: Optional[str] = None

    @classmethod
    def from_env(cls, endpoints: Optional[dict[str, str]] = None, **kwargs) -> "HttpSettings":
        merged = dict(endpoints or {})
        for kind, var in ENV_ENDPOINTS.items():
            if os.environ.get(var):
                merged[kind] = os.environ[var]
        keys = {kind: os.environ[var] for kind, var in ENV_KEYS.items() if os.environ.get(var)}
        return cls(endpoints=merged, api_keys=keys, **kwargs)


def geocode_fields(payload: dict) -> Optional[dict]:
    """Collapse a geocoder's address components into area/city/country."""
    if not payload:
        return None
    comps = payload.get("address", payload)
    if not isinstance(comps, dict):
        raise MalformedResponse("geocode address must be an object")
    area = next((comps[k] for k in _AREA_KEYS if comps.get(k)), None)
    city = next((comps[k] for k in _CITY_KEYS if comps.get(k)), None)
    country = comps.get("country") or None
    if not (area or city or country):
        return None
    return {"area": area, "city": city, "country": country}


class HttpProvider:
    """Talks to configured endpoints with retries, a concurrency cap and pacing."""

    def __init__(self, settings: HttpSettings, transport: Optional[httpx.BaseTransport] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.settings = settings
        self._client = httpx.Client(timeout=settings.timeout, transport=transport)
        self._sleep = sleep
        self._slots = {k: threading.BoundedSemaphore(settings.max_concurrent)
                       for k in ENV_ENDPOINTS}
        self._pace_lock = threading.Lock()
        self._last_sent: dict[str, float] = {}

    def close(self):
        self._client.close()

    # -- payload construction -------------------------------------------
    def _image_payload(self, ref: str) -> str:
        if ref.startswith(("http://", "https://", "data:")):
            return ref
        path = Path(ref)
        if not path.is_absolute() and self.settings.image_root:
            path = Path(self.settings.image_root) / path
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise InputUnreadable(f"cannot read image {ref!r}: {exc}") from exc
        mime = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        return f"data:{mime};base64,{base64.b64encode(data).decode('ascii')}"

    def _wire(self, kind: str, request: dict) -> tuple[str, dict]:
        if kind == "chat":
            return "POST", {
                "model": request["model_id"],
                "messages": [{"role": r, "content": c} for r, c in request["messages"]],
                "temperature": request["temperature"],
                "max_tokens": request["max_tokens"],
            }
        if kind == "vision":
            image = self._image_payload(request["image_ref"])
            return "POST", {
                "model": request["model_id"],
                "messages": [{"role": "user", "content": [
                    {"type": "text", "text": request["prompt"]},
                    {"type": "image_url", "image_url": {"url": image}},
                ]}],
                "temperature": request["temperature"],
                "max_tokens": request["max_tokens"],
            }
        if kind == "embed":
            payload = request["payload"]
            if request["modality"] == "image":
                payload = self._image_payload(payload)
            return "POST", {"model": request["model_id"], "modality": request["modality"],
                            "payload": payload}
        if kind == "search":
            return "POST", {"query": request["query"], "top_k": request["top_k"]}
        if kind == "geocode":
            return "GET", {"query": request["query"]}
        raise ValueError(f"unknown backend kind {kind!r}")

    @staticmethod
    def _parse(kind: str, body: Any) -> Any:
        try:
            if kind in ("chat", "vision"):
                content = body["choices"][0]["message"]["content"]
                if not isinstance(content, str):
                    raise TypeError("content is not a string")
                return content
            if kind == "embed":
                return [float(v) for v in body["vector"]]
            if kind == "search":
                return [
                    {"title": r.get("title", ""), "snippet": r.get("snippet", ""),
                     "url": r.get("url", ""), "thumbnail_url": r.get("thumbnail_url")}
                    for r in body.get("results", [])
                ]
            if kind == "geocode":
                return geocode_fields(body or {})
        except (KeyError, IndexError, TypeError, ValueError, AttributeError) as exc:
            raise MalformedResponse(f"{kind}: {exc!r}") from exc
        raise ValueError(f"unknown backend kind {kind!r}")

    # -- transport --------------------------------------------------------
    def _pace(self, kind: str):
        if self.settings.min_interval <= 0:
            return
        with self._pace_lock:
            wait = self._last_sent.get(kind, 0.0) + self.settings.min_interval - time.monotonic()
            if wait > 0:
                self._sleep(wait)
            self._last_sent[kind] = time.monotonic()

    def _send_once(self, kind: str, method: str, payload: dict) -> Any:
        url = self.settings.endpoints.get(kind)
        if not url:
            raise BackendError(f"no endpoint configured for {kind}")
        headers = {}
        if self.settings.api_keys.get(kind):
            headers["Authorization"] = f"Bearer {self.settings.api_keys[kind]}"
        self._pace(kind)
        try:
            if method == "GET":
                resp = self._client.get(url, params=payload, headers=headers)
            else:
                resp = self._client.post(url, json=payload, headers=headers)
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"{kind}: {exc}") from exc
        except httpx.TransportError as exc:
            raise BackendTimeout(f"{kind} unreachable: {exc}") from exc
        if resp.status_code == 429:
            raise RateLimited(f"{kind}: HTTP 429")
        if resp.status_code in (408, 504):
            raise BackendTimeout(f"{kind}: HTTP {resp.status_code}")
        if kind == "search" and resp.status_code in (402, 403):
            raise QuotaExceeded(f"search: HTTP {resp.status_code}")
        if kind == "geocode" and resp.status_code == 404:
            return None
        if resp.status_code >= 400:
            raise BackendError(f"{kind}: HTTP {resp.status_code}")
        if not resp.content.strip():
            return None
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"{kind}: response is not JSON") from exc

    def call(self, kind: str, request: dict) -> Any:
        method, payload = self._wire(kind, request)
        with self._slots[kind]:
            attempt = 0
            while True:
                try:
                    body = self._send_once(kind, method, payload)
                    break
                except (BackendTimeout, RateLimited) as exc:
                    if attempt >= self.settings.retries:
                        if kind == "geocode":
                            raise GeocodeUnavailable(str(exc)) from exc
                        raise
                    delay = self.settings.backoff * (2 ** attempt)
                    log.warning("%s failed (%s); retry %d in %.1fs", kind, exc, attempt + 1, delay)
                    self._sleep(delay)
                    attempt += 1
                except BackendError as exc:
                    if kind == "geocode" and not isinstance(exc, MalformedResponse):
                        raise GeocodeUnavailable(str(exc)) from exc
                    raise
        return self._parse(kind, body)
