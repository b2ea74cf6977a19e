from .base import (
    IMAGE,
    KINDS,
    TEXT,
    Backends,
    CacheKey,
    ChatRequest,
    EmbeddingVector,
    Provider,
    SearchResult,
    VisionRequest,
    canonical_json,
    request_digest,
    similarity_score,
)
from .cache import CachingProvider, cache_stats, purge_cache, with_cache
from .http import HttpProvider, HttpSettings, geocode_fields
from .replay import FailingProvider, RecordingProvider, ReplayProvider, TableProvider

__all__ = [
    "IMAGE", "KINDS", "TEXT", "Backends", "CacheKey", "ChatRequest", "EmbeddingVector",
    "Provider", "SearchResult", "VisionRequest", "canonical_json", "request_digest",
    "similarity_score", "CachingProvider", "cache_stats", "purge_cache", "with_cache",
    "HttpProvider", "HttpSettings", "geocode_fields", "FailingProvider", "RecordingProvider",
    "ReplayProvider", "TableProvider",
]
