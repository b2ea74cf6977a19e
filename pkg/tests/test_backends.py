import hashlib
import json
import math

import httpx
import pytest
from hypothesis import given, strategies as st

from cluefusion.backends import (
    Backends,
    CachingProvider,
    ChatRequest,
    EmbeddingVector,
    FailingProvider,
    HttpProvider,
    HttpSettings,
    RecordingProvider,
    ReplayProvider,
    TableProvider,
    VisionRequest,
    cache_stats,
    geocode_fields,
    purge_cache,
    request_digest,
    similarity_score,
)
from cluefusion.core import LocationValue
from cluefusion.errors import (
    BackendTimeout,
    DimensionMismatch,
    EmptyInput,
    EmptyQuery,
    GeocodeUnavailable,
    InputUnreadable,
    MalformedResponse,
    QuotaExceeded,
    RateLimited,
    ReplayMiss,
)

from conftest import E1, backends_for


# -- request types -----------------------------------------------------------

def test_chat_request_invariants():
    with pytest.raises(ValueError):
        ChatRequest("m", ())
    with pytest.raises(ValueError):
        ChatRequest("m", (("user", "hi"),), temperature=-0.1)
    with pytest.raises(ValueError):
        ChatRequest("m", (("robot", "hi"),))


def test_vision_request_rejects_unfilled_placeholders():
    with pytest.raises(ValueError):
        VisionRequest("m", "a.jpg", "taken in {loc}?")


def test_digest_is_stable_and_content_based():
    req = ChatRequest("m", (("user", "hi"),)).canonical()
    same = json.loads(json.dumps(req))
    assert request_digest("chat", req) == request_digest("chat", same)
    assert request_digest("chat", req) != request_digest("vision", req)
    blob = json.dumps({"request": {"query": "Milan"}, "kind": "geocode"}, sort_keys=True,
                      separators=(",", ":")).encode()
    assert request_digest("geocode", {"query": "Milan"}) == hashlib.sha256(blob).hexdigest()


def test_embedding_vector_rejects_non_finite():
    with pytest.raises(MalformedResponse):
        EmbeddingVector((1.0, math.nan), "text")


# -- facade ------------------------------------------------------------------

def test_chat_pass_through_and_trim():
    b, p = backends_for(chat={"P": "  Italy \n"})
    assert b.chat("P") == "Italy"
    assert b.calls["chat"] == 1


def test_vision_pass_through_and_empty_answer():
    b, _ = backends_for(vision={("img1", "OCR"): "Justice for George Floyd", ("img1", "x"): ""})
    assert b.ask_image("img1", "OCR") == "Justice for George Floyd"
    assert b.ask_image("img1", "x") == ""


def test_malformed_chat_answer():
    b, _ = backends_for(chat={"P": {"not": "text"}})
    with pytest.raises(MalformedResponse):
        b.chat("P")


def test_embed_unit_normalizes_and_is_deterministic():
    b, _ = backends_for(embed={("text", "a"): [3.0, 4.0], ("image", "e1"): E1})
    v = b.embed("a", "text")
    assert v.values == pytest.approx((0.6, 0.8))
    assert b.embed("a", "text") == v
    assert b.embed("e1", "image").values == tuple(E1)
    with pytest.raises(EmptyInput):
        b.embed("", "text")


def test_embed_dimension_check():
    b = Backends(TableProvider(embed={("text", "a"): [1.0, 0.0]}), embedding_dim=3)
    with pytest.raises(MalformedResponse):
        b.embed("a", "text")


def test_similarity_score_examples():
    a = EmbeddingVector((1.0, 0.0), "image")
    assert similarity_score(a, a) == 100.0
    assert similarity_score(a, EmbeddingVector((0.0, 1.0), "text")) == 0.0
    assert similarity_score(a, EmbeddingVector((-1.0, 0.0), "text")) == 0.0
    with pytest.raises(DimensionMismatch):
        similarity_score(a, EmbeddingVector((1.0, 0.0, 0.0), "text"))


unit = st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3).filter(
    lambda v: math.fsum(x * x for x in v) > 1e-6).map(
    lambda v: EmbeddingVector(tuple(x / math.sqrt(math.fsum(y * y for y in v)) for x in v), "text"))


@given(unit, unit)
def test_similarity_symmetric_and_bounded(a, b):
    s = similarity_score(a, b)
    assert s == similarity_score(b, a)
    assert 0.0 <= s <= 100.0
    assert similarity_score(a, a) == pytest.approx(100.0)


def test_web_search_ranks_and_truncates():
    hits = [{"title": f"t{i}", "snippet": f"s{i}", "url": f"u{i}"} for i in range(7)]
    b, _ = backends_for(search={"milan fashion week": hits[:3], "many": hits, "none": []})
    res = b.web_search("milan fashion week", 5)
    assert [r.rank for r in res] == [0, 1, 2]
    assert [r.title for r in res] == ["t0", "t1", "t2"]
    assert len(b.web_search("many", 5)) == 5
    assert b.web_search("none") == []
    with pytest.raises(EmptyQuery):
        b.web_search("  ")
    assert res[0].text() == "t0\ns0"


def test_geocode_hit_and_miss():
    b, _ = backends_for(geocode={"Paris, Metropolitan France": {"city": "Paris", "country": "France"},
                                 "zzqqx": None})
    assert b.geocode("Paris, Metropolitan France") == LocationValue(city="Paris", country="France")
    assert b.geocode("zzqqx") is None


def test_table_provider_raises_exception_values_and_misses():
    b, _ = backends_for(chat={"P": BackendTimeout("slow")})
    with pytest.raises(BackendTimeout):
        b.chat("P")
    with pytest.raises(ReplayMiss):
        b.chat("other")


def test_failing_provider():
    b = Backends(FailingProvider(BackendTimeout("down")))
    with pytest.raises(BackendTimeout):
        b.chat("x")


# -- replay and recording ------------------------------------------------------

def test_record_then_replay_is_identical(tmp_path):
    table = TableProvider(chat={"P": "Italy"}, geocode={"Milan": {"city": "Milan", "country": "Italy"}})
    rec = RecordingProvider(table)
    live = Backends(rec)
    answers = (live.chat("P"), live.geocode("Milan"))
    path = tmp_path / "fx.json"
    rec.save(path)
    replay = Backends(ReplayProvider.load(path))
    assert (replay.chat("P"), replay.geocode("Milan")) == answers
    with pytest.raises(ReplayMiss):
        replay.chat("Q")


def test_replay_accepts_bare_responses():
    req = ChatRequest("gpt-3.5-turbo", (("user", "P"),), 0.0, 256).canonical()
    b = Backends(ReplayProvider({request_digest("chat", req): "Italy"}))
    assert b.chat("P") == "Italy"


# -- cache -------------------------------------------------------------------

def test_cache_miss_then_hit(tmp_path):
    inner = TableProvider(chat={"P": "Italy", "Q": "France"})
    cache = CachingProvider(inner, tmp_path)
    b = Backends(cache)
    assert b.chat("P") == b.chat("P") == "Italy"
    assert inner.calls["chat"] == 1
    assert (cache.hits, cache.misses) == (1, 1)
    b.chat("Q")
    assert inner.calls["chat"] == 2
    assert cache_stats(tmp_path)["entries"] == 2


def test_cache_is_transparent_across_instances(tmp_path):
    inner = TableProvider(search={"q": [{"title": "a", "snippet": "b", "url": "c"}]})
    first = Backends(CachingProvider(inner, tmp_path)).web_search("q")
    second = Backends(CachingProvider(FailingProvider(BackendTimeout("x")), tmp_path)).web_search("q")
    assert first == second


def test_corrupted_cache_entry_is_a_miss(tmp_path):
    inner = TableProvider(chat={"P": "Italy"})
    cache = CachingProvider(inner, tmp_path)
    Backends(cache).chat("P")
    for path in tmp_path.rglob("*.json"):
        path.write_text("{not json")
    assert Backends(cache).chat("P") == "Italy"
    assert inner.calls["chat"] == 2


def test_cache_write_failure_degrades_to_pass_through(tmp_path, caplog):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    b = Backends(CachingProvider(TableProvider(chat={"P": "Italy"}), blocker / "cache"))
    assert b.chat("P") == "Italy"
    assert "cache write failed" in caplog.text


def test_purge_cache(tmp_path):
    Backends(CachingProvider(TableProvider(chat={"P": "a"}), tmp_path / "c")).chat("P")
    assert purge_cache(tmp_path / "c") == 1
    assert cache_stats(tmp_path / "c")["entries"] == 0


# -- http --------------------------------------------------------------------

ENDPOINTS = {k: f"https://{k}.test/v1" for k in ("chat", "vision", "embed", "search", "geocode")}


def http_backends(handler, retries=3, **settings):
    sleeps = []
    provider = HttpProvider(HttpSettings(ENDPOINTS, {"chat": "sk-test"}, retries=retries, **settings),
                            transport=httpx.MockTransport(handler), sleep=sleeps.append)
    return Backends(provider), sleeps


def test_http_chat_wire_format():
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": " Italy "}}]})
    b, _ = http_backends(handler)
    assert b.chat("Where?") == "Italy"
    assert seen["auth"] == "Bearer sk-test"
    assert seen["body"]["messages"] == [{"role": "user", "content": "Where?"}]
    assert seen["body"]["temperature"] == 0.0


def test_http_vision_embeds_image_as_data_uri(tmp_path):
    (tmp_path / "img.png").write_bytes(b"\x89PNG")
    seen = {}

    def handler(request):
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "Yes"}}]})
    b, _ = http_backends(handler, image_root=str(tmp_path))
    assert b.ask_image("img.png", "Is it?") == "Yes"
    parts = seen["body"]["messages"][0]["content"]
    assert parts[1]["image_url"]["url"].startswith("data:image/png;base64,")


def test_http_missing_image_is_unreadable(tmp_path):
    b, _ = http_backends(lambda r: httpx.Response(500), image_root=str(tmp_path))
    with pytest.raises(InputUnreadable):
        b.ask_image("missing.jpg", "Is it?")


def test_http_retries_with_exponential_backoff():
    attempts = []

    def handler(request):
        attempts.append(1)
        if len(attempts) < 3:
            return httpx.Response(429)
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})
    b, sleeps = http_backends(handler)
    assert b.chat("x") == "ok"
    assert sleeps == [1.0, 2.0]


def test_http_timeout_after_retries():
    def handler(request):
        raise httpx.ConnectTimeout("down")
    b, sleeps = http_backends(handler)
    with pytest.raises(BackendTimeout):
        b.chat("x")
    assert sleeps == [1.0, 2.0, 4.0]


def test_http_rate_limit_surfaces_after_retries():
    b, _ = http_backends(lambda r: httpx.Response(429), retries=1)
    with pytest.raises(RateLimited):
        b.chat("x")


def test_http_search_and_quota():
    def handler(request):
        body = json.loads(request.content)
        if body["query"] == "quota":
            return httpx.Response(402)
        return httpx.Response(200, json={"results": [
            {"title": "a", "snippet": "b", "url": "c", "thumbnail_url": "https://t/1.jpg"}]})
    b, _ = http_backends(handler)
    res = b.web_search("milan", 5)
    assert res[0].thumbnail_ref == "https://t/1.jpg"
    with pytest.raises(QuotaExceeded):
        b.web_search("quota")


def test_http_embed():
    b, _ = http_backends(lambda r: httpx.Response(200, json={"vector": [0.0, 2.0]}))
    assert b.embed("hello", "text").values == (0.0, 1.0)


def test_http_geocode_hit_miss_and_unavailable():
    def handler(request):
        q = request.url.params["query"]
        if q == "Brooklyn":
            return httpx.Response(200, json={"address": {
                "suburb": "Brooklyn", "county": "Kings County", "city": "New York",
                "postcode": "11201", "country": "United States"}})
        if q == "zzqqx":
            return httpx.Response(404)
        raise httpx.ConnectError("no route")
    b, _ = http_backends(handler)
    assert b.geocode("Brooklyn") == LocationValue("Brooklyn", "New York", "United States")
    assert b.geocode("zzqqx") is None
    with pytest.raises(GeocodeUnavailable):
        b.geocode("anything")


def test_http_malformed_body():
    b, _ = http_backends(lambda r: httpx.Response(200, json={"choices": []}))
    with pytest.raises(MalformedResponse):
        b.chat("x")


def test_geocode_fields_collapses_components():
    assert geocode_fields({"address": {"town": "Greve", "country": "Italy"}}) == \
        {"area": None, "city": "Greve", "country": "Italy"}
    assert geocode_fields({}) is None
