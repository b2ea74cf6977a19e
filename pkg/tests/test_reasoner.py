import pytest
from hypothesis import given, strategies as st

from cluefusion import prompts
from cluefusion.core import TimeRange
from cluefusion.errors import BackendTimeout, EmptyInput, UnknownCountry
from cluefusion.reasoner import (
    MAX_QUERY_CHARS,
    Reasoner,
    intersect_time_ranges,
    match_option,
    range_alignment_check,
)

from conftest import backends_for, loc_prompt, time_prompt


def reasoner(chat, geocode=None):
    b, p = backends_for(chat=chat, geocode=geocode or {})
    return Reasoner(b), p


def test_deduce_location():
    r, _ = reasoner({loc_prompt("Milano"): "Italy", loc_prompt("Barack Obama"): "United States",
                     loc_prompt("x"): "No."})
    assert r.deduce_location(["Milano"]) == "Italy"
    assert r.deduce_location(["Barack Obama"]) == "United States"
    assert r.deduce_location(["x"]) is None


def test_combination_texts_are_one_per_line():
    r, p = reasoner({loc_prompt("a\nb", "k"): "Italy"})
    ans = r.ask_location(["a", "b"], "k")
    assert ans.filled_prompt == loc_prompt("a\nb", "k")
    assert p.prompts("chat") == [loc_prompt("a\nb", "k")]


def test_deduce_time():
    r, _ = reasoner({time_prompt("Justice for George Floyd"): "2020-2021",
                     time_prompt("x"): "No",
                     time_prompt("May 5, 2019"): "May 5, 2019",
                     prompts.fill("convert_date", date_candidate="May 5, 2019"): "2019-05-05"})
    assert r.deduce_time(["Justice for George Floyd"]) == "2020-2021"
    assert r.deduce_time(["x"]) is None
    assert r.normalize_time(r.deduce_time(["May 5, 2019"])) == "2019-05-05"


def test_empty_texts():
    r, _ = reasoner({})
    with pytest.raises(EmptyInput):
        r.deduce_location([])
    with pytest.raises(EmptyInput):
        r.deduce_time(["  "])


@given(st.sampled_from(["No", "no", "No.", " NO! ", "no...", "", "N/O"]))
def test_refusals_parse_to_none(answer):
    r, _ = reasoner({loc_prompt("t"): answer, time_prompt("t"): answer})
    assert r.deduce_location(["t"]) is None
    assert r.deduce_time(["t"]) is None


def test_conclude_event():
    key = prompts.fill("concrete_keywords", event="Justice for George Floyd",
                       keywords="protest, Times Square")
    long = " ".join(["word"] * 12)
    r, _ = reasoner({key: "George Floyd protest Times Square",
                     prompts.fill("concrete_keywords", event="a", keywords=""): long})
    assert r.conclude_event("Justice for George Floyd", "protest, Times Square") == \
        "George Floyd protest Times Square"
    assert r.conclude_event("a", "") == long
    with pytest.raises(EmptyInput):
        r.conclude_event("", " ")


@pytest.mark.parametrize("answer, expected", [("Yes", True), ("No", False), ("It depends", False)])
def test_validate_location(answer, expected):
    r, _ = reasoner({prompts.fill("check_location_validity", loc="Italy"): answer})
    assert r.validate_location("Italy") is expected


def test_infer_continent_table_first_then_prompt():
    r, p = reasoner({prompts.fill("get_continent", country="Wakanda"): "Africa",
                     prompts.fill("get_continent", country="Atlantis"): "Under the sea"})
    assert r.infer_continent("Italy") == "Europe"
    assert r.infer_continent("United States") == "North America"
    assert p.calls["chat"] == 0
    assert r.infer_continent("Wakanda") == "Africa"
    with pytest.raises(UnknownCountry):
        r.infer_continent("Atlantis")


@pytest.mark.parametrize("answer, expected", [
    ("2005-2021", TimeRange(2005, 2021)), ("unknown", None), ("1990-", None)])
def test_celebrity_time_range(answer, expected):
    r, _ = reasoner({prompts.fill("time_range", name="X"): answer})
    assert r.celebrity_time_range("X") == expected


def test_clean_text():
    garbled = prompts.fill("clean_text", contexts="", main_text="M1l@n fash!on w33k banner")
    clean = prompts.fill("clean_text", contexts="", main_text="Milan fashion week banner")
    r, _ = reasoner({garbled: "Milan fashion week banner", clean: "Milan fashion week banner"})
    assert r.clean_text("", "M1l@n fash!on w33k banner") == "Milan fashion week banner"
    assert r.clean_text("", "Milan fashion week banner") == "Milan fashion week banner"
    with pytest.raises(EmptyInput):
        r.clean_text("x", "")


def test_build_search_query():
    ev = ["Justice for George Floyd", "Times Square"]
    key = prompts.fill("search_keywords", contexts="date", main_text="\n".join(ev))
    r, _ = reasoner({key: "Justice for George Floyd Times Square protest date"})
    q = r.build_search_query(ev, "time")
    assert q.parsed == "Justice for George Floyd Times Square protest date"


def test_build_search_query_flattens_and_truncates():
    key = prompts.fill("search_keywords", contexts="location", main_text="a")
    long = "\n".join(["milan fashion week"] * 30)
    r, _ = reasoner({key: long})
    q = r.build_search_query(["a"], "location").parsed
    assert "\n" not in q
    assert len(q) <= MAX_QUERY_CHARS
    assert q.endswith("week") or q.endswith("fashion") or q.endswith("milan")
    with pytest.raises(EmptyInput):
        r.build_search_query([" "], "location")


def test_backend_errors_propagate():
    r, _ = reasoner({loc_prompt("t"): BackendTimeout("slow")})
    with pytest.raises(BackendTimeout):
        r.deduce_location(["t"])


def test_select_choice_and_match_option():
    opts = ["France", "Italy", "Spain"]
    key = prompts.fill("select_choice", answer="Milan, Italy, Europe", options="France; Italy; Spain")
    r, _ = reasoner({key: "Italy."})
    assert r.select_choice("Milan, Italy, Europe", opts) == "Italy"
    assert match_option("I think it is spain", opts) == "Spain"
    assert match_option("Portugal", opts) is None


@pytest.mark.parametrize("a, b, expected", [
    (TimeRange(2000, 2021), TimeRange(2020, 2021), TimeRange(2020, 2021)),
    (TimeRange(2000, 2005), TimeRange(2010, 2012), None),
    (TimeRange(2010, 2015), TimeRange(2010, 2015), TimeRange(2010, 2015)),
])
def test_intersect_time_ranges(a, b, expected):
    assert intersect_time_ranges(a, b) == expected


@pytest.mark.parametrize("rng, date, expected", [
    (TimeRange(2000, 2021), "2020..2021", True),
    (TimeRange(1990, 1999), "2005", False),
    (TimeRange(2010, 2010), "2010-07", True),
])
def test_range_alignment_check(rng, date, expected):
    assert range_alignment_check(rng, date) is expected


ranges = st.tuples(st.integers(1950, 2030), st.integers(0, 20)).map(
    lambda t: TimeRange(t[0], t[0] + t[1]))
dates = st.one_of(
    st.integers(1950, 2050).map(str),
    st.tuples(st.integers(1950, 2050), st.integers(1, 12)).map(lambda t: f"{t[0]}-{t[1]:02d}"),
    st.tuples(st.integers(1950, 2040), st.integers(1, 10)).map(lambda t: f"{t[0]}..{t[0] + t[1]}"),
)


@given(ranges, dates)
def test_alignment_agrees_with_intersection(rng, date):
    other = TimeRange.from_normalized(date)
    assert range_alignment_check(rng, date) == (intersect_time_ranges(rng, other) is not None)
