import math

import pytest
from hypothesis import given, settings, strategies as st

from cluefusion import prompts
from cluefusion.backends import Backends, TableProvider
from cluefusion.combiner import (
    CombinationSchedule,
    Combiner,
    VoteBoard,
    enumerate_combinations,
    finalize,
    record_vote,
    split_slots,
)
from cluefusion.core import Candidate, Clue
from cluefusion.errors import BackendTimeout, ConfigError, TaskFailed
from cluefusion.noise_filter import NoiseFilter
from cluefusion.reasoner import Reasoner

from combiner_sim import IMG, LOCATIONS, TIMES, board_keys, scripted_combiner, simulate



def cand(value, dim="location"):
    if dim == "time":
        return Candidate("time", value, value, level=1, clue_ids=(0,))
    return Candidate("location", value, value.lower(), level=1, clue_ids=(0,))


# -- schedule and enumeration ------------------------------------------------

def test_enumerate_three_clues_default():
    sets = [c.clue_ids for c in enumerate_combinations(3)]
    assert sets == [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]


def test_enumerate_four_clues_default():
    combos = enumerate_combinations(4)
    assert len(combos) == 4 + 6 + 1
    assert [c.level for c in combos] == [1] * 4 + [2] * 6 + [3]


def test_enumerate_single_clue_dedupes():
    assert [c.clue_ids for c in enumerate_combinations(1)] == [(0,)]


def test_enumerate_two_clues_all_equals_pair():
    assert [c.clue_ids for c in enumerate_combinations(2)] == [(0,), (1,), (0, 1)]


@given(st.integers(1, 8))
def test_k_subset_schedule_counts(n):
    schedule = CombinationSchedule.parse("singles,pairs,k3,all")
    combos = enumerate_combinations(n, schedule)
    expected = sum(math.comb(n, k) for k in {1, 2, 3, n} if k <= n)
    assert len(combos) == expected
    assert len({c.clue_ids for c in combos}) == len(combos)
    assert [c.index for c in combos] == list(range(len(combos)))


def test_schedule_parsing():
    assert CombinationSchedule.parse("singles, k_subsets:3 ,all").levels == ("singles", "k3", "all")
    assert str(CombinationSchedule()) == "singles,pairs,all"
    for bad in ("", "triples", "k0"):
        with pytest.raises(ConfigError):
            CombinationSchedule.parse(bad)


def test_enumerate_requires_a_clue():
    with pytest.raises(ValueError):
        enumerate_combinations(0)


# -- vote board ----------------------------------------------------------------

def test_record_vote_threshold():
    board = VoteBoard("location", 2)
    assert record_vote(board, cand("Italy")) == (board, False)
    assert record_vote(board, cand("Italy"))[1] is True
    with pytest.raises(RuntimeError):
        board.record(cand("Italy"))


def test_ht_one_stops_immediately():
    board = VoteBoard("location", 1)
    assert board.record(cand("France"))


def test_no_early_stop_below_threshold():
    board = VoteBoard("location", 5)
    for v in ["Italy", "Italy", "France", "Italy"]:
        assert not board.record(cand(v))
    pred = finalize(board)
    assert (pred.value, pred.vote_count, pred.stopped_early) == ("italy", 3, False)


def test_tie_goes_to_first_arrival():
    board = VoteBoard("location")
    for v in ["Italy", "France", "France", "Italy"]:
        board.record(cand(v))
    assert finalize(board).value == "italy"


def test_empty_board_finalizes_to_none():
    assert finalize(VoteBoard("time")) is None


def test_infinite_threshold_never_stops():
    board = VoteBoard("time", math.inf)
    for _ in range(100):
        assert not board.record(cand("2020", "time"))


def test_board_rejects_other_dimension_and_bad_threshold():
    with pytest.raises(ValueError):
        VoteBoard("time").record(cand("Italy"))
    with pytest.raises(ConfigError):
        VoteBoard("time", 0)


def test_split_slots():
    clues = [Clue(0, "keywords", "k1"), Clue(1, "ocr_text", "Milano"), Clue(2, "celebrity", "X")]
    assert split_slots(clues) == (["Milano", "X"], "k1")
    assert split_slots([Clue(0, "keywords", "k1")]) == (["k1"], "")


# -- engine against an independent simulator ---------------------------------

@st.composite
def scenarios(draw):
    n = draw(st.integers(1, 4))
    dim = draw(st.sampled_from(["location", "time"]))
    alphabet = LOCATIONS if dim == "location" else TIMES
    subsets = [tuple(i for i in range(n) if m >> i & 1) for m in range(1, 2 ** n)]
    answers = {s: draw(st.sampled_from(alphabet)) for s in subsets}
    accepted = set(draw(st.sets(st.sampled_from(alphabet[:-1]))))
    return n, dim, answers, accepted


@settings(max_examples=200, deadline=None)
@given(scenarios())
def test_infinite_threshold_board_matches_simulator(scenario):
    n, dim, answers, accepted = scenario
    combiner, clues, _ = scripted_combiner(n, answers, accepted, dim)
    board = VoteBoard(dim, math.inf)
    records = combiner.run_hierarchy(IMG, clues, dim, board)
    expected, evaluated = simulate(n, answers, accepted, math.inf, dim)
    assert board_keys(board, dim) == expected
    assert len(records) == evaluated == len(enumerate_combinations(n))
    assert board.total_votes() == sum(1 for r in records if (r["verdict"] or {}).get("accepted"))


@settings(max_examples=200, deadline=None)
@given(scenarios(), st.integers(1, 4))
def test_call_counts_until_early_stop(scenario, ht):
    n, dim, answers, accepted = scenario
    combiner, clues, provider = scripted_combiner(n, answers, accepted, dim)
    board = VoteBoard(dim, ht)
    records = combiner.run_hierarchy(IMG, clues, dim, board)
    expected, evaluated = simulate(n, answers, accepted, ht, dim)
    assert board_keys(board, dim) == expected
    assert len(records) == evaluated
    assert provider.calls["chat"] == evaluated
    candidates = sum(1 for r in records if r["candidate"] is not None)
    assert provider.calls["vision"] == candidates
    assert board.stopped_early == any(v >= ht for v in expected.values())


def test_three_agreeing_clues_stop_after_second_combination():
    answers = {ids: "Italy" for ids in [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]}
    combiner, clues, provider = scripted_combiner(3, answers, {"Italy"}, "location")
    board = VoteBoard("location", 2)
    records = combiner.run_hierarchy(IMG, clues, "location", board)
    assert len(records) == 2
    assert records[-1]["early_stop"] is True
    assert provider.calls["chat"] == 2


def test_single_level_schedules():
    answers = {ids: "Italy" for ids in [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]}
    combiner, clues, _ = scripted_combiner(3, answers, {"Italy"}, "location",
                                           schedule=CombinationSchedule(("singles",)))
    records = combiner.run_hierarchy(IMG, clues, "location", VoteBoard("location", 10))
    assert [r["clue_ids"] for r in records] == [[0], [1], [2]]
    combiner.schedule = CombinationSchedule(("all",))
    records = combiner.run_hierarchy(IMG, clues, "location", VoteBoard("location", 10))
    assert [r["clue_ids"] for r in records] == [[0, 1, 2]]
    assert records[0]["level"] == 3


def test_candidate_provenance_level_and_clues():
    answers = {(0,): "No", (1,): "No", (0, 1): "United States"}
    combiner, clues, _ = scripted_combiner(2, answers, set(), "location")
    records = combiner.run_hierarchy(IMG, clues, "location", VoteBoard("location"))
    prov = records[-1]["candidate"]["provenance"]
    assert prov == {"hierarchy_level": 2, "clue_ids": [0, 1]}
    assert records[-1]["candidate"]["normalized"] == "||united states|north america"


def test_no_filter_accepts_everything_without_vision_calls():
    answers = {(0,): "Italy", (1,): "France", (0, 1): "Italy"}
    combiner, clues, provider = scripted_combiner(2, answers, set(), "location", no_filter=True)
    board = VoteBoard("location")
    combiner.run_hierarchy(IMG, clues, "location", board)
    assert board.total_votes() == 3
    assert provider.calls["vision"] == 0


def test_filter_off_never_lowers_counts():
    answers = {(0,): "Italy", (1,): "France", (0, 1): "Italy"}
    filtered, clues, _ = scripted_combiner(2, answers, {"Italy"}, "location")
    unfiltered, _, _ = scripted_combiner(2, answers, {"Italy"}, "location", no_filter=True)
    a, b = VoteBoard("location"), VoteBoard("location")
    filtered.run_hierarchy(IMG, clues, "location", a)
    unfiltered.run_hierarchy(IMG, clues, "location", b)
    assert all(b.counts.get(k, 0) >= v for k, v in a.counts.items())


def test_refusal_and_normalization_failure_are_skipped():
    answers = {(0,): "No", (1,): "Atlantis"}
    combiner, clues, _ = scripted_combiner(2, answers | {(0, 1): "Italy"}, {"Italy"}, "location")
    combiner.reasoner.validate_location = lambda loc: False
    records = combiner.run_hierarchy(IMG, clues, "location", VoteBoard("location"))
    assert records[0]["note"] == "refusal"
    assert records[1]["note"].startswith("normalization failed")
    assert records[2]["vote"] == 1


def test_coarsen_time_merges_granularities():
    answers = {(0,): "2020-05", (1,): "2020", (0, 1): "2020-05-12"}
    combiner, clues, _ = scripted_combiner(2, answers, set(), "time", no_filter=True)
    combiner.coarsen_time = True
    board = VoteBoard("time")
    combiner.run_hierarchy(IMG, clues, "time", board)
    assert board.counts == {"2020": 3}


def test_transport_errors_skip_combination_but_total_failure_aborts():
    def fallback(kind, req):
        raise BackendTimeout("down")
    b = Backends(TableProvider(fallback=fallback))
    combiner = Combiner(Reasoner(b), NoiseFilter(b))
    clues = [Clue(0, "ocr_text", "a"), Clue(1, "ocr_text", "b")]
    with pytest.raises(TaskFailed):
        combiner.run_hierarchy(IMG, clues, "location", VoteBoard("location"))

    answers = {(0,): BackendTimeout("x"), (1,): "Italy", (0, 1): "Italy"}
    combiner, clues, _ = scripted_combiner(2, {}, {"Italy"}, "location")
    by_text = {"c0": answers[(0,)], "c1": "Italy", "c0\nc1": "Italy"}
    inner = combiner.reasoner.backends.provider.fallback

    def flaky(kind, req):
        if kind == "chat":
            value = by_text[prompts.match(req["messages"][-1][1])[1]["event"]]
            if isinstance(value, Exception):
                raise value
            return value
        return inner(kind, req)
    combiner.reasoner.backends.provider.fallback = flaky
    board = VoteBoard("location")
    records = combiner.run_hierarchy(IMG, clues, "location", board)
    assert records[0]["backend_error"] is True
    assert board.total_votes() == 2
