import re
import math

import pytest

from cluefusion import prompts
from cluefusion.backends import Backends, TableProvider
from cluefusion.demo import demo_dir


def vec(score):
    """Unit vector whose cosine with E1 is score/100."""
    c = score / 100.0
    return [c, math.sqrt(max(0.0, 1.0 - c * c)), 0.0]


E1 = [1.0, 0.0, 0.0]


def backends_for(**tables):
    provider = TableProvider(**tables)
    return Backends(provider), provider


def loc_prompt(event, keywords=""):
    return prompts.fill("location_candidate", event=event, keywords=keywords)


def time_prompt(text):
    return prompts.fill("time_candidate", time_clue=text)


def vision(image, name, **slots):
    return (image, prompts.fill(name, **slots))


@pytest.fixture
def demo_paths():
    d = demo_dir()
    return d / "dataset.jsonl", d / "replay.json"


# geocoder fixture: a fixed table plus the clean-up a real geocoder does on
# county names, postal codes and administrative regions
_PLACES = {
    "brooklyn, new york, united states": {"area": "Brooklyn", "city": "New York",
                                          "country": "United States"},
    "times square, new york, united states": {"area": "Times Square", "city": "New York",
                                              "country": "United States"},
    "new york, united states": {"city": "New York", "country": "United States"},
    "paris, france": {"city": "Paris", "country": "France"},
    "lyon, france": {"city": "Lyon", "country": "France"},
    "milan, italy": {"city": "Milan", "country": "Italy"},
}
_NOISE = re.compile(r",\s*(?:kings county|ny \d{5}|\d{5}|metropolitan france|ile-de-france|"
                    r"auvergne-rhone-alpes|lombardy|new york county)(?=,|$)", re.I)


def geocode_fixture(kind, request):
    assert kind == "geocode"
    text = request["query"].strip().lower()
    previous = None
    while previous != text:
        previous, text = text, _NOISE.sub("", text)
    return _PLACES.get(text)


def fixture_geocoder():
    return Backends(TableProvider(fallback=geocode_fixture)).geocode


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
