"""Byte-exact prompt templates with named ``{placeholder}`` slots.

Templates live next to this module as ``<name>.txt`` and are read as raw
bytes, so trailing spaces and line breaks are preserved exactly.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")

VISION_PROMPTS = (
    "keywords", "ocr_text", "check_celebrity", "celebrity_name", "has_landmark",
    "initial_guess", "date_candidate", "filter_location", "filter_date",
    "image_summary", "image_keywords", "supplementary_keywords",
)


@lru_cache(maxsize=None)
def template(name: str) -> str:
    path = resources.files(__name__).joinpath(f"{name}.txt")
    if not path.is_file():
        raise KeyError(f"no prompt template named {name!r}")
    return path.read_bytes().decode("utf-8")


def placeholders(name: str) -> list[str]:
    return _PLACEHOLDER.findall(template(name))


def names() -> list[str]:
    return sorted(
        p.name[:-4] for p in resources.files(__name__).iterdir() if p.name.endswith(".txt")
    )


def fill(name: str, /, **values: str) -> str:
    """Substitute every slot of template ``name``; all slots must be given."""
    text = template(name)
    wanted = set(placeholders(name))
    missing = wanted - values.keys()
    if missing:
        raise KeyError(f"prompt {name!r} missing values for {sorted(missing)}")
    extra = values.keys() - wanted
    if extra:
        raise KeyError(f"prompt {name!r} has no slots {sorted(extra)}")
    # single pass so substituted text is never re-scanned for slots
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], text)


@lru_cache(maxsize=None)
def _pattern(name: str) -> re.Pattern:
    parts = _PLACEHOLDER.split(template(name))
    # split alternates literal text and slot names
    regex = "".join(
        re.escape(p) if i % 2 == 0 else f"(?P<{p}>.*?)" for i, p in enumerate(parts)
    )
    return re.compile(regex + r"\Z", re.S)


def match(text: str) -> tuple[str, dict[str, str]] | None:
    """Inverse of :func:`fill`: which template produced ``text`` and with what slots."""
    for name in names():
        m = _pattern(name).match(text)
        if m:
            return name, m.groupdict()
    return None
