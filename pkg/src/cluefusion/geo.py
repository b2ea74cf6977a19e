"""Static country to continent table.

Transcontinental states are assigned to the continent holding their capital
(Russia and Turkey to Europe, Egypt to Africa, Kazakhstan to Asia).
"""

from __future__ import annotations

import re

CONTINENTS = (
    "Africa",
    "Antarctica",
    "Asia",
    "Europe",
    "North America",
    "Oceania",
    "South America",
)

_CONTINENT_ALIASES = {
    "australia": "Oceania",
    "australasia": "Oceania",
    "oceania": "Oceania",
    "north america": "North America",
    "northern america": "North America",
    "central america": "North America",
    "caribbean": "North America",
    "south america": "South America",
    "latin america": "South America",
    "europe": "Europe",
    "asia": "Asia",
    "africa": "Africa",
    "antarctica": "Antarctica",
}

_TABLE = {
    "Africa": [
        "Algeria", "Angola", "Benin", "Botswana", "Burkina Faso", "Burundi",
        "Cabo Verde", "Cameroon", "Central African Republic", "Chad", "Comoros",
        "Democratic Republic of the Congo", "Republic of the Congo", "Djibouti",
        "Egypt", "Equatorial Guinea", "Eritrea", "Eswatini", "Ethiopia", "Gabon",
        "Gambia", "Ghana", "Guinea", "Guinea-Bissau", "Ivory Coast", "Kenya",
        "Lesotho", "Liberia", "Libya", "Madagascar", "Malawi", "Mali",
        "Mauritania", "Mauritius", "Morocco", "Mozambique", "Namibia", "Niger",
        "Nigeria", "Rwanda", "Sao Tome and Principe", "Senegal", "Seychelles",
        "Sierra Leone", "Somalia", "South Africa", "South Sudan", "Sudan",
        "Tanzania", "Togo", "Tunisia", "Uganda", "Zambia", "Zimbabwe",
        "Western Sahara",
    ],
    "Asia": [
        "Afghanistan", "Armenia", "Azerbaijan", "Bahrain", "Bangladesh", "Bhutan",
        "Brunei", "Cambodia", "China", "Georgia", "Hong Kong", "India",
        "Indonesia", "Iran", "Iraq", "Israel", "Japan", "Jordan", "Kazakhstan",
        "Kuwait", "Kyrgyzstan", "Laos", "Lebanon", "Macau", "Malaysia",
        "Maldives", "Mongolia", "Myanmar", "Nepal", "North Korea", "Oman",
        "Pakistan", "Palestine", "Philippines", "Qatar", "Saudi Arabia",
        "Singapore", "South Korea", "Sri Lanka", "Syria", "Taiwan", "Tajikistan",
        "Thailand", "Timor-Leste", "Turkmenistan", "United Arab Emirates",
        "Uzbekistan", "Vietnam", "Yemen",
    ],
    "Europe": [
        "Albania", "Andorra", "Austria", "Belarus", "Belgium",
        "Bosnia and Herzegovina", "Bulgaria", "Croatia", "Cyprus",
        "Czech Republic", "Denmark", "Estonia", "Finland", "France", "Germany",
        "Greece", "Hungary", "Iceland", "Ireland", "Italy", "Kosovo", "Latvia",
        "Liechtenstein", "Lithuania", "Luxembourg", "Malta", "Moldova", "Monaco",
        "Montenegro", "Netherlands", "North Macedonia", "Norway", "Poland",
        "Portugal", "Romania", "Russia", "San Marino", "Serbia", "Slovakia",
        "Slovenia", "Spain", "Sweden", "Switzerland", "Turkey", "Ukraine",
        "United Kingdom", "Vatican City",
    ],
    "North America": [
        "Antigua and Barbuda", "Bahamas", "Barbados", "Belize", "Canada",
        "Costa Rica", "Cuba", "Dominica", "Dominican Republic", "El Salvador",
        "Greenland", "Grenada", "Guatemala", "Haiti", "Honduras", "Jamaica",
        "Mexico", "Nicaragua", "Panama", "Puerto Rico", "Saint Kitts and Nevis",
        "Saint Lucia", "Saint Vincent and the Grenadines", "Trinidad and Tobago",
        "United States",
    ],
    "South America": [
        "Argentina", "Bolivia", "Brazil", "Chile", "Colombia", "Ecuador",
        "Guyana", "Paraguay", "Peru", "Suriname", "Uruguay", "Venezuela",
    ],
    "Oceania": [
        "Australia", "Fiji", "Kiribati", "Marshall Islands", "Micronesia",
        "Nauru", "New Zealand", "Palau", "Papua New Guinea", "Samoa",
        "Solomon Islands", "Tonga", "Tuvalu", "Vanuatu",
    ],
}

COUNTRY_ALIASES = {
    "usa": "United States",
    "us": "United States",
    "u.s.": "United States",
    "u.s.a.": "United States",
    "united states of america": "United States",
    "america": "United States",
    "uk": "United Kingdom",
    "u.k.": "United Kingdom",
    "great britain": "United Kingdom",
    "britain": "United Kingdom",
    "england": "United Kingdom",
    "scotland": "United Kingdom",
    "wales": "United Kingdom",
    "northern ireland": "United Kingdom",
    "czechia": "Czech Republic",
    "holland": "Netherlands",
    "the netherlands": "Netherlands",
    "russian federation": "Russia",
    "türkiye": "Turkey",
    "turkiye": "Turkey",
    "korea": "South Korea",
    "republic of korea": "South Korea",
    "cote d'ivoire": "Ivory Coast",
    "côte d'ivoire": "Ivory Coast",
    "swaziland": "Eswatini",
    "burma": "Myanmar",
    "east timor": "Timor-Leste",
    "uae": "United Arab Emirates",
    "drc": "Democratic Republic of the Congo",
    "dr congo": "Democratic Republic of the Congo",
    "congo": "Republic of the Congo",
    "cape verde": "Cabo Verde",
    "macedonia": "North Macedonia",
    "vatican": "Vatican City",
    "holy see": "Vatican City",
    "viet nam": "Vietnam",
    "persia": "Iran",
    "the bahamas": "Bahamas",
    "the gambia": "Gambia",
}

COUNTRY_CONTINENT = {
    country: continent for continent, countries in _TABLE.items() for country in countries
}
_BY_FOLDED = {country.casefold(): country for country in COUNTRY_CONTINENT}


def _fold(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().strip(".").strip()).casefold()


def canonical_country(name: str) -> str | None:
    """Return the table spelling of a country name or alias, else None."""
    folded = _fold(name)
    if folded in _BY_FOLDED:
        return _BY_FOLDED[folded]
    return COUNTRY_ALIASES.get(folded)


def continent_of(country: str) -> str | None:
    canonical = canonical_country(country)
    return COUNTRY_CONTINENT.get(canonical) if canonical else None


def canonical_continent(name: str, strict: bool = False) -> str | None:
    """Map free text such as "Europe." or "north america" to a canonical name.

    With ``strict`` only whole-string matches count.
    """
    folded = _fold(name)
    if folded in _CONTINENT_ALIASES:
        return _CONTINENT_ALIASES[folded]
    if strict:
        return None
    # answers like "It is located in Europe"
    for alias in sorted(_CONTINENT_ALIASES, key=len, reverse=True):
        if re.search(rf"\b{re.escape(alias)}\b", folded):
            return _CONTINENT_ALIASES[alias]
    return None
