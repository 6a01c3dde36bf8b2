"""Phoneme inventory and the linguistic/articulatory category taxonomy.

The shipped inventory is the 39-symbol ARPABET set plus one silence marker
(SIL). Consonants carry exactly one manner and one place of articulation,
vowels exactly one height, one backness and one rounding; both dental
fricatives (TH, DH) are filed under the alveolar place since the taxonomy
has no separate dental class. Everything is loaded from a CSV so the table
can be swapped for a different inventory without touching code.

Category names are flat strings: "vowel", "consonant", "silence", "voiced",
"voiceless", plus "manner_<x>", "place_<x>", "vowel_<x>" for the feature
classes. Rare classes (affricates, glides, postalveolars, glottals,
labiovelars, palatals) are full members of the taxonomy; dropping them from
reports is the metrics layer's job, not a gap here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

SILENCE_SYMBOL = "SIL"

KINDS = ("vowel", "consonant", "silence")
VOICINGS = ("voiced", "voiceless")
MANNERS = ("liquid", "fricative", "nasal", "plosive", "affricate", "glide")
PLACES = (
    "bilabial",
    "alveolar",
    "labiodental",
    "velar",
    "postalveolar",
    "glottal",
    "labiovelar",
    "palatal",
)
HEIGHTS = ("high", "mid", "low")
BACKNESSES = ("front", "central", "back")
ROUNDINGS = ("rounded", "unrounded")


@dataclass(frozen=True)
class Phoneme:
    """One inventory entry; feature fields are None when not applicable."""

    symbol: str
    kind: str
    voicing: str | None = None
    manner: str | None = None
    place: str | None = None
    height: str | None = None
    backness: str | None = None
    rounding: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"{self.symbol}: unknown kind {self.kind!r}")
        if self.kind == "consonant":
            if self.voicing not in VOICINGS:
                raise ValueError(f"{self.symbol}: consonant needs a voicing, got {self.voicing!r}")
            if self.manner not in MANNERS:
                raise ValueError(f"{self.symbol}: consonant needs one manner, got {self.manner!r}")
            if self.place not in PLACES:
                raise ValueError(f"{self.symbol}: consonant needs one place, got {self.place!r}")
            if self.height or self.backness or self.rounding:
                raise ValueError(f"{self.symbol}: consonant carries vowel features")
        elif self.kind == "vowel":
            if self.voicing not in VOICINGS:
                raise ValueError(f"{self.symbol}: vowel needs a voicing, got {self.voicing!r}")
            if self.height not in HEIGHTS:
                raise ValueError(f"{self.symbol}: vowel needs one height, got {self.height!r}")
            if self.backness not in BACKNESSES:
                raise ValueError(f"{self.symbol}: vowel needs one backness, got {self.backness!r}")
            if self.rounding not in ROUNDINGS:
                raise ValueError(f"{self.symbol}: vowel needs one rounding, got {self.rounding!r}")
            if self.manner or self.place:
                raise ValueError(f"{self.symbol}: vowel carries consonant features")
        else:  # silence
            if any((self.voicing, self.manner, self.place, self.height, self.backness, self.rounding)):
                raise ValueError(f"{self.symbol}: silence carries no features")

    def categories(self) -> frozenset[str]:
        """All category names whose predicate holds for this phoneme."""
        if self.kind == "silence":
            return frozenset({"silence"})
        if self.kind == "consonant":
            return frozenset(
                {"consonant", self.voicing, f"manner_{self.manner}", f"place_{self.place}"}
            )
        return frozenset(
            {
                "vowel",
                self.voicing,
                f"vowel_{self.height}",
                f"vowel_{self.backness}",
                f"vowel_{self.rounding}",
            }
        )


def category_names() -> tuple[str, ...]:
    """Canonical report order for every category the taxonomy defines."""
    names = ["vowel", "consonant", "silence", "voiced", "voiceless"]
    names += [f"manner_{m}" for m in MANNERS]
    names += [f"place_{p}" for p in PLACES]
    names += [f"vowel_{h}" for h in HEIGHTS]
    names += [f"vowel_{b}" for b in BACKNESSES]
    names += [f"vowel_{r}" for r in ROUNDINGS]
    return tuple(names)


class CategoryTable:
    """Phoneme inventory plus both directions of the category relation."""

    def __init__(self, phonemes: Iterable[Phoneme]):
        entries = list(phonemes)
        if not entries:
            raise ValueError("empty phoneme inventory")
        self._by_symbol: dict[str, Phoneme] = {}
        for ph in entries:
            if ph.symbol in self._by_symbol:
                raise ValueError(f"duplicate phoneme symbol {ph.symbol!r}")
            self._by_symbol[ph.symbol] = ph
        self._names = category_names()
        members: dict[str, set[str]] = {name: set() for name in self._names}
        for ph in entries:
            for name in ph.categories():
                members[name].add(ph.symbol)
        self._members = {name: frozenset(syms) for name, syms in members.items()}

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(self._by_symbol)

    def phoneme(self, symbol: str) -> Phoneme:
        try:
            return self._by_symbol[symbol]
        except KeyError:
            raise KeyError(f"unknown phoneme symbol {symbol!r}") from None

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._by_symbol

    def categories_of(self, symbol: str) -> frozenset[str]:
        return self.phoneme(symbol).categories()

    def category_members(self, name: str) -> frozenset[str]:
        try:
            return self._members[name]
        except KeyError:
            raise KeyError(f"unknown category {name!r}") from None

    @classmethod
    def from_csv(cls, path: Path) -> "CategoryTable":
        with open(path, newline="", encoding="utf-8") as fh:
            return cls._parse(csv.DictReader(fh))

    @classmethod
    def _parse(cls, reader: csv.DictReader) -> "CategoryTable":
        phonemes = []
        for row in reader:
            phonemes.append(
                Phoneme(
                    symbol=row["symbol"].strip(),
                    kind=row["kind"].strip(),
                    voicing=row["voicing"].strip() or None,
                    manner=row["manner"].strip() or None,
                    place=row["place"].strip() or None,
                    height=row["height"].strip() or None,
                    backness=row["backness"].strip() or None,
                    rounding=row["rounding"].strip() or None,
                )
            )
        return cls(phonemes)


@lru_cache(maxsize=1)
def default_table() -> CategoryTable:
    """ARPABET-39 + SIL table shipped with the package."""
    text = resources.files("chansel").joinpath("data/arpabet.csv").read_text(encoding="utf-8")
    return CategoryTable._parse(csv.DictReader(text.splitlines()))
