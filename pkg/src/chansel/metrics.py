"""Word error rate, frame-wise phoneme error rate, and category aggregation.

WER is classic minimum-edit-distance with unit costs over word tokens; the
rate is edits divided by the reference length and can exceed 1.0 when the
hypothesis inserts enough junk. PER here is frame-wise classification error
(one prediction per frame), which makes per-category attribution exact: a
frame belongs to a category iff its REFERENCE label does.

Rates are plain fractions everywhere in this module; turning them into
percentages is the report writers' business.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .phonemes import CategoryTable, SILENCE_SYMBOL

TOTAL_ROW = "total PER"
DEFAULT_CATEGORY_THRESHOLD = 3000


def edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    """Minimum number of substitutions, deletions and insertions turning
    ``ref`` into ``hyp``. Unit costs; transposition is not a primitive."""
    n, m = len(ref), len(hyp)
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            if ref[i - 1] == hyp[j - 1]:
                cur[j] = prev[j - 1]
            else:
                cur[j] = 1 + min(prev[j - 1], prev[j], cur[j - 1])
        prev = cur
    return prev[m]


def word_error_rate(ref: Sequence[str], hyp: Sequence[str]) -> float:
    """(S + D + I) / len(ref). The reference must be non-empty."""
    if len(ref) == 0:
        raise ValueError("reference token sequence must be non-empty")
    return edit_distance(ref, hyp) / len(ref)


def phoneme_error_rate(ref: Sequence[str], hyp: Sequence[str]) -> float:
    """Fraction of frames where the hypothesis label differs from the reference."""
    if len(ref) != len(hyp):
        raise ValueError(f"frame label length mismatch: ref {len(ref)} vs hyp {len(hyp)}")
    if len(ref) == 0:
        return 0.0
    wrong = sum(1 for r, h in zip(ref, hyp) if r != h)
    return wrong / len(ref)


@dataclass(frozen=True)
class CategoryRow:
    name: str
    count: int
    rate: float


@dataclass(frozen=True)
class CategoryReport:
    """Per-category error rates plus the list of categories dropped for having
    fewer reference frames than the threshold. The first row, when present,
    is the overall frame error under the name ``total PER``."""

    rows: tuple[CategoryRow, ...]
    excluded: tuple[str, ...]

    def rate_of(self, name: str) -> float:
        for row in self.rows:
            if row.name == name:
                return row.rate
        raise KeyError(f"category {name!r} not in report (excluded: {self.excluded})")

    def count_of(self, name: str) -> int:
        for row in self.rows:
            if row.name == name:
                return row.count
        raise KeyError(f"category {name!r} not in report")

    @property
    def row_names(self) -> tuple[str, ...]:
        return tuple(row.name for row in self.rows)


def _symbol_confusion(
    ref: Sequence[str], hyp: Sequence[str], table: CategoryTable
) -> tuple[dict[str, int], dict[str, int]]:
    counts: dict[str, int] = {}
    errors: dict[str, int] = {}
    for r, h in zip(ref, hyp):
        if r not in table:
            raise KeyError(f"reference label {r!r} not in the phoneme inventory")
        counts[r] = counts.get(r, 0) + 1
        if r != h:
            errors[r] = errors.get(r, 0) + 1
    return counts, errors


def category_per(
    ref: Sequence[str],
    hyp: Sequence[str],
    table: CategoryTable,
    threshold: int = DEFAULT_CATEGORY_THRESHOLD,
) -> CategoryReport:
    """Error rate per category, counting a frame toward every category its
    reference label belongs to. Categories with fewer than ``threshold``
    qualifying frames land in ``excluded`` instead of the rows."""
    if len(ref) != len(hyp):
        raise ValueError(f"frame label length mismatch: ref {len(ref)} vs hyp {len(hyp)}")
    counts, errors = _symbol_confusion(ref, hyp, table)
    rows: list[CategoryRow] = []
    excluded: list[str] = []

    total_count = len(ref)
    total_errors = sum(errors.values())
    if total_count >= threshold:
        rows.append(CategoryRow(TOTAL_ROW, total_count, total_errors / max(total_count, 1)))
    else:
        excluded.append(TOTAL_ROW)

    for name in table.names:
        members = table.category_members(name)
        n = sum(counts.get(sym, 0) for sym in members)
        if n < threshold:
            excluded.append(name)
            continue
        e = sum(errors.get(sym, 0) for sym in members)
        rows.append(CategoryRow(name, n, e / n))
    return CategoryReport(tuple(rows), tuple(excluded))


def merge_confusions(
    parts: Sequence[tuple[dict[str, int], dict[str, int]]]
) -> tuple[dict[str, int], dict[str, int]]:
    """Sum per-symbol (count, error) maps; associative and commutative."""
    counts: dict[str, int] = {}
    errors: dict[str, int] = {}
    for c, e in parts:
        for sym, n in c.items():
            counts[sym] = counts.get(sym, 0) + n
        for sym, n in e.items():
            errors[sym] = errors.get(sym, 0) + n
    return counts, errors


@dataclass(frozen=True)
class WorstChannelRow:
    """One output line of the single-channel-ablation summary: the removed
    channel (1-based) that hurt this category the most."""

    category: str
    baseline_rate: float
    worst_rate: float
    channel: int
    tied: bool = False


def worst_channel_table(
    reports: Mapping[int, CategoryReport], baseline: CategoryReport
) -> list[WorstChannelRow]:
    """For each category, find the removed channel (1-based key of ``reports``)
    whose absence maximises the category's error rate. Ties go to the lowest
    channel number and are flagged."""
    if not reports:
        raise ValueError("need at least one ablation report")
    names = baseline.row_names
    for ch, report in reports.items():
        if report.row_names != names:
            raise ValueError(
                f"ablation report for channel {ch} has category rows {report.row_names}, "
                f"baseline has {names}"
            )
    out: list[WorstChannelRow] = []
    channels = sorted(reports)
    for name in names:
        rates = [(reports[ch].rate_of(name), ch) for ch in channels]
        worst = max(rate for rate, _ in rates)
        hits = [ch for rate, ch in rates if rate == worst]
        out.append(
            WorstChannelRow(
                category=name,
                baseline_rate=baseline.rate_of(name),
                worst_rate=worst,
                channel=min(hits),
                tied=len(hits) > 1,
            )
        )
    return out


def collapse_frame_labels(
    labels: Sequence[str],
    silence_symbol: str = SILENCE_SYMBOL,
    word_map: Mapping[tuple[str, ...], str] | None = None,
) -> tuple[str, ...]:
    """Turn frame labels into word tokens.

    Consecutive identical labels collapse into one phoneme, silence delimits
    words, and each silence-free run of phonemes becomes a single token. The
    token comes from ``word_map`` when the run is listed there, otherwise the
    phonemes joined with a middle dot: (B, B, IY, IY, SIL) -> ("B·IY",).
    """
    runs: list[str] = []
    for lab in labels:
        if not runs or runs[-1] != lab:
            runs.append(lab)
    tokens: list[str] = []
    word: list[str] = []
    for lab in runs + [silence_symbol]:
        if lab == silence_symbol:
            if word:
                key = tuple(word)
                tokens.append(word_map[key] if word_map and key in word_map else "·".join(word))
                word = []
        else:
            word.append(lab)
    return tuple(tokens)
