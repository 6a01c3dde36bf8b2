"""Shared test helpers: independent oracles and fixture builders.

The oracles here deliberately avoid the production code paths: edit distance
is found by enumerating edit scripts with iterative deepening (no DP table),
and binomial counts come straight from factorials.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from chansel.corpus import LabeledSequence
from chansel.metrics import CategoryReport, CategoryRow
from chansel.model import EvalRecord
from chansel.signals import MultichannelSignal


def _can_edit(ref: tuple, hyp: tuple, budget: int) -> bool:
    """True iff some edit script of cost <= budget turns ref into hyp.
    Explores match / substitute / delete / insert branches exhaustively."""
    if budget < 0:
        return False
    if not ref:
        return len(hyp) <= budget
    if not hyp:
        return len(ref) <= budget
    if ref[0] == hyp[0] and _can_edit(ref[1:], hyp[1:], budget):
        return True
    return (
        _can_edit(ref[1:], hyp[1:], budget - 1)
        or _can_edit(ref[1:], hyp, budget - 1)
        or _can_edit(ref, hyp[1:], budget - 1)
    )


def exhaustive_edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    """Minimum edit-script cost by trying budgets 0, 1, 2, ... until one
    admits a script. Independent of the DP implementation under test."""
    ref_t, hyp_t = tuple(ref), tuple(hyp)
    for budget in range(len(ref_t) + len(hyp_t) + 1):
        if _can_edit(ref_t, hyp_t, budget):
            return budget
    raise AssertionError("unreachable: deleting everything and inserting always works")


def binomial_by_factorials(n: int, k: int) -> int:
    if k < 0 or k > n:
        return 0
    return math.factorial(n) // (math.factorial(k) * math.factorial(n - k))


def make_sequence(labels: Sequence[str], channels: int = 2, seed: int = 0) -> LabeledSequence:
    """LabeledSequence with an arbitrary (seeded noise) signal of matching length."""
    rng = np.random.default_rng(seed)
    signal = MultichannelSignal(rng.normal(size=(channels, len(labels))))
    return LabeledSequence.from_labels(signal, labels)


def empty_report() -> CategoryReport:
    return CategoryReport(rows=(), excluded=())


def make_record(
    subset_label: str,
    wer: float = 0.0,
    per_total: float = 0.0,
    per_category: CategoryReport | None = None,
    seed: int = 0,
) -> EvalRecord:
    return EvalRecord(
        subset_label=subset_label,
        seed=seed,
        config_hash="cfg",
        corpus_hash="corpus",
        wer=wer,
        per_total=per_total,
        per_category=per_category if per_category is not None else empty_report(),
    )


def report_from_rates(rates: dict[str, float], count: int = 10_000) -> CategoryReport:
    rows = tuple(CategoryRow(name, count, rate) for name, rate in rates.items())
    return CategoryReport(rows=rows, excluded=())
