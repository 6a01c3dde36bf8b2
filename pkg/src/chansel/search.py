"""Channel-subset search: greedy backward elimination, exhaustive sweeps,
and the ranking statistics built on top of them.

Every subset evaluation is keyed by (canonical subset label, corpus hash,
train-config hash, seed) and stored as one JSON line in an append-only cache,
so interrupted sweeps resume without recomputation and a warm replay performs
zero trainings. Evaluations are independent tasks; with workers > 1 they run
in a process pool, and all outputs are sorted canonically so the worker count
never changes a byte of what lands on disk.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .corpus import Corpus
from .metrics import WorstChannelRow, worst_channel_table
from .model import (
    EvalRecord,
    TrainConfig,
    evaluate,
    init_params,
    train,
)
from .phonemes import CategoryTable
from .signals import ChannelSubset, parse_subset


class SweepBudgetError(RuntimeError):
    """Sweep would exceed the configured evaluation budget."""

    def __init__(self, required: int, budget: int):
        super().__init__(
            f"exhaustive sweep needs {required} subset evaluations, budget allows {budget}"
        )
        self.required = required
        self.budget = budget


class EvaluationError(RuntimeError):
    """Evaluator failure, tagged with the subset that was being scored."""

    def __init__(self, subset_label: str, cause: BaseException):
        super().__init__(f"evaluation of subset {subset_label} failed: {cause}")
        self.subset_label = subset_label


# --- results cache -----------------------------------------------------------


class ResultsCache:
    """Append-only JSON-lines store of per-seed EvalRecords.

    A record's identity is (subset label, corpus hash, config hash, seed).
    Loading tolerates a truncated final line so a sweep killed mid-write
    resumes cleanly.
    """

    def __init__(self, path: Path | None = None):
        self.path = Path(path) if path is not None else None
        self._records: dict[tuple[str, str, str, int], EvalRecord] = {}
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                try:
                    record = EvalRecord.from_dict(json.loads(line))
                except (json.JSONDecodeError, KeyError, ValueError):
                    continue  # torn tail line from an interrupted run
                self._records[self._key(record)] = record

    @staticmethod
    def _key(record: EvalRecord) -> tuple[str, str, str, int]:
        return (record.subset_label, record.corpus_hash, record.config_hash, record.seed)

    def get(self, subset_label: str, corpus_hash: str, config_hash: str, seed: int) -> EvalRecord | None:
        return self._records.get((subset_label, corpus_hash, config_hash, seed))

    def put(self, record: EvalRecord) -> None:
        self._records[self._key(record)] = record
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
                fh.flush()

    def __len__(self) -> int:
        return len(self._records)


# --- the built-in train-and-score evaluator -----------------------------------


def derive_task_seeds(base_seed: int, replicate: int) -> tuple[int, int]:
    """Deterministic (init_seed, train_seed) for one training task.

    Derived from (base seed, replicate index) only, NOT the subset: subsets
    of equal size then train under common random numbers (same init draws,
    same batch order), which pairs their comparison and cancels most of the
    training noise that would otherwise scramble close rankings. Every task
    builds its own generators from the derived ints; workers share no state.
    """
    root = np.random.SeedSequence([base_seed, replicate])
    init_ss, train_ss = root.spawn(2)
    return int(init_ss.generate_state(1)[0]), int(train_ss.generate_state(1)[0])


def config_fingerprint(
    train_cfg: TrainConfig, window: int, features: int, threshold: int, n_train: int
) -> str:
    """Hash of everything that shapes a cached record besides corpus/subset/seed."""
    payload = {
        "learning_rate": train_cfg.learning_rate,
        "epochs": train_cfg.epochs,
        "batch_size": train_cfg.batch_size,
        "dropout_p": train_cfg.dropout_p,
        "base_seed": train_cfg.seed,
        "window": window,
        "features": features,
        "threshold": threshold,
        "n_train": n_train,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


class Evaluator(Protocol):
    """What the search procedures need: score one subset, or a batch."""

    def evaluate(self, subset: ChannelSubset) -> EvalRecord: ...


# Worker-process globals, installed once per worker by _init_worker so the
# corpora are pickled per worker rather than per task.
_WORKER: dict = {}


def _init_worker(train_corpus, test_corpus, table, payload: dict) -> None:
    _WORKER["train"] = train_corpus
    _WORKER["test"] = test_corpus
    _WORKER["table"] = table
    _WORKER["payload"] = payload


def _run_task_impl(
    train_corpus: Corpus,
    test_corpus: Corpus,
    table: CategoryTable,
    payload: dict,
    indices: tuple[int, ...],
    replicate: int,
) -> EvalRecord:
    subset = ChannelSubset(indices)
    init_seed, train_seed = derive_task_seeds(payload["base_seed"], replicate)
    train_restricted = train_corpus.restrict(subset)
    test_restricted = test_corpus.restrict(subset)
    t0 = time.perf_counter()
    params = init_params(
        channels=len(subset),
        window=payload["window"],
        features=payload["features"],
        class_symbols=payload["alphabet"],
        seed=init_seed,
    )
    cfg = TrainConfig(
        learning_rate=payload["learning_rate"],
        epochs=payload["epochs"],
        batch_size=payload["batch_size"],
        dropout_p=payload["dropout_p"],
        seed=train_seed,
    )
    result = train(params, train_restricted, cfg)
    record = evaluate(
        result.params,
        test_restricted,
        table,
        subset=subset,
        threshold=payload["threshold"],
        seed=replicate,
        config_hash=payload["config_hash"],
        corpus_hash=payload["corpus_hash"],
    )
    return replace(record, wall_time=time.perf_counter() - t0)


def _pool_task(indices: tuple[int, ...], replicate: int) -> EvalRecord:
    return _run_task_impl(
        _WORKER["train"], _WORKER["test"], _WORKER["table"], _WORKER["payload"],
        indices, replicate,
    )


@dataclass
class TrainingEvaluator:
    """Scores a channel subset by training the reference classifier from
    scratch on the subset-restricted train split and evaluating on the test
    split, averaged over ``replicates`` seeded runs.

    Per-seed records go through the cache; the returned record is the
    aggregate (mean wer / per rates, n_seeds = replicates).
    """

    train_corpus: Corpus
    test_corpus: Corpus
    table: CategoryTable
    train_cfg: TrainConfig
    corpus_hash: str
    window: int = 9
    features: int = 32
    replicates: int = 3
    threshold: int = 3000
    workers: int = 1
    cache: ResultsCache = field(default_factory=ResultsCache)
    training_runs: int = 0

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        self.config_hash = config_fingerprint(
            self.train_cfg, self.window, self.features, self.threshold,
            len(self.train_corpus),
        )
        self._alphabet = self.train_corpus.label_alphabet()

    def _task_payload(self) -> dict:
        return {
            "base_seed": self.train_cfg.seed,
            "learning_rate": self.train_cfg.learning_rate,
            "epochs": self.train_cfg.epochs,
            "batch_size": self.train_cfg.batch_size,
            "dropout_p": self.train_cfg.dropout_p,
            "window": self.window,
            "features": self.features,
            "threshold": self.threshold,
            "config_hash": self.config_hash,
            "corpus_hash": self.corpus_hash,
            "alphabet": self._alphabet,
        }

    def _aggregate(self, subset: ChannelSubset, per_seed: Sequence[EvalRecord]) -> EvalRecord:
        if len(per_seed) == 1:
            return per_seed[0]
        first = per_seed[0]
        rows = tuple(
            replace(row, rate=float(np.mean([r.per_category.rows[i].rate for r in per_seed])))
            for i, row in enumerate(first.per_category.rows)
        )
        return EvalRecord(
            subset_label=subset.label,
            seed=self.train_cfg.seed,
            config_hash=self.config_hash,
            corpus_hash=self.corpus_hash,
            wer=float(np.mean([r.wer for r in per_seed])),
            per_total=float(np.mean([r.per_total for r in per_seed])),
            per_category=replace(first.per_category, rows=rows),
            wall_time=float(np.sum([r.wall_time for r in per_seed])),
            n_seeds=len(per_seed),
        )

    def evaluate(self, subset: ChannelSubset) -> EvalRecord:
        return self.evaluate_many([subset])[subset.label]

    def evaluate_many(
        self, subsets: Sequence[ChannelSubset], require_cached: bool = False
    ) -> dict[str, EvalRecord]:
        """Score several subsets, reusing cached per-seed records and running
        the rest (in a process pool when workers > 1)."""
        per_seed: dict[str, list[EvalRecord | None]] = {
            s.label: [None] * self.replicates for s in subsets
        }
        by_label = {s.label: s for s in subsets}
        pending: list[tuple[ChannelSubset, int]] = []
        for s in subsets:
            for r in range(self.replicates):
                hit = self.cache.get(s.label, self.corpus_hash, self.config_hash, r)
                if hit is not None:
                    per_seed[s.label][r] = hit
                else:
                    pending.append((s, r))
        if pending and require_cached:
            missing = sorted({s.label for s, _ in pending})
            raise ValueError(
                f"cache is missing records for subsets {missing}; run the sweep first"
            )

        if pending:
            payload = self._task_payload()
            if self.workers > 1:
                with ProcessPoolExecutor(
                    max_workers=self.workers,
                    initializer=_init_worker,
                    initargs=(self.train_corpus, self.test_corpus, self.table, payload),
                ) as pool:
                    futures = {
                        pool.submit(_pool_task, s.indices, r): (s, r) for s, r in pending
                    }
                    for fut in as_completed(futures):
                        s, r = futures[fut]
                        try:
                            record = fut.result()
                        except Exception as exc:
                            raise EvaluationError(s.label, exc) from exc
                        self.training_runs += 1
                        self.cache.put(record)
                        per_seed[s.label][r] = record
            else:
                for s, r in pending:
                    try:
                        record = _run_task_impl(
                            self.train_corpus, self.test_corpus, self.table, payload,
                            s.indices, r,
                        )
                    except Exception as exc:
                        raise EvaluationError(s.label, exc) from exc
                    self.training_runs += 1
                    self.cache.put(record)
                    per_seed[s.label][r] = record

        return {
            label: self._aggregate(by_label[label], records)  # type: ignore[arg-type]
            for label, records in per_seed.items()
        }


# --- backward elimination -----------------------------------------------------


@dataclass(frozen=True)
class EliminationStep:
    """One greedy step: which channel went, what survived, and every
    candidate's score. ``tied`` marks a best-metric tie (broken by removing
    the higher-indexed channel)."""

    removed_channel: int  # 0-based
    surviving: ChannelSubset
    metric: float
    candidates: tuple[tuple[int, float], ...]  # (removed 0-based channel, metric)
    tied: bool


@dataclass(frozen=True)
class EliminationTrace:
    channels: int
    stop_size: int
    metric_name: str
    steps: tuple[EliminationStep, ...]

    @property
    def removal_order(self) -> tuple[int, ...]:
        return tuple(step.removed_channel for step in self.steps)

    def to_dict(self) -> dict:
        """JSON view; channel numbers are 1-based like all user-facing text."""
        return {
            "channels": self.channels,
            "stop_size": self.stop_size,
            "metric": self.metric_name,
            "steps": [
                {
                    "removed_channel": step.removed_channel + 1,
                    "surviving_subset": step.surviving.label,
                    "metric": step.metric,
                    "tied": step.tied,
                    "candidates": [
                        {"removed_channel": ch + 1, "metric": m}
                        for ch, m in step.candidates
                    ],
                }
                for step in self.steps
            ],
        }


def backward_elimination(
    evaluator: Evaluator,
    channels: int,
    stop_size: int,
    metric: str = "wer",
) -> EliminationTrace:
    """Greedy channel removal: from the full set, drop whichever channel's
    removal leaves the lowest-metric subset; repeat down to ``stop_size``
    channels. Ties remove the higher-indexed channel and are flagged."""
    if not (1 <= stop_size < channels):
        raise ValueError(f"need 1 <= stop_size < channels, got stop_size={stop_size}, "
                         f"channels={channels}")
    current = ChannelSubset.full(channels)
    steps: list[EliminationStep] = []
    evaluate_batch = getattr(evaluator, "evaluate_many", None)
    while len(current) > stop_size:
        candidates = [(ch, current.drop(ch)) for ch in current]
        if evaluate_batch is not None:
            records = evaluate_batch([s for _, s in candidates])
        else:
            records = {}
            for _, s in candidates:
                try:
                    records[s.label] = evaluator.evaluate(s)
                except EvaluationError:
                    raise
                except Exception as exc:
                    raise EvaluationError(s.label, exc) from exc
        scored = [(ch, s, records[s.label].metric(metric)) for ch, s in candidates]
        best_metric = min(m for _, _, m in scored)
        tied_channels = [ch for ch, _, m in scored if m == best_metric]
        removed = max(tied_channels)
        surviving = current.drop(removed)
        steps.append(
            EliminationStep(
                removed_channel=removed,
                surviving=surviving,
                metric=best_metric,
                candidates=tuple((ch, m) for ch, _, m in scored),
                tied=len(tied_channels) > 1,
            )
        )
        current = surviving
    return EliminationTrace(
        channels=channels, stop_size=stop_size, metric_name=metric, steps=tuple(steps)
    )


# --- exhaustive sweep and its statistics ---------------------------------------


@dataclass(frozen=True)
class SweepResult:
    """Records for every enumerated k-subset, sorted by (metric, label)."""

    channels: int
    k: int
    metric_name: str
    records: tuple[EvalRecord, ...]

    def is_complete(self) -> bool:
        labels = {r.subset_label for r in self.records}
        return len(labels) == len(self.records) == math.comb(self.channels, self.k)


DEFAULT_SWEEP_BUDGET = 100_000


def exhaustive_sweep(
    evaluator: Evaluator,
    channels: int,
    k: int,
    metric: str = "wer",
    budget: int = DEFAULT_SWEEP_BUDGET,
) -> SweepResult:
    """Score every k-of-C subset exactly once. Already-cached evaluations are
    reused, so an interrupted sweep resumes where it stopped."""
    if not (1 <= k <= channels):
        raise ValueError(f"need 1 <= k <= channels, got k={k}, channels={channels}")
    required = math.comb(channels, k)
    if required > budget:
        raise SweepBudgetError(required, budget)
    subsets = [ChannelSubset(combo) for combo in itertools.combinations(range(channels), k)]
    evaluate_batch = getattr(evaluator, "evaluate_many", None)
    if evaluate_batch is not None:
        records = evaluate_batch(subsets)
    else:
        records = {}
        for s in subsets:
            try:
                records[s.label] = evaluator.evaluate(s)
            except EvaluationError:
                raise
            except Exception as exc:
                raise EvaluationError(s.label, exc) from exc
    ordered = sorted(records.values(), key=lambda r: (r.metric(metric), r.subset_label))
    return SweepResult(channels=channels, k=k, metric_name=metric, records=tuple(ordered))


def channel_average_metric(sweep: SweepResult) -> tuple[tuple[int, float], ...]:
    """Mean metric over all subsets containing each channel, best first.
    Returns ((0-based channel, mean), ...) sorted ascending by mean, ties by
    channel. Requires a complete sweep."""
    if not sweep.is_complete():
        raise ValueError(
            f"sweep is incomplete: {len(sweep.records)} records for "
            f"C={sweep.channels}, k={sweep.k} "
            f"(expected {math.comb(sweep.channels, sweep.k)})"
        )
    sums = np.zeros(sweep.channels)
    counts = np.zeros(sweep.channels, dtype=int)
    for record in sweep.records:
        m = record.metric(sweep.metric_name)
        for ch in subset_indices(record.subset_label, sweep.channels):
            sums[ch] += m
            counts[ch] += 1
    means = sums / counts
    order = sorted(range(sweep.channels), key=lambda c: (means[c], c))
    return tuple((c, float(means[c])) for c in order)


def subset_indices(label: str, channels: int) -> tuple[int, ...]:
    """0-based indices named by a canonical subset label."""
    return parse_subset(label, channels).indices


def top_k_frequency(sweep: SweepResult, k_top: int) -> tuple[int, ...]:
    """How many of the k_top best subsets contain each channel. Records are
    already sorted by (metric, canonical label), which is also the documented
    tie-break at the cutoff."""
    if k_top > len(sweep.records):
        raise ValueError(f"k_top={k_top} exceeds the {len(sweep.records)} available records")
    counts = [0] * sweep.channels
    for record in sweep.records[:k_top]:
        for ch in subset_indices(record.subset_label, sweep.channels):
            counts[ch] += 1
    return tuple(counts)


# --- single-channel ablation ----------------------------------------------------


@dataclass(frozen=True)
class AblationResult:
    """All (C-1)-subset evaluations keyed by the removed 1-based channel,
    plus the per-category worst-channel summary rows."""

    baseline: EvalRecord
    records: Mapping[int, EvalRecord]
    rows: tuple[WorstChannelRow, ...]


def seven_channel_ablation(
    evaluator: Evaluator,
    channels: int,
    baseline: EvalRecord,
    table: CategoryTable,
) -> AblationResult:
    """Remove each channel individually, collect category PER reports keyed
    by the removed channel, and summarise which removal hurts each category
    most."""
    if channels < 2:
        raise ValueError(f"ablation needs at least 2 channels, got {channels}")
    full = ChannelSubset.full(channels)
    subsets = {ch: full.drop(ch) for ch in range(channels)}
    evaluate_batch = getattr(evaluator, "evaluate_many", None)
    if evaluate_batch is not None:
        scored = evaluate_batch(list(subsets.values()))
    else:
        scored = {}
        for ch, s in subsets.items():
            try:
                scored[s.label] = evaluator.evaluate(s)
            except EvaluationError:
                raise
            except Exception as exc:
                raise EvaluationError(s.label, exc) from exc
    records = {ch + 1: scored[subsets[ch].label] for ch in range(channels)}
    reports = {ch: rec.per_category for ch, rec in records.items()}
    rows = worst_channel_table(reports, baseline.per_category)
    return AblationResult(baseline=baseline, records=records, rows=tuple(rows))
