"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete. Criteria 7-9 train many small models and take a few
minutes combined; they are marked ``slow`` so day-to-day development can skip
them with ``-m "not slow"``. The statistical fixtures (corpus seeds, weights,
training budgets) were calibrated once and are frozen here; the thresholds
come from the criteria themselves.
"""

import json
from contextlib import contextmanager

import numpy as np
import pytest

from chansel.cli import main
from chansel.metrics import TOTAL_ROW, category_per, edit_distance
from chansel.model import (
    TrainConfig,
    evaluate,
    forward,
    gradient_check,
    init_params,
    slice_input_channels,
    train,
)
from chansel.phonemes import default_table
from chansel.search import (
    ResultsCache,
    SweepResult,
    TrainingEvaluator,
    backward_elimination,
    exhaustive_sweep,
    top_k_frequency,
)
from chansel.signals import (
    ChannelSubset,
    MultichannelSignal,
    draw_channel_mask,
    parse_subset,
    restrict_to_subset,
)
from chansel.synth import (
    GeneratorConfig,
    complementary_pair_config,
    generate,
    planted_importance,
)
from util import binomial_by_factorials, exhaustive_edit_distance, make_record, make_sequence


@contextmanager
def criterion(number: int, name: str):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {number:02d} {name}: FAIL")
        raise
    print(f"\nACCEPTANCE {number:02d} {name}: PASS")


class CountingEvaluator:
    def __init__(self):
        self.calls = 0

    def evaluate(self, subset):
        self.calls += 1
        return make_record(subset.label, wer=0.5)


def test_criterion_01_combinatorics():
    with criterion(1, "combinatorics"):
        ev = CountingEvaluator()
        sweep = exhaustive_sweep(ev, 8, 4)
        assert len(sweep.records) == 70
        assert len({r.subset_label for r in sweep.records}) == 70
        for c in range(1, 11):
            for k in range(1, c + 1):
                got = len(exhaustive_sweep(CountingEvaluator(), c, k).records)
                assert got == binomial_by_factorials(c, k), (c, k)


def test_criterion_02_top10_count_row():
    with criterion(2, "top10-count-row"):
        published = [
            ("1356", 47.2), ("2357", 47.3), ("1346", 47.7), ("1238", 48.3),
            ("1235", 48.4), ("2347", 48.6), ("1236", 48.8), ("1345", 49.0),
            ("1245", 49.6), ("2367", 49.6),
        ]
        sweep = SweepResult(
            channels=8, k=4, metric_name="wer",
            records=tuple(make_record(lab, wer=wer / 100) for lab, wer in published),
        )
        assert top_k_frequency(sweep, 10) == (7, 7, 9, 4, 5, 4, 3, 1)


def test_criterion_03_dropout_statistics():
    with criterion(3, "dropout-statistics"):
        draws = 100_000
        for p, expected_mean in ((0.25, 6.0), (0.125, 7.0)):
            rng = np.random.default_rng(12345)
            total = sum(draw_channel_mask(8, p, rng).retained for _ in range(draws))
            mean = total / draws
            assert abs(mean - expected_mean) <= 0.05, (p, mean)


def test_criterion_04_wer_oracle_equivalence():
    with criterion(4, "wer-oracle-equivalence"):
        rng = np.random.default_rng(777)
        vocab = ["a", "b", "c", "d", "e", "f", "g", "h"]
        for _ in range(1000):
            n_ref = int(rng.integers(1, 7))
            n_hyp = int(rng.integers(0, 7))
            ref = [vocab[i] for i in rng.integers(0, len(vocab), n_ref)]
            hyp = [vocab[i] for i in rng.integers(0, len(vocab), n_hyp)]
            assert edit_distance(ref, hyp) == exhaustive_edit_distance(ref, hyp)


def test_criterion_05_gradient_check():
    with criterion(5, "gradient-check"):
        rng = np.random.default_rng(31)
        for trial in range(20):
            channels = int(rng.integers(1, 4))
            window = int(rng.integers(1, 6))
            features = int(rng.integers(2, 10))
            symbols = ("B", "IY", "T")[: int(rng.integers(2, 4))]
            params = init_params(channels, window, features, symbols, seed=trial)
            batch = [
                make_sequence(
                    [symbols[i] for i in rng.integers(0, len(symbols), 6)],
                    channels=channels, seed=100 + trial,
                )
            ]
            err = gradient_check(params, batch, n_coords=100, seed=trial)
            assert err < 1e-4, (trial, err)
        params = init_params(2, 3, 6, ("B", "T"), seed=0)
        batch = [make_sequence(["B", "T", "B", "T"], channels=2, seed=5)]
        flipped = gradient_check(params, batch, n_coords=100, seed=0, negate_analytic=True)
        assert flipped > 0.5


def test_criterion_06_zero_equivalence():
    with criterion(6, "zero-equivalence"):
        rng = np.random.default_rng(99)
        for trial in range(100):
            channels = int(rng.integers(2, 9))
            window = int(rng.integers(1, 10))
            features = int(rng.integers(4, 17))
            frames = int(rng.integers(5, 31))
            k = int(rng.integers(2, 5))
            params = init_params(channels, window, features,
                                 tuple(f"c{i}" for i in range(k)), seed=trial)
            x = MultichannelSignal(rng.normal(size=(channels, frames)))
            size = int(rng.integers(1, channels + 1))
            subset = ChannelSubset.of(rng.choice(channels, size=size, replace=False))
            masked = x.samples.copy()
            dropped = [c for c in range(channels) if c not in subset]
            if dropped:
                masked[dropped, :] = 0.0
            full_scores = forward(params, MultichannelSignal(masked))
            sliced_scores = forward(slice_input_channels(params, subset),
                                    restrict_to_subset(x, subset))
            assert np.max(np.abs(full_scores - sliced_scores)) <= 1e-12


# --- planted-oracle fixtures (calibrated once, frozen) -------------------------

SEARCH_CLASSES = ("B", "IY", "T", "AE", "S", "UW")


def _ladder_config() -> GeneratorConfig:
    """5 channels whose informativeness ladder is uniform in w^2, shuffled
    across channel indices so index order carries no information."""
    rungs = tuple(float(x) for x in np.sqrt(np.linspace(0.25, 1.0, 5)))
    order = (2, 4, 0, 3, 1)  # weight rank (weakest first) -> channel
    weights = [0.0] * 5
    for rank, ch in enumerate(order):
        weights[ch] = rungs[rank]
    return GeneratorConfig(
        channels=5,
        classes=SEARCH_CLASSES,
        weights=tuple(weights),
        noise_sigma=0.65,
        frames_per_segment=10,
        segments_per_utterance=8,
        utterances=250,
        seed=100,
    )


def _search_evaluator(corpus, cache, base_seed, replicates, epochs):
    train_c, test_c = corpus.split(0.2)
    return TrainingEvaluator(
        train_corpus=train_c,
        test_corpus=test_c,
        table=default_table(),
        train_cfg=TrainConfig(learning_rate=0.6, epochs=epochs, batch_size=8, seed=base_seed),
        corpus_hash=corpus.content_hash,
        window=5,
        features=32,
        replicates=replicates,
        threshold=10**9,  # category table not needed for ranking runs
        workers=1,
        cache=cache,
    )


@pytest.mark.slow
def test_criterion_07_planted_importance_recovery():
    with criterion(7, "planted-importance-recovery"):
        cfg = _ladder_config()
        corpus = generate(cfg)
        planted = planted_importance(cfg)
        expected_removals = tuple(reversed(planted))[:3]  # down to 2 survivors
        top2 = set(planted[:2])
        elim_hits = sweep_hits = 0
        for seed in range(20):
            ev = _search_evaluator(corpus, ResultsCache(None), seed, replicates=2, epochs=32)
            trace = backward_elimination(ev, cfg.channels, 2, metric="per_total")
            sweep = exhaustive_sweep(ev, cfg.channels, 2, metric="per_total")
            best = set(parse_subset(sweep.records[0].subset_label, cfg.channels).indices)
            elim_hits += trace.removal_order == expected_removals
            sweep_hits += best == top2
        assert elim_hits >= 18, f"elimination order recovered in only {elim_hits}/20 seeds"
        assert sweep_hits >= 18, f"best 2-subset contained top-2 in only {sweep_hits}/20 seeds"


@pytest.mark.slow
def test_criterion_08_greedy_vs_exhaustive_divergence():
    with criterion(8, "greedy-vs-exhaustive-divergence"):
        base = GeneratorConfig(
            channels=5,
            classes=SEARCH_CLASSES,
            weights=(0.54,) * 5,
            noise_sigma=0.5,
            frames_per_segment=12,
            segments_per_utterance=8,
            utterances=250,
            silence_frames=4,
            seed=7,
        )
        cfg = complementary_pair_config(base, pair=(0, 1))
        corpus = generate(cfg)
        divergent_seeds = 0
        for seed in range(10):
            cache = ResultsCache(None)
            # the sweep is the careful reference (2 seeds averaged); greedy
            # runs as the fragile single-shot procedure it is in practice
            careful = _search_evaluator(corpus, cache, seed, replicates=2, epochs=24)
            sweep = exhaustive_sweep(careful, cfg.channels, 2, metric="per_total")
            best = set(parse_subset(sweep.records[0].subset_label, cfg.channels).indices)
            single = _search_evaluator(corpus, cache, seed, replicates=1, epochs=24)
            trace = backward_elimination(single, cfg.channels, 2, metric="per_total")
            dropped_pair_member = bool(set(trace.removal_order) & {0, 1})
            if best == {0, 1} and dropped_pair_member:
                divergent_seeds += 1
        assert divergent_seeds >= 1, "no seed showed the greedy-vs-exhaustive divergence"


@pytest.mark.slow
def test_criterion_09_finetune_beats_scratch():
    with criterion(9, "finetune-beats-scratch"):
        cfg = GeneratorConfig(
            channels=8,
            classes=SEARCH_CLASSES,
            weights=(1.0,) * 8,
            noise_sigma=0.8,
            frames_per_segment=10,
            segments_per_utterance=8,
            utterances=150,
            seed=42,
        )
        corpus = generate(cfg)
        train_c, test_c = corpus.split(1 / 3)
        alphabet = corpus.label_alphabet()
        table = default_table()
        subsets = {4: "1356", 5: "12345", 6: "123458"}
        pretrain_epochs, finetune_epochs = 20, 10  # fine-tuning budget is halved
        wins = {k: 0 for k in subsets}
        for seed in range(10):
            start = init_params(8, 5, 32, alphabet, seed=1000 + seed)
            pre = train(start, train_c, TrainConfig(
                learning_rate=0.6, epochs=pretrain_epochs, batch_size=8,
                dropout_p=0.125, seed=1000 + seed))
            for k, label in subsets.items():
                subset = parse_subset(label, 8)
                train_r = train_c.restrict(subset)
                test_r = test_c.restrict(subset)
                budget = TrainConfig(learning_rate=0.6, epochs=finetune_epochs,
                                     batch_size=8, seed=2000 + seed)
                tuned = train(slice_input_channels(pre.params, subset), train_r, budget)
                ft_per = evaluate(tuned.params, test_r, table, threshold=1).per_total
                scratch = train(init_params(k, 5, 32, alphabet, seed=3000 + seed),
                                train_r, budget)
                sc_per = evaluate(scratch.params, test_r, table, threshold=1).per_total
                wins[k] += ft_per <= sc_per
        for k, count in wins.items():
            assert count >= 8, f"fine-tune beat scratch in only {count}/10 seeds at k={k}"


def test_criterion_10_category_aggregation(table):
    with criterion(10, "category-aggregation"):
        ref = ["B", "B", "IY", "SIL"]
        hyp = ["B", "P", "IY", "SIL"]
        report = category_per(ref, hyp, table, threshold=1)
        assert report.rate_of("place_bilabial") == 0.5
        assert report.rate_of("vowel") == 0.0
        assert report.rate_of("silence") == 0.0
        assert report.rate_of(TOTAL_ROW) == 0.25
        assert report.count_of("consonant") == 2

        # rare-category exclusion analogue: the six categories backed only by
        # scarce classes fall under the 3000-frame threshold and drop out
        common = ["AH"] * 4000 + ["T"] * 4000 + ["M"] * 3500 + ["SIL"] * 4000
        rare = ["CH", "JH", "W", "Y", "HH", "SH", "ZH"] * 300  # 2100 frames
        ref2 = common + rare
        report2 = category_per(ref2, list(ref2), table, threshold=3000)
        rare_categories = {
            "manner_affricate", "manner_glide", "place_postalveolar",
            "place_glottal", "place_labiovelar", "place_palatal",
        }
        assert rare_categories <= set(report2.excluded)
        for name in (TOTAL_ROW, "vowel", "consonant", "silence", "voiced", "voiceless"):
            assert name in report2.row_names


TINY_CLI_CONFIG = {
    "generator": {
        "channels": 4, "classes": ["B", "IY", "T"], "weights": [1.0, 0.7, 0.4, 0.2],
        "noise_sigma": 0.5, "frames_per_segment": 4, "segments_per_utterance": 3,
        "utterances": 12, "seed": 5, "channel_classes": None, "crosstalk": 0.0,
        "silence_frames": None,
    },
    "model": {"window": 3, "features": 6},
    "train": {"learning_rate": 0.5, "epochs": 2, "batch_size": 4, "dropout_p": 0.0,
              "seed": 0},
    "search": {"k": 2, "k_top": 3, "stop_size": 2, "replicates": 1,
               "metric": "per_total", "budget": 1000, "workers": 1},
    "eval": {"per_threshold": 1, "train_fraction": 0.75},
}


def _snapshot(directory):
    return {
        str(p.relative_to(directory)): p.read_bytes()
        for p in sorted(directory.rglob("*")) if p.is_file()
    }


def test_criterion_11_reproducibility(tmp_path):
    with criterion(11, "reproducibility"):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(TINY_CLI_CONFIG))
        corpus_dir = tmp_path / "corpus"
        assert main(["gen-data", "--config", str(cfg_path), "--out", str(corpus_dir)]) == 0
        hash_a = json.loads((corpus_dir / "manifest.json").read_text())["hash"]
        assert main(["gen-data", "--config", str(cfg_path), "--out", str(corpus_dir),
                     "--force"]) == 0
        assert json.loads((corpus_dir / "manifest.json").read_text())["hash"] == hash_a

        pre_dir = tmp_path / "pretrain"
        assert main(["pretrain", "--config", str(cfg_path), "--corpus", str(corpus_dir),
                     "--out", str(pre_dir)]) == 0
        first = _snapshot(pre_dir)
        assert main(["pretrain", "--config", str(cfg_path), "--corpus", str(corpus_dir),
                     "--out", str(pre_dir)]) == 0
        assert _snapshot(pre_dir) == first

        sweep_dir = tmp_path / "sweep"
        assert main(["exhaustive", "--config", str(cfg_path), "--corpus", str(corpus_dir),
                     "--out", str(sweep_dir)]) == 0
        reference = _snapshot(sweep_dir)
        report_names = ("sweep.csv", "top_subsets.csv", "channel_average.csv")

        # plain rerun on the warm cache
        assert main(["exhaustive", "--config", str(cfg_path), "--corpus", str(corpus_dir),
                     "--out", str(sweep_dir)]) == 0
        rerun = _snapshot(sweep_dir)
        for name in report_names:
            assert rerun[name] == reference[name], name

        # interrupted run: only the first cache rows survived, then resume
        resumed_dir = tmp_path / "resumed"
        resumed_dir.mkdir()
        cache_lines = (sweep_dir / "cache.jsonl").read_text().splitlines()
        (resumed_dir / "cache.jsonl").write_text("\n".join(cache_lines[:2]) + "\n")
        assert main(["exhaustive", "--config", str(cfg_path), "--corpus", str(corpus_dir),
                     "--out", str(resumed_dir)]) == 0
        resumed = _snapshot(resumed_dir)
        for name in report_names:
            assert resumed[name] == reference[name], name
