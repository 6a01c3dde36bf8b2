"""Command-line entry point and experiment orchestration.

Subcommands: gen-data, pretrain, finetune, backward-elim, exhaustive,
ablate7, report. Settings come from a JSON config file (see DEFAULT_CONFIG
for the schema); every flag overrides its file value. Exit codes: 0 success,
1 usage error, 2 data/config error, 3 evaluator divergence.

The results cache lives in <output-dir>/cache.jsonl unless CHANSEL_CACHE_DIR
points somewhere else. Outputs embed (version, config hash, corpus hash,
seed) and contain no timestamps, so reruns with equal hashes are
byte-identical.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from .corpus import Corpus, load_corpus, save_corpus
from .model import (
    TrainConfig,
    TrainingDivergedError,
    evaluate,
    init_params,
    load_model,
    save_model,
    slice_input_channels,
    train,
)
from .phonemes import default_table
from .reports import (
    Provenance,
    channel_average_csv,
    elimination_json,
    elimination_plot_csv,
    sweep_csv,
    top_subsets_csv,
    training_log_csv,
    worst_channel_csv,
    write_text,
)
from .search import (
    EvaluationError,
    ResultsCache,
    SweepBudgetError,
    SweepResult,
    TrainingEvaluator,
    backward_elimination,
    channel_average_metric,
    config_fingerprint,
    exhaustive_sweep,
    seven_channel_ablation,
    top_k_frequency,
)
from .signals import ChannelSubset, parse_subset
from .synth import GeneratorConfig, generate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

SUBSET_PRESETS = {"4ch": "1356", "5ch": "12345", "6ch": "123458", "7ch": "1234578"}

DEFAULT_CONFIG: dict[str, dict[str, Any]] = {
    "generator": GeneratorConfig().to_dict(),
    "model": {"window": 9, "features": 32},
    "train": {
        "learning_rate": 0.5,
        "epochs": 30,
        "batch_size": 16,
        "dropout_p": 0.0,
        "seed": 0,
    },
    "search": {
        "k": 4,
        "k_top": 10,
        "stop_size": 2,
        "replicates": 3,
        "metric": "wer",
        "budget": 100_000,
        "workers": 0,  # 0 = logical CPU count
    },
    "eval": {"per_threshold": 3000, "train_fraction": 0.75},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _merge(base: dict, extra: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        file_cfg = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(file_cfg, dict):
            raise ValueError(f"config file {path} must hold a JSON object")
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise ValueError(f"unknown config sections {sorted(unknown)} in {path}")
        cfg = _merge(cfg, file_cfg)
    return cfg


def _apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    """Flags beat file values. Mapping: flag name -> config path."""
    paths = {
        "seed": ("train", "seed"),
        "epochs": ("train", "epochs"),
        "learning_rate": ("train", "learning_rate"),
        "batch_size": ("train", "batch_size"),
        "dropout_p": ("train", "dropout_p"),
        "window": ("model", "window"),
        "features": ("model", "features"),
        "k": ("search", "k"),
        "k_top": ("search", "k_top"),
        "stop_size": ("search", "stop_size"),
        "replicates": ("search", "replicates"),
        "metric": ("search", "metric"),
        "budget": ("search", "budget"),
        "workers": ("search", "workers"),
        "per_threshold": ("eval", "per_threshold"),
        "train_fraction": ("eval", "train_fraction"),
        "gen_seed": ("generator", "seed"),
        "channels": ("generator", "channels"),
        "utterances": ("generator", "utterances"),
        "noise_sigma": ("generator", "noise_sigma"),
    }
    for flag, (section, key) in paths.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[section][key] = value
    return cfg


def _train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        learning_rate=float(t["learning_rate"]),
        epochs=int(t["epochs"]),
        batch_size=int(t["batch_size"]),
        dropout_p=float(t["dropout_p"]),
        seed=int(t["seed"]),
    )


def _cache_path(out_dir: Path) -> Path:
    env = os.environ.get("CHANSEL_CACHE_DIR")
    base = Path(env) if env else out_dir
    return base / "cache.jsonl"


def _split(corpus: Corpus, cfg: dict) -> tuple[Corpus, Corpus]:
    return corpus.split(float(cfg["eval"]["train_fraction"]))


def _evaluator(corpus: Corpus, cfg: dict, out_dir: Path) -> TrainingEvaluator:
    train_c, test_c = _split(corpus, cfg)
    workers = int(cfg["search"]["workers"]) or (os.cpu_count() or 1)
    return TrainingEvaluator(
        train_corpus=train_c,
        test_corpus=test_c,
        table=default_table(),
        train_cfg=_train_config(cfg),
        corpus_hash=corpus.content_hash,
        window=int(cfg["model"]["window"]),
        features=int(cfg["model"]["features"]),
        replicates=int(cfg["search"]["replicates"]),
        threshold=int(cfg["eval"]["per_threshold"]),
        workers=workers,
        cache=ResultsCache(_cache_path(out_dir)),
    )


def _provenance(config_hash: str, corpus_hash: str, seed: int) -> Provenance:
    return Provenance(
        version=__version__, config_hash=config_hash, corpus_hash=corpus_hash, seed=seed
    )


def _record_json(record) -> str:
    doc = record.to_dict()
    doc.pop("wall_time")  # timings would break byte-identical reruns
    doc["tool_version"] = __version__
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --- subcommands ---------------------------------------------------------------


def cmd_gen_data(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    gen = GeneratorConfig.from_dict(cfg["generator"])
    corpus = generate(gen)
    digest = save_corpus(corpus, Path(args.out), force=args.force)
    print(f"wrote {len(corpus)} utterances to {args.out} (hash {digest[:12]})")
    return EXIT_OK


def cmd_pretrain(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    corpus = load_corpus(Path(args.corpus))
    train_c, _ = _split(corpus, cfg)
    train_cfg = _train_config(cfg)
    params = init_params(
        channels=corpus.channels,
        window=int(cfg["model"]["window"]),
        features=int(cfg["model"]["features"]),
        class_symbols=corpus.label_alphabet(),
        seed=train_cfg.seed,
    )
    result = train(params, train_c, train_cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_hash = config_fingerprint(
        train_cfg, int(cfg["model"]["window"]), int(cfg["model"]["features"]),
        int(cfg["eval"]["per_threshold"]), len(train_c),
    )
    model_path = out_dir / f"model_p{train_cfg.dropout_p:g}.json"
    save_model(result.params, model_path, seed=train_cfg.seed, config_hash=config_hash)
    prov = _provenance(config_hash, corpus.content_hash, train_cfg.seed)
    write_text(
        out_dir / f"training_log_p{train_cfg.dropout_p:g}.csv",
        training_log_csv(result.epoch_losses, result.mean_retained_channels, prov),
    )
    print(
        f"trained p={train_cfg.dropout_p:g} model: loss {result.initial_loss:.4f} -> "
        f"{result.final_loss:.4f}, mean retained channels "
        f"{result.mean_retained_channels:.2f}, saved {model_path}"
    )
    return EXIT_OK


def cmd_finetune(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if not args.init and not args.from_scratch:
        raise ValueError("finetune needs --init MODEL and/or --from-scratch")
    corpus = load_corpus(Path(args.corpus))
    label = SUBSET_PRESETS.get(args.subset, args.subset)
    subset = parse_subset(label, corpus.channels)
    train_c, test_c = _split(corpus, cfg)
    train_r = train_c.restrict(subset)
    test_r = test_c.restrict(subset)
    threshold = int(cfg["eval"]["per_threshold"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    seed = int(cfg["train"]["seed"])
    epochs = int(cfg["train"]["epochs"])
    # fine-tuning never masks channels; dropout belongs to pretraining.
    # epochs == 0 means evaluate the initialisation as-is (no TrainConfig built).
    ft_cfg = TrainConfig(
        learning_rate=float(cfg["train"]["learning_rate"]), epochs=max(epochs, 1),
        batch_size=int(cfg["train"]["batch_size"]), dropout_p=0.0, seed=seed,
    )
    config_hash = config_fingerprint(
        ft_cfg, int(cfg["model"]["window"]), int(cfg["model"]["features"]),
        threshold, len(train_r),
    )
    prov = _provenance(config_hash, corpus.content_hash, seed)
    rows = ["mode,subset,wer,per_total"]

    def run_side(mode: str, start, parent_hash) -> None:
        tuned = start if epochs == 0 else train(start, train_r, ft_cfg).params
        record = evaluate(
            tuned, test_r, default_table(), subset=subset, threshold=threshold,
            seed=seed, config_hash=config_hash, corpus_hash=corpus.content_hash,
        )
        save_model(
            tuned, out_dir / f"model_{mode}_{subset.label}.json",
            seed=seed, config_hash=config_hash,
            provenance={"parent": parent_hash, "subset": subset.label},
        )
        write_text(out_dir / f"eval_{mode}_{subset.label}.json", _record_json(record))
        rows.append(f"{mode},{subset.label},{record.wer!r},{record.per_total!r}")
        print(f"{mode} {subset.label}: wer {record.wer:.4f}, per {record.per_total:.4f}")

    if args.init:
        full_params, manifest = load_model(Path(args.init))
        run_side("ft", slice_input_channels(full_params, subset), manifest["payload_sha256"])
    if args.from_scratch:
        scratch = init_params(
            channels=len(subset),
            window=int(cfg["model"]["window"]),
            features=int(cfg["model"]["features"]),
            class_symbols=corpus.label_alphabet(),
            seed=seed,
        )
        run_side("scratch", scratch, None)

    write_text(
        out_dir / f"comparison_{subset.label}.csv",
        "\n".join([prov.line(), *rows]) + "\n",
    )
    return EXIT_OK


def cmd_backward_elim(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    corpus = load_corpus(Path(args.corpus))
    out_dir = Path(args.out)
    evaluator = _evaluator(corpus, cfg, out_dir)
    trace = backward_elimination(
        evaluator,
        channels=corpus.channels,
        stop_size=int(cfg["search"]["stop_size"]),
        metric=cfg["search"]["metric"],
    )
    prov = _provenance(evaluator.config_hash, corpus.content_hash, evaluator.train_cfg.seed)
    write_text(out_dir / "elimination.json", elimination_json(trace, prov))
    write_text(out_dir / "elimination_curve.csv", elimination_plot_csv(trace, prov))
    order = ", ".join(str(ch + 1) for ch in trace.removal_order)
    print(f"removal order: {order}; survivors: {trace.steps[-1].surviving.label}")
    return EXIT_OK


def _emit_sweep_reports(sweep, k_top: int, out_dir: Path, prov: Provenance) -> None:
    counts = top_k_frequency(sweep, min(k_top, len(sweep.records)))
    averages = channel_average_metric(sweep)
    write_text(out_dir / "sweep.csv", sweep_csv(sweep, prov))
    write_text(
        out_dir / "top_subsets.csv",
        top_subsets_csv(sweep, min(k_top, len(sweep.records)), counts, prov),
    )
    write_text(
        out_dir / "channel_average.csv",
        channel_average_csv(averages, sweep.metric_name, prov),
    )


def cmd_exhaustive(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    corpus = load_corpus(Path(args.corpus))
    out_dir = Path(args.out)
    evaluator = _evaluator(corpus, cfg, out_dir)
    sweep = exhaustive_sweep(
        evaluator,
        channels=corpus.channels,
        k=int(cfg["search"]["k"]),
        metric=cfg["search"]["metric"],
        budget=int(cfg["search"]["budget"]),
    )
    prov = _provenance(evaluator.config_hash, corpus.content_hash, evaluator.train_cfg.seed)
    _emit_sweep_reports(sweep, int(cfg["search"]["k_top"]), out_dir, prov)
    best = sweep.records[0]
    print(
        f"swept {len(sweep.records)} subsets; best {best.subset_label} "
        f"({sweep.metric_name} {best.metric(sweep.metric_name):.4f})"
    )
    return EXIT_OK


def cmd_ablate7(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    corpus = load_corpus(Path(args.corpus))
    out_dir = Path(args.out)
    evaluator = _evaluator(corpus, cfg, out_dir)
    baseline = evaluator.evaluate(ChannelSubset.full(corpus.channels))
    result = seven_channel_ablation(evaluator, corpus.channels, baseline, default_table())
    prov = _provenance(evaluator.config_hash, corpus.content_hash, evaluator.train_cfg.seed)
    write_text(out_dir / "worst_channel.csv", worst_channel_csv(result.rows, prov))
    records_doc = {
        "baseline": json.loads(_record_json(result.baseline)),
        "by_removed_channel": {
            str(ch): json.loads(_record_json(rec)) for ch, rec in sorted(result.records.items())
        },
    }
    write_text(
        out_dir / "ablation_records.json",
        json.dumps(records_doc, indent=2, sort_keys=True) + "\n",
    )
    print(f"ablated {corpus.channels} channels; wrote {out_dir / 'worst_channel.csv'}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    corpus = load_corpus(Path(args.corpus))
    out_dir = Path(args.out)
    evaluator = _evaluator(corpus, cfg, out_dir)
    k = int(cfg["search"]["k"])
    required = math.comb(corpus.channels, k)
    if required > int(cfg["search"]["budget"]):
        raise SweepBudgetError(required, int(cfg["search"]["budget"]))
    subsets = [
        ChannelSubset(combo) for combo in itertools.combinations(range(corpus.channels), k)
    ]
    records = evaluator.evaluate_many(subsets, require_cached=True)
    ordered = sorted(
        records.values(), key=lambda r: (r.metric(cfg["search"]["metric"]), r.subset_label)
    )
    sweep = SweepResult(
        channels=corpus.channels, k=k, metric_name=cfg["search"]["metric"],
        records=tuple(ordered),
    )
    prov = _provenance(evaluator.config_hash, corpus.content_hash, evaluator.train_cfg.seed)
    _emit_sweep_reports(sweep, int(cfg["search"]["k_top"]), out_dir, prov)
    print(f"rebuilt reports for {len(sweep.records)} cached subsets in {out_dir}")
    return EXIT_OK


# --- wiring ---------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser, corpus: bool = True) -> None:
    sub.add_argument("--config", help="JSON config file; flags override its values")
    sub.add_argument("--out", required=True, help="output directory")
    if corpus:
        sub.add_argument("--corpus", required=True, help="corpus directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chansel", description=__doc__)
    parser.add_argument("--version", action="version", version=f"chansel {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("gen-data", help="generate a synthetic corpus")
    _add_common(p, corpus=False)
    p.add_argument("--force", action="store_true", help="overwrite an existing corpus")
    p.add_argument("--gen-seed", type=int, dest="gen_seed")
    p.add_argument("--channels", type=int)
    p.add_argument("--utterances", type=int)
    p.add_argument("--noise-sigma", type=float, dest="noise_sigma")
    p.set_defaults(func=cmd_gen_data)

    p = commands.add_parser("pretrain", help="train the full-channel model")
    _add_common(p)
    for flag, typ in (
        ("--seed", int), ("--epochs", int), ("--learning-rate", float),
        ("--batch-size", int), ("--dropout-p", float), ("--window", int),
        ("--features", int), ("--train-fraction", float),
    ):
        p.add_argument(flag, type=typ)
    p.set_defaults(func=cmd_pretrain)

    p = commands.add_parser("finetune", help="slice a pretrained model to a subset and adapt it")
    _add_common(p)
    p.add_argument("--subset", required=True,
                   help=f"subset label like 1356, or a preset: {', '.join(SUBSET_PRESETS)}")
    p.add_argument("--init", help="pretrained model JSON header to slice")
    p.add_argument("--from-scratch", action="store_true",
                   help="also (or only) train a scratch baseline on the subset")
    for flag, typ in (
        ("--seed", int), ("--epochs", int), ("--learning-rate", float),
        ("--batch-size", int), ("--window", int), ("--features", int),
        ("--train-fraction", float), ("--per-threshold", int),
    ):
        p.add_argument(flag, type=typ)
    p.set_defaults(func=cmd_finetune)

    for name, handler, extras in (
        ("backward-elim", cmd_backward_elim, (("--stop-size", int),)),
        ("exhaustive", cmd_exhaustive, (("--k", int), ("--k-top", int), ("--budget", int))),
        ("ablate7", cmd_ablate7, ()),
        ("report", cmd_report, (("--k", int), ("--k-top", int))),
    ):
        p = commands.add_parser(name, help=f"{name} workflow")
        _add_common(p)
        for flag, typ in (
            ("--seed", int), ("--epochs", int), ("--learning-rate", float),
            ("--batch-size", int), ("--window", int), ("--features", int),
            ("--replicates", int), ("--workers", int), ("--metric", str),
            ("--train-fraction", float), ("--per-threshold", int),
        ):
            p.add_argument(flag, type=typ)
        for flag, typ in extras:
            p.add_argument(flag, type=typ)
        p.set_defaults(func=handler)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except EvaluationError as exc:
        cause = exc.__cause__
        if isinstance(cause, TrainingDivergedError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError, OSError, SweepBudgetError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
