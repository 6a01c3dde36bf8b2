"""Labeled-sequence corpus container and its on-disk directory format.

A corpus directory holds a ``manifest.json`` (generator config + content
hash), one signal header/payload pair per utterance, and a ``labels.csv``
with one row per frame. Transcripts are never stored: they are by invariant
the collapse of the frame labels, so loading recomputes them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

from ._version import __version__
from .metrics import collapse_frame_labels
from .phonemes import SILENCE_SYMBOL
from .signals import (
    ChannelSubset,
    MultichannelSignal,
    load_signal,
    restrict_to_subset,
    save_signal,
)

CORPUS_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class LabeledSequence:
    """A signal with one phoneme label per frame and the word transcript.

    The transcript must equal the collapse of the frame labels (silence
    delimits words, repeated labels merge); the constructor enforces it.
    """

    signal: MultichannelSignal
    labels: tuple[str, ...]
    transcript: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.labels) != self.signal.n_samples:
            raise ValueError(
                f"{len(self.labels)} frame labels for a {self.signal.n_samples}-frame signal"
            )
        expected = collapse_frame_labels(self.labels)
        if self.transcript != expected:
            raise ValueError(
                f"transcript {self.transcript} does not collapse from the frame labels "
                f"(expected {expected})"
            )

    @classmethod
    def from_labels(cls, signal: MultichannelSignal, labels: Sequence[str]) -> "LabeledSequence":
        labels = tuple(labels)
        return cls(signal=signal, labels=labels, transcript=collapse_frame_labels(labels))


@dataclass(frozen=True, eq=False)
class Corpus:
    """An ordered bundle of labeled sequences, optionally tagged with the
    generator config dict it came from. Derived corpora (splits, channel
    restrictions) drop the config since it no longer describes them."""

    sequences: tuple[LabeledSequence, ...]
    config: Mapping[str, Any] | None = None

    def __post_init__(self) -> None:
        if not self.sequences:
            raise ValueError("corpus must contain at least one sequence")
        c = self.sequences[0].signal.channels
        for i, seq in enumerate(self.sequences):
            if seq.signal.channels != c:
                raise ValueError(
                    f"utterance {i} has {seq.signal.channels} channels, expected {c}"
                )

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[LabeledSequence]:
        return iter(self.sequences)

    @property
    def channels(self) -> int:
        return self.sequences[0].signal.channels

    @property
    def n_frames(self) -> int:
        return sum(seq.signal.n_samples for seq in self.sequences)

    def label_alphabet(self) -> tuple[str, ...]:
        """Stable class-symbol order: silence first, then the config's class
        list when available, else the sorted labels actually present."""
        if self.config and "classes" in self.config:
            return (SILENCE_SYMBOL, *self.config["classes"])
        seen = sorted({lab for seq in self.sequences for lab in seq.labels})
        if SILENCE_SYMBOL in seen:
            seen.remove(SILENCE_SYMBOL)
            return (SILENCE_SYMBOL, *seen)
        return tuple(seen)

    def restrict(self, subset: ChannelSubset) -> "Corpus":
        """Channel-restricted copy; labels and transcripts are untouched."""
        return Corpus(
            tuple(
                LabeledSequence(
                    signal=restrict_to_subset(seq.signal, subset),
                    labels=seq.labels,
                    transcript=seq.transcript,
                )
                for seq in self.sequences
            )
        )

    def split(self, train_fraction: float) -> tuple["Corpus", "Corpus"]:
        """Deterministic head/tail split into (train, test)."""
        if not (0.0 < train_fraction < 1.0):
            raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
        n_train = max(1, min(len(self.sequences) - 1, round(len(self.sequences) * train_fraction)))
        return (
            Corpus(self.sequences[:n_train]),
            Corpus(self.sequences[n_train:]),
        )

    @cached_property
    def content_hash(self) -> str:
        """SHA-256 over the config and every utterance's labels and samples."""
        h = hashlib.sha256()
        if self.config is not None:
            h.update(json.dumps(dict(self.config), sort_keys=True).encode("utf-8"))
        for seq in self.sequences:
            h.update("|".join(seq.labels).encode("utf-8"))
            h.update(seq.signal.samples.astype("<f8").tobytes(order="C"))
        return h.hexdigest()


def save_corpus(corpus: Corpus, directory: Path, force: bool = False) -> str:
    """Write the corpus directory; returns the content hash. Refuses to
    overwrite an existing corpus unless ``force``."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if manifest_path.exists() and not force:
        raise FileExistsError(f"corpus already exists at {directory} (use force to overwrite)")
    directory.mkdir(parents=True, exist_ok=True)

    for i, seq in enumerate(corpus.sequences):
        save_signal(seq.signal, directory / f"utt_{i:05d}.json")

    lines = ["utterance,frame,label"]
    for i, seq in enumerate(corpus.sequences):
        for t, lab in enumerate(seq.labels):
            lines.append(f"{i},{t},{lab}")
    (directory / "labels.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    manifest = {
        "format_version": CORPUS_FORMAT_VERSION,
        "tool_version": __version__,
        "config": dict(corpus.config) if corpus.config is not None else None,
        "hash": corpus.content_hash,
        "utterances": len(corpus.sequences),
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return corpus.content_hash


def load_corpus(directory: Path) -> Corpus:
    """Read a corpus directory back; verifies the manifest hash."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    n = int(manifest["utterances"])

    labels_by_utt: dict[int, list[tuple[int, str]]] = {i: [] for i in range(n)}
    text = (directory / "labels.csv").read_text(encoding="utf-8")
    rows = text.strip().splitlines()
    if rows[0] != "utterance,frame,label":
        raise ValueError(f"unexpected labels.csv header: {rows[0]!r}")
    for row in rows[1:]:
        utt, frame, lab = row.split(",")
        labels_by_utt[int(utt)].append((int(frame), lab))

    sequences = []
    for i in range(n):
        signal = load_signal(directory / f"utt_{i:05d}.json")
        frames = sorted(labels_by_utt[i])
        sequences.append(LabeledSequence.from_labels(signal, [lab for _, lab in frames]))

    corpus = Corpus(tuple(sequences), config=manifest.get("config"))
    if corpus.content_hash != manifest["hash"]:
        raise ValueError(
            f"corpus at {directory} fails its integrity check: "
            f"manifest hash {manifest['hash'][:12]}, recomputed {corpus.content_hash[:12]}"
        )
    return corpus
