"""Synthetic multichannel corpus with planted per-channel informativeness.

Each (class, channel) pair owns a fixed seeded template waveform. Templates
start as sums of three band-limited sinusoids with random phases; each
channel's class templates are then orthogonalised against each other and
rescaled to unit RMS. Orthogonality matters: raw random waveforms leave some
class pairs nearly collinear on some channels, which silently changes how
informative a channel really is. With equidistant templates, informativeness
is exactly the planted weight, so the weight vector is a trustworthy oracle
for validating channel-ranking procedures. (This requires at least as many
frames per segment as classes.)

During a phone segment of class k, channel c emits ``w_c * template(k, c)``
plus i.i.d. Gaussian noise. Words are silence-delimited, one phone segment
per word, so the transcript is exactly the collapse of the frame labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Mapping

import numpy as np

from .corpus import Corpus, LabeledSequence
from .phonemes import SILENCE_SYMBOL, default_table
from .signals import MultichannelSignal

DEFAULT_CLASSES = ("IY", "UW", "EH", "AH", "AO", "AE", "B", "M", "T", "F", "K", "L")


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the corpus generator.

    ``weights[c]`` in [0, 1] scales channel c's template amplitude (0 = the
    channel is pure noise). ``channel_classes``, when set, lists per channel
    which class indices that channel carries templates for; None means all.
    ``crosstalk`` in [0, 1) linearly mixes every channel's clean component
    toward the cross-channel mean, emulating redundant sensors.
    """

    channels: int = 8
    classes: tuple[str, ...] = DEFAULT_CLASSES
    weights: tuple[float, ...] = (1.0,) * 8
    noise_sigma: float = 0.5
    frames_per_segment: int = 16
    segments_per_utterance: int = 7
    utterances: int = 200
    seed: int = 0
    channel_classes: tuple[tuple[int, ...], ...] | None = None
    crosstalk: float = 0.0
    silence_frames: int | None = None  # None: same length as phone segments

    def __post_init__(self) -> None:
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        if len(self.classes) < 2:
            raise ValueError(f"need at least 2 classes, got {len(self.classes)}")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("duplicate class symbols")
        table = default_table()
        for sym in self.classes:
            if sym not in table:
                raise ValueError(f"class symbol {sym!r} is not in the phoneme inventory")
            if sym == SILENCE_SYMBOL:
                raise ValueError("silence cannot be a generator class; it is implicit")
        if len(self.weights) != self.channels:
            raise ValueError(
                f"{len(self.weights)} weights for {self.channels} channels"
            )
        for w in self.weights:
            if not (math.isfinite(w) and 0.0 <= w <= 1.0):
                raise ValueError(f"weights must be finite and in [0, 1], got {w}")
        if not (self.noise_sigma > 0):
            raise ValueError(f"noise_sigma must be > 0, got {self.noise_sigma}")
        if self.frames_per_segment < 1 or self.segments_per_utterance < 1 or self.utterances < 1:
            raise ValueError("frames_per_segment, segments_per_utterance and utterances "
                             "must all be >= 1")
        if self.frames_per_segment < len(self.classes):
            raise ValueError(
                f"frames_per_segment ({self.frames_per_segment}) must be >= the class "
                f"count ({len(self.classes)}) so per-channel templates can be "
                f"orthogonalised"
            )
        if self.silence_frames is not None and self.silence_frames < 1:
            raise ValueError(f"silence_frames must be >= 1, got {self.silence_frames}")
        if not (0.0 <= self.crosstalk < 1.0):
            raise ValueError(f"crosstalk must be in [0, 1), got {self.crosstalk}")
        if self.channel_classes is not None:
            if len(self.channel_classes) != self.channels:
                raise ValueError("channel_classes must list one entry per channel")
            k = len(self.classes)
            norm = tuple(tuple(sorted(set(int(i) for i in cov))) for cov in self.channel_classes)
            for cov in norm:
                if any(i < 0 or i >= k for i in cov):
                    raise ValueError(f"channel_classes index out of range in {cov}")
            object.__setattr__(self, "channel_classes", norm)

    def to_dict(self) -> dict[str, Any]:
        return {
            "channels": self.channels,
            "classes": list(self.classes),
            "weights": list(self.weights),
            "noise_sigma": self.noise_sigma,
            "frames_per_segment": self.frames_per_segment,
            "segments_per_utterance": self.segments_per_utterance,
            "utterances": self.utterances,
            "seed": self.seed,
            "channel_classes": (
                [list(cov) for cov in self.channel_classes]
                if self.channel_classes is not None else None
            ),
            "crosstalk": self.crosstalk,
            "silence_frames": self.silence_frames,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GeneratorConfig":
        cc = d.get("channel_classes")
        return cls(
            channels=int(d["channels"]),
            classes=tuple(d["classes"]),
            weights=tuple(float(w) for w in d["weights"]),
            noise_sigma=float(d["noise_sigma"]),
            frames_per_segment=int(d["frames_per_segment"]),
            segments_per_utterance=int(d["segments_per_utterance"]),
            utterances=int(d["utterances"]),
            seed=int(d["seed"]),
            channel_classes=tuple(tuple(cov) for cov in cc) if cc is not None else None,
            crosstalk=float(d.get("crosstalk", 0.0)),
            silence_frames=(int(d["silence_frames"])
                            if d.get("silence_frames") is not None else None),
        )


def _templates(cfg: GeneratorConfig, seed_seq: np.random.SeedSequence) -> np.ndarray:
    """Fixed per-(class, channel) waveforms, shape (K, C, frames), unit RMS.

    Draw sums of three sinusoids (random seeded amplitudes, frequencies in
    (0.05, 0.45) cycles/frame, phases), then orthogonalise each channel's K
    waveforms so every class pair sits at the same RMS distance (sqrt(2)).
    """
    rng = np.random.default_rng(seed_seq)
    k, c, f = len(cfg.classes), cfg.channels, cfg.frames_per_segment
    amp = rng.uniform(0.5, 1.0, size=(k, c, 3))
    freq = rng.uniform(0.05, 0.45, size=(k, c, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(k, c, 3))
    t = np.arange(f)
    waves = (amp[..., None] * np.sin(2.0 * np.pi * freq[..., None] * t + phase[..., None])).sum(axis=2)
    out = np.empty_like(waves)
    for ch in range(c):
        q, _ = np.linalg.qr(waves[:, ch, :].T)  # (f, K), orthonormal columns
        out[:, ch, :] = q.T * np.sqrt(f)  # unit RMS rows
    return out


def generate(cfg: GeneratorConfig) -> Corpus:
    """Build the corpus. Deterministic in cfg.seed: utterances draw from
    seeds derived per utterance index, so the result does not depend on
    generation order."""
    root = np.random.SeedSequence(cfg.seed)
    template_ss, utt_root = root.spawn(2)
    templates = _templates(cfg, template_ss)
    utt_seeds = utt_root.spawn(cfg.utterances)

    k = len(cfg.classes)
    f = cfg.frames_per_segment
    sil = cfg.silence_frames if cfg.silence_frames is not None else f
    segs = cfg.segments_per_utterance
    t_total = (segs + 1) * sil + segs * f
    coverage = cfg.channel_classes
    weights = np.asarray(cfg.weights)

    sequences = []
    for u in range(cfg.utterances):
        rng = np.random.default_rng(utt_seeds[u])
        classes = rng.integers(0, k, size=segs)
        signal = rng.normal(0.0, cfg.noise_sigma, size=(cfg.channels, t_total))
        clean = np.zeros((cfg.channels, t_total))
        labels: list[str] = [SILENCE_SYMBOL] * sil
        for j, kk in enumerate(classes):
            off = sil + j * (f + sil)
            for c in range(cfg.channels):
                if coverage is None or int(kk) in coverage[c]:
                    clean[c, off:off + f] = weights[c] * templates[kk, c]
            labels.extend([cfg.classes[kk]] * f)
            labels.extend([SILENCE_SYMBOL] * sil)
        if cfg.crosstalk > 0.0:
            mixed = (1.0 - cfg.crosstalk) * clean + cfg.crosstalk * clean.mean(axis=0)
            signal += mixed
        else:
            signal += clean
        sequences.append(
            LabeledSequence.from_labels(MultichannelSignal(signal), labels)
        )
    return Corpus(tuple(sequences), config=cfg.to_dict())


def planted_importance(cfg: GeneratorConfig) -> tuple[int, ...]:
    """Channels (0-based) ranked most-informative first: by planted weight
    descending, ties broken by channel index."""
    return tuple(sorted(range(cfg.channels), key=lambda c: (-cfg.weights[c], c)))


def complementary_pair_config(
    base: GeneratorConfig,
    pair: tuple[int, int] = (0, 1),
    pair_weight: float = 1.0,
) -> GeneratorConfig:
    """Rig a config so two channels are only strong together.

    The pair channels each carry templates for a disjoint half of the class
    set at ``pair_weight``; every other channel keeps its base weight and
    covers all classes. Neither pair member can decode the classes the other
    owns, but jointly they cover everything at full strength, so the best
    equal-size subset must contain both: the fixture on which greedy
    elimination can go wrong while an exhaustive sweep cannot.
    """
    if base.channels < 4:
        raise ValueError(f"complementary fixture needs >= 4 channels, got {base.channels}")
    a, b = pair
    if a == b or not (0 <= a < base.channels and 0 <= b < base.channels):
        raise ValueError(f"invalid channel pair {pair} for {base.channels} channels")
    k = len(base.classes)
    first_half = tuple(range((k + 1) // 2))
    second_half = tuple(range((k + 1) // 2, k))
    all_classes = tuple(range(k))
    coverage = []
    weights = list(base.weights)
    for c in range(base.channels):
        if c == a:
            coverage.append(first_half)
            weights[c] = pair_weight
        elif c == b:
            coverage.append(second_half)
            weights[c] = pair_weight
        else:
            coverage.append(all_classes)
    return replace(
        base,
        weights=tuple(weights),
        channel_classes=tuple(coverage),
    )
