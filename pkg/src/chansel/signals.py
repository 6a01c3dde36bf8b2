"""Multichannel signal container, channel dropout masking, and subset restriction.

A recording is a C-by-T block of real samples (rows are channels, columns are
time steps). Channel dropout zeroes whole rows to simulate absent sensors:
each channel is kept independently with probability 1 - p and no rescaling is
applied to the survivors, so a masked channel is indistinguishable from a dead
one. Subsets are canonically written with 1-based channel labels ("1356" means
channels 1, 3, 5 and 6) while all in-memory indices are 0-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

PAYLOAD_DTYPE = "<f8"  # little-endian float64, row-major


@dataclass(frozen=True, eq=False)
class MultichannelSignal:
    """Immutable C x T sample block with a sample-rate tag.

    The sample array is copied on construction and locked read-only, so
    instances can be shared freely across threads and worker processes.
    ``sample_rate`` is metadata only; nothing in the toolkit resamples.
    """

    samples: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self) -> None:
        arr = np.array(self.samples, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2:
            raise ValueError(f"samples must be 2-D (channels x time), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"signal needs at least one channel and one sample, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples contain NaN or Inf")
        if not (self.sample_rate > 0):
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class ChannelMask:
    """Per-channel keep/zero bits, one per channel."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.bits) < 1:
            raise ValueError("mask must cover at least one channel")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"mask bits must be 0 or 1, got {self.bits}")

    @property
    def retained(self) -> int:
        return sum(self.bits)

    def apply(self, x: MultichannelSignal) -> MultichannelSignal:
        """Zero every channel whose bit is 0. Idempotent."""
        if len(self.bits) != x.channels:
            raise ValueError(f"mask covers {len(self.bits)} channels, signal has {x.channels}")
        col = np.asarray(self.bits, dtype=np.float64)[:, None]
        return MultichannelSignal(x.samples * col, sample_rate=x.sample_rate)


@dataclass(frozen=True)
class ChannelSubset:
    """Strictly increasing 0-based channel indices; non-empty."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.indices) == 0:
            raise ValueError("subset must be non-empty")
        if any(i < 0 for i in self.indices):
            raise ValueError(f"negative channel index in {self.indices}")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError(f"indices must be strictly increasing, got {self.indices}")

    @classmethod
    def of(cls, indices: Iterable[int]) -> "ChannelSubset":
        """Build from any iterable of 0-based indices; rejects duplicates."""
        idx = sorted(int(i) for i in indices)
        if len(idx) != len(set(idx)):
            raise ValueError(f"duplicate channel index in {idx}")
        return cls(tuple(idx))

    @classmethod
    def full(cls, channels: int) -> "ChannelSubset":
        return cls(tuple(range(channels)))

    @property
    def label(self) -> str:
        """Canonical 1-based text form: "1356" style while every label fits a
        single digit, comma-separated otherwise."""
        one_based = [i + 1 for i in self.indices]
        if one_based[-1] <= 9:
            return "".join(str(i) for i in one_based)
        return ",".join(str(i) for i in one_based)

    def bitmask(self) -> int:
        return sum(1 << i for i in self.indices)

    def drop(self, channel: int) -> "ChannelSubset":
        """Subset without ``channel`` (which must be a member)."""
        if channel not in self.indices:
            raise ValueError(f"channel {channel} not in subset {self.label}")
        return ChannelSubset(tuple(i for i in self.indices if i != channel))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __contains__(self, channel: int) -> bool:
        return channel in self.indices


def parse_subset(label: str, channels: int) -> ChannelSubset:
    """Parse a 1-based subset label into a 0-based :class:`ChannelSubset`.

    Two forms are accepted: a run of digits ("1356", channels 1..9 only) or
    comma-separated 1-based indices ("1,3,5,6"). Output is sorted; the result
    round-trips through :attr:`ChannelSubset.label`.
    """
    text = label.strip()
    if not text:
        raise ValueError("empty subset label")
    if "," in text:
        parts = [p.strip() for p in text.split(",")]
    else:
        parts = list(text)
    try:
        one_based = [int(p) for p in parts]
    except ValueError as exc:
        raise ValueError(f"cannot parse subset label {label!r}: {exc}") from None
    if any(i == 0 for i in one_based):
        raise ValueError(f"channel labels are 1-based, got 0 in {label!r}")
    if any(i < 0 for i in one_based):
        raise ValueError(f"negative channel label in {label!r}")
    if any(i > channels for i in one_based):
        bad = max(one_based)
        raise ValueError(f"channel {bad} out of range for {channels}-channel signal")
    if len(one_based) != len(set(one_based)):
        raise ValueError(f"duplicate channel in subset label {label!r}")
    return ChannelSubset.of(i - 1 for i in one_based)


def draw_channel_mask(channels: int, p: float, rng: np.random.Generator) -> ChannelMask:
    """Draw keep bits, each 1 with probability 1 - p, independently per channel."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"dropout probability must be in [0, 1], got {p}")
    bits = rng.random(channels) < 1.0 - p
    return ChannelMask(tuple(int(b) for b in bits))


def apply_channel_dropout(
    x: MultichannelSignal, p: float, rng: np.random.Generator
) -> tuple[MultichannelSignal, ChannelMask]:
    """Randomly zero whole channels of ``x``.

    Each channel is retained independently with probability 1 - p; dropped
    channels become exact zeros and retained ones are untouched (no 1/(1-p)
    rescaling). The input signal is never modified. p=0 is the identity,
    p=1 zeroes everything; the all-zero mask is a legal draw.
    """
    mask = draw_channel_mask(x.channels, p, rng)
    return mask.apply(x), mask


def restrict_to_subset(x: MultichannelSignal, s: ChannelSubset) -> MultichannelSignal:
    """Keep only the rows named by ``s``, in subset order; T is unchanged."""
    if s.indices[-1] >= x.channels:
        raise ValueError(
            f"subset {s.label} references channel {s.indices[-1]} "
            f"but signal has {x.channels} channels"
        )
    return MultichannelSignal(x.samples[list(s.indices)], sample_rate=x.sample_rate)


# --- file formats -----------------------------------------------------------
#
# On-disk signal = JSON header {channels, samples_per_channel, sample_rate}
# plus a sibling .bin file holding the row-major little-endian float64 payload.


def payload_path(header_path: Path) -> Path:
    return Path(header_path).with_suffix(".bin")


def save_signal(x: MultichannelSignal, header_path: Path) -> None:
    header_path = Path(header_path)
    header = {
        "channels": x.channels,
        "samples_per_channel": x.n_samples,
        "sample_rate": x.sample_rate,
    }
    header_path.write_text(json.dumps(header, sort_keys=True) + "\n", encoding="utf-8")
    payload_path(header_path).write_bytes(x.samples.astype(PAYLOAD_DTYPE).tobytes(order="C"))


def load_signal(header_path: Path) -> MultichannelSignal:
    header_path = Path(header_path)
    header = json.loads(header_path.read_text(encoding="utf-8"))
    c = int(header["channels"])
    t = int(header["samples_per_channel"])
    raw = payload_path(header_path).read_bytes()
    expected = c * t * 8
    if len(raw) != expected:
        raise ValueError(
            f"payload {payload_path(header_path)} holds {len(raw)} bytes, expected {expected}"
        )
    arr = np.frombuffer(raw, dtype=PAYLOAD_DTYPE).reshape(c, t)
    return MultichannelSignal(arr, sample_rate=float(header["sample_rate"]))


def load_signal_csv(path: Path, sample_rate: float = 1.0) -> MultichannelSignal:
    """Import a small fixture from CSV: one column per channel, one row per step."""
    table = np.loadtxt(Path(path), delimiter=",", ndmin=2)
    return MultichannelSignal(table.T, sample_rate=sample_rate)
