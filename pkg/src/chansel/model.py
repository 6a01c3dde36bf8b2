"""Reference frame classifier with a channel-sliceable input layer.

The network is deliberately tiny: a linear layer over a sliding window of W
taps per channel, tanh, then a linear softmax head. What matters is its
structure, not its capacity: the first layer's weight matrix is organised in
per-channel column blocks (channel c owns columns [c*W, (c+1)*W)), so a model
for a channel subset is obtained by slicing those blocks out of a pretrained
full-channel model, and slicing is exactly equivalent to zeroing the dropped
channels of the input.

Training is plain mini-batch gradient descent with a fixed learning rate,
frame-wise cross-entropy, and optional channel dropout drawn fresh per
utterance per epoch. Everything is a pure function of the seed; no adaptive
optimizer state, no threading, so trajectories are bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ._version import __version__
from .corpus import Corpus, LabeledSequence
from .metrics import (
    CategoryReport,
    CategoryRow,
    DEFAULT_CATEGORY_THRESHOLD,
    category_per,
    collapse_frame_labels,
    edit_distance,
    phoneme_error_rate,
)
from .phonemes import CategoryTable
from .signals import ChannelSubset, draw_channel_mask

MODEL_FORMAT_VERSION = 1
LOG_CLAMP = 1e-12

DROPOUT_PRESETS = (0.0, 0.125, 0.25)


class TrainingDivergedError(RuntimeError):
    """Raised when a batch produces a non-finite loss; names the batch."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss

    def __reduce__(self):  # survives the trip back from a worker process
        return (TrainingDivergedError, (self.epoch, self.batch, self.loss))


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Flat parameter set; all arrays are copied in and locked read-only."""

    input_weights: np.ndarray  # (features, channels * window)
    input_bias: np.ndarray  # (features,)
    head_weights: np.ndarray  # (classes, features)
    head_bias: np.ndarray  # (classes,)
    channels: int
    window: int
    features: int
    class_symbols: tuple[str, ...]

    def __post_init__(self) -> None:
        w1 = np.array(self.input_weights, dtype=np.float64, copy=True)
        b1 = np.array(self.input_bias, dtype=np.float64, copy=True)
        w2 = np.array(self.head_weights, dtype=np.float64, copy=True)
        b2 = np.array(self.head_bias, dtype=np.float64, copy=True)
        k = len(self.class_symbols)
        if self.channels < 1 or self.window < 1 or self.features < 1 or k < 2:
            raise ValueError(
                f"bad layer sizes: channels={self.channels} window={self.window} "
                f"features={self.features} classes={k}"
            )
        if w1.shape != (self.features, self.channels * self.window):
            raise ValueError(f"input_weights shape {w1.shape}, expected "
                             f"{(self.features, self.channels * self.window)}")
        if b1.shape != (self.features,):
            raise ValueError(f"input_bias shape {b1.shape}, expected {(self.features,)}")
        if w2.shape != (k, self.features):
            raise ValueError(f"head_weights shape {w2.shape}, expected {(k, self.features)}")
        if b2.shape != (k,):
            raise ValueError(f"head_bias shape {b2.shape}, expected {(k,)}")
        for name, arr in (("input_weights", w1), ("input_bias", b1),
                          ("head_weights", w2), ("head_bias", b2)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains NaN or Inf")
        for arr in (w1, b1, w2, b2):
            arr.flags.writeable = False
        object.__setattr__(self, "input_weights", w1)
        object.__setattr__(self, "input_bias", b1)
        object.__setattr__(self, "head_weights", w2)
        object.__setattr__(self, "head_bias", b2)

    @property
    def classes(self) -> int:
        return len(self.class_symbols)


def init_params(
    channels: int,
    window: int,
    features: int,
    class_symbols: Sequence[str],
    seed: int,
) -> ModelParams:
    """Seeded uniform init in [-a, a] with a = sqrt(1 / fan_in) per layer."""
    rng = np.random.default_rng(seed)
    symbols = tuple(class_symbols)
    d = channels * window
    a1 = np.sqrt(1.0 / d)
    a2 = np.sqrt(1.0 / features)
    return ModelParams(
        input_weights=rng.uniform(-a1, a1, size=(features, d)),
        input_bias=rng.uniform(-a1, a1, size=features),
        head_weights=rng.uniform(-a2, a2, size=(len(symbols), features)),
        head_bias=rng.uniform(-a2, a2, size=len(symbols)),
        channels=channels,
        window=window,
        features=features,
        class_symbols=symbols,
    )


def featurize(samples: np.ndarray, window: int) -> np.ndarray:
    """Windowed view of a (C, T) signal: row t holds the W taps around frame t
    for each channel, zero-padded at the edges, laid out channel-block-major.
    Returns (T, C * W)."""
    c, t = samples.shape
    left = (window - 1) // 2
    right = window // 2
    padded = np.pad(samples, ((0, 0), (left, right)))
    win = np.lib.stride_tricks.sliding_window_view(padded, window, axis=1)  # (C, T, W)
    return np.ascontiguousarray(win.transpose(1, 0, 2).reshape(t, c * window))


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _scores(w1, b1, w2, b2, xw: np.ndarray) -> np.ndarray:
    h = np.tanh(xw @ w1.T + b1)
    return h @ w2.T + b2


def _loss(w1, b1, w2, b2, xw: np.ndarray, y: np.ndarray) -> float:
    p = _softmax(_scores(w1, b1, w2, b2, xw))
    p_true = np.clip(p[np.arange(len(y)), y], LOG_CLAMP, None)
    return float(-np.mean(np.log(p_true)))


def _loss_and_grads(w1, b1, w2, b2, xw: np.ndarray, y: np.ndarray):
    n = xw.shape[0]
    h = np.tanh(xw @ w1.T + b1)
    p = _softmax(h @ w2.T + b2)
    p_true = np.clip(p[np.arange(n), y], LOG_CLAMP, None)
    loss = float(-np.mean(np.log(p_true)))
    g = p.copy()
    g[np.arange(n), y] -= 1.0
    g /= n
    gw2 = g.T @ h
    gb2 = g.sum(axis=0)
    dh = g @ w2
    da = dh * (1.0 - h * h)
    gw1 = da.T @ xw
    gb1 = da.sum(axis=0)
    return loss, (gw1, gb1, gw2, gb2)


def forward(params: ModelParams, x) -> np.ndarray:
    """Per-frame class scores, shape (T, classes). Deterministic; dropout is
    a training-only concern and never applied here."""
    samples = x.samples if hasattr(x, "samples") else np.asarray(x, dtype=np.float64)
    if samples.shape[0] != params.channels:
        raise ValueError(
            f"signal has {samples.shape[0]} channels, model expects {params.channels}"
        )
    xw = featurize(samples, params.window)
    return _scores(params.input_weights, params.input_bias,
                   params.head_weights, params.head_bias, xw)


def predict_labels(params: ModelParams, x) -> tuple[str, ...]:
    idx = np.argmax(forward(params, x), axis=1)
    return tuple(params.class_symbols[i] for i in idx)


@dataclass(frozen=True)
class TrainConfig:
    """Gradient-descent settings. ``dropout_p`` is the per-channel masking
    probability during training; the documented presets are 0, 0.125, 0.25."""

    learning_rate: float = 0.5
    epochs: int = 30
    batch_size: int = 16
    dropout_p: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (self.learning_rate > 0):
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be a positive integer, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if not (0.0 <= self.dropout_p <= 1.0):
            raise ValueError(f"dropout_p must be in [0, 1], got {self.dropout_p}")


@dataclass(frozen=True)
class TrainResult:
    params: ModelParams
    epoch_losses: tuple[float, ...]
    initial_loss: float
    final_loss: float
    mean_retained_channels: float


def _index_labels(seq: LabeledSequence, class_index: Mapping[str, int]) -> np.ndarray:
    try:
        return np.array([class_index[lab] for lab in seq.labels], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"corpus label {exc.args[0]!r} is not a model class") from None


def train(params: ModelParams, data: Corpus | Sequence[LabeledSequence], cfg: TrainConfig) -> TrainResult:
    """Minimise frame-wise cross-entropy by mini-batch gradient descent.

    Batches are groups of utterances; when cfg.dropout_p > 0 a fresh channel
    mask is drawn for every utterance in every epoch. Identical seeds give
    bit-identical parameter trajectories. Raises TrainingDivergedError on the
    first non-finite batch loss.
    """
    sequences = list(data)
    if not sequences:
        raise ValueError("training corpus is empty")
    for seq in sequences:
        if seq.signal.channels != params.channels:
            raise ValueError(
                f"corpus has {seq.signal.channels}-channel signals, "
                f"model expects {params.channels}"
            )
    class_index = {sym: i for i, sym in enumerate(params.class_symbols)}
    xw_all = [featurize(seq.signal.samples, params.window) for seq in sequences]
    y_all = [_index_labels(seq, class_index) for seq in sequences]

    w1 = params.input_weights.copy()
    b1 = params.input_bias.copy()
    w2 = params.head_weights.copy()
    b2 = params.head_bias.copy()

    def clean_loss() -> float:
        return _loss(w1, b1, w2, b2, np.vstack(xw_all), np.concatenate(y_all))

    initial_loss = clean_loss()
    rng = np.random.default_rng(cfg.seed)
    lr = cfg.learning_rate
    p = cfg.dropout_p
    n = len(sequences)
    retained_sum = 0
    draws = 0
    epoch_losses: list[float] = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        batch_losses: list[float] = []
        for b_idx, start in enumerate(range(0, n, cfg.batch_size)):
            ids = order[start:start + cfg.batch_size]
            xs = []
            for i in ids:
                if p > 0.0:
                    mask = draw_channel_mask(params.channels, p, rng)
                    retained_sum += mask.retained
                    draws += 1
                    col = np.repeat(np.asarray(mask.bits, dtype=np.float64), params.window)
                    xs.append(xw_all[i] * col)
                else:
                    xs.append(xw_all[i])
            xw = np.vstack(xs)
            y = np.concatenate([y_all[i] for i in ids])
            loss, (gw1, gb1, gw2, gb2) = _loss_and_grads(w1, b1, w2, b2, xw, y)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, b_idx, loss)
            w1 -= lr * gw1
            b1 -= lr * gb1
            w2 -= lr * gw2
            b2 -= lr * gb2
            batch_losses.append(loss)
        epoch_losses.append(float(np.mean(batch_losses)))

    final_loss = clean_loss()
    trained = ModelParams(
        input_weights=w1, input_bias=b1, head_weights=w2, head_bias=b2,
        channels=params.channels, window=params.window, features=params.features,
        class_symbols=params.class_symbols,
    )
    mean_retained = retained_sum / draws if draws else float(params.channels)
    return TrainResult(
        params=trained,
        epoch_losses=tuple(epoch_losses),
        initial_loss=initial_loss,
        final_loss=final_loss,
        mean_retained_channels=mean_retained,
    )


def gradient_check(
    params: ModelParams,
    batch: Sequence[LabeledSequence],
    n_coords: int = 100,
    step: float = 1e-5,
    seed: int = 0,
    negate_analytic: bool = False,
) -> float:
    """Max relative error between analytic and central finite-difference
    gradients on randomly chosen coordinates. ``negate_analytic`` flips the
    analytic gradient's sign and exists as the negative control: a correct
    implementation then reports an error near 1."""
    if not batch:
        raise ValueError("gradient check needs a non-empty batch")
    class_index = {sym: i for i, sym in enumerate(params.class_symbols)}
    xw = np.vstack([featurize(seq.signal.samples, params.window) for seq in batch])
    y = np.concatenate([_index_labels(seq, class_index) for seq in batch])

    arrays = [params.input_weights.copy(), params.input_bias.copy(),
              params.head_weights.copy(), params.head_bias.copy()]
    _, grads = _loss_and_grads(*arrays, xw, y)
    sizes = [a.size for a in arrays]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    coords = rng.choice(total, size=min(n_coords, total), replace=False)

    worst = 0.0
    for flat in coords:
        a_idx = 0
        offset = int(flat)
        while offset >= sizes[a_idx]:
            offset -= sizes[a_idx]
            a_idx += 1
        analytic = float(grads[a_idx].ravel()[offset])
        if negate_analytic:
            analytic = -analytic
        perturbed = [a.copy() for a in arrays]
        perturbed[a_idx].ravel()[offset] += step
        loss_plus = _loss(*perturbed, xw, y)
        perturbed[a_idx].ravel()[offset] -= 2 * step
        loss_minus = _loss(*perturbed, xw, y)
        numeric = (loss_plus - loss_minus) / (2 * step)
        rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst


def slice_input_channels(params: ModelParams, subset: ChannelSubset) -> ModelParams:
    """Model for a channel subset: keep exactly the input-weight column blocks
    of the surviving channels, copy every other parameter verbatim. The result
    computes the same function on subset-restricted input as the original does
    on input with the dropped channels zeroed."""
    if subset.indices[-1] >= params.channels:
        raise ValueError(
            f"subset {subset.label} references channel {subset.indices[-1]}, "
            f"model has {params.channels} channels"
        )
    w = params.window
    cols = np.concatenate([np.arange(c * w, (c + 1) * w) for c in subset.indices])
    return ModelParams(
        input_weights=params.input_weights[:, cols],
        input_bias=params.input_bias,
        head_weights=params.head_weights,
        head_bias=params.head_bias,
        channels=len(subset),
        window=params.window,
        features=params.features,
        class_symbols=params.class_symbols,
    )


@dataclass(frozen=True)
class EvalRecord:
    """One evaluation row: the unit of caching and ranking.

    ``seed`` is the replicate index for cached single-training rows and the
    base seed for aggregated rows (``n_seeds`` > 1). Wall time is bookkeeping
    only and never flows into report files.
    """

    subset_label: str
    seed: int
    config_hash: str
    corpus_hash: str
    wer: float
    per_total: float
    per_category: CategoryReport
    wall_time: float = 0.0
    n_seeds: int = 1

    def to_dict(self) -> dict:
        return {
            "subset": self.subset_label,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "corpus_hash": self.corpus_hash,
            "wer": self.wer,
            "per_total": self.per_total,
            "per_category": {
                "rows": [[r.name, r.count, r.rate] for r in self.per_category.rows],
                "excluded": list(self.per_category.excluded),
            },
            "wall_time": self.wall_time,
            "n_seeds": self.n_seeds,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalRecord":
        cat = d["per_category"]
        return cls(
            subset_label=d["subset"],
            seed=int(d["seed"]),
            config_hash=d["config_hash"],
            corpus_hash=d["corpus_hash"],
            wer=float(d["wer"]),
            per_total=float(d["per_total"]),
            per_category=CategoryReport(
                rows=tuple(CategoryRow(name, int(count), float(rate))
                           for name, count, rate in cat["rows"]),
                excluded=tuple(cat["excluded"]),
            ),
            wall_time=float(d["wall_time"]),
            n_seeds=int(d.get("n_seeds", 1)),
        )

    def metric(self, name: str) -> float:
        if name == "wer":
            return self.wer
        if name == "per_total":
            return self.per_total
        raise KeyError(f"unknown metric {name!r} (expected 'wer' or 'per_total')")


def evaluate(
    params: ModelParams,
    data: Corpus | Sequence[LabeledSequence],
    table: CategoryTable,
    subset: ChannelSubset | None = None,
    threshold: int = DEFAULT_CATEGORY_THRESHOLD,
    seed: int = 0,
    config_hash: str = "",
    corpus_hash: str = "",
    word_map: Mapping[tuple[str, ...], str] | None = None,
) -> EvalRecord:
    """Score a model on a corpus: frame argmax predictions, total and
    per-category PER, then WER of the collapsed token transcript against each
    utterance's reference transcript (corpus-level: summed edits over summed
    reference lengths)."""
    sequences = list(data)
    if not sequences:
        raise ValueError("evaluation corpus is empty")
    t0 = time.perf_counter()
    ref_frames: list[str] = []
    hyp_frames: list[str] = []
    edits = 0
    ref_tokens_total = 0
    for seq in sequences:
        hyp = predict_labels(params, seq.signal)
        ref_frames.extend(seq.labels)
        hyp_frames.extend(hyp)
        hyp_tokens = collapse_frame_labels(hyp, word_map=word_map)
        edits += edit_distance(seq.transcript, hyp_tokens)
        ref_tokens_total += len(seq.transcript)
    if ref_tokens_total == 0:
        raise ValueError("corpus reference transcripts are empty; WER undefined")
    per_total = phoneme_error_rate(ref_frames, hyp_frames)
    report = category_per(ref_frames, hyp_frames, table, threshold=threshold)
    if subset is None:
        subset = ChannelSubset.full(params.channels)
    return EvalRecord(
        subset_label=subset.label,
        seed=seed,
        config_hash=config_hash,
        corpus_hash=corpus_hash,
        wer=edits / ref_tokens_total,
        per_total=per_total,
        per_category=report,
        wall_time=time.perf_counter() - t0,
        n_seeds=1,
    )


# --- model files -------------------------------------------------------------
#
# JSON manifest next to a .bin payload of all parameters concatenated in
# (input_weights, input_bias, head_weights, head_bias) order, little-endian
# float64. Sliced models record their parent's payload hash and the subset.


def _payload(params: ModelParams) -> bytes:
    flat = np.concatenate([
        params.input_weights.ravel(),
        params.input_bias,
        params.head_weights.ravel(),
        params.head_bias,
    ])
    return flat.astype("<f8").tobytes(order="C")


def model_hash(params: ModelParams) -> str:
    return hashlib.sha256(_payload(params)).hexdigest()


def save_model(
    params: ModelParams,
    header_path: Path,
    seed: int = 0,
    config_hash: str = "",
    provenance: Mapping | None = None,
) -> str:
    """Write manifest + payload; returns the payload hash."""
    header_path = Path(header_path)
    payload = _payload(params)
    digest = hashlib.sha256(payload).hexdigest()
    manifest = {
        "format_version": MODEL_FORMAT_VERSION,
        "tool_version": __version__,
        "layers": {
            "channels": params.channels,
            "window": params.window,
            "features": params.features,
            "classes": params.classes,
        },
        "class_symbols": list(params.class_symbols),
        "seed": seed,
        "config_hash": config_hash,
        "payload_sha256": digest,
        "provenance": dict(provenance) if provenance else None,
    }
    header_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    header_path.with_suffix(".bin").write_bytes(payload)
    return digest


def load_model(header_path: Path) -> tuple[ModelParams, dict]:
    header_path = Path(header_path)
    manifest = json.loads(header_path.read_text(encoding="utf-8"))
    layers = manifest["layers"]
    c, w, f = int(layers["channels"]), int(layers["window"]), int(layers["features"])
    symbols = tuple(manifest["class_symbols"])
    k = len(symbols)
    raw = header_path.with_suffix(".bin").read_bytes()
    if hashlib.sha256(raw).hexdigest() != manifest["payload_sha256"]:
        raise ValueError(f"model payload at {header_path} fails its integrity check")
    flat = np.frombuffer(raw, dtype="<f8")
    expected = f * c * w + f + k * f + k
    if flat.size != expected:
        raise ValueError(f"model payload holds {flat.size} values, expected {expected}")
    pos = 0

    def take(count: int) -> np.ndarray:
        nonlocal pos
        out = flat[pos:pos + count]
        pos += count
        return out

    params = ModelParams(
        input_weights=take(f * c * w).reshape(f, c * w),
        input_bias=take(f),
        head_weights=take(k * f).reshape(k, f),
        head_bias=take(k),
        channels=c,
        window=w,
        features=f,
        class_symbols=symbols,
    )
    return params, manifest
