"""chansel: channel-subset selection toolkit for multichannel sequence data.

Core pieces: channel dropout masking and subset restriction (signals),
a phoneme category taxonomy (phonemes), WER/PER metrics with per-category
aggregation (metrics), a small trainable reference classifier whose input
layer slices along channels (model), a synthetic corpus generator with
planted channel informativeness (synth), and cached subset-search procedures
(search). The ``chansel`` CLI orchestrates the experiment workflows.
"""

from ._version import __version__
from .corpus import Corpus, LabeledSequence, load_corpus, save_corpus
from .metrics import (
    CategoryReport,
    category_per,
    collapse_frame_labels,
    phoneme_error_rate,
    word_error_rate,
    worst_channel_table,
)
from .model import (
    EvalRecord,
    ModelParams,
    TrainConfig,
    evaluate,
    forward,
    gradient_check,
    init_params,
    slice_input_channels,
    train,
)
from .phonemes import CategoryTable, Phoneme, default_table
from .search import (
    EliminationTrace,
    ResultsCache,
    SweepResult,
    TrainingEvaluator,
    backward_elimination,
    channel_average_metric,
    exhaustive_sweep,
    seven_channel_ablation,
    top_k_frequency,
)
from .signals import (
    ChannelMask,
    ChannelSubset,
    MultichannelSignal,
    apply_channel_dropout,
    parse_subset,
    restrict_to_subset,
)
from .synth import GeneratorConfig, complementary_pair_config, generate, planted_importance

__all__ = [
    "__version__",
    "Corpus",
    "LabeledSequence",
    "load_corpus",
    "save_corpus",
    "CategoryReport",
    "category_per",
    "collapse_frame_labels",
    "phoneme_error_rate",
    "word_error_rate",
    "worst_channel_table",
    "EvalRecord",
    "ModelParams",
    "TrainConfig",
    "evaluate",
    "forward",
    "gradient_check",
    "init_params",
    "slice_input_channels",
    "train",
    "CategoryTable",
    "Phoneme",
    "default_table",
    "EliminationTrace",
    "ResultsCache",
    "SweepResult",
    "TrainingEvaluator",
    "backward_elimination",
    "channel_average_metric",
    "exhaustive_sweep",
    "seven_channel_ablation",
    "top_k_frequency",
    "ChannelMask",
    "ChannelSubset",
    "MultichannelSignal",
    "apply_channel_dropout",
    "parse_subset",
    "restrict_to_subset",
    "GeneratorConfig",
    "complementary_pair_config",
    "generate",
    "planted_importance",
]
