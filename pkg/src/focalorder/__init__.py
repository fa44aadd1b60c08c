"""Difficulty-aware preference optimization for reading-order detection.

A compact stack for studying positional disparity in document reading-order
models: a synthetic layout generator with a controllable ambiguity knob, a
small differentiable pointer-style sorter, an EMA-based difficulty-weighted
loss with calibrated pairwise ranking, and the matching evaluation protocol
(alignment-based disparity profiles and spatial-logical mismatch analysis).
"""

from .corpus import (
    GeneratorConfig,
    corpus_hash,
    generate_corpus,
    generate_document,
    load_corpus,
    save_corpus,
)
from .fpo import (
    DifficultyState,
    FpoConfig,
    PreferencePair,
    StepResult,
    TrainingDivergenceError,
    adaptive_margin,
    advantage,
    batch_bin_loss,
    bin_index,
    difficulty_weights,
    ema_update,
    normalized_seq_loss,
    ranking_loss,
    select_pairs,
    sequence_complexity,
    static_inverted_u_weights,
    total_loss,
    training_step,
    weighted_ce,
)
from .layout import (
    DEFAULT_CATEGORIES,
    BoundingBox,
    Document,
    LayoutElement,
    ReadingOrder,
    bbox_center,
    center_distance,
    nearest_neighbor,
    normalize_bbox,
)
from .metrics import (
    AlignmentOp,
    DisparityProfile,
    MismatchResult,
    OpKind,
    align_backtrace,
    disparity_summary,
    levenshtein,
    order_reward,
    positional_error_profile,
    spatial_logical_mismatch,
)
from .model import (
    ModelConfig,
    ModelParameters,
    decode,
    encode,
    init_params,
    score_sequence,
)
from .training import (
    Checkpoint,
    EvalResult,
    TrainConfig,
    TrainResult,
    evaluate,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    sensitivity_harness,
    train,
)

__version__ = "0.1.0"
