"""Transducer and segmental sequence models: exact conversions, oracles and beam search."""

from .core import (
    BLANK,
    INF,
    SENTENCE_END,
    AlignmentPath,
    DomainError,
    GuardExceeded,
    Segmentation,
    Topology,
    TopologyKind,
    TransegError,
    UnreachableError,
    Vocabulary,
    to_prob,
    to_score,
)
from .evalharness import (
    beam_grid,
    compare_decodes,
    generate_utterance_set,
    pruning_sweep,
    q_grid,
    wer,
)
from .lm import NGramLM, generate_random_lm, lm_score, load_lm, save_lm, uniform_lm
from .models import (
    SegmentalModel,
    TransducerModel,
    generate_random_segmental,
    generate_random_transducer,
    load_model,
    save_model,
    validate_model,
)
from .oracle import (
    ScoredSequence,
    exact_best,
    full_sum,
    full_sum_segmental,
    full_sum_transducer,
    label_sequences,
    total_mass,
)
from .search import (
    DecodeResult,
    PruneConfig,
    Strategy,
    decode,
    decode_label_sync_full,
    decode_label_sync_two_stage,
    decode_time_sync,
)
from .transform import (
    SegmentalView,
    TransducerView,
    materialize,
    segmental_to_transducer,
    strict_as_rnnt,
    transducer_to_segmental,
)

__version__ = "0.1.0"
