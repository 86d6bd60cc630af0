"""corefkit: desk-scale coreference resolution and transfer experiments."""

from .documents import (
    Document,
    DocumentError,
    FoldSpec,
    Segment,
    SegmentationError,
    Span,
    make_folds,
    segment_document,
    strip_singletons,
)
from .conll import ConllParseError, parse_conll, write_conll
from .jsonl import JsonlParseError, parse_jsonl, write_jsonl
from .synth import SchemeConfig, synth_corpus
from .metrics import (
    PRF,
    MetricReport,
    avg_f1,
    b_cubed,
    ceaf_phi4,
    hungarian_max,
    mention_f1,
    muc,
    score_clustering,
    score_corpus,
)
from .numeric import (
    AdamOptimizer,
    NumericError,
    OptimizerConfig,
    ParamStore,
    grad_check,
    load_checkpoint,
    save_checkpoint,
)
from .encoder import EncoderConfig, FreezeMask, apply_freeze, encode_tokens
from .engine import (
    DUMMY_SCORE,
    EngineConfig,
    EntityCluster,
    SpanCandidate,
    enumerate_spans,
    init_params,
    prune_spans,
    resolve_document,
    width_bucket,
)
from .training import (
    Checkpoint,
    TrainConfig,
    TrainResult,
    antecedent_loss,
    continued_train,
    document_loss,
    evaluate_docs,
    joint_loss,
    select_checkpoint,
    train,
)

__version__ = "0.1.0"
