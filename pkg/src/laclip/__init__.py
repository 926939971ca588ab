"""Cross-modal retrieval with weighted local patch alignment.

The pipeline: validate and split a manifest (dataset), load embeddings
from CEMB stores (store), optionally fit projection heads with the
bidirectional contrastive loss (trainer, core_math), then retrieve and
evaluate with either plain global cosine or patch-weighted local scoring
(alignment, retrieval, evaluation). The `laclip` executable wires these
into subcommands.
"""

from .alignment import (
    DEFAULT_ALPHA,
    PatchWeights,
    local_aligned_score,
    patch_weights,
    score_matrix,
    weights_for_record,
)
from .core_math import (
    TAU_MIN,
    ContrastiveGradients,
    Temperature,
    cosine_similarity,
    loss_i2t,
    loss_t2i,
    stable_softmax,
    total_loss,
    total_loss_grad,
)
from .dataset import (
    ManifestRecord,
    SplitAssignment,
    assign_splits,
    parse_manifest,
    scan_manifest,
    split_quotas,
    summarize,
    with_splits,
    write_manifest,
)
from .errors import LaclipError
from .evaluation import (
    GoldMapping,
    RecallReport,
    evaluate_split,
    load_gold,
    load_published_rows,
    mean_recall,
    recall_at_k,
)
from .retrieval import (
    RetrievalIndex,
    ScoredPair,
    build_index,
    query_i2t,
    query_t2i,
)
from .store import (
    EmbeddingRecord,
    StoreHeader,
    l2_normalize_store,
    make_record,
    read_store,
    write_store,
)
from .trainer import (
    ProjectionHead,
    TrainConfig,
    apply_head,
    forward,
    load_head,
    save_head,
    train,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_ALPHA",
    "TAU_MIN",
    "ContrastiveGradients",
    "EmbeddingRecord",
    "GoldMapping",
    "LaclipError",
    "ManifestRecord",
    "PatchWeights",
    "ProjectionHead",
    "RecallReport",
    "RetrievalIndex",
    "ScoredPair",
    "SplitAssignment",
    "StoreHeader",
    "Temperature",
    "TrainConfig",
    "apply_head",
    "assign_splits",
    "build_index",
    "cosine_similarity",
    "evaluate_split",
    "forward",
    "l2_normalize_store",
    "load_gold",
    "load_head",
    "load_published_rows",
    "local_aligned_score",
    "loss_i2t",
    "loss_t2i",
    "make_record",
    "mean_recall",
    "parse_manifest",
    "patch_weights",
    "query_i2t",
    "query_t2i",
    "read_store",
    "recall_at_k",
    "save_head",
    "scan_manifest",
    "score_matrix",
    "split_quotas",
    "stable_softmax",
    "summarize",
    "total_loss",
    "total_loss_grad",
    "train",
    "train_step",
    "weights_for_record",
    "with_splits",
    "write_manifest",
    "write_store",
]
