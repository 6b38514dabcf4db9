"""Lighthouse attention: symmetric pyramid pooling, parameter-free scoring,
hierarchical top-k selection, dense attention over the gathered
sub-sequence, and shifted scatter-back, all in numpy."""

from .attention import (
    GatheredSeq,
    attend_subsequence,
    blockwise_attend,
    gather,
    gather_backward,
    ring_attend,
    sdpa_backward,
    sdpa_reference,
)
from .complexity import balanced_levels, flop_table, scaling_sweep, subseq_size
from .config import LighthouseConfig
from .context import shard_forward
from .errors import ConfigError, ContractError, LighthouseError, ShapeError
from .layer import (
    AttentionParams,
    dense_backward,
    dense_forward,
    lighthouse_backward,
    lighthouse_forward,
    lighthouse_head,
    lighthouse_head_backward,
)
from .numerics import finite_diff_grad, make_rng, matmul, row_norms, softmax_rows
from .pyramid import Pyramid, build_pyramid, window_bounds
from .scatter import WriteRange, contributor_counts, scatter_back, scatter_back_grad, scatter_ranges
from .scoring import ScoreSet, base_scores, pooled_scores, score_entries
from .selection import SelectionIndex, Source, causal_order, chunked_topk, select_indices, shard_local_select
from .trainer import MarkovSource, TrainConfig, TrainReport, train_dense_baseline, train_two_stage

__version__ = "0.1.0"
