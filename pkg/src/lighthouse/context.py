"""Single-process simulation of context-parallel Lighthouse attention.

The sequence is cut into ``W`` contiguous shards aligned to the coarsest
window. Each shard pools, scores, selects and attends over its own rows
only; the gathered keys/values can be streamed through a ring in blocks.
No shard reads another shard's data, so there is nothing to communicate.

Write ranges that run past a shard's last row are clipped at the shard
edge, exactly as the last window of the full sequence is clipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import blockwise_attend, gather
from .config import LighthouseConfig
from .errors import ConfigError
from .pyramid import Pyramid, build_pyramid
from .scatter import scatter_back
from .scoring import ScoreSet, score_entries
from .selection import SelectionIndex, select_indices


@dataclass
class ShardResult:
    offset: int
    pyramid: Pyramid
    scores: ScoreSet
    index: SelectionIndex
    output: np.ndarray


def shard_config(cfg: LighthouseConfig, shards: int) -> LighthouseConfig:
    if shards < 1 or cfg.seq_len % shards:
        raise ConfigError(f"{shards} shards do not divide seq_len {cfg.seq_len}")
    n_shard = cfg.seq_len // shards
    if n_shard % cfg.coarsest_window:
        raise ConfigError(f"shard length {n_shard} is not a multiple of the coarsest window {cfg.coarsest_window}")
    return cfg.with_(seq_len=n_shard)


def shard_forward(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, cfg: LighthouseConfig, shards: int, ring_block: int | None = None
) -> list[ShardResult]:
    """Run the per-head pipeline independently on every shard."""
    scfg = shard_config(cfg, shards)
    n = scfg.seq_len
    out = []
    for r in range(shards):
        sl = slice(r * n, (r + 1) * n)
        pyr = build_pyramid(q[sl], k[sl], v[sl], scfg)
        sc = score_entries(q[sl], k[sl], scfg)
        idx = select_indices(sc, scfg)
        g = gather(pyr, idx)
        o_sub = blockwise_attend(g, ring_block or len(g))
        out.append(ShardResult(r * n, pyr, sc, idx, scatter_back(o_sub, idx, scfg)))
    return out


def assemble(results: list[ShardResult]) -> np.ndarray:
    """Concatenate shard outputs in shard order."""
    return np.concatenate([r.output for r in results], axis=0)
