"""Stratified top-k and hierarchical selection of pyramid entries.

The selection is discrete: nothing here is differentiated. Ties are
always broken toward the smaller id / position so that selections are
reproducible bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .config import LighthouseConfig
from .errors import ConfigError, ContractError
from .scoring import ScoreSet

log = logging.getLogger(__name__)


class Source(IntEnum):
    """Why an entry is in the index."""

    COARSEST = 0
    DESCENT = 1
    QK = 2
    KQ = 3
    FORCED = 4


def _rank(scores: np.ndarray, ids: np.ndarray, axis: int = -1) -> np.ndarray:
    # descending score, then ascending id
    return np.lexsort((ids, -scores), axis=axis)


def chunked_topk(
    scores: np.ndarray,
    k: int,
    chunk_size: int = 2048,
    m: int = 128,
    ids: np.ndarray | None = None,
) -> np.ndarray:
    """Stratified top-k over a score stream.

    The stream is cut into consecutive chunks of ``chunk_size``; each chunk
    keeps its best ``min(m, len(chunk))`` items and the global best ``k`` of
    the surviving union are returned (the whole union if it is smaller).
    A chunk can therefore contribute at most ``m`` winners even when it
    holds more of the true top-k.

    Returns the selected ids in ascending order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if n == 0:
        raise ContractError("chunked_topk needs a non-empty stream")
    if k < 1 or m < 1 or m > chunk_size:
        raise ContractError(f"need k >= 1 and 1 <= m <= chunk_size (k={k}, m={m}, chunk={chunk_size})")
    ids = np.arange(n) if ids is None else np.asarray(ids)
    if ids.shape != scores.shape:
        raise ContractError("ids and scores must align")

    if m >= chunk_size or n <= m:
        survivors = np.arange(n)
    else:
        n_full = n // chunk_size
        kept = []
        if n_full:
            s2 = scores[: n_full * chunk_size].reshape(n_full, chunk_size)
            i2 = ids[: n_full * chunk_size].reshape(n_full, chunk_size)
            top = _rank(s2, i2, axis=1)[:, :m]
            kept.append((top + np.arange(n_full)[:, None] * chunk_size).reshape(-1))
        tail = n_full * chunk_size
        if tail < n:
            kept.append(_rank(scores[tail:], ids[tail:])[:m] + tail)
        survivors = np.concatenate(kept)
    order = _rank(scores[survivors], ids[survivors])[:k]
    return np.sort(ids[survivors[order]])


@dataclass
class SelectionIndex:
    """Causally ordered pyramid coordinates fed to the gather."""

    level: np.ndarray
    pos: np.ndarray
    source: np.ndarray
    pool_factor: int
    seq_len: int
    warnings: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return int(self.level.shape[0])

    @property
    def width(self) -> np.ndarray:
        return self.pool_factor ** self.level

    @property
    def span_start(self) -> np.ndarray:
        return self.pos * self.width

    @property
    def span_end(self) -> np.ndarray:
        return (self.pos + 1) * self.width - 1

    @property
    def causal_pos(self) -> np.ndarray:
        """Last base token an entry summarizes."""
        return self.span_end

    def coords(self) -> list[tuple[int, int]]:
        return list(zip(self.level.tolist(), self.pos.tolist()))

    def to_global(self, offset: int, seq_len: int) -> "SelectionIndex":
        """Re-express shard-local coordinates on the full sequence."""
        if offset % (self.pool_factor ** int(self.level.max(initial=0))):
            raise ConfigError("offset is not aligned with the coarsest window")
        pos = self.pos + offset // self.width
        return SelectionIndex(self.level.copy(), pos, self.source.copy(), self.pool_factor, seq_len, self.warnings)


def causal_order(
    entries,
    p: int,
    seq_len: int,
    sources=None,
    warnings: tuple[str, ...] = (),
) -> SelectionIndex:
    """Sort entries by last summarized token; ties put coarser levels first."""
    entries = np.asarray(entries, dtype=np.int64).reshape(-1, 2)
    level, pos = entries[:, 0], entries[:, 1]
    src = np.full(len(level), Source.DESCENT, dtype=np.int8) if sources is None else np.asarray(sources, np.int8)
    key = level * (seq_len + 1) + pos
    if np.unique(key).size != key.size:
        raise ContractError("duplicate (level, position) entries in selection")
    width = p**level
    span_start = pos * width
    causal_pos = span_start + width - 1
    order = np.lexsort((span_start, -level, causal_pos))
    return SelectionIndex(level[order], pos[order], src[order], p, seq_len, tuple(warnings))


def _pick(scores: np.ndarray, ids: np.ndarray, k: int, cfg: LighthouseConfig, what: str, warns: list[str]):
    want = k
    if want > len(ids):
        warns.append(f"{what}: budget {k} clamped to {len(ids)} candidates")
        want = len(ids)
    chosen = chunked_topk(scores, want, cfg.chunk_size, cfg.buffer_m, ids)
    if len(chosen) < want:
        warns.append(f"{what}: chunk buffers hold only {len(chosen)} of {want} requested")
    return chosen


def _descent(scores: ScoreSet, cfg: LighthouseConfig, warns: list[str]):
    p, top = cfg.pool_factor, cfg.levels - 1
    n_top = cfg.level_size(top)
    levels = [np.full(n_top, top)]
    positions = [np.arange(n_top)]
    sources = [np.full(n_top, Source.COARSEST)]
    if top == 0:
        return levels, positions, sources
    parents = _pick(scores.combined(top), np.arange(n_top), cfg.budget, cfg, f"level {top}", warns)
    for ell in range(top - 1, -1, -1):
        cand = (parents[:, None] * p + np.arange(p)).reshape(-1)
        levels.append(np.full(len(cand), ell))
        positions.append(cand)
        sources.append(np.full(len(cand), Source.DESCENT))
        if ell > 0:
            parents = _pick(scores.combined(ell)[cand], cand, cfg.budget, cfg, f"level {ell}", warns)
    return levels, positions, sources


def _flat_joint(scores: ScoreSet, cfg: LighthouseConfig, warns: list[str]):
    L = cfg.levels
    sizes = [cfg.level_size(ell) for ell in range(L)]
    item_level = np.concatenate([np.full(s, ell) for ell, s in enumerate(sizes)] * 2)
    item_pos = np.concatenate([np.arange(s) for s in sizes] * 2)
    half = sum(sizes)
    stream = np.concatenate(scores.qk + scores.kq)
    chosen = _pick(stream, np.arange(stream.size), cfg.budget, cfg, "flat-joint", warns)
    src = np.where(chosen < half, Source.QK, Source.KQ)
    # chosen is ascending, so a QK hit precedes the KQ hit of the same entry
    key = item_level[chosen] * (cfg.seq_len + 1) + item_pos[chosen]
    _, first = np.unique(key, return_index=True)
    lv, ps, sr = item_level[chosen][first], item_pos[chosen][first], src[first]
    top = L - 1
    have = set(ps[lv == top].tolist())
    rest = np.array([i for i in range(sizes[top]) if i not in have], dtype=np.int64)
    return (
        [lv, np.full(len(rest), top)],
        [ps, rest],
        [sr, np.full(len(rest), Source.COARSEST)],
    )


def _prefix_fill(levels, positions, cfg: LighthouseConfig):
    """Level-0 entries for prefix positions no selected write range reaches."""
    limit = cfg.coarsest_window - 1  # positions [0, limit) need help
    if limit <= 0:
        return np.zeros(0, dtype=np.int64)
    lv = np.concatenate(levels)
    ps = np.concatenate(positions)
    w = cfg.pool_factor**lv
    start = (ps + 1) * w - 1
    covered = np.zeros(limit, dtype=bool)
    for s, e in zip(start[start < limit], (start + w - 1)[start < limit]):
        covered[s : min(e, limit - 1) + 1] = True
    return np.flatnonzero(~covered)


def select_indices(scores: ScoreSet, cfg: LighthouseConfig) -> SelectionIndex:
    """Choose the pyramid entries to attend over, in causal order.

    The default hierarchical descent keeps the whole coarsest level, picks
    ``budget`` parents there by ``max(qk, kq)``, and at each finer level
    admits all ``p`` children of every parent before picking the next
    ``budget`` parents among them. Level-0 children are admitted but do
    not descend. Parents stay in the index, giving
    ``N / p**(L-1) + (L-1) * p * budget`` entries.

    ``flat-joint`` instead runs one stratified top-k over both score
    streams of every level (``budget`` counts scored items, so an entry hit
    through both streams uses two slots), then completes the coarsest level.

    With ``prefix_coverage`` the first ``p**(L-1) - 1`` base positions,
    which no coarse write range can reach, get level-0 entries if nothing
    selected covers them.
    """
    if scores.num_levels != cfg.levels or scores.qk[0].shape != (cfg.seq_len,):
        raise ContractError("score set does not match the configuration")
    warns: list[str] = []
    if cfg.selection == "hierarchical-descent":
        levels, positions, sources = _descent(scores, cfg, warns)
    else:
        levels, positions, sources = _flat_joint(scores, cfg, warns)
    if cfg.prefix_coverage:
        extra = _prefix_fill(levels, positions, cfg)
        levels.append(np.zeros(len(extra), dtype=np.int64))
        positions.append(extra)
        sources.append(np.full(len(extra), Source.FORCED))
    for w in warns:
        log.debug("selection: %s", w)
    entries = np.stack([np.concatenate(levels), np.concatenate(positions)], axis=1)
    return causal_order(entries, cfg.pool_factor, cfg.seq_len, np.concatenate(sources), tuple(warns))


def shard_local_select(scores: ScoreSet, cfg: LighthouseConfig, shards: int) -> list[SelectionIndex]:
    """Independent selection on each contiguous shard, in shard-local coordinates.

    Each shard runs the full selection with its own budget over the scores
    it owns; no information crosses shard boundaries.
    """
    if shards < 1 or cfg.seq_len % shards:
        raise ConfigError(f"{shards} shards do not divide seq_len {cfg.seq_len}")
    n_shard = cfg.seq_len // shards
    if n_shard % cfg.coarsest_window:
        raise ConfigError(
            f"shard length {n_shard} is not a multiple of the coarsest window {cfg.coarsest_window}"
        )
    shard_cfg = cfg.with_(seq_len=n_shard)
    return [
        select_indices(scores.restrict(r * n_shard, (r + 1) * n_shard, cfg.pool_factor), shard_cfg)
        for r in range(shards)
    ]
