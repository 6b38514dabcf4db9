"""Shifted scatter-back from the gathered sub-sequence to all N positions.

An entry at level l, position i summarizes tokens ``[i p^l, (i+1) p^l - 1]``
and writes its output to ``[(i+1) p^l - 1, (i+2) p^l - 2]``: the range
starts at the last summarized token, so no position receives a summary of
its own future. Ranges past the end of the sequence are clipped.
"""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

from .config import LighthouseConfig
from .errors import ContractError
from .selection import SelectionIndex

log = logging.getLogger(__name__)


class WriteRange(NamedTuple):
    start: int
    end: int


def range_bounds(idx: SelectionIndex, seq_len: int) -> tuple[np.ndarray, np.ndarray]:
    w = idx.width
    start = (idx.pos + 1) * w - 1
    end = np.minimum(start + w - 1, seq_len - 1)
    return start, end


def scatter_ranges(idx: SelectionIndex, cfg: LighthouseConfig) -> list[WriteRange]:
    start, end = range_bounds(idx, cfg.seq_len)
    return [WriteRange(int(s), int(e)) for s, e in zip(start, end)]


def contributor_counts(idx: SelectionIndex, seq_len: int) -> np.ndarray:
    """How many selected entries write to each base position."""
    start, end = range_bounds(idx, seq_len)
    diff = np.zeros(seq_len + 1, dtype=np.int64)
    ok = start < seq_len
    np.add.at(diff, start[ok], 1)
    np.add.at(diff, end[ok] + 1, -1)
    return np.cumsum(diff[:-1])


def _level_spread(rows: np.ndarray, pos: np.ndarray, n_level: int, width: int, seq_len: int, d: int, dtype):
    """N x d buffer holding one level's outputs at their shifted ranges."""
    win = np.zeros((n_level, d), dtype=dtype)
    win[pos] = rows
    spread = np.repeat(win, width, axis=0)
    out = np.zeros((seq_len, d), dtype=dtype)
    out[width - 1 :] = spread[: seq_len - width + 1]
    return out


def scatter_back(o_sub: np.ndarray, idx: SelectionIndex, cfg: LighthouseConfig) -> np.ndarray:
    """Sum each entry's output row over its write range.

    Levels are accumulated coarsest first; within a level ranges are
    disjoint, so every position sees a fixed summation order.
    """
    if o_sub.shape[0] != len(idx):
        raise ContractError(f"{o_sub.shape[0]} output rows for {len(idx)} selected entries")
    n, d = cfg.seq_len, o_sub.shape[1]
    out = None
    for ell in range(cfg.levels - 1, -1, -1):
        rows = np.flatnonzero(idx.level == ell)
        if rows.size == 0:
            continue
        part = _level_spread(o_sub[rows], idx.pos[rows], cfg.level_size(ell), cfg.pool_factor**ell, n, d, o_sub.dtype)
        if out is None:
            out = part
        else:
            out += part
    if out is None:
        out = np.zeros((n, d), dtype=o_sub.dtype)
    holes = int((contributor_counts(idx, n) == 0).sum())
    if holes:
        log.warning("scatter_back: %d of %d positions have no contributor", holes, n)
    return out


def scatter_back_grad(grad_out: np.ndarray, idx: SelectionIndex, cfg: LighthouseConfig) -> np.ndarray:
    """Adjoint of :func:`scatter_back`: each entry sums the gradient over its range."""
    n, d = grad_out.shape
    grad_sub = np.empty((len(idx), d), dtype=grad_out.dtype)
    for ell in range(cfg.levels):
        rows = np.flatnonzero(idx.level == ell)
        if rows.size == 0:
            continue
        w = cfg.pool_factor**ell
        n_level = cfg.level_size(ell)
        shifted = np.zeros((n_level * w, d), dtype=grad_out.dtype)
        shifted[: n - w + 1] = grad_out[w - 1 :]
        if w == 1:
            sums = shifted
        else:
            blocks = shifted.reshape(n_level, w, d)
            sums = blocks[:, 0].copy()
            for j in range(1, w):
                sums += blocks[:, j]
        grad_sub[rows] = sums[idx.pos[rows]]
    return grad_sub
