"""Gather of selected pyramid entries and softmax attention over them.

:func:`sdpa_reference` is the single dense attention routine in the
package: the dense baseline and the gathered Lighthouse sub-sequence call
the very same function. Queries are processed in row blocks so the
logits never exceed ``block x N`` in memory; causal blocks only read keys
up to their last row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .numerics import matmul, softmax_rows
from .pyramid import Pyramid
from .selection import SelectionIndex

QUERY_BLOCK = 1024


@dataclass
class GatheredSeq:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    coords: SelectionIndex

    def __len__(self) -> int:
        return self.q.shape[0]


def gather(pyr: Pyramid, idx: SelectionIndex) -> GatheredSeq:
    """Copy the selected (Q, K, V) rows into contiguous S x d arrays."""
    if idx.level.size and (idx.level.max() >= pyr.num_levels or idx.level.min() < 0):
        raise IndexError("selection refers to a level the pyramid does not have")
    d_qk = pyr.levels[0][0].shape[1]
    d_v = pyr.levels[0][2].shape[1]
    dtype = pyr.levels[0][0].dtype
    out = [np.empty((len(idx), d), dtype=dtype) for d in (d_qk, d_qk, d_v)]
    for ell in np.unique(idx.level):
        rows = np.flatnonzero(idx.level == ell)
        pos = idx.pos[rows]
        n_ell = pyr.levels[ell][0].shape[0]
        if pos.min() < 0 or pos.max() >= n_ell:
            raise IndexError(f"position out of range at level {ell} (size {n_ell})")
        for s in range(3):
            out[s][rows] = pyr.levels[ell][s][pos]
    return GatheredSeq(out[0], out[1], out[2], idx)


def gather_backward(gq: np.ndarray, gk: np.ndarray, gv: np.ndarray, idx: SelectionIndex, level_sizes):
    """Adjoint of :func:`gather`: route row gradients to their pyramid entries.

    Entries are unique within a level, so the scatter-add is a plain write
    into zero buffers. Returns per-level ``(dQ, dK, dV)``.
    """
    grads = []
    for ell, n_ell in enumerate(level_sizes):
        rows = np.flatnonzero(idx.level == ell)
        pos = idx.pos[rows]
        level_grads = []
        for g in (gq, gk, gv):
            buf = np.zeros((n_ell, g.shape[1]), dtype=g.dtype)
            buf[pos] = g[rows]
            level_grads.append(buf)
        grads.append(tuple(level_grads))
    return grads


def _check_qkv(q, k, v):
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeError(f"q, k, v must be 2-D, got {q.shape}, {k.shape}, {v.shape}")
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ShapeError(f"incompatible q/k/v shapes {q.shape}, {k.shape}, {v.shape}")


def _block_probs(q, k, r0, r1, causal, scale):
    kend = r1 if causal else k.shape[0]
    logits = matmul(q[r0:r1], k[:kend], transpose_b=True) * scale
    mask = np.arange(kend)[None, :] <= np.arange(r0, r1)[:, None] if causal else None
    return softmax_rows(logits, mask), kend


def sdpa_reference(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, causal: bool = True, block: int = QUERY_BLOCK
) -> np.ndarray:
    """softmax(Q K^T / sqrt(d) + M) V with M the lower-triangular mask."""
    _check_qkv(q, k, v)
    if causal and q.shape[0] != k.shape[0]:
        raise ShapeError("causal attention needs as many queries as keys")
    n = q.shape[0]
    scale = 1.0 / math.sqrt(q.shape[1])
    out = np.empty((n, v.shape[1]), dtype=np.result_type(q, v))
    for r0 in range(0, n, block):
        r1 = min(n, r0 + block)
        probs, kend = _block_probs(q, k, r0, r1, causal, scale)
        out[r0:r1] = matmul(probs, v[:kend])
    return out


def sdpa_backward(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    out: np.ndarray,
    grad_out: np.ndarray,
    causal: bool = True,
    block: int = QUERY_BLOCK,
):
    """Gradients of :func:`sdpa_reference` w.r.t. q, k, v.

    Probabilities are recomputed per query block; key/value gradients are
    accumulated over blocks in ascending order.
    """
    n = q.shape[0]
    scale = 1.0 / math.sqrt(q.shape[1])
    dq = np.empty_like(q)
    dk = np.zeros_like(k)
    dv = np.zeros_like(v)
    delta = (grad_out * out).sum(axis=1)
    for r0 in range(0, n, block):
        r1 = min(n, r0 + block)
        probs, kend = _block_probs(q, k, r0, r1, causal, scale)
        go = grad_out[r0:r1]
        dv[:kend] += matmul(probs.T, go)
        dp = matmul(go, v[:kend], transpose_b=True)
        ds = probs * (dp - delta[r0:r1, None])
        dq[r0:r1] = matmul(ds, k[:kend]) * scale
        dk[:kend] += matmul(ds.T, q[r0:r1]) * scale
    return dq, dk, dv


def attend_subsequence(g: GatheredSeq) -> np.ndarray:
    """Causal attention over the gathered sequence.

    The gather is sorted by last summarized token, so the coordinate-derived
    mask is exactly the lower-triangular one and the dense routine is used
    unchanged.
    """
    return sdpa_reference(g.q, g.k, g.v, causal=True)


def ring_attend(q: np.ndarray, k: np.ndarray, v: np.ndarray, bounds: list[int]) -> np.ndarray:
    """Causal attention with keys/values visited block by block in ring order.

    ``bounds`` are the block edges (``[0, b1, ..., S]``). Each query keeps a
    running max, normalizer and weighted sum (online softmax). A single
    block falls through to :func:`sdpa_reference`.
    """
    _check_qkv(q, k, v)
    s = q.shape[0]
    if len(bounds) <= 2:
        return sdpa_reference(q, k, v, causal=True)
    scale = 1.0 / math.sqrt(q.shape[1])
    row = np.arange(s)[:, None]
    run_max = np.full((s, 1), -np.inf)
    run_sum = np.zeros((s, 1))
    acc = np.zeros((s, v.shape[1]), dtype=np.result_type(q, v))
    for b0, b1 in zip(bounds[:-1], bounds[1:]):
        logits = matmul(q, k[b0:b1], transpose_b=True) * scale
        allowed = np.arange(b0, b1)[None, :] <= row
        logits = np.where(allowed, logits, -np.inf)
        new_max = np.maximum(run_max, logits.max(axis=1, keepdims=True))
        # rows with nothing visible yet keep -inf and contribute nothing
        safe = np.where(np.isfinite(new_max), new_max, 0.0)
        w = np.exp(logits - safe)
        corr = np.exp(np.where(np.isfinite(run_max), run_max - safe, -np.inf))
        run_sum = run_sum * corr + w.sum(axis=1, keepdims=True)
        acc = acc * corr + matmul(w, v[b0:b1])
        run_max = new_max
    return acc / run_sum


def blockwise_attend(g: GatheredSeq, block: int) -> np.ndarray:
    """Ring-order streaming equivalent of :func:`attend_subsequence`."""
    if block < 1:
        raise ValueError("block must be >= 1")
    s = len(g)
    if block >= s:
        return attend_subsequence(g)
    bounds = list(range(0, s, block)) + [s]
    return ring_attend(g.q, g.k, g.v, bounds)
