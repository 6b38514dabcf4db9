"""Multi-head Lighthouse attention layer, the dense baseline layer, and
their hand-written backward passes.

Gradients treat the selection as a constant: indices and scores carry no
gradient and there is no straight-through path. Passing ``selections``
to :func:`lighthouse_forward` freezes the index per head, which is how the
finite-difference checks evaluate the perturbed pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .attention import GatheredSeq, attend_subsequence, gather, gather_backward, sdpa_backward, sdpa_reference
from .config import LighthouseConfig
from .errors import ContractError, ShapeError
from .numerics import check_finite, matmul
from .pyramid import Pyramid, build_pyramid, pyramid_backward
from .scatter import scatter_back, scatter_back_grad
from .scoring import score_entries
from .selection import SelectionIndex, select_indices


@dataclass
class AttentionParams:
    """Per-head projections ``wq, wk, wv`` of shape (H, d_model, d) and a
    shared output projection ``wo`` of shape (H * d, d_model)."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    version: int = 0

    @classmethod
    def init(cls, rng: np.random.Generator, d_model: int, heads: int, head_dim: int, dtype=np.float64):
        s_in = 1.0 / math.sqrt(d_model)
        s_out = 1.0 / math.sqrt(heads * head_dim)
        return cls(
            wq=(rng.standard_normal((heads, d_model, head_dim)) * s_in).astype(dtype),
            wk=(rng.standard_normal((heads, d_model, head_dim)) * s_in).astype(dtype),
            wv=(rng.standard_normal((heads, d_model, head_dim)) * s_in).astype(dtype),
            wo=(rng.standard_normal((heads * head_dim, d_model)) * s_out).astype(dtype),
        )

    @property
    def heads(self) -> int:
        return self.wq.shape[0]

    @property
    def head_dim(self) -> int:
        return self.wq.shape[2]

    @property
    def d_model(self) -> int:
        return self.wq.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"wq": self.wq, "wk": self.wk, "wv": self.wv, "wo": self.wo}

    def zeros_like(self) -> "AttentionParams":
        return AttentionParams(*(np.zeros_like(a) for a in self.arrays().values()))


# ---------------------------------------------------------------- one head


@dataclass
class HeadState:
    cfg: LighthouseConfig
    pyramid: Pyramid
    index: SelectionIndex
    gathered: GatheredSeq
    o_sub: np.ndarray


def lighthouse_head(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    cfg: LighthouseConfig,
    index: SelectionIndex | None = None,
    score_transform: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[np.ndarray, HeadState]:
    """Pyramid -> score -> select -> gather -> attend -> scatter for one head."""
    pyr = build_pyramid(q, k, v, cfg)
    if index is None:
        index = select_indices(score_entries(q, k, cfg, score_transform), cfg)
    g = gather(pyr, index)
    o_sub = attend_subsequence(g)
    out = scatter_back(o_sub, index, cfg)
    return out, HeadState(cfg, pyr, index, g, o_sub)


def lighthouse_head_backward(state: HeadState, grad_out: np.ndarray):
    """(dQ, dK, dV) at full resolution for one head."""
    cfg, g = state.cfg, state.gathered
    d_sub = scatter_back_grad(grad_out, state.index, cfg)
    dq, dk, dv = sdpa_backward(g.q, g.k, g.v, state.o_sub, d_sub, causal=True)
    sizes = [cfg.level_size(ell) for ell in range(cfg.levels)]
    per_level = gather_backward(dq, dk, dv, state.index, sizes)
    return pyramid_backward(per_level, cfg.pool_factor)


# ---------------------------------------------------------------- layers


@dataclass
class Tape:
    x: np.ndarray
    params: AttentionParams
    version: int
    q: list[np.ndarray]
    k: list[np.ndarray]
    v: list[np.ndarray]
    heads_out: np.ndarray
    head_states: list[HeadState] | None = None
    head_outs: list[np.ndarray] = field(default_factory=list)
    used: bool = False

    @property
    def selections(self) -> list[SelectionIndex] | None:
        if self.head_states is None:
            return None
        return [s.index for s in self.head_states]


def _project(x: np.ndarray, params: AttentionParams):
    if x.ndim != 2 or x.shape[1] != params.d_model:
        raise ShapeError(f"x must be (N, {params.d_model}), got {x.shape}")
    qs = [matmul(x, params.wq[h]) for h in range(params.heads)]
    ks = [matmul(x, params.wk[h]) for h in range(params.heads)]
    vs = [matmul(x, params.wv[h]) for h in range(params.heads)]
    return qs, ks, vs


def _finish(x, params, qs, ks, vs, head_outs, states):
    heads_out = np.concatenate(head_outs, axis=1)
    out = matmul(heads_out, params.wo)
    check_finite(out, "attention layer output")
    return out, Tape(x, params, params.version, qs, ks, vs, heads_out, states, head_outs)


def dense_forward(x: np.ndarray, params: AttentionParams):
    """Standard multi-head causal attention."""
    qs, ks, vs = _project(x, params)
    head_outs = [sdpa_reference(qs[h], ks[h], vs[h], causal=True) for h in range(params.heads)]
    return _finish(x, params, qs, ks, vs, head_outs, None)


def lighthouse_forward(
    x: np.ndarray,
    params: AttentionParams,
    cfg: LighthouseConfig,
    selections: Sequence[SelectionIndex] | None = None,
    score_transform: Callable[[np.ndarray], np.ndarray] | None = None,
):
    """Lighthouse multi-head attention; selection is computed per head.

    Returns ``(output, tape)``. ``tape.selections`` holds the index used by
    every head and can be fed back in as ``selections`` to freeze them.
    """
    if cfg.seq_len != x.shape[0] or cfg.head_dim != params.head_dim:
        raise ShapeError(f"config (N={cfg.seq_len}, d={cfg.head_dim}) does not match x {x.shape} / params")
    if selections is not None and len(selections) != params.heads:
        raise ContractError(f"need one frozen selection per head ({params.heads})")
    qs, ks, vs = _project(x, params)
    head_outs, states = [], []
    for h in range(params.heads):
        idx = None if selections is None else selections[h]
        o, st = lighthouse_head(qs[h], ks[h], vs[h], cfg, idx, score_transform)
        head_outs.append(o)
        states.append(st)
    return _finish(x, params, qs, ks, vs, head_outs, states)


def _backward(tape: Tape, grad_out: np.ndarray, head_grad):
    if tape.used:
        raise ContractError("tape already consumed by a backward pass")
    if tape.version != tape.params.version:
        raise ContractError("parameters changed since this tape was recorded")
    if grad_out.shape != (tape.x.shape[0], tape.params.d_model):
        raise ShapeError(f"grad_output shape {grad_out.shape} does not match the forward output")
    tape.used = True
    params, x = tape.params, tape.x
    d = params.head_dim
    grads = AttentionParams(
        np.empty_like(params.wq), np.empty_like(params.wk), np.empty_like(params.wv),
        matmul(tape.heads_out.T, grad_out),
    )
    g_heads = matmul(grad_out, params.wo, transpose_b=True)
    grad_x = None
    for h in range(params.heads):
        dq, dk, dv = head_grad(h, np.ascontiguousarray(g_heads[:, h * d : (h + 1) * d]))
        grads.wq[h] = matmul(x.T, dq)
        grads.wk[h] = matmul(x.T, dk)
        grads.wv[h] = matmul(x.T, dv)
        gx = matmul(dq, params.wq[h], transpose_b=True)
        gx += matmul(dk, params.wk[h], transpose_b=True)
        gx += matmul(dv, params.wv[h], transpose_b=True)
        grad_x = gx if grad_x is None else grad_x + gx
    return grad_x, grads


def dense_backward(tape: Tape, grad_out: np.ndarray):
    def head_grad(h, g):
        return sdpa_backward(tape.q[h], tape.k[h], tape.v[h], tape.head_outs[h], g, causal=True)

    return _backward(tape, grad_out, head_grad)


def lighthouse_backward(tape: Tape, grad_out: np.ndarray):
    """Returns ``(grad_x, grad_params)`` with the selection held fixed."""
    if tape.head_states is None:
        raise ContractError("tape was recorded by the dense layer")

    def head_grad(h, g):
        return lighthouse_head_backward(tape.head_states[h], g)

    return _backward(tape, grad_out, head_grad)
