"""Symmetric mean-pooling pyramid over Q, K and V."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import LighthouseConfig
from .errors import ShapeError


def window_bounds(level: int, i: int, p: int, seq_len: int | None = None) -> tuple[int, int]:
    """Inclusive base-position range summarized by entry ``i`` of ``level``."""
    w = p**level
    if i < 0 or (seq_len is not None and i >= seq_len // w):
        raise IndexError(f"entry {i} out of range at level {level}")
    return i * w, (i + 1) * w - 1


def pool_mean(x: np.ndarray, window: int) -> np.ndarray:
    """Mean over consecutive non-overlapping windows of rows.

    Window members are summed strictly in position order, so the result is
    bitwise equal to a per-window loop.
    """
    if window == 1:
        return x
    n, d = x.shape
    if n % window:
        raise ShapeError(f"{n} rows do not split into windows of {window}")
    xr = x.reshape(n // window, window, d)
    sums = xr[:, 0].copy()
    for j in range(1, window):
        sums += xr[:, j]
    return sums / window


def pool_mean_backward(grad: np.ndarray, window: int) -> np.ndarray:
    """Adjoint of :func:`pool_mean`: each member receives grad / window."""
    if window == 1:
        return grad
    return np.repeat(grad / window, window, axis=0)


@dataclass
class Pyramid:
    """Per-level ``(Q, K, V)`` triples; level 0 aliases the inputs."""

    levels: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
    pool_factor: int

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def stream(self, which: int) -> list[np.ndarray]:
        """All levels of one stream (0 = Q, 1 = K, 2 = V)."""
        return [lvl[which] for lvl in self.levels]


def _check_inputs(q, k, v, cfg: LighthouseConfig):
    for name, a in (("q", q), ("k", k), ("v", v)):
        if a.ndim != 2 or a.shape[0] != cfg.seq_len:
            raise ShapeError(f"{name} must be ({cfg.seq_len}, d), got {a.shape}")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"q and k feature dims differ: {q.shape} vs {k.shape}")


def build_pyramid(q: np.ndarray, k: np.ndarray, v: np.ndarray, cfg: LighthouseConfig) -> Pyramid:
    """Mean-pool Q, K, V in lockstep into ``cfg.levels`` levels.

    Every coarse entry is pooled straight from level 0 over its
    ``p**level`` window, which keeps it equal to the definitional mean.
    """
    _check_inputs(q, k, v, cfg)
    p = cfg.pool_factor
    levels = [(q, k, v)]
    for ell in range(1, cfg.levels):
        w = p**ell
        levels.append((pool_mean(q, w), pool_mean(k, w), pool_mean(v, w)))
    return Pyramid(levels, p)


def pyramid_backward(grads: list[tuple[np.ndarray, np.ndarray, np.ndarray]], p: int):
    """Fold per-level (dQ, dK, dV) gradients back onto level 0."""
    gq, gk, gv = grads[0]
    gq, gk, gv = gq.copy(), gk.copy(), gv.copy()
    for ell in range(1, len(grads)):
        w = p**ell
        dq, dk, dv = grads[ell]
        gq += pool_mean_backward(dq, w)
        gk += pool_mean_backward(dk, w)
        gv += pool_mean_backward(dv, w)
    return gq, gk, gv
