"""Parameter-free entry scores: level-0 projection norms, max-pooled upward."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import LighthouseConfig
from .errors import ConfigError, ShapeError
from .numerics import row_norms


@dataclass
class ScoreSet:
    """Per-level query-side (``qk``) and key-side (``kq``) scores."""

    qk: list[np.ndarray]
    kq: list[np.ndarray]

    @property
    def num_levels(self) -> int:
        return len(self.qk)

    def combined(self, level: int) -> np.ndarray:
        """Entry relevance used for parent ranking: max of both streams."""
        return np.maximum(self.qk[level], self.kq[level])

    def restrict(self, start: int, stop: int, p: int) -> "ScoreSet":
        """Scores of the base-position slice ``[start, stop)`` (window aligned)."""
        qk, kq = [], []
        for ell in range(self.num_levels):
            w = p**ell
            qk.append(self.qk[ell][start // w : stop // w])
            kq.append(self.kq[ell][start // w : stop // w])
        return ScoreSet(qk, kq)


def base_scores(q: np.ndarray, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Level-0 scores: Euclidean norm of every query row and every key row."""
    if q.ndim != 2 or k.shape != q.shape:
        raise ShapeError(f"q and k must be equal-shaped 2-D arrays, got {q.shape}, {k.shape}")
    return row_norms(q), row_norms(k)


def window_max(s: np.ndarray, window: int) -> np.ndarray:
    if window == 1:
        return s
    return s.reshape(-1, window).max(axis=1)


def pooled_scores(base: tuple[np.ndarray, np.ndarray], cfg: LighthouseConfig) -> ScoreSet:
    s_qk, s_kq = base
    if s_qk.shape != (cfg.seq_len,) or s_kq.shape != (cfg.seq_len,):
        raise ShapeError(f"base scores must have length {cfg.seq_len}")
    p = cfg.pool_factor
    qk = [window_max(s_qk, p**ell) for ell in range(cfg.levels)]
    kq = [window_max(s_kq, p**ell) for ell in range(cfg.levels)]
    return ScoreSet(qk, kq)


SCORERS: dict[str, Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]] = {
    "projection-norm": base_scores,
}


def score_entries(
    q: np.ndarray,
    k: np.ndarray,
    cfg: LighthouseConfig,
    transform: Callable[[np.ndarray], np.ndarray] | None = None,
) -> ScoreSet:
    """Run the configured scorer on level-0 Q/K and lift it to all levels.

    ``transform`` is applied elementwise to the level-0 scores before
    pooling (used to probe invariance under monotone rescaling).
    """
    try:
        scorer = SCORERS[cfg.scorer]
    except KeyError:
        raise ConfigError(f"no scorer registered under {cfg.scorer!r}") from None
    s_qk, s_kq = scorer(q, k)
    if transform is not None:
        s_qk, s_kq = transform(s_qk), transform(s_kq)
    return pooled_scores((s_qk, s_kq), cfg)
