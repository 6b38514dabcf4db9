from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ConfigError

SELECTION_VARIANTS = ("hierarchical-descent", "flat-joint")
SCORERS = ("projection-norm",)


@dataclass(frozen=True)
class LighthouseConfig:
    """Shape and selection parameters for one Lighthouse attention head.

    ``budget`` is the number of parents kept per level (descent) or the
    number of scored items kept overall (flat-joint).
    """

    seq_len: int
    head_dim: int = 16
    pool_factor: int = 2
    levels: int = 3
    budget: int = 16
    chunk_size: int = 2048
    buffer_m: int = 128
    selection: str = "hierarchical-descent"
    scorer: str = "projection-norm"
    prefix_coverage: bool = True

    def __post_init__(self):
        n, p, L = self.seq_len, self.pool_factor, self.levels
        if n < 1 or self.head_dim < 1:
            raise ConfigError(f"seq_len and head_dim must be positive (got {n}, {self.head_dim})")
        if L < 1:
            raise ConfigError(f"levels must be >= 1, got {L}")
        if p < 1 or (p == 1 and L > 1):
            raise ConfigError(f"pool_factor must be >= 2 (1 only with levels=1), got {p}")
        if n % p ** (L - 1):
            raise ConfigError(f"p^(L-1) = {p ** (L - 1)} does not divide seq_len = {n}")
        if self.budget < 1:
            raise ConfigError(f"budget must be >= 1, got {self.budget}")
        if L > 1 and self.budget > n // p ** (L - 1):
            raise ConfigError(
                f"budget {self.budget} exceeds the {n // p ** (L - 1)} entries of the coarsest level"
            )
        if not 1 <= self.buffer_m <= self.chunk_size:
            raise ConfigError(f"need 1 <= buffer_m <= chunk_size, got {self.buffer_m}, {self.chunk_size}")
        if self.selection not in SELECTION_VARIANTS:
            raise ConfigError(f"unknown selection variant {self.selection!r}; choose from {SELECTION_VARIANTS}")
        if self.scorer not in SCORERS:
            raise ConfigError(f"unknown scorer {self.scorer!r}; choose from {SCORERS}")

    @property
    def coarsest_window(self) -> int:
        return self.pool_factor ** (self.levels - 1)

    def level_size(self, level: int) -> int:
        return self.seq_len // self.pool_factor**level

    def with_(self, **changes) -> "LighthouseConfig":
        return replace(self, **changes)
