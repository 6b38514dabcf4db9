"""Closed-form sub-sequence size, per-stage operation counts, and timing sweeps.

Counts use the constants of this implementation (one multiply-add = 2
flops, one comparison or copy = 1 op) so they can be checked against
measurements instead of only against asymptotics.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .config import LighthouseConfig
from .errors import ConfigError
from .layer import AttentionParams, dense_backward, dense_forward, lighthouse_backward, lighthouse_forward
from .numerics import as_dtype, make_rng

STAGES = (
    "projections",
    "pyramid_pool",
    "scoring",
    "topk",
    "gather",
    "subseq_attention",
    "scatter_back",
)

# one line per stage, written into the sweep CSV header
STAGE_FORMULAS = {
    "projections": "8*N*d_model*d (q, k, v and the head's share of the output projection)",
    "pyramid_pool": "3*d*sum_{l>=1}(N + N/p^l) (window sums from level 0, then one divide per entry)",
    "scoring": "2*(2*N*d + N) + 2*sum_{l>=1} N (row norms, then window max per level)",
    "topk": "items ranked: N/p^(L-1) + (L-2)*p*k for descent, 2*sum_l N/p^l for flat-joint",
    "gather": "3*S*d",
    "subseq_attention": "4*S^2*d (logits plus weighted values)",
    "scatter_back": "L*N*d",
}


def subseq_size(seq_len: int, levels: int, pool_factor: int, budget: int) -> int:
    """Entries selected by hierarchical descent: N/p^(L-1) + (L-1) p k."""
    if levels < 1 or pool_factor < 1 or seq_len < 1:
        raise ConfigError("seq_len, levels and pool_factor must be positive")
    w = pool_factor ** (levels - 1)
    if seq_len % w:
        raise ConfigError(f"p^(L-1) = {w} does not divide N = {seq_len}")
    return seq_len // w + (levels - 1) * pool_factor * budget


def balanced_levels(total: int, pool_factor: int, budget: int) -> tuple[int, int]:
    """Level count that balances the coarsest level against the descended part.

    With ``L = log_p(T / k)`` the coarsest level holds ``T / p^(L-1) = p k``
    entries and ``S = p k L``. Returns ``(L, S)``.
    """
    if total < 1 or budget < 1 or pool_factor < 2:
        raise ConfigError("need T >= 1, k >= 1 and p >= 2")
    ratio = total / budget
    # exact integer power test; float logs misjudge large powers
    L, acc = 0, 1
    while acc < ratio:
        acc *= pool_factor
        L += 1
    if total % budget or acc != total // budget:
        lo = max(L - 1, 1)
        raise ConfigError(
            f"T/k = {ratio:g} is not a power of p = {pool_factor}; nearest valid levels are "
            f"L = {lo} (T = {budget * pool_factor ** lo}) and L = {lo + 1} (T = {budget * pool_factor ** (lo + 1)})"
        )
    if L < 1:
        raise ConfigError(f"T = k gives L = 0; need T > k (T = {total}, k = {budget})")
    s = pool_factor * budget * L
    if subseq_size(total, L, pool_factor, budget) != s:
        raise AssertionError("balanced size disagrees with subseq_size")
    return L, s


@dataclass
class CostBreakdown:
    """Operation counts per pipeline stage and optional measured seconds."""

    counts: dict[str, int]
    seconds: dict[str, float] = field(default_factory=dict)
    subseq: int = 0

    def __post_init__(self):
        for name, c in self.counts.items():
            if c < 0:
                raise ValueError(f"negative count for {name}")

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def attention(self) -> int:
        return self.counts["subseq_attention"]


def flop_table(cfg: LighthouseConfig, d_model: int) -> CostBreakdown:
    """Analytic per-head, per-layer counts for the Lighthouse pipeline.

    With ``levels == 1`` this is the dense layer: S = N and every
    selection stage costs nothing.
    """
    n, d, p, L, k = cfg.seq_len, cfg.head_dim, cfg.pool_factor, cfg.levels, cfg.budget
    sizes = [n // p**ell for ell in range(L)]
    if L == 1:
        s = n
        ranked = 0
        pool = score = gather = 0
        scatter = 0
    else:
        if cfg.selection == "hierarchical-descent":
            s = subseq_size(n, L, p, k)
            ranked = sizes[-1] + (L - 2) * p * k
        else:
            s = sizes[-1] + k  # upper bound: dedup and coarsest completion vary it
            ranked = 2 * sum(sizes)
        pool = 3 * d * sum(n + sizes[ell] for ell in range(1, L))
        score = 2 * (2 * n * d + n) + 2 * n * (L - 1)
        gather = 3 * s * d
        scatter = L * n * d
    counts = {
        "projections": 8 * n * d_model * d,
        "pyramid_pool": pool,
        "scoring": score,
        "topk": ranked,
        "gather": gather,
        "subseq_attention": 4 * s * s * d,
        "scatter_back": scatter,
    }
    return CostBreakdown(counts, subseq=s)


# ------------------------------------------------------------------ timing

SWEEP_COLUMNS = (
    "N",
    "mode",
    "S",
    "flops_total",
    "flops_attention",
    "time_fwd_ms_median",
    "time_fwdbwd_ms_median",
    "repetitions",
    "seed",
)


@dataclass
class SweepRow:
    N: int
    mode: str
    S: int
    flops_total: int
    flops_attention: int
    time_fwd_ms_median: float
    time_fwdbwd_ms_median: float
    repetitions: int
    seed: int

    def as_list(self):
        return [getattr(self, c) for c in SWEEP_COLUMNS]


def _median_ms(fn, reps: int) -> float:
    fn()  # warm-up, not recorded
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(times))


def sweep_config(template: LighthouseConfig, n: int, balanced: bool = True) -> LighthouseConfig:
    """Template re-targeted to length ``n``; optionally with balanced L."""
    if balanced:
        L, _ = balanced_levels(n, template.pool_factor, template.budget)
        return template.with_(seq_len=n, levels=L)
    return template.with_(seq_len=n)


def time_layer(
    cfg: LighthouseConfig, mode: str, d_model: int, reps: int, seed: int, precision: int = 64
) -> tuple[float, float]:
    """Median forward and forward+backward ms of a single-head layer."""
    dt = as_dtype(precision)
    rng = make_rng(seed)
    x = rng.standard_normal((cfg.seq_len, d_model)).astype(dt)
    params = AttentionParams.init(rng, d_model, 1, cfg.head_dim, dtype=dt)
    grad = rng.standard_normal((cfg.seq_len, d_model)).astype(dt)
    if mode == "dense":
        fwd = lambda: dense_forward(x, params)  # noqa: E731
        bwd = dense_backward
    elif mode == "lighthouse":
        fwd = lambda: lighthouse_forward(x, params, cfg)  # noqa: E731
        bwd = lighthouse_backward
    else:
        raise ConfigError(f"unknown mode {mode!r}")

    def both():
        _, tape = fwd()
        bwd(tape, grad)

    return _median_ms(fwd, reps), _median_ms(both, reps)


def time_dense_attention(n: int, head_dim: int, reps: int, seed: int = 0, precision: int = 64) -> float:
    """Median forward ms of causal SDPA alone, no projections."""
    from .attention import sdpa_reference

    dt = as_dtype(precision)
    rng = make_rng(seed)
    q, k, v = (rng.standard_normal((n, head_dim)).astype(dt) for _ in range(3))
    return _median_ms(lambda: sdpa_reference(q, k, v), reps)


def scaling_sweep(
    ns,
    template: LighthouseConfig,
    repetitions: int = 10,
    d_model: int | None = None,
    seed: int = 0,
    balanced: bool = True,
    modes=("dense", "lighthouse"),
    out=None,
    precision: int = 64,
) -> list[SweepRow]:
    """Dense vs Lighthouse timing and analytic counts for each N.

    Lengths run in ascending order, one mode after the other, never in
    parallel. ``balanced`` picks ``L = log_p(N / k)`` per N so the budget
    stays fixed while S grows only logarithmically.
    """
    d_model = d_model or template.head_dim
    rows = []
    for n in sorted(ns):
        cfg = sweep_config(template, n, balanced)
        for mode in modes:
            mcfg = cfg if mode == "lighthouse" else cfg.with_(levels=1, pool_factor=1)
            cost = flop_table(mcfg, d_model)
            t_f, t_fb = time_layer(cfg, mode, d_model, repetitions, seed, precision)
            rows.append(SweepRow(n, mode, cost.subseq, cost.total, cost.attention, t_f, t_fb, repetitions, seed))
    if out is not None:
        write_sweep_csv(rows, out, template, d_model, balanced)
    return rows


def write_sweep_csv(rows, path, template: LighthouseConfig, d_model: int, balanced: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(
            f"# pool_factor={template.pool_factor} budget={template.budget} head_dim={template.head_dim} "
            f"d_model={d_model} levels={'balanced' if balanced else template.levels} "
            f"selection={template.selection}\n"
        )
        for name in STAGES:
            fh.write(f"# {name}: {STAGE_FORMULAS[name]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow(r.as_list())


def loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


def top_decade(ns) -> list[int]:
    """Lengths within a factor of ten of the largest."""
    ns = sorted(ns)
    return [n for n in ns if n * 10 >= ns[-1]]


def stage_seconds(cfg: LighthouseConfig, d_model: int, seed: int = 0, reps: int = 3) -> CostBreakdown:
    """Analytic counts plus median measured seconds for each forward stage."""
    from .attention import attend_subsequence, gather
    from .pyramid import build_pyramid
    from .scatter import scatter_back
    from .scoring import score_entries
    from .selection import select_indices

    rng = make_rng(seed)
    x = rng.standard_normal((cfg.seq_len, d_model))
    params = AttentionParams.init(rng, d_model, 1, cfg.head_dim)
    cost = flop_table(cfg, d_model)
    state = {}
    steps = {
        "projections": lambda: state.update(q=x @ params.wq[0], k=x @ params.wk[0], v=x @ params.wv[0]),
        "pyramid_pool": lambda: state.update(pyr=build_pyramid(state["q"], state["k"], state["v"], cfg)),
        "scoring": lambda: state.update(scores=score_entries(state["q"], state["k"], cfg)),
        "topk": lambda: state.update(idx=select_indices(state["scores"], cfg)),
        "gather": lambda: state.update(g=gather(state["pyr"], state["idx"])),
        "subseq_attention": lambda: state.update(o=attend_subsequence(state["g"])),
        "scatter_back": lambda: state.update(out=scatter_back(state["o"], state["idx"], cfg)),
    }
    times = {name: [] for name in STAGES}
    for _ in range(reps):
        for name in STAGES:
            t0 = time.perf_counter()
            steps[name]()
            times[name].append(time.perf_counter() - t0)
    cost.seconds = {name: float(np.median(t)) for name, t in times.items()}
    return cost


__all__ = [
    "STAGES",
    "STAGE_FORMULAS",
    "SWEEP_COLUMNS",
    "CostBreakdown",
    "SweepRow",
    "balanced_levels",
    "flop_table",
    "loglog_slope",
    "scaling_sweep",
    "stage_seconds",
    "subseq_size",
    "sweep_config",
    "time_layer",
    "top_decade",
    "write_sweep_csv",
]
