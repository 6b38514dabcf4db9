"""
One head through the pipeline
=============================

Pool, score, select, attend, scatter: each stage on a 32-token sequence,
printed so the shapes and the causal bookkeeping can be read off directly.
"""

import numpy as np

from lighthouse import (
    LighthouseConfig,
    attend_subsequence,
    build_pyramid,
    contributor_counts,
    gather,
    make_rng,
    scatter_back,
    score_entries,
    select_indices,
)

rng = make_rng(0)
cfg = LighthouseConfig(seq_len=32, head_dim=4, pool_factor=2, levels=3, budget=2)
q, k, v = (rng.standard_normal((32, 4)) for _ in range(3))

# %%
# The pyramid holds mean-pooled copies of q, k and v at widths 1, 2 and 4.
pyr = build_pyramid(q, k, v, cfg)
for ell, (ql, kl, vl) in enumerate(pyr.levels):
    print(f"level {ell}: window {cfg.pool_factor**ell:>2}, {ql.shape[0]:>2} entries")

# %%
# Scores are row norms, max-pooled upward. Nothing here is trained.
scores = score_entries(q, k, cfg)
print("coarsest combined scores:", np.round(scores.combined(2), 2))

# %%
# Descent keeps every coarsest entry, then follows the best parents down.
idx = select_indices(scores, cfg)
print(f"|I| = {len(idx)}: 32/4 + 2*2*2 = 16 from descent, the rest fill the uncovered prefix")
for ell, pos, end in zip(idx.level[:8], idx.pos[:8], idx.span_end[:8]):
    print(f"  level {ell} pos {pos:>2} covers up to token {end}")

# %%
# Attention runs over the gathered entries in causal order, then each
# result is written to the tokens after the span it summarizes.
g = gather(pyr, idx)
out = scatter_back(attend_subsequence(g), idx, cfg)
print("output shape", out.shape)
print("contributors per token:", contributor_counts(idx, 32))
