"""
Budgets, coverage and stratified top-k
======================================

How many entries the descent keeps, who writes to each token, and the one
case where the chunked top-k gives up exactness.
"""

import numpy as np

from lighthouse import LighthouseConfig, chunked_topk, contributor_counts, make_rng, pooled_scores, select_indices
from lighthouse.complexity import balanced_levels, subseq_size

rng = make_rng(1)

# %%
# The index size is exact: N / p^(L-1) coarse entries plus p*k per finer level.
for n, L, p, k in [(256, 3, 2, 16), (4096, 4, 4, 16), (10**6, 4, 4, 4096)]:
    print(f"N={n:>8} L={L} p={p} k={k:>4}  S={subseq_size(n, L, p, k)}")

# %%
# Picking L so the coarsest level has p*k entries makes S = p*k*L.
for t in (2**12, 2**16, 2**20):
    L, s = balanced_levels(t, 2, 64)
    print(f"T={t:>8}: L={L:>2}, S={s}")

# %%
# With prefix coverage every token has between 1 and L writers.
cfg = LighthouseConfig(256, 1, pool_factor=2, levels=5, budget=4)
idx = select_indices(pooled_scores((rng.random(256), rng.random(256)), cfg), cfg)
counts = contributor_counts(idx, 256)
print("writers per token: min", counts.min(), "max", counts.max(), "histogram", np.bincount(counts))

# %%
# Chunked top-k matches the exact answer unless one chunk holds more than
# m winners. Here the first chunk holds all three.
stream = np.array([9, 8, 7, 6, 1, 2, 3, 4], dtype=float)
print("exact  :", sorted(stream[np.argsort(-stream)[:3]].tolist(), reverse=True))
print("chunked:", sorted(stream[chunked_topk(stream, 3, chunk_size=4, m=2)].tolist(), reverse=True))
