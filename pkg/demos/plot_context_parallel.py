"""
Sharding the sequence
=====================

Each shard builds its own pyramid and picks its own entries. Nothing about
a shard depends on the others, so a ring of workers never needs to swap
keys before selection.
"""

import numpy as np

from lighthouse import LighthouseConfig, build_pyramid, make_rng, score_entries
from lighthouse.context import assemble, shard_forward

rng = make_rng(3)
cfg = LighthouseConfig(64, 4, pool_factor=2, levels=3, budget=2)
q, k, v = (rng.standard_normal((64, 4)) for _ in range(3))
pyr, scores = build_pyramid(q, k, v, cfg), score_entries(q, k, cfg)

for shards in (1, 2, 4):
    res = shard_forward(q, k, v, cfg, shards, ring_block=3)
    local = all(
        np.array_equal(r.pyramid.levels[1][0], pyr.levels[1][0][r.offset // 2 : (r.offset + 64 // shards) // 2])
        for r in res
    )
    sizes = [len(r.index) for r in res]
    print(f"W={shards}: pyramids match the global slice: {local}; entries per shard {sizes}")

# %%
# One shard is the ordinary single-device run.
whole = assemble(shard_forward(q, k, v, cfg, 1))
print("W=1 output shape", whole.shape)
