"""
Dense vs Lighthouse as N grows
==============================

Times one attention head both ways and prints the analytic cost table. The
levels are rebalanced at every length so the budget stays fixed.
"""

import sys

from lighthouse import LighthouseConfig
from lighthouse.complexity import flop_table, loglog_slope, scaling_sweep, sweep_config

top = int(sys.argv[1]) if len(sys.argv) > 1 else 8192
ns = [n for n in (1024, 2048, 4096, 8192, 16384) if n <= top]
template = LighthouseConfig(ns[0], 64, pool_factor=2, levels=1, budget=64)
rows = scaling_sweep(ns, template, repetitions=3, d_model=512)

for r in rows:
    print(f"N={r.N:>6} {r.mode:<10} S={r.S:>6} fwd {r.time_fwd_ms_median:9.1f} ms")

dense = [r.time_fwd_ms_median for r in rows if r.mode == "dense"]
light = [r.time_fwd_ms_median for r in rows if r.mode == "lighthouse"]
print("dense time slope:", round(loglog_slope(ns, dense), 2))
print("speedup:", [round(d / l, 1) for d, l in zip(dense, light)])

# %%
# Where the Lighthouse flops go at the largest length.
cost = flop_table(sweep_config(template, ns[-1]), 512)
for stage, count in cost.counts.items():
    print(f"{stage:<18}{count:>14,}")
