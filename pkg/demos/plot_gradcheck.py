"""
Checking the backward pass
==========================

With the selection frozen the layer is a smooth function, so central
differences must agree with the analytic gradient. Changing the scores by
any increasing map leaves everything bitwise identical.
"""

import numpy as np

from lighthouse import AttentionParams, LighthouseConfig, finite_diff_grad, lighthouse_backward, lighthouse_forward, make_rng

rng = make_rng(2)
x = rng.standard_normal((16, 4))
params = AttentionParams.init(rng, 4, 2, 3)
cfg = LighthouseConfig(16, 3, pool_factor=2, levels=3, budget=2)
G = rng.standard_normal((16, 4))

out, tape = lighthouse_forward(x, params, cfg)
gx, gp = lighthouse_backward(tape, G)
frozen = tape.selections


def loss(z):
    return float((lighthouse_forward(z, params, cfg, frozen)[0] * G).sum())


fd = finite_diff_grad(loss, x, 1e-5)
print("relative error dL/dx:", np.linalg.norm(gx - fd) / np.linalg.norm(fd))

# %%
# Scores only pick entries; they never enter the arithmetic.
out2, tape2 = lighthouse_forward(x, params, cfg, score_transform=lambda s: np.exp(s) + s**3)
print("same output:", np.array_equal(out, out2))
print("same gradient:", np.array_equal(gx, lighthouse_backward(tape2, G)[0]))
