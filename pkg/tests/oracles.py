"""Slow, obviously-correct reference implementations used only by tests.

Each one is written from the definitions with plain loops and shares no
code with the package beyond array containers.
"""

import math

import numpy as np


def matmul_loops(a, b):
    n, inner = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(inner):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def window_mean_loops(x, window):
    n, d = x.shape
    out = np.zeros((n // window, d))
    for i in range(n // window):
        acc = np.zeros(d)
        for r in range(i * window, (i + 1) * window):
            acc = acc + x[r]
        out[i] = acc / window
    return out


def norms_loops(x):
    return np.array([math.sqrt(sum(float(v) ** 2 for v in row)) for row in x])


def window_max_loops(s, window):
    return np.array([max(s[i * window : (i + 1) * window]) for i in range(len(s) // window)])


def chunk_topk_loops(scores, k, chunk, m, ids=None):
    n = len(scores)
    ids = list(range(n)) if ids is None else list(ids)
    survivors = []
    for c0 in range(0, n, chunk):
        block = list(range(c0, min(n, c0 + chunk)))
        block.sort(key=lambda j: (-scores[j], ids[j]))
        survivors += block[:m]
    survivors.sort(key=lambda j: (-scores[j], ids[j]))
    return sorted(ids[j] for j in survivors[:k])


def write_range(level, i, p, n):
    w = p**level
    start = (i + 1) * w - 1
    return start, min(start + w - 1, n - 1)


def order_entries(entries, p):
    def key(e):
        lv, i = e
        w = p**lv
        return ((i + 1) * w - 1, -lv, i * w)

    return sorted(entries, key=key)


def descent_loops(qk, kq, n, p, L, k, prefix, chunk=None, m=None):
    """Hierarchical descent straight from its verbal definition."""

    def comb(lv, i):
        return max(qk[lv][i], kq[lv][i])

    def best(lv, cands):
        if chunk is None:
            return sorted(cands, key=lambda c: (-comb(lv, c), c))[:k]
        s = [comb(lv, c) for c in cands]
        return chunk_topk_loops(s, k, chunk, m, ids=cands)

    top = L - 1
    chosen = {(top, i) for i in range(n // p**top)}
    if L > 1:
        parents = best(top, list(range(n // p**top)))
        for lv in range(top - 1, -1, -1):
            cands = [c for par in sorted(parents) for c in range(par * p, par * p + p)]
            chosen |= {(lv, c) for c in cands}
            if lv > 0:
                parents = best(lv, cands)
    if prefix:
        for j in range(p**top - 1):
            if not any(write_range(lv, i, p, n)[0] <= j <= write_range(lv, i, p, n)[1] for lv, i in chosen):
                chosen.add((0, j))
    return order_entries(chosen, p)


def span_mask_attention(q, k, v, levels, positions, p):
    """Attention with the mask written in terms of spans, one row at a time.

    A key is visible to a query when its last summarized token is strictly
    before the query's, or at the same token with a level at least as
    coarse (a coarse summary ending at t is complete by t).
    """
    s, d = q.shape
    ends = [(i + 1) * p**lv - 1 for lv, i in zip(levels, positions)]
    out = np.zeros((s, v.shape[1]))
    weights = np.zeros((s, s))
    for a in range(s):
        allowed = [
            b for b in range(s) if ends[b] < ends[a] or (ends[b] == ends[a] and levels[b] >= levels[a])
        ]
        logits = np.array([float(q[a] @ k[b]) / math.sqrt(d) for b in allowed])
        e = np.exp(logits - logits.max())
        w = e / e.sum()
        for wb, b in zip(w, allowed):
            weights[a, b] = wb
            out[a] += wb * v[b]
    return out, weights


def dense_attention_rows(q, k, v):
    s, d = q.shape
    out = np.zeros((s, v.shape[1]))
    for a in range(s):
        logits = np.array([float(q[a] @ k[b]) / math.sqrt(d) for b in range(a + 1)])
        e = np.exp(logits - logits.max())
        w = e / e.sum()
        for b in range(a + 1):
            out[a] += w[b] * v[b]
    return out


def scatter_loops(o_sub, levels, positions, p, n, L):
    out = np.zeros((n, o_sub.shape[1]))
    for lv in range(L - 1, -1, -1):
        for m, (l2, i) in enumerate(zip(levels, positions)):
            if l2 != lv:
                continue
            a, b = write_range(lv, i, p, n)
            for j in range(a, b + 1):
                out[j] = out[j] + o_sub[m]
    return out
