import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lighthouse.config import LighthouseConfig
from lighthouse.errors import ContractError
from lighthouse.numerics import make_rng
from lighthouse.scatter import WriteRange, contributor_counts, scatter_back, scatter_back_grad, scatter_ranges
from lighthouse.scoring import pooled_scores
from lighthouse.selection import causal_order, select_indices
from oracles import scatter_loops


def _index(n, p, L, k, seed, prefix=True):
    rng = make_rng(seed)
    cfg = LighthouseConfig(n, 1, pool_factor=p, levels=L, budget=k, prefix_coverage=prefix)
    return select_indices(pooled_scores((rng.random(n), rng.random(n)), cfg), cfg), cfg


def test_ranges_examples():
    cfg = LighthouseConfig(12, 1, pool_factor=2, levels=3, budget=1)
    idx = causal_order([(0, 5), (1, 0), (2, 1), (2, 2)], 2, 12)
    ranges = dict(zip(idx.coords(), scatter_ranges(idx, cfg)))
    assert ranges[(0, 5)] == WriteRange(5, 5)
    assert ranges[(1, 0)] == WriteRange(1, 2)
    assert ranges[(2, 1)] == WriteRange(7, 10)
    assert ranges[(2, 2)] == WriteRange(11, 11)  # clipped at N-1


def test_ranges_within_level_are_disjoint_and_adjacent():
    cfg = LighthouseConfig(32, 1, pool_factor=2, levels=4, budget=1)
    idx = causal_order([(2, i) for i in range(8)], 2, 32)
    r = scatter_ranges(idx, cfg)
    for a, b in zip(r, r[1:]):
        assert b.start == a.end + 1


def test_single_level_output_is_identity():
    cfg = LighthouseConfig(8, 3, pool_factor=1, levels=1, budget=1)
    idx = causal_order([(0, i) for i in range(8)], 1, 8)
    o = make_rng(0).standard_normal((8, 3))
    assert np.array_equal(scatter_back(o, idx, cfg), o)


def test_single_entry_writes_its_range(caplog):
    cfg = LighthouseConfig(8, 2, pool_factor=2, levels=2, budget=1)
    idx = causal_order([(1, 0)], 2, 8)
    r = np.array([[1.5, -2.0]])
    with caplog.at_level(logging.WARNING):
        out = scatter_back(r, idx, cfg)
    expect = np.zeros((8, 2))
    expect[1] = expect[2] = r[0]
    assert np.array_equal(out, expect)
    assert "6 of 8 positions" in caplog.text


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(16, 2, 3, 2), (27, 3, 3, 2), (64, 4, 3, 3), (32, 2, 5, 1)]), st.booleans())
def test_matches_range_loop_bitwise(seed, shape, prefix):
    n, p, L, k = shape
    idx, cfg = _index(n, p, L, k, seed, prefix)
    o = make_rng(seed + 1).standard_normal((len(idx), 3))
    out = scatter_back(o, idx, cfg)
    assert np.array_equal(out, scatter_loops(o, idx.level, idx.pos, p, n, L))
    c = contributor_counts(idx, n)
    assert c.max() <= L
    if prefix:
        assert c.min() >= 1


def test_writes_never_precede_span_end():
    for seed in range(5):
        idx, cfg = _index(64, 2, 4, 3, seed)
        for end, wr in zip(idx.span_end, scatter_ranges(idx, cfg)):
            assert wr.start >= end


@pytest.mark.parametrize("seed", range(4))
def test_backward_is_adjoint_and_linear(seed):
    idx, cfg = _index(32, 2, 4, 2, seed)
    rng = make_rng(seed)
    o, o2 = rng.standard_normal((len(idx), 4)), rng.standard_normal((len(idx), 4))
    G = rng.standard_normal((32, 4))
    lhs = float((scatter_back(o, idx, cfg) * G).sum())
    rhs = float((o * scatter_back_grad(G, idx, cfg)).sum())
    np.testing.assert_allclose(lhs, rhs, rtol=1e-13)
    np.testing.assert_allclose(scatter_back(2 * o + o2, idx, cfg), 2 * scatter_back(o, idx, cfg) + scatter_back(o2, idx, cfg), atol=1e-13)


def test_backward_sums_gradient_over_range():
    cfg = LighthouseConfig(8, 1, pool_factor=2, levels=3, budget=1)
    idx = causal_order([(2, 0), (2, 1), (1, 2)], 2, 8)
    G = np.arange(8.0)[:, None]
    got = dict(zip(idx.coords(), scatter_back_grad(G, idx, cfg)[:, 0]))
    assert got == {(2, 0): 3 + 4 + 5 + 6, (2, 1): 7.0, (1, 2): 5 + 6}


def test_row_count_mismatch():
    idx, cfg = _index(16, 2, 3, 2, 0)
    with pytest.raises(ContractError):
        scatter_back(np.zeros((len(idx) + 1, 2)), idx, cfg)
