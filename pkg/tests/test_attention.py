import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lighthouse.attention import (
    attend_subsequence,
    blockwise_attend,
    gather,
    gather_backward,
    ring_attend,
    sdpa_backward,
    sdpa_reference,
)
from lighthouse.config import LighthouseConfig
from lighthouse.errors import ShapeError
from lighthouse.numerics import finite_diff_grad, make_rng
from lighthouse.pyramid import build_pyramid
from lighthouse.scoring import score_entries
from lighthouse.selection import causal_order, select_indices
from oracles import dense_attention_rows, span_mask_attention


def _qkv(n, d, seed):
    rng = make_rng(seed)
    return tuple(rng.standard_normal((n, d)) for _ in range(3))


def _gathered(n=16, d=4, p=2, L=3, k=2, seed=0):
    q, kk, v = _qkv(n, d, seed)
    cfg = LighthouseConfig(n, d, pool_factor=p, levels=L, budget=k)
    idx = select_indices(score_entries(q, kk, cfg), cfg)
    return gather(build_pyramid(q, kk, v, cfg), idx), cfg


# ------------------------------------------------------------ gather


def test_gather_all_level_zero_is_identity():
    q, k, v = _qkv(8, 3, 0)
    cfg = LighthouseConfig(8, 3, levels=2, budget=1)
    idx = causal_order([(0, i) for i in range(8)], 2, 8)
    g = gather(build_pyramid(q, k, v, cfg), idx)
    assert np.array_equal(g.q, q) and np.array_equal(g.k, k) and np.array_equal(g.v, v)


def test_gather_rows_match_copy_loop():
    g, cfg = _gathered(seed=3)
    pyr = build_pyramid(*_qkv(16, 4, 3), cfg)
    for m, (lv, i) in enumerate(g.coords.coords()):
        for s, arr in enumerate((g.q, g.k, g.v)):
            assert np.array_equal(arr[m], pyr.levels[lv][s][i])


def test_gather_single_entry_and_bad_coords():
    q, k, v = _qkv(8, 3, 1)
    cfg = LighthouseConfig(8, 3, levels=2, budget=1)
    pyr = build_pyramid(q, k, v, cfg)
    g = gather(pyr, causal_order([(1, 2)], 2, 8))
    assert g.q.shape == (1, 3) and np.array_equal(g.v[0], pyr.levels[1][2][2])
    with pytest.raises(IndexError):
        gather(pyr, causal_order([(1, 4)], 2, 8))
    with pytest.raises(IndexError):
        gather(pyr, causal_order([(2, 0)], 2, 8))


def test_gather_adjoint_identity():
    q, k, v = _qkv(16, 3, 2)
    cfg = LighthouseConfig(16, 3, levels=3, budget=2)
    pyr = build_pyramid(q, k, v, cfg)
    idx = select_indices(score_entries(q, k, cfg), cfg)
    g = gather(pyr, idx)
    rng = make_rng(9)
    G = [rng.standard_normal(a.shape) for a in (g.q, g.k, g.v)]
    back = gather_backward(*G, idx, [16, 8, 4])
    lhs = sum(float((a * b).sum()) for a, b in zip((g.q, g.k, g.v), G))
    rhs = sum(float((pyr.levels[ell][s] * back[ell][s]).sum()) for ell in range(3) for s in range(3))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-13)


# ------------------------------------------------------------ dense reference


def test_single_token_returns_its_value():
    q, k, v = _qkv(1, 4, 0)
    assert np.array_equal(sdpa_reference(q, k, v), v)


def test_two_tokens_zero_logits():
    v = np.array([[1.0, 2.0], [3.0, 6.0]])
    out = sdpa_reference(np.zeros((2, 2)), np.zeros((2, 2)), v)
    np.testing.assert_array_equal(out, [[1.0, 2.0], [2.0, 4.0]])


def test_matches_per_row_oracle():
    q, k, v = _qkv(6, 5, 4)
    np.testing.assert_allclose(sdpa_reference(q, k, v), dense_attention_rows(q, k, v), rtol=0, atol=1e-12)


def test_query_blocks_do_not_change_result():
    q, k, v = _qkv(37, 4, 5)
    ref = sdpa_reference(q, k, v)
    for block in (1, 5, 16, 37):
        np.testing.assert_allclose(sdpa_reference(q, k, v, block=block), ref, rtol=0, atol=1e-13)


def test_non_causal_and_shape_errors():
    q, k, v = _qkv(4, 3, 6)
    full = sdpa_reference(q, k, v, causal=False)
    assert not np.allclose(full[0], v[0])
    with pytest.raises(ShapeError):
        sdpa_reference(q, k[:, :2], v)
    with pytest.raises(ShapeError):
        sdpa_reference(q[:2], k, v)


@pytest.mark.parametrize("causal", [True, False])
def test_sdpa_backward_against_finite_differences(causal):
    q, k, v = _qkv(5, 3, 7)
    G = make_rng(1).standard_normal((5, 3))

    def loss(qq, kk, vv):
        return float((sdpa_reference(qq, kk, vv, causal=causal) * G).sum())

    out = sdpa_reference(q, k, v, causal=causal)
    dq, dk, dv = sdpa_backward(q, k, v, out, G, causal=causal, block=2)
    np.testing.assert_allclose(dq, finite_diff_grad(lambda x: loss(x, k, v), q), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(dk, finite_diff_grad(lambda x: loss(q, x, v), k), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(dv, finite_diff_grad(lambda x: loss(q, k, x), v), rtol=1e-6, atol=1e-8)


# ------------------------------------------------------------ sub-sequence


def test_full_level_zero_selection_equals_dense_bitwise():
    q, k, v = _qkv(16, 4, 8)
    cfg = LighthouseConfig(16, 4, pool_factor=1, levels=1, budget=1)
    idx = select_indices(score_entries(q, k, cfg), cfg)
    assert np.array_equal(attend_subsequence(gather(build_pyramid(q, k, v, cfg), idx)), sdpa_reference(q, k, v))


def test_single_entry_subsequence():
    q, k, v = _qkv(8, 3, 1)
    cfg = LighthouseConfig(8, 3, levels=2, budget=1)
    g = gather(build_pyramid(q, k, v, cfg), causal_order([(1, 1)], 2, 8))
    assert np.array_equal(attend_subsequence(g), g.v)


@pytest.mark.parametrize("seed", range(5))
def test_matches_span_mask_oracle(seed):
    g, cfg = _gathered(seed=seed)
    ref, weights = span_mask_attention(g.q, g.k, g.v, g.coords.level.tolist(), g.coords.pos.tolist(), 2)
    np.testing.assert_allclose(attend_subsequence(g), ref, rtol=0, atol=1e-12)
    # the span mask is exactly lower-triangular in the chosen order
    assert np.all(np.triu(weights, 1) == 0)
    assert np.all(weights[np.tril_indices(len(g))] > 0)


# ------------------------------------------------------------ ring


@pytest.mark.parametrize("block", [1, 3, 7, 16, 64])
def test_blockwise_matches_monolithic(block):
    g, _ = _gathered(n=64, d=8, L=3, k=4, seed=block)
    np.testing.assert_allclose(blockwise_attend(g, block), attend_subsequence(g), rtol=0, atol=1e-12)


def test_full_block_is_the_monolithic_path():
    g, _ = _gathered(seed=11)
    assert np.array_equal(blockwise_attend(g, len(g)), attend_subsequence(g))
    with pytest.raises(ValueError):
        blockwise_attend(g, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.data())
def test_ring_any_bounds(s, data):
    cuts = sorted(data.draw(st.sets(st.integers(1, s - 1), max_size=6)))
    q, k, v = _qkv(s, 3, s)
    out = ring_attend(q, k, v, [0, *cuts, s])
    np.testing.assert_allclose(out, sdpa_reference(q, k, v), rtol=0, atol=1e-12)
