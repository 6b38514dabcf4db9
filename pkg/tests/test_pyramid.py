import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lighthouse.config import LighthouseConfig
from lighthouse.errors import ConfigError, ShapeError
from lighthouse.numerics import make_rng
from lighthouse.pyramid import build_pyramid, pool_mean, pool_mean_backward, pyramid_backward, window_bounds
from oracles import window_mean_loops


@pytest.mark.parametrize(
    "level, i, p, expected",
    [(0, 7, 2, (7, 7)), (2, 3, 2, (12, 15)), (1, 2, 4, (8, 11))],
)
def test_window_bounds(level, i, p, expected):
    assert window_bounds(level, i, p) == expected


def test_window_bounds_out_of_range():
    with pytest.raises(IndexError):
        window_bounds(1, 8, 2, seq_len=16)
    with pytest.raises(IndexError):
        window_bounds(0, -1, 2)


def _qkv(n, d, seed):
    rng = make_rng(seed)
    return rng.standard_normal((n, d)), rng.standard_normal((n, d)), rng.standard_normal((n, d))


def test_level_zero_aliases_inputs():
    q, k, v = _qkv(16, 4, 0)
    pyr = build_pyramid(q, k, v, LighthouseConfig(16, 4, levels=3, budget=2))
    assert pyr.levels[0][0] is q and pyr.levels[0][1] is k and pyr.levels[0][2] is v


def test_constant_input_is_constant_at_every_level():
    # a dyadic constant survives summation exactly; others to rounding
    for c, tol in ((0.75, 0.0), (0.7, 1e-15)):
        x = np.full((16, 3), c)
        pyr = build_pyramid(x, x, x, LighthouseConfig(16, 3, levels=4, budget=2))
        for lvl in pyr.levels:
            for arr in lvl:
                np.testing.assert_allclose(arr, c, rtol=tol, atol=0)


def test_small_mean_example():
    x = np.array([[0.0, 0.0], [2.0, 4.0]])
    pyr = build_pyramid(x, x, x, LighthouseConfig(2, 2, levels=2, budget=1))
    np.testing.assert_array_equal(pyr.levels[1][0], [[1.0, 2.0]])


def test_matches_per_window_loop_bitwise():
    q, k, v = _qkv(16, 5, 1)
    cfg = LighthouseConfig(16, 5, pool_factor=2, levels=3, budget=2)
    pyr = build_pyramid(q, k, v, cfg)
    for ell in range(3):
        for s, x in enumerate((q, k, v)):
            assert np.array_equal(pyr.levels[ell][s], window_mean_loops(x, 2**ell))


def test_entry_counts_and_total_bound():
    cfg = LighthouseConfig(81, 2, pool_factor=3, levels=5, budget=1)
    q, k, v = _qkv(81, 2, 2)
    pyr = build_pyramid(q, k, v, cfg)
    counts = [lvl[0].shape[0] for lvl in pyr.levels]
    assert counts == [81, 27, 9, 3, 1]
    assert sum(counts) <= 81 * 3 / 2


def test_composition_of_levels():
    q, k, v = _qkv(64, 3, 3)
    pyr = build_pyramid(q, k, v, LighthouseConfig(64, 3, pool_factor=4, levels=3, budget=2))
    for ell in range(2):
        for s in range(3):
            np.testing.assert_allclose(pool_mean(pyr.levels[ell][s], 4), pyr.levels[ell + 1][s], rtol=0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, a, b):
    cfg = LighthouseConfig(16, 2, levels=3, budget=2)
    x, y = _qkv(16, 2, seed)[:2]
    px = build_pyramid(x, x, x, cfg)
    py = build_pyramid(y, y, y, cfg)
    pz = build_pyramid(a * x + b * y, a * x + b * y, a * x + b * y, cfg)
    for ell in range(3):
        np.testing.assert_allclose(pz.levels[ell][0], a * px.levels[ell][0] + b * py.levels[ell][0], atol=1e-12)


def test_identical_q_and_k_stay_identical():
    q, _, v = _qkv(32, 4, 4)
    pyr = build_pyramid(q, q.copy(), v, LighthouseConfig(32, 4, levels=4, budget=2))
    for lvl in pyr.levels:
        assert np.array_equal(lvl[0], lvl[1])


@pytest.mark.parametrize("window", [1, 2, 4, 8])
def test_pool_backward_is_adjoint(window):
    rng = make_rng(window)
    x = rng.standard_normal((16, 3))
    g = rng.standard_normal((16 // window, 3))
    lhs = float((pool_mean(x, window) * g).sum())
    rhs = float((x * pool_mean_backward(g, window)).sum())
    np.testing.assert_allclose(lhs, rhs, rtol=1e-14)


def test_pyramid_backward_sums_levels():
    ones = [tuple(np.ones((8 // 2**e, 1)) for _ in range(3)) for e in range(3)]
    gq, gk, gv = pyramid_backward(ones, 2)
    np.testing.assert_allclose(gq, 1 + 0.5 + 0.25)
    assert ones[0][0][0, 0] == 1.0  # inputs untouched


def test_bad_shapes_and_divisibility():
    with pytest.raises(ConfigError):
        LighthouseConfig(12, 2, pool_factor=2, levels=4, budget=1)
    with pytest.raises(ShapeError):
        pool_mean(np.zeros((6, 2)), 4)
    cfg = LighthouseConfig(16, 2, levels=2, budget=1)
    with pytest.raises(ShapeError):
        build_pyramid(np.zeros((8, 2)), np.zeros((16, 2)), np.zeros((16, 2)), cfg)
