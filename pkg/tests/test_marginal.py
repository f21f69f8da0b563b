from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthgram.depth import mbd, mei, parabola_f
from depthgram.formats import ArraySource
from depthgram.marginal import (
    boxplot_flags,
    boxplot_rule,
    functional_boxplot_dim,
    marginal_screen,
    outliergram_dim,
    outliergram_scores,
    screen_block,
)
from depthgram.synth import ModelConfig, SyntheticSource


def test_boxplot_jittered_constants():
    heights = np.concatenate([np.arange(9) * 1e-6, [10.0]])
    curves = np.repeat(heights[:, None], 3, axis=1)
    flags = functional_boxplot_dim(curves, mbd(curves), F=1.5)
    assert flags.tolist() == [False] * 9 + [True]


def test_boxplot_identical_curves_unflagged():
    curves = np.tile(np.sin(np.linspace(0, 3, 8)), (6, 1))
    assert not functional_boxplot_dim(curves, mbd(curves)).any()


def test_boxplot_central_region_tiebreak_by_index():
    # all depths equal: central region is observations 0..ceil(n/2)-1
    curves = np.array([[0.0], [1.0], [2.0], [30.0], [4.0]])
    flags = boxplot_flags(curves[None], np.zeros((1, 5)), F=1.5)[0]
    # envelope [0, 2], fences [-3, 5]
    assert flags.tolist() == [False, False, False, True, False]


def test_boxplot_shift_invariance():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((15, 12))
    x[3] += 6
    f = 5 * np.cos(np.linspace(0, 4, 12))
    a = functional_boxplot_dim(x, mbd(x))
    b = functional_boxplot_dim(x + f, mbd(x + f))
    assert np.array_equal(a, b)
    assert a[3]


def test_outliergram_non_crossing_gives_zero_scores():
    curves = np.repeat(np.arange(7.0)[:, None], 5, axis=1)
    b, e = mbd(curves), mei(curves)
    d = outliergram_scores(b.numerators, e.numerators, b.n, b.m)
    assert np.all(d == 0)
    assert not outliergram_dim(b, e).any()


def test_outliergram_n2():
    curves = np.array([[0.0, 1.0, 2.0], [1.0, 0.5, 3.0]])
    b, e = mbd(curves), mei(curves)
    d = outliergram_scores(b.numerators, e.numerators, 2, 3)
    np.testing.assert_allclose(d, parabola_f(2, e.values) - b.values, atol=1e-15)
    assert not outliergram_dim(b, e).any()


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_outliergram_scores_match_float_formula_and_are_nonnegative(n, m, seed):
    x = np.random.default_rng(seed).standard_normal((n, m))
    b, e = mbd(x), mei(x)
    d = outliergram_scores(b.numerators, e.numerators, n, m)
    np.testing.assert_allclose(d, parabola_f(n, e.values) - b.values, atol=1e-12)
    assert d.min() >= -1e-12


def _exact_score(P, G, n, m):
    return float(Fraction(-2 * m * m + 2 * (n + 1) * G * m - 2 * G * G - 2 * P * m,
                          n * (n - 1) * m * m))


@pytest.mark.parametrize("n,m", [(100, 1000), (2**16, 2**15)])
def test_outliergram_scores_exact_on_both_paths(n, m):
    rng = np.random.default_rng(0)
    G = rng.integers(m, n * m, size=20)
    P = rng.integers(0, (n - 1) * m, size=20)
    got = outliergram_scores(P, G, n, m)
    want = [_exact_score(int(p), int(g), n, m) for p, g in zip(P, G)]
    np.testing.assert_allclose(got, want, rtol=1e-14, atol=1e-300)


def test_boxplot_rule_strict():
    scores = np.array([0.01] * 19 + [0.5])
    assert np.flatnonzero(boxplot_rule(scores)).tolist() == [19]
    assert not boxplot_rule(np.zeros(10)).any()


def test_shape_outlier_flagged_by_outliergram():
    cfg = ModelConfig(1, p=4, c=1.0, seed=5)
    src = SyntheticSource(cfg)
    _, shape = screen_block(src.read_dimensions(0, 4))
    assert shape[:, cfg.outlier_indices("shape")].mean() >= 0.75


def test_magnitude_dims_example():
    rng = np.random.default_rng(2)
    x = 0.3 * rng.standard_normal((10, 6, 20)) + np.sin(np.linspace(0, 6, 20))
    x[6, [1, 4]] += 10
    flags = marginal_screen(ArraySource(x))
    assert flags.magnitude_dims(6) == [2, 5]
    assert flags.to_dict()["magnitude_dims"]["7"] == [2, 5]


def test_screen_independent_of_chunk_and_threads():
    src = SyntheticSource(ModelConfig(2, p=37, c=0.5, seed=9))
    ref = marginal_screen(src, chunk=64)
    for threads, chunk in [(1, 1), (3, 5), (2, 16)]:
        got = marginal_screen(src, threads=threads, chunk=chunk)
        assert np.array_equal(got.magnitude, ref.magnitude)
        assert np.array_equal(got.shape, ref.shape)


def test_p1_reduces_to_single_screens():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((12, 1, 9))
    x[0, 0] += 8
    flags = marginal_screen(ArraySource(x))
    curves = x[:, 0]
    assert np.array_equal(flags.magnitude[0], functional_boxplot_dim(curves, mbd(curves)))
    assert np.array_equal(flags.shape[0], outliergram_dim(mbd(curves), mei(curves)))


def test_outliergram_dim_rejects_mismatched_columns():
    a = np.zeros((3, 4))
    with pytest.raises(ValueError):
        outliergram_dim(mbd(a), mei(np.zeros((3, 5))))
