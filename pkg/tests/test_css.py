import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastuss.config import preset
from fastuss.css import chunk_plan, crossfade_weights, css_separate
from fastuss.kernels import ConfigError
from fastuss.model import init_weights, separate

CFG = preset("TOY")
SR = CFG.frontend.sample_rate


def test_plan_for_four_second_chunks():
    plan = chunk_plan(60 * 100, 4.0, 0.0, 100)
    assert len(plan) == 15 and plan.hop == 400 and plan.crossfade_len == 0
    assert plan.windows[-1] == (5600, 6000)


def test_plan_truncates_last_span():
    plan = chunk_plan(1000, 3.0, 0.5, 100)
    assert plan.windows == ((0, 300), (150, 450), (300, 600), (450, 750), (600, 900), (750, 1000))


def test_plan_rejects_bad_arguments():
    for args in ((100, 1.0, 1.0, 10), (100, 0.0, 0.0, 10), (0, 1.0, 0.0, 10), (100, 1.0, -0.1, 10)):
        with pytest.raises(ConfigError):
            chunk_plan(*args)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 3000), st.floats(0.05, 2.0), st.sampled_from([0.0, 0.25, 0.5, 0.75]))
def test_crossfade_is_a_partition_of_unity(total, chunk_s, overlap):
    plan = chunk_plan(total, chunk_s, overlap, 1000)
    covered = np.zeros(total)
    for (s, e), w in zip(plan.windows, crossfade_weights(plan, total)):
        assert np.all(w > 0)
        covered[s:e] += w
    np.testing.assert_allclose(covered, 1.0, atol=1e-12)


def test_single_chunk_equals_direct_separation():
    w = init_weights(CFG, 0, np.float64)
    x = np.random.default_rng(0).standard_normal(800)
    direct = separate(x, ["Speech", "Bass"], w, CFG)
    chunked = css_separate(x, ["Speech", "Bass"], w, CFG, 1.0, 0.0)
    for a, b in zip(direct, chunked):
        np.testing.assert_array_equal(a, b)


def test_identity_separator_is_reconstructed_exactly():
    def passthrough(seg, prompts, weights, cfg):
        return [np.asarray(seg, dtype=np.float64) for _ in prompts]

    x = np.random.default_rng(1).standard_normal(5 * SR + 123)
    for overlap in (0.0, 0.5, 0.75):
        ys = css_separate(x, ["Speech", "SFX"], None, CFG, 1.0, overlap, separate_fn=passthrough)
        for y in ys:
            np.testing.assert_allclose(y, x, atol=1e-12)


def test_outputs_keep_length_and_order():
    w = init_weights(CFG, 1, np.float64)
    x = np.random.default_rng(2).standard_normal(2 * SR + 17)  # short tail chunk
    ys = css_separate(x, ["Drums", "Speech"], w, CFG, 0.5, 0.5)
    assert len(ys) == 2 and all(y.shape == x.shape for y in ys)
    assert np.abs(ys[0] - ys[1]).max() > 1e-6
