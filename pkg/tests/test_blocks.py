import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastuss.blocks import (
    conv_swiglu_ffn,
    ffn_shapes,
    loco_block_tokens,
    mhsa,
    mhsa_shapes,
    prompt_aware_ffn,
    rope_rotate,
    same_pad,
    sub_block_shapes,
    tf_loco_block,
    tf_loco_sub_block,
)
from fastuss.config import FfnConfig, SubBlockConfig
from fastuss.kernels import ConfigError


def random_weights(shapes, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    return {k: rng.standard_normal(s) * scale for k, s in shapes.items()}


def swish(x):
    return x / (1 + np.exp(-x))


def rms(x, gamma, groups=1):
    parts = np.split(x, groups, axis=-1)
    return np.concatenate([p / np.sqrt(np.mean(p**2, axis=-1, keepdims=True) + 1e-5) for p in parts], axis=-1) * gamma


def test_zero_output_weights_give_identity():
    cfg = FfnConfig(hidden=6, kernel=3, stride=2)
    w = random_weights(ffn_shapes("f", cfg, 4))
    w["f.out.weight"][:] = 0
    w["f.out.bias"][:] = 0
    x = np.random.default_rng(1).standard_normal((2, 9, 4))
    np.testing.assert_array_equal(conv_swiglu_ffn(x, w, "f", cfg), x)
    a = random_weights(mhsa_shapes("a", 4, 4))
    a["a.o"][:] = 0
    np.testing.assert_array_equal(mhsa(x, a, "a", 2), x)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 5),
    st.integers(1, 4),
    st.sampled_from([1, 2]),
    st.booleans(),
    st.integers(1, 40),
    st.sampled_from(["all", "input", "deconv"]),
)
def test_ffn_preserves_length(k, s, g, dws, length, scope):
    if dws and (k == 1 or g > 1):
        return
    cfg = FfnConfig(hidden=4, kernel=k, stride=s, conv_groups=g, channel_shuffle=g > 1, depthwise_separable=dws, group_scope=scope)
    cfg.validate(4)
    w = random_weights(ffn_shapes("f", cfg, 4))
    x = np.random.default_rng(length).standard_normal((3, length, 4))
    y = conv_swiglu_ffn(x, w, "f", cfg)
    assert y.shape == x.shape and np.all(np.isfinite(y))


def test_pointwise_ffn_matches_hand_swiglu():
    cfg = FfnConfig("pointwise", hidden=5, kernel=1)
    w = random_weights(ffn_shapes("f", cfg, 4), seed=2)
    x = np.random.default_rng(3).standard_normal((2, 7, 4))
    h = rms(x, w["f.norm"])
    a = h @ w["f.conv_a.weight"][:, :, 0].T + w["f.conv_a.bias"]
    b = h @ w["f.conv_b.weight"][:, :, 0].T + w["f.conv_b.bias"]
    want = x + (swish(a) * b) @ w["f.out.weight"][:, :, 0] + w["f.out.bias"]
    np.testing.assert_allclose(conv_swiglu_ffn(x, w, "f", cfg), want, rtol=1e-10)


def test_kernel_ffn_matches_loop_oracle():
    cfg = FfnConfig(hidden=3, kernel=4, stride=1)
    w = random_weights(ffn_shapes("f", cfg, 2), seed=4)
    x = np.random.default_rng(5).standard_normal((1, 6, 2))
    h = rms(x[0], w["f.norm"])
    left, _ = same_pad(4)
    hp = np.pad(h, ((left, 3 - left), (0, 0)))
    a = np.array([[sum(w["f.conv_a.weight"][c, :, j] @ hp[t + j] for j in range(4)) for c in range(3)] for t in range(6)])
    b = np.array([[sum(w["f.conv_b.weight"][c, :, j] @ hp[t + j] for j in range(4)) for c in range(3)] for t in range(6)])
    g = swish(a + w["f.conv_a.bias"]) * (b + w["f.conv_b.bias"])
    full = np.zeros((6 + 3, 2))
    for t in range(6):
        for j in range(4):
            full[t + j] += g[t] @ w["f.out.weight"][:, :, j]
    want = x[0] + full[left : left + 6] + w["f.out.bias"]
    np.testing.assert_allclose(conv_swiglu_ffn(x, w, "f", cfg)[0], want, rtol=1e-10)


def test_causal_ffn_ignores_the_future_and_streams():
    cfg = FfnConfig(hidden=4, kernel=4, causal=True)
    w = random_weights(ffn_shapes("f", cfg, 4), seed=6)
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 12, 4))
    y = conv_swiglu_ffn(x, w, "f", cfg)
    x2 = x.copy()
    x2[:, 7:] += rng.standard_normal((2, 5, 4))
    y2 = conv_swiglu_ffn(x2, w, "f", cfg)
    np.testing.assert_array_equal(y[:, :7], y2[:, :7])
    assert np.abs(y[:, 7:] - y2[:, 7:]).max() > 1e-3
    state: dict = {}
    steps = [conv_swiglu_ffn(x[:, t : t + 1], w, "f", cfg, state=state) for t in range(12)]
    np.testing.assert_allclose(np.concatenate(steps, axis=1), y, rtol=1e-12, atol=1e-12)


def test_prompt_aware_splits_rows():
    cfg = FfnConfig("prompt_aware", hidden=5, kernel=4, stride=2)
    w = random_weights(ffn_shapes("f", cfg, 4), seed=8)
    x = np.random.default_rng(9).standard_normal((2, 9, 4))
    y = prompt_aware_ffn(x, 3, w, "f", cfg)
    p = x[:, :3]
    h = rms(p, w["f.norm"])
    a = h @ w["f.prompt.lin_a.weight"] + w["f.prompt.lin_a.bias"]
    b = h @ w["f.prompt.lin_b.weight"] + w["f.prompt.lin_b.bias"]
    np.testing.assert_allclose(y[:, :3], p + (swish(a) * b) @ w["f.prompt.lin_out.weight"] + w["f.prompt.lin_out.bias"], rtol=1e-10)
    np.testing.assert_allclose(y[:, 3:], conv_swiglu_ffn(x[:, 3:], w, "f", cfg), rtol=1e-12)
    # the prompt rows never see the mixture rows
    x2 = x.copy()
    x2[:, 3:] = 0
    np.testing.assert_array_equal(prompt_aware_ffn(x2, 3, w, "f", cfg)[:, :3], y[:, :3])
    with pytest.raises(ConfigError):
        prompt_aware_ffn(x, 10, w, "f", cfg)


def test_rope_is_a_relative_rotation():
    rng = np.random.default_rng(10)
    q, k = rng.standard_normal((1, 8)), rng.standard_normal((1, 8))
    np.testing.assert_array_equal(rope_rotate(q, [0]), q)
    dots = [float((rope_rotate(q, [p + 3]) @ rope_rotate(k, [p]).T)[0, 0]) for p in (0, 5, 17)]
    np.testing.assert_allclose(dots, dots[0], rtol=1e-10)
    assert np.linalg.norm(rope_rotate(q, [7])) == pytest.approx(np.linalg.norm(q))
    with pytest.raises(ConfigError):
        rope_rotate(np.zeros((1, 3)), [0])


def brute_mhsa(x, w, heads, mask, positions):
    h = rms(x, w["a.norm"])
    q, k, v = h @ w["a.q"], h @ w["a.k"], h @ w["a.v"]
    e = q.shape[-1] // heads
    outs = []
    for i in range(heads):
        sl = slice(i * e, (i + 1) * e)
        qi, ki = rope_rotate(q[:, sl], positions), rope_rotate(k[:, sl], positions)
        s = qi @ ki.T / math.sqrt(e)
        s = np.where(mask, s, -np.inf)
        p = np.exp(s - s.max(axis=1, keepdims=True))
        outs.append((p / p.sum(axis=1, keepdims=True)) @ v[:, sl])
    return x + np.concatenate(outs, axis=1) @ w["a.o"]


def test_mhsa_matches_brute_force_with_mask():
    w = random_weights(mhsa_shapes("a", 6, 8), seed=11)
    x = np.random.default_rng(12).standard_normal((1, 5, 6))
    mask = np.tri(5, dtype=bool)
    mask[0, 3] = True
    pos = np.array([0, 0, 1, 2, 3])
    np.testing.assert_allclose(mhsa(x, w, "a", 2, mask, pos)[0], brute_mhsa(x[0], w, 2, mask, pos), rtol=1e-10)
    with pytest.raises(ConfigError):
        mhsa(x, w, "a", 2, np.ones((4, 4), dtype=bool))


def test_mhsa_cache_equals_causal_full_pass():
    w = random_weights(mhsa_shapes("a", 4, 4), seed=13)
    x = np.random.default_rng(14).standard_normal((3, 6, 4))
    full = mhsa(x, w, "a", 2, np.tri(6, dtype=bool), np.arange(6))
    cache: dict = {}
    steps = []
    for t in range(6):
        steps.append(mhsa(x[:, t : t + 1], w, "a", 2, np.ones((1, t + 1), dtype=bool), [t], cache=cache))
    np.testing.assert_allclose(np.concatenate(steps, axis=1), full, rtol=1e-10, atol=1e-12)


def _sub(dim=4, causal=False):
    ffn = FfnConfig(hidden=4, kernel=3, causal=causal)
    return SubBlockConfig(dim, ffn, ffn, heads=2, attn_dim=4, norm_groups=2)


def test_sub_block_composes_ffn_attention_ffn():
    cfg = _sub()
    w = random_weights(sub_block_shapes("s", cfg), seed=15)
    x = np.random.default_rng(16).standard_normal((2, 5, 4))
    y = conv_swiglu_ffn(x, w, "s.ffn1", cfg.ffn1, 2)
    y = mhsa(y, w, "s.attn", 2, None, np.arange(5), True, 2)
    y = conv_swiglu_ffn(y, w, "s.ffn2", cfg.ffn2, 2)
    np.testing.assert_array_equal(tf_loco_sub_block(x, w, "s", cfg, positions=np.arange(5)), y)


def test_block_runs_frequency_then_time():
    fcfg, tcfg = _sub(), _sub()
    w = random_weights({**sub_block_shapes("b.freq", fcfg), **sub_block_shapes("b.time", tcfg)}, seed=17)
    x = np.random.default_rng(18).standard_normal((5, 3, 4))  # (T, F, D)
    y = loco_block_tokens(x, w, "b", fcfg, tcfg)
    f = tf_loco_sub_block(x, w, "b.freq", fcfg, positions=np.arange(3))
    t = tf_loco_sub_block(np.swapaxes(f, 0, 1), w, "b.time", tcfg)
    np.testing.assert_allclose(y, np.swapaxes(t, 0, 1), rtol=1e-12)
    z = tf_loco_block(np.transpose(x, (2, 0, 1)), w, "b", fcfg, tcfg)
    np.testing.assert_array_equal(np.transpose(z, (1, 2, 0)), y)
