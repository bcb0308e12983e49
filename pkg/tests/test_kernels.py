import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastuss.blocks import same_pad
from fastuss.kernels import (
    ConfigError,
    channel_shuffle,
    conv1d,
    conv_output_length,
    conv_transpose1d,
    count_macs,
    linear,
    matmul,
    rms_group_norm,
    sigmoid,
    softmax_rows,
    swish,
)


def naive_conv1d(x, w, bias, stride, pad, groups):
    cin, length = x.shape
    cout, cin_g, k = w.shape
    xp = np.concatenate([np.zeros((cin, pad[0])), x, np.zeros((cin, pad[1]))], axis=1)
    lout = (length + pad[0] + pad[1] - k) // stride + 1
    cout_g = cout // groups
    out = np.zeros((cout, lout))
    for c in range(cout):
        g = c // cout_g
        for t in range(lout):
            acc = 0.0 if bias is None else bias[c]
            for ci in range(cin_g):
                for j in range(k):
                    acc += w[c, ci, j] * xp[g * cin_g + ci, t * stride + j]
            out[c, t] = acc
    return out


def naive_conv_transpose1d(x, w, stride, pad, groups):
    cin, length = x.shape
    _, cout_g, k = w.shape
    cin_g = cin // groups
    full = np.zeros((cout_g * groups, (length - 1) * stride + k))
    for ci in range(cin):
        g = ci // cin_g
        for t in range(length):
            for co in range(cout_g):
                for j in range(k):
                    full[g * cout_g + co, t * stride + j] += x[ci, t] * w[ci, co, j]
    return full[:, pad[0] : full.shape[1] - pad[1]]


conv_cases = st.tuples(
    st.integers(1, 3),  # groups
    st.integers(1, 3),  # in channels per group
    st.integers(1, 3),  # out channels per group
    st.integers(1, 5),  # kernel
    st.integers(1, 4),  # stride
    st.integers(0, 3),
    st.integers(0, 3),
    st.integers(1, 20),
    st.integers(0, 2**31 - 1),
)


@settings(max_examples=60, deadline=None)
@given(conv_cases)
def test_conv1d_matches_naive_loop(case):
    g, cig, cog, k, s, pl, pr, length, seed = case
    if length + pl + pr < k:
        return
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((g * cig, length))
    w = rng.standard_normal((g * cog, cig, k))
    b = rng.standard_normal(g * cog)
    got = conv1d(x, w, b, s, (pl, pr), g)
    want = naive_conv1d(x, w, b, s, (pl, pr), g)
    assert got.shape == want.shape == (g * cog, conv_output_length(length, k, s, (pl, pr)))
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(conv_cases)
def test_conv_transpose1d_matches_naive_loop(case):
    g, cig, cog, k, s, pl, pr, length, seed = case
    rng = np.random.default_rng(seed)
    full = (length - 1) * s + k
    if pl + pr >= full:
        return
    x = rng.standard_normal((g * cig, length))
    w = rng.standard_normal((g * cig, cog, k))
    got = conv_transpose1d(x, w, None, s, (pl, pr), g)
    np.testing.assert_allclose(got, naive_conv_transpose1d(x, w, s, (pl, pr), g), atol=1e-12)
    assert got.shape[1] == full - pl - pr


@settings(max_examples=60, deadline=None)
@given(conv_cases, st.sampled_from([np.float32, np.float64]))
def test_conv_and_transpose_are_adjoint(case, dtype):
    g, cig, cog, k, s, pl, pr, length, seed = case
    if length + pl + pr < k:
        return
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((g * cig, length)).astype(dtype)
    w = rng.standard_normal((g * cog, cig, k)).astype(dtype)
    y = conv1d(x, w, None, s, (pl, pr), g)
    v = rng.standard_normal(y.shape).astype(dtype)
    # transposed conv with the same weights: (Cout, Cin/G, K) read as (Cin', Cout'/G, K)
    back = conv_transpose1d(v, w, None, s, (pl, 0), g)
    back = np.pad(back, ((0, 0), (0, max(0, length - back.shape[1]))))[:, :length]
    lhs = float(np.sum(y.astype(np.float64) * v))
    rhs = float(np.sum(x.astype(np.float64) * back))
    tol = 1e-4 if dtype == np.float32 else 1e-9
    assert abs(lhs - rhs) <= tol * max(1.0, abs(lhs))


def test_conv1d_documented_example():
    x = np.random.default_rng(0).standard_normal((2, 10))
    w = np.random.default_rng(1).standard_normal((2, 2, 4))
    assert conv1d(x, w, None, 1, (1, 1)).shape == (2, 9)


def test_conv1d_zero_input_and_identity_kernel():
    assert not conv1d(np.zeros((3, 7)), np.ones((3, 3, 2)), np.zeros(3)).any()
    x = np.random.default_rng(0).standard_normal((4, 9))
    eye = np.eye(4)[:, :, None]
    np.testing.assert_array_equal(conv1d(x, eye), x)


def test_conv1d_errors():
    with pytest.raises(ConfigError):
        conv1d(np.zeros((3, 5)), np.zeros((2, 1, 1)), groups=2)
    with pytest.raises(ConfigError):
        conv1d(np.zeros((2, 2)), np.zeros((2, 2, 4)))
    with pytest.raises(ConfigError):
        conv_transpose1d(np.zeros((3, 5)), np.zeros((3, 1, 1)), groups=2)


@pytest.mark.parametrize("stride", [1, 2, 4])
def test_conv_deconv_round_trip_restores_length(stride):
    k = 4
    for length in range(8, 65):
        padded = -(-length // stride) * stride
        x = np.zeros((2, padded))
        y = conv1d(x, np.zeros((3, 2, k)), None, stride, same_pad(k))
        z = conv_transpose1d(y, np.zeros((3, 2, k)), None, stride, same_pad(k), out_len=padded)
        assert z[:, :length].shape[1] == length
        assert y.shape[1] == padded // stride


def test_conv_transpose_zero_input():
    assert not conv_transpose1d(np.zeros((2, 5)), np.ones((2, 3, 4)), None, 2).any()


def test_matmul_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0, 6.0], [7.0, 8.0]])
    np.testing.assert_array_equal(matmul(a, b), [[19.0, 22.0], [43.0, 50.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), b), b)
    assert not matmul(a, np.zeros((2, 3))).any()
    with pytest.raises(ConfigError):
        matmul(a, np.zeros((3, 2)))


def test_linear_adds_bias():
    x = np.ones((3, 2))
    np.testing.assert_array_equal(linear(x, np.ones((2, 4)), np.arange(4.0)), np.tile([2.0, 3.0, 4.0, 5.0], (3, 1)))


def test_softmax_examples():
    np.testing.assert_allclose(softmax_rows(np.zeros((2, 4))), 0.25)
    mask = np.full((3, 3), -np.inf)
    np.fill_diagonal(mask, 0.0)
    np.testing.assert_array_equal(softmax_rows(np.random.default_rng(0).standard_normal((3, 3)), mask), np.eye(3))
    x = np.random.default_rng(1).standard_normal((3, 3))
    want = np.exp(x) / np.exp(x).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(softmax_rows(x), want, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_softmax_rows_sum_to_one_and_masked_are_zero(m, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((m, n)) * 10
    hidden = rng.random((m, n)) < 0.5
    hidden[np.arange(m), rng.integers(0, n, m)] = False
    p = softmax_rows(x, np.where(hidden, -np.inf, 0.0))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(p[hidden] == 0.0)


def test_softmax_fully_masked_row_is_an_error():
    with pytest.raises(ConfigError):
        softmax_rows(np.zeros((2, 2)), np.array([[0.0, -np.inf], [-np.inf, -np.inf]]))


def test_rms_group_norm():
    x = np.array([[1.0, -1.0, 2.0, -2.0]])
    np.testing.assert_allclose(rms_group_norm(x, np.ones(4), 2, eps=0.0), [[1.0, -1.0, 1.0, -1.0]])
    np.testing.assert_allclose(rms_group_norm(np.array([[1.0, -1.0, 1.0, 1.0]]), np.ones(4), 2), [[1, -1, 1, 1]], atol=1e-5)
    assert not rms_group_norm(x, np.zeros(4), 2).any()
    rng = np.random.default_rng(0)
    v, gamma = rng.standard_normal((5, 6)), rng.standard_normal(6)
    want = np.concatenate(
        [v[:, i : i + 2] / np.sqrt(np.mean(v[:, i : i + 2] ** 2, axis=1, keepdims=True) + 1e-5) for i in (0, 2, 4)], axis=1
    )
    np.testing.assert_allclose(rms_group_norm(v, gamma, 3), want * gamma, rtol=1e-12)
    with pytest.raises(ConfigError):
        rms_group_norm(v, gamma, 4)


def test_swish_and_sigmoid():
    assert swish(np.array([0.0]))[0] == 0.0
    assert abs(swish(np.array([20.0]))[0] - 20.0) < 1e-6
    assert swish(np.array([1.0]))[0] == pytest.approx(1.0 / (1.0 + np.exp(-1.0)), rel=1e-15)
    assert np.all(np.isfinite(sigmoid(np.array([-1000.0, 1000.0]))))


def test_channel_shuffle_is_a_permutation():
    x = np.arange(12.0).reshape(12, 1)
    y = channel_shuffle(x, 3, axis=0)
    assert sorted(y.ravel()) == sorted(x.ravel())
    assert list(y.ravel()[:4]) == [0.0, 4.0, 8.0, 1.0]


def test_kernels_are_deterministic_and_keep_dtype():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 30)).astype(np.float32)
    w = rng.standard_normal((6, 2, 3)).astype(np.float32)
    a, b = conv1d(x, w, None, 2, (1, 1), 2), conv1d(x, w, None, 2, (1, 1), 2)
    assert a.dtype == np.float32 and a.tobytes() == b.tobytes()


def test_mac_counter_reports_conv_and_matmul():
    with count_macs() as c:
        conv1d(np.zeros((2, 10)), np.zeros((2, 2, 4)), None, 1, (1, 1))
        matmul(np.zeros((3, 4)), np.zeros((4, 5)))
    assert c.total == 9 * 2 * 2 * 4 + 3 * 4 * 5
