"""Dense numerical kernels shared by every model component.

Tensors are plain numpy arrays of float32 or float64. Every kernel accumulates
in float64 and casts the result back to the dtype of its primary input, so a
float32 model stays float32 between kernels while reductions stay accurate.

Kernels accept arbitrary leading batch dimensions; the trailing dimensions
follow the documented layout (channels x length for convolutions).
"""

from __future__ import annotations

import contextlib
from typing import Iterator, Optional, Tuple

import numpy as np

NEG_INF = -np.inf

Pad = Tuple[int, int]


class ConfigError(ValueError):
    """Invalid hyperparameters or shape contract violation."""


class MacCounter:
    """Accumulates multiply-accumulate counts reported by the kernels."""

    def __init__(self) -> None:
        self.total = 0

    def add(self, n: int) -> None:
        self.total += int(n)


_counters: list[MacCounter] = []


@contextlib.contextmanager
def count_macs() -> Iterator[MacCounter]:
    """Count dense MACs executed inside the block (conv, conv-transpose, matmul)."""
    counter = MacCounter()
    _counters.append(counter)
    try:
        yield counter
    finally:
        _counters.remove(counter)


def _report(n: int) -> None:
    for c in _counters:
        c.add(n)


def _batch_size(shape: tuple, trailing: int) -> int:
    return int(np.prod(shape[: len(shape) - trailing], dtype=np.int64))


def _out_dtype(x: np.ndarray):
    return x.dtype if x.dtype in (np.float32, np.float64) else np.float64


def conv_output_length(length: int, kernel: int, stride: int, pad: Pad) -> int:
    return (length + pad[0] + pad[1] - kernel) // stride + 1


def conv1d(
    x: np.ndarray,
    w: np.ndarray,
    bias: Optional[np.ndarray] = None,
    stride: int = 1,
    pad: Pad = (0, 0),
    groups: int = 1,
) -> np.ndarray:
    """Grouped 1-D convolution.

    x: (..., Cin, L); w: (Cout, Cin // groups, K); returns (..., Cout, L').
    """
    cin, length = x.shape[-2:]
    cout, cin_g, k = w.shape
    if groups < 1 or cin % groups or cout % groups or cin_g * groups != cin:
        raise ConfigError(f"conv1d: Cin={cin}, Cout={cout} not compatible with groups={groups}")
    if k < 1 or stride < 1 or min(pad) < 0:
        raise ConfigError("conv1d: kernel and stride must be >= 1, padding >= 0")
    lout = conv_output_length(length, k, stride, pad)
    if lout <= 0:
        raise ConfigError(f"conv1d: empty output (L={length}, K={k}, S={stride}, pad={pad})")

    xp = x.astype(np.float64, copy=False)
    if pad != (0, 0):
        widths = [(0, 0)] * (x.ndim - 1) + [tuple(pad)]
        xp = np.pad(xp, widths)
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=-1)[..., : (lout - 1) * stride + 1 : stride, :]
    lead = x.shape[:-2]
    win = win.reshape(lead + (groups, cin_g, lout, k))
    wg = w.astype(np.float64, copy=False).reshape(groups, cout // groups, cin_g, k)
    out = np.einsum("...gclk,gock->...gol", win, wg, optimize=True).reshape(lead + (cout, lout))
    if bias is not None:
        out = out + bias.astype(np.float64)[:, None]
    _report(_batch_size(x.shape, 2) * lout * cout * cin_g * k)
    return out.astype(_out_dtype(x), copy=False)


def conv_transpose1d(
    x: np.ndarray,
    w: np.ndarray,
    bias: Optional[np.ndarray] = None,
    stride: int = 1,
    pad: Pad = (0, 0),
    groups: int = 1,
    out_len: Optional[int] = None,
) -> np.ndarray:
    """Grouped transposed 1-D convolution, the adjoint of :func:`conv1d`.

    x: (..., Cin, L); w: (Cin, Cout // groups, K). The full-length result
    ((L-1)*S + K samples) is cropped by ``pad``. When ``out_len`` is given the
    crop keeps ``pad[0]`` on the left and the result is truncated or
    zero-extended on the right to exactly ``out_len`` samples; this is the
    exact adjoint of a conv1d whose input had ``out_len`` samples.
    """
    cin, length = x.shape[-2:]
    cin_w, cout_g, k = w.shape
    if cin_w != cin or groups < 1 or cin % groups:
        raise ConfigError(f"conv_transpose1d: weight {w.shape} incompatible with Cin={cin}, groups={groups}")
    if k < 1 or stride < 1 or min(pad) < 0:
        raise ConfigError("conv_transpose1d: kernel and stride must be >= 1, padding >= 0")
    cout = cout_g * groups
    cin_g = cin // groups
    full = (length - 1) * stride + k
    if out_len is None:
        out_len = full - pad[0] - pad[1]
    if out_len <= 0:
        raise ConfigError("conv_transpose1d: empty output")

    lead = x.shape[:-2]
    xg = x.astype(np.float64, copy=False).reshape(lead + (groups, cin_g, length))
    wg = w.astype(np.float64, copy=False).reshape(groups, cin_g, cout_g, k)
    taps = np.einsum("...gct,gcok->...gotk", xg, wg, optimize=True).reshape(lead + (cout, length, k))
    buf = np.zeros(lead + (cout, full), dtype=np.float64)
    span = (length - 1) * stride + 1
    for j in range(k):
        buf[..., j : j + span : stride] += taps[..., j]
    out = buf[..., pad[0] : pad[0] + out_len]
    if out.shape[-1] < out_len:
        widths = [(0, 0)] * (out.ndim - 1) + [(0, out_len - out.shape[-1])]
        out = np.pad(out, widths)
    if bias is not None:
        out = out + bias.astype(np.float64)[:, None]
    _report(_batch_size(x.shape, 2) * length * cin * cout_g * k)
    return out.astype(_out_dtype(x), copy=False)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched row-major GEMM: (..., m, k) @ (..., k, n)."""
    if a.shape[-1] != b.shape[-2]:
        raise ConfigError(f"matmul: inner dimensions differ ({a.shape} @ {b.shape})")
    out = np.matmul(a.astype(np.float64, copy=False), b.astype(np.float64, copy=False))
    m, k = a.shape[-2:]
    n = b.shape[-1]
    _report(_batch_size(out.shape, 2) * m * k * n)
    return out.astype(_out_dtype(a), copy=False)


def linear(x: np.ndarray, w: np.ndarray, bias: Optional[np.ndarray] = None) -> np.ndarray:
    """Position-wise affine map: x (..., L, Din) @ w (Din, Dout) + bias."""
    lead = x.shape[:-1]
    out = matmul(x.reshape(-1, x.shape[-1]), w).reshape(lead + (w.shape[1],))
    if bias is not None:
        out = (out.astype(np.float64) + bias).astype(out.dtype)
    return out


def softmax_rows(x: np.ndarray, additive_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Row-wise softmax over the last axis with an optional additive mask.

    The mask holds 0 for visible and -inf for hidden entries; hidden entries
    come out exactly 0. A row with no visible entry is a contract error.
    """
    z = x.astype(np.float64)
    if additive_mask is not None:
        if additive_mask.shape != x.shape[-additive_mask.ndim :]:
            raise ConfigError(f"softmax_rows: mask {additive_mask.shape} does not match {x.shape}")
        z = z + additive_mask
    row_max = z.max(axis=-1, keepdims=True)
    if not np.all(np.isfinite(row_max)):
        raise ConfigError("softmax_rows: fully masked row")
    e = np.exp(z - row_max)
    out = e / e.sum(axis=-1, keepdims=True)
    return out.astype(_out_dtype(x), copy=False)


def rms_group_norm(x: np.ndarray, gamma: np.ndarray, groups: int = 1, eps: float = 1e-5) -> np.ndarray:
    """RMS normalisation over channel groups of the last axis, then scale by gamma."""
    d = x.shape[-1]
    if groups < 1 or d % groups:
        raise ConfigError(f"rms_group_norm: D={d} not divisible by groups={groups}")
    xg = x.astype(np.float64).reshape(x.shape[:-1] + (groups, d // groups))
    ms = np.mean(xg * xg, axis=-1, keepdims=True)
    y = (xg / np.sqrt(ms + eps)).reshape(x.shape) * gamma.astype(np.float64)
    return y.astype(_out_dtype(x), copy=False)


def sigmoid(x: np.ndarray) -> np.ndarray:
    z = x.astype(np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out.astype(_out_dtype(x), copy=False)


def swish(x: np.ndarray) -> np.ndarray:
    z = x.astype(np.float64)
    return (z * sigmoid(z)).astype(_out_dtype(x), copy=False)


def channel_shuffle(x: np.ndarray, groups: int, axis: int = -2) -> np.ndarray:
    """Interleave channels across groups: (G, C/G) -> (C/G, G) along ``axis``."""
    c = x.shape[axis]
    if c % groups:
        raise ConfigError(f"channel_shuffle: {c} channels not divisible by {groups} groups")
    xm = np.moveaxis(x, axis, -1)
    xm = xm.reshape(xm.shape[:-1] + (groups, c // groups)).swapaxes(-1, -2).reshape(xm.shape)
    return np.moveaxis(xm, -1, axis)
