"""TF-Locoformer sub-blocks: Conv-SwiGLU feed-forward, MHSA with RoPE, and the
frequency-then-temporal block.

Sequences are laid out (batch, length, channels). Weights are looked up by
name in a flat mapping; ``prefix`` selects the sub-tree of one layer.

The temporal-path functions accept an optional ``state`` dict. When present,
the call processes only the *new* rows of a sequence whose earlier rows were
seen in previous calls: causal convolutions read their left context from
history buffers and attention reads keys/values from a cache. This is how the
streaming engine reuses the offline code path.
"""

from __future__ import annotations

import math
from typing import Mapping, Optional

import numpy as np

from .config import FfnConfig, SubBlockConfig
from .kernels import (
    ConfigError,
    channel_shuffle,
    conv1d,
    conv_transpose1d,
    linear,
    matmul,
    rms_group_norm,
    softmax_rows,
    swish,
)

Weights = Mapping[str, np.ndarray]
ROPE_BASE = 10000.0


def same_pad(kernel: int) -> tuple[int, int]:
    left = (kernel - 1) // 2
    return left, kernel - 1 - left


# --- weight shapes ------------------------------------------------------------


def ffn_shapes(prefix: str, cfg: FfnConfig, dim: int) -> dict[str, tuple]:
    if not cfg.present:
        return {}
    c, k = cfg.hidden, cfg.kernel
    shapes: dict[str, tuple] = {f"{prefix}.norm": (dim,)}
    if cfg.variant == "prompt_aware":
        shapes.update(
            {
                f"{prefix}.prompt.lin_a.weight": (dim, c),
                f"{prefix}.prompt.lin_a.bias": (c,),
                f"{prefix}.prompt.lin_b.weight": (dim, c),
                f"{prefix}.prompt.lin_b.bias": (c,),
                f"{prefix}.prompt.lin_out.weight": (c, dim),
                f"{prefix}.prompt.lin_out.bias": (dim,),
            }
        )
    if cfg.depthwise_separable:
        for name in ("conv_a", "conv_b"):
            shapes[f"{prefix}.{name}.dw"] = (dim, 1, k)
            shapes[f"{prefix}.{name}.weight"] = (c, dim, 1)
            shapes[f"{prefix}.{name}.bias"] = (c,)
        shapes[f"{prefix}.out.pw"] = (dim, c, 1)
        shapes[f"{prefix}.out.dw"] = (dim, 1, k)
        shapes[f"{prefix}.out.bias"] = (dim,)
        return shapes
    gi, go = cfg.groups_for("input"), cfg.groups_for("output")
    for name in ("conv_a", "conv_b"):
        shapes[f"{prefix}.{name}.weight"] = (c, dim // gi, k)
        shapes[f"{prefix}.{name}.bias"] = (c,)
    # causal: forward conv C -> D; otherwise transposed conv stored (C, D/G, K)
    shapes[f"{prefix}.out.weight"] = (dim, c // go, k) if cfg.causal else (c, dim // go, k)
    shapes[f"{prefix}.out.bias"] = (dim,)
    return shapes


def mhsa_shapes(prefix: str, dim: int, attn_dim: int) -> dict[str, tuple]:
    return {
        f"{prefix}.norm": (dim,),
        f"{prefix}.q": (dim, attn_dim),
        f"{prefix}.k": (dim, attn_dim),
        f"{prefix}.v": (dim, attn_dim),
        f"{prefix}.o": (attn_dim, dim),
    }


def sub_block_shapes(prefix: str, cfg: SubBlockConfig) -> dict[str, tuple]:
    shapes = ffn_shapes(f"{prefix}.ffn1", cfg.ffn1, cfg.dim)
    shapes.update(mhsa_shapes(f"{prefix}.attn", cfg.dim, cfg.attn_dim))
    shapes.update(ffn_shapes(f"{prefix}.ffn2", cfg.ffn2, cfg.dim))
    return shapes


# --- feed-forward ------------------------------------------------------------


def _history(state: dict, key: str, new: np.ndarray, keep: int) -> np.ndarray:
    """Prepend the stored history of ``key`` to ``new`` (B, C, L) and store the tail."""
    hist = state.get(key)
    if hist is None:
        hist = np.zeros(new.shape[:-1] + (keep,), dtype=new.dtype)
    full = np.concatenate([hist, new], axis=-1)
    state[key] = full[..., full.shape[-1] - keep :]
    return full


def _conv_ffn_core(h: np.ndarray, w: Weights, p: str, cfg: FfnConfig, state: Optional[dict]) -> np.ndarray:
    """Gated convolutions and output projection on normalised rows h (B, L, D)."""
    b, length, dim = h.shape
    k, s = cfg.kernel, cfg.stride
    x = np.swapaxes(h, 1, 2)
    if cfg.causal or state is not None:
        if s != 1:
            raise ConfigError("streaming/causal FFN requires stride 1")
        gi, go = cfg.groups_for("input"), cfg.groups_for("output")
        if state is not None:
            x = _history(state, "in", x, k - 1)
            pad = (0, 0)
        else:
            pad = (k - 1, 0)
        a = conv1d(x, w[f"{p}.conv_a.weight"], w[f"{p}.conv_a.bias"], 1, pad, gi)
        g = conv1d(x, w[f"{p}.conv_b.weight"], w[f"{p}.conv_b.bias"], 1, pad, gi)
        g = _gate(a, g, cfg)
        if state is not None:
            g = _history(state, "gate", g, k - 1)
        if cfg.causal:
            y = conv1d(g, w[f"{p}.out.weight"], w[f"{p}.out.bias"], 1, pad, go)
        else:  # pointwise kernel: transposed conv with K=1 is position-wise
            y = conv_transpose1d(g, w[f"{p}.out.weight"], w[f"{p}.out.bias"], 1, (0, 0), go)
        return np.swapaxes(y, 1, 2)

    padded = -(-length // s) * s
    if padded != length:
        x = np.pad(x, ((0, 0), (0, 0), (0, padded - length)))
    pad = same_pad(k)
    if cfg.depthwise_separable:
        a = conv1d(conv1d(x, w[f"{p}.conv_a.dw"], None, s, pad, dim), w[f"{p}.conv_a.weight"], w[f"{p}.conv_a.bias"])
        g = conv1d(conv1d(x, w[f"{p}.conv_b.dw"], None, s, pad, dim), w[f"{p}.conv_b.weight"], w[f"{p}.conv_b.bias"])
        g = _gate(a, g, cfg)
        y = conv1d(g, w[f"{p}.out.pw"])
        y = conv_transpose1d(y, w[f"{p}.out.dw"], w[f"{p}.out.bias"], s, pad, dim, out_len=padded)
    else:
        gi, go = cfg.groups_for("input"), cfg.groups_for("output")
        a = conv1d(x, w[f"{p}.conv_a.weight"], w[f"{p}.conv_a.bias"], s, pad, gi)
        g = conv1d(x, w[f"{p}.conv_b.weight"], w[f"{p}.conv_b.bias"], s, pad, gi)
        g = _gate(a, g, cfg)
        y = conv_transpose1d(g, w[f"{p}.out.weight"], w[f"{p}.out.bias"], s, pad, go, out_len=padded)
    return np.swapaxes(y[..., :length], 1, 2)


def _gate(a: np.ndarray, b: np.ndarray, cfg: FfnConfig) -> np.ndarray:
    g = (swish(a).astype(np.float64) * b).astype(a.dtype)
    if cfg.channel_shuffle and cfg.conv_groups > 1:
        g = channel_shuffle(g, cfg.conv_groups, axis=-2)
    return g


def conv_swiglu_ffn(
    seq: np.ndarray,
    weights: Weights,
    prefix: str,
    cfg: FfnConfig,
    norm_groups: int = 1,
    state: Optional[dict] = None,
) -> np.ndarray:
    """seq + OutConv(Swish(ConvA(Norm(seq))) * ConvB(Norm(seq))); length preserved."""
    if cfg.variant not in ("standard", "pointwise", "prompt_aware"):
        raise ConfigError(f"conv_swiglu_ffn cannot run variant {cfg.variant!r}")
    if seq.shape[1] == 0:
        return seq
    h = rms_group_norm(seq, weights[f"{prefix}.norm"], norm_groups)
    return seq + _conv_ffn_core(h, weights, prefix, cfg, state)


def prompt_aware_ffn(
    seq: np.ndarray,
    n_prompt: int,
    weights: Weights,
    prefix: str,
    cfg: FfnConfig,
    norm_groups: int = 1,
    state: Optional[dict] = None,
) -> np.ndarray:
    """Position-wise SwiGLU on the first ``n_prompt`` rows, Conv-SwiGLU on the rest."""
    if cfg.variant != "prompt_aware":
        raise ConfigError("prompt_aware_ffn needs a prompt_aware FFN config")
    if not 0 <= n_prompt <= seq.shape[1]:
        raise ConfigError(f"n_prompt={n_prompt} exceeds sequence length {seq.shape[1]}")
    p = f"{prefix}.prompt"
    out = []
    if n_prompt:
        prompts = seq[:, :n_prompt]
        h = rms_group_norm(prompts, weights[f"{prefix}.norm"], norm_groups)
        a = linear(h, weights[f"{p}.lin_a.weight"], weights[f"{p}.lin_a.bias"])
        b = linear(h, weights[f"{p}.lin_b.weight"], weights[f"{p}.lin_b.bias"])
        g = (swish(a).astype(np.float64) * b).astype(a.dtype)
        out.append(prompts + linear(g, weights[f"{p}.lin_out.weight"], weights[f"{p}.lin_out.bias"]))
    if n_prompt < seq.shape[1]:
        out.append(conv_swiglu_ffn(seq[:, n_prompt:], weights, prefix, cfg, norm_groups, state))
    return np.concatenate(out, axis=1)


def apply_ffn(seq, n_prompt, weights, prefix, cfg: FfnConfig, norm_groups, state=None):
    if not cfg.present:
        return seq
    if cfg.variant == "prompt_aware":
        return prompt_aware_ffn(seq, n_prompt, weights, prefix, cfg, norm_groups, state)
    return conv_swiglu_ffn(seq, weights, prefix, cfg, norm_groups, state)


# --- attention -----------------------------------------------------------------


def rope_rotate(x: np.ndarray, positions) -> np.ndarray:
    """Rotate consecutive channel pairs of x (..., L, E) by pos * 10000^(-2i/E)."""
    e = x.shape[-1]
    if e % 2:
        raise ConfigError("RoPE needs an even head dimension")
    pos = np.asarray(positions, dtype=np.float64)
    if pos.shape != (x.shape[-2],):
        raise ConfigError("one position per row required")
    inv = ROPE_BASE ** (-np.arange(0, e, 2, dtype=np.float64) / e)
    ang = pos[:, None] * inv[None, :]
    cos, sin = np.cos(ang), np.sin(ang)
    xf = x.astype(np.float64)
    even, odd = xf[..., 0::2], xf[..., 1::2]
    out = np.empty_like(xf)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out.astype(x.dtype, copy=False)


def _heads(x: np.ndarray, h: int) -> np.ndarray:
    b, length, e = x.shape
    return x.reshape(b, length, h, e // h).transpose(0, 2, 1, 3)


def mhsa(
    seq: np.ndarray,
    weights: Weights,
    prefix: str,
    heads: int,
    mask: Optional[np.ndarray] = None,
    positions=None,
    rope: bool = True,
    norm_groups: int = 1,
    cache: Optional[dict] = None,
) -> np.ndarray:
    """Pre-norm multi-head self-attention with residual.

    mask: boolean (L_q, L_k) visibility, None for full attention. With a
    ``cache`` the keys/values of earlier calls are prepended (and the new
    ones stored), so L_k = cached + L_q.
    """
    b, length, _ = seq.shape
    if length == 0:
        return seq
    h = rms_group_norm(seq, weights[f"{prefix}.norm"], norm_groups)
    q = _heads(linear(h, weights[f"{prefix}.q"]), heads)
    k = _heads(linear(h, weights[f"{prefix}.k"]), heads)
    v = _heads(linear(h, weights[f"{prefix}.v"]), heads)
    if positions is None:
        positions = np.arange(length)
    if rope:
        q, k = rope_rotate(q, positions), rope_rotate(k, positions)
    if cache is not None:
        if "k" in cache:
            k = np.concatenate([cache["k"], k], axis=2)
            v = np.concatenate([cache["v"], v], axis=2)
        cache["k"], cache["v"] = k, v
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = (matmul(q, np.swapaxes(k, -1, -2)).astype(np.float64) * scale).astype(q.dtype)
    add = None
    if mask is not None:
        if mask.shape != scores.shape[-2:]:
            raise ConfigError(f"mask shape {mask.shape} does not match attention {scores.shape[-2:]}")
        add = np.where(mask, 0.0, -np.inf)
    probs = softmax_rows(scores, add)
    o = matmul(probs, v).transpose(0, 2, 1, 3).reshape(b, length, -1)
    return seq + linear(o, weights[f"{prefix}.o"])


# --- sub-block and block -------------------------------------------------------


def tf_loco_sub_block(
    seq: np.ndarray,
    weights: Weights,
    prefix: str,
    cfg: SubBlockConfig,
    mask: Optional[np.ndarray] = None,
    positions=None,
    n_prompt: int = 0,
    state: Optional[dict] = None,
) -> np.ndarray:
    """FFN1 (if present) -> Norm + MHSA -> FFN2 (if present), each with residual."""
    st = (lambda key: state.setdefault(key, {})) if state is not None else (lambda key: None)
    seq = apply_ffn(seq, n_prompt, weights, f"{prefix}.ffn1", cfg.ffn1, cfg.norm_groups, st("ffn1"))
    seq = mhsa(seq, weights, f"{prefix}.attn", cfg.heads, mask, positions, cfg.rope, cfg.norm_groups, st("attn"))
    seq = apply_ffn(seq, n_prompt, weights, f"{prefix}.ffn2", cfg.ffn2, cfg.norm_groups, st("ffn2"))
    return seq


def loco_block_tokens(
    x: np.ndarray,
    weights: Weights,
    prefix: str,
    freq_cfg: SubBlockConfig,
    time_cfg: SubBlockConfig,
    mask: Optional[np.ndarray] = None,
    time_positions=None,
    n_prompt: int = 0,
    time_state: Optional[dict] = None,
) -> np.ndarray:
    """Block on token-major features x of shape (..., T', F, D).

    Leading axes are extra batch axes (used to run all prompts' extraction at once).
    """
    *lead, t, f, d = x.shape
    x = tf_loco_sub_block(x.reshape(-1, f, d), weights, f"{prefix}.freq", freq_cfg, None, np.arange(f))
    xt = np.swapaxes(x.reshape(*lead, t, f, d), -3, -2)  # (..., F, T', D)
    xt = tf_loco_sub_block(
        xt.reshape(-1, t, d), weights, f"{prefix}.time", time_cfg, mask, time_positions, n_prompt, time_state
    )
    return np.swapaxes(xt.reshape(*lead, f, t, d), -3, -2)


def tf_loco_block(
    x: np.ndarray,
    weights: Weights,
    prefix: str,
    freq_cfg: SubBlockConfig,
    time_cfg: SubBlockConfig,
    mask: Optional[np.ndarray] = None,
    time_positions=None,
    n_prompt: int = 0,
) -> np.ndarray:
    """x: (D, T', F). Frequency path per frame, then temporal path per band (masked)."""
    tok = np.transpose(x, (1, 2, 0))
    out = loco_block_tokens(tok, weights, prefix, freq_cfg, time_cfg, mask, time_positions, n_prompt)
    return np.transpose(out, (2, 0, 1))
