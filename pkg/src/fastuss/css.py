"""Continuous source separation: fixed-length chunks, independent separation, cross-faded stitching."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .config import ModelConfig
from .kernels import ConfigError
from .model import parse_prompts, separate

SeparateFn = Callable[[np.ndarray, Sequence, object, ModelConfig], list]


@dataclass(frozen=True)
class ChunkPlan:
    chunk_len: int
    hop: int
    windows: tuple[tuple[int, int], ...]

    @property
    def crossfade_len(self) -> int:
        return self.chunk_len - self.hop if len(self.windows) > 1 else 0

    def __len__(self) -> int:
        return len(self.windows)


def chunk_plan(total_len: int, chunk_s: float, overlap_frac: float, sample_rate: int) -> ChunkPlan:
    """Spans [start, end) of ``chunk_s`` seconds every ``chunk_s * (1 - overlap)`` seconds.

    The last span is truncated at the end of the signal.
    """
    if not 0 <= overlap_frac < 1:
        raise ConfigError("overlap must be in [0, 1)")
    if chunk_s <= 0 or total_len < 1:
        raise ConfigError("chunk length and signal length must be positive")
    chunk = max(1, round(chunk_s * sample_rate))
    hop = max(1, round(chunk * (1 - overlap_frac)))
    if total_len <= chunk:
        return ChunkPlan(total_len, total_len, ((0, total_len),))
    n = math.ceil((total_len - chunk) / hop) + 1
    windows = tuple((i * hop, min(i * hop + chunk, total_len)) for i in range(n))
    return ChunkPlan(chunk, hop, windows)


def crossfade_weights(plan: ChunkPlan, total_len: int) -> list[np.ndarray]:
    """Per-span blend weights that sum to one at every sample.

    Each span gets a strictly positive triangle; dividing by the pointwise sum
    turns the triangles into linear cross-fades where spans overlap and into
    exact ones elsewhere.
    """
    raw = []
    for s, e in plan.windows:
        k = np.arange(e - s, dtype=np.float64)
        raw.append(np.minimum(k + 1.0, (e - s) - k))
    total = np.zeros(total_len)
    for (s, e), r in zip(plan.windows, raw):
        total[s:e] += r
    return [r / total[s:e] for (s, e), r in zip(plan.windows, raw)]


def css_separate(
    x: np.ndarray,
    prompts: Sequence,
    weights,
    cfg: ModelConfig,
    chunk_s: float,
    overlap_frac: float,
    separate_fn: Optional[SeparateFn] = None,
) -> list[np.ndarray]:
    """Separate every chunk independently and blend the per-prompt outputs."""
    separate_fn = separate_fn or separate
    prompts = parse_prompts(prompts, cfg.max_prompts)
    x = np.asarray(x)
    plan = chunk_plan(len(x), chunk_s, overlap_frac, cfg.frontend.sample_rate)
    if len(plan) == 1:
        return separate_fn(x, prompts, weights, cfg)
    min_len = cfg.frontend.n_fft // 2 + 1
    blend = crossfade_weights(plan, len(x))
    out = [np.zeros(len(x)) for _ in prompts]
    for (s, e), wgt in zip(plan.windows, blend):
        seg = x[s:e]
        if len(seg) < min_len:  # a tail too short to frame: pad, separate, trim
            seg = np.pad(seg, (0, min_len - len(seg)))
        ys = separate_fn(seg, prompts, weights, cfg)
        for n, y in enumerate(ys):
            out[n][s:e] += wgt * y[: e - s]
    return [o.astype(x.dtype if x.dtype.kind == "f" else np.float64) for o in out]
