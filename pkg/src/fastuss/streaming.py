"""Frame-by-frame causal inference with key/value caches and causal-conv history.

The prompt block is processed once at init; afterwards each STFT frame is
encoded, run through the frequency paths (per-frame by construction) and the
temporal paths using the cached keys/values of every earlier token. The code
path is the offline one (``blocks.loco_block_tokens``) with a state dict
threaded through, which is what makes the two numerically equivalent.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .blocks import loco_block_tokens
from .config import ModelConfig
from .dsp import BandLayout, OverlapAdd, decode_frames, encode_frames, frontend_window, layout_for, stft
from .kernels import ConfigError
from .masks import build_mask, is_stream_realizable
from .model import PromptId, cross_prompt_tokens, parse_prompts, prompt_tokens, separate


@dataclass
class StepOutput:
    features: np.ndarray  # (N, F, D) extraction-stage output for this frame
    planes: np.ndarray  # (N, 2, n_bins) decoded spectrogram column
    audio: list[np.ndarray]  # per prompt: samples finalised by this frame


@dataclass
class StreamState:
    config: ModelConfig
    weights: object
    prompts: list[PromptId]
    n_prompt: int  # prompts + <SOS>
    prompt_out: np.ndarray  # P~ as (N, F, D), frozen after init
    layout: BandLayout
    cross_state: list[dict]
    tse_state: list[dict]
    synth: list[OverlapAdd]
    frames_fed: int = 0
    dtype: np.dtype = field(default=np.dtype(np.float32))

    def cache_tokens(self) -> int:
        """Tokens held by the cross-prompt temporal caches (equals N' + frames_fed)."""
        return self.cross_state[0]["attn"]["k"].shape[2] if self.cross_state else self.n_prompt + self.frames_fed

    def prompt_kv_checksum(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        for st in self.cross_state:
            for key in ("k", "v"):
                h.update(np.ascontiguousarray(st["attn"][key][:, :, : self.n_prompt]).tobytes())
        return h.hexdigest()


def _check_streamable(cfg: ModelConfig) -> None:
    # two frames are enough to tell a lower-triangular D block from a full one
    mask = build_mask(cfg.mask_variant, 1, cfg.sos, 2)
    if not is_stream_realizable(mask):
        raise ConfigError(f"mask {cfg.mask_variant.value} cannot be evaluated frame by frame; use a CAUSAL preset")
    for sb in (cfg.cross.time, cfg.tse.time):
        for ffn in (sb.ffn1, sb.ffn2):
            if ffn.present and ffn.kernel > 1 and not ffn.causal:
                raise ConfigError("streaming needs causal temporal convolutions")


def stream_init(cfg: ModelConfig, weights, prompts: Sequence) -> StreamState:
    _check_streamable(cfg)
    prompts = parse_prompts(prompts, cfg.max_prompts)
    dtype = np.dtype(weights["prompt.embedding"].dtype)
    layout = layout_for(cfg.frontend)
    f, d = len(layout), cfg.dim
    pt = prompt_tokens(prompts, weights, cfg).astype(dtype)
    n_prompt = pt.shape[0]
    x = np.broadcast_to(pt[:, None, :], (n_prompt, f, d)).copy()
    a_block = build_mask(cfg.mask_variant, len(prompts), cfg.sos, 0).bits
    pos = np.zeros(n_prompt, dtype=np.int64)
    cross_state = []
    for i in range(cfg.cross.blocks):
        st: dict = {}
        x = loco_block_tokens(x, weights, f"cross.{i}", cfg.cross.freq, cfg.cross.time, a_block, pos, n_prompt, st)
        cross_state.append(st)
    fe = cfg.frontend
    window = frontend_window(fe)
    synth = [OverlapAdd(fe.n_fft, fe.hop, window, dtype) for _ in prompts]
    prompt_out = x[: len(prompts)].copy()
    prompt_out.flags.writeable = False
    return StreamState(
        cfg, weights, prompts, n_prompt, prompt_out, layout, cross_state, [{} for _ in range(cfg.tse.blocks)], synth, 0, dtype
    )


def stream_step(state: Optional[StreamState], frame: np.ndarray) -> StepOutput:
    """Feed one spectrogram column, shape (2, n_bins)."""
    if state is None:
        raise ConfigError("stream_step called before stream_init")
    cfg, w = state.config, state.weights
    frame = np.asarray(frame, dtype=state.dtype)
    if frame.shape != (2, state.layout.n_bins):
        raise ConfigError(f"frame must have shape (2, {state.layout.n_bins}), got {frame.shape}")
    pos = np.array([state.frames_fed + 1])
    x = encode_frames(frame[:, None, :], state.layout, w, cfg.dim)  # (1, F, D)
    for i in range(cfg.cross.blocks):
        x = loco_block_tokens(x, w, f"cross.{i}", cfg.cross.freq, cfg.cross.time, None, pos, 0, state.cross_state[i])
    zn = x[None] * state.prompt_out[:, None]  # (N, 1, F, D)
    for i in range(cfg.tse.blocks):
        zn = loco_block_tokens(zn, w, f"tse.{i}", cfg.tse.freq, cfg.tse.time, None, pos, 0, state.tse_state[i])
    planes = decode_frames(zn, state.layout, w)[:, :, 0]  # (N, 2, n_bins)
    audio = [syn.push(planes[n]) for n, syn in enumerate(state.synth)]
    state.frames_fed += 1
    return StepOutput(zn[:, 0], planes, audio)


def stream_flush(state: StreamState) -> list[np.ndarray]:
    """Release the samples still held in the overlap-add buffers."""
    return [syn.flush() for syn in state.synth]


def stream_separate(x: np.ndarray, prompts: Sequence, weights, cfg: ModelConfig) -> tuple[list[np.ndarray], np.ndarray]:
    """Drive the stream over a whole waveform; returns (waveforms, features (N, T, F, D))."""
    fe = cfg.frontend
    state = stream_init(cfg, weights, prompts)
    spec = stft(np.asarray(x).astype(state.dtype), fe.n_fft, fe.hop, frontend_window(fe), fe.sample_rate)
    chunks = [[] for _ in state.prompts]
    feats = []
    for t in range(spec.n_frames):
        out = stream_step(state, spec.values[:, t])
        feats.append(out.features)
        for n, a in enumerate(out.audio):
            chunks[n].append(a)
    for n, a in enumerate(stream_flush(state)):
        chunks[n].append(a)
    waves = [np.concatenate(c)[: len(x)] for c in chunks]
    return waves, np.stack(feats, axis=1)


def offline_causal_forward(x: np.ndarray, prompts: Sequence, weights, cfg: ModelConfig) -> list[np.ndarray]:
    """Whole-sequence evaluation under the CAUSAL mask: the reference for the stream."""
    _check_streamable(cfg)
    return separate(x, prompts, weights, cfg)


def offline_prompt_outputs(prompts: Sequence, weights, cfg: ModelConfig) -> np.ndarray:
    """P~ (N, F, D) from a whole-sequence pass over zero frames."""
    prompts = parse_prompts(prompts, cfg.max_prompts)
    dtype = weights["prompt.embedding"].dtype
    empty = np.zeros((0, len(layout_for(cfg.frontend)), cfg.dim), dtype=dtype)
    p, _ = cross_prompt_tokens(empty, prompts, weights, cfg)
    return p
