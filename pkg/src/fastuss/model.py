"""TUSS assembly: prompt vocabulary, weight bundles, and the end-to-end forward pass."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .blocks import loco_block_tokens, sub_block_shapes
from .config import ModelConfig
from .dsp import Spectrogram, decode_frames, encode_frames, frontend_window, istft, layout_for, stft
from .kernels import ConfigError
from .masks import MaskVariant, build_mask, temporal_mask
from .rng import Xoshiro256, tensor_seed


class PromptId(str, enum.Enum):
    SPEECH = "Speech"
    SFX = "SFX"
    SFX_MIX = "SFX-mix"
    BASS = "Bass"
    DRUMS = "Drums"
    VOCALS = "Vocals"
    OTHER_INST = "Other-inst"
    MUSIC_MIX = "Music-mix"

    @property
    def index(self) -> int:
        return list(PromptId).index(self)

    @classmethod
    def parse(cls, tag: "str | PromptId") -> "PromptId":
        if isinstance(tag, PromptId):
            return tag
        for p in cls:
            if p.value.lower() == str(tag).strip().lower():
                return p
        raise ConfigError(f"unknown prompt {tag!r}; vocabulary: {', '.join(p.value for p in cls)}")


REPEATABLE = frozenset({PromptId.SPEECH, PromptId.SFX})


def parse_prompts(prompts: Iterable["str | PromptId"], max_prompts: int = 8) -> list[PromptId]:
    out = [PromptId.parse(p) for p in prompts]
    if not 1 <= len(out) <= max_prompts:
        raise ConfigError(f"need between 1 and {max_prompts} prompts, got {len(out)}")
    seen = set()
    for p in out:
        if p in seen and p not in REPEATABLE:
            raise ConfigError(f"prompt {p.value!r} may not repeat (only Speech and SFX can)")
        seen.add(p)
    return out


# --- weights -------------------------------------------------------------------


@dataclass(frozen=True)
class TensorSpec:
    shape: tuple
    init: str  # "uniform", "ones" or "zeros"
    fan_in: int = 1


def _spec(name: str, shape: tuple) -> TensorSpec:
    leaf = name.rsplit(".", 1)[-1]
    if leaf == "norm":
        return TensorSpec(shape, "ones")
    if leaf == "bias":
        return TensorSpec(shape, "zeros")
    if name in ("prompt.embedding", "sos"):
        return TensorSpec(shape, "uniform", 1)
    if len(shape) == 2:  # linear (Din, Dout)
        return TensorSpec(shape, "uniform", shape[0])
    if leaf == "dw" and ".out." in name:  # depthwise transposed conv (D, 1, K)
        return TensorSpec(shape, "uniform", shape[2])
    return TensorSpec(shape, "uniform", shape[1] * shape[2])  # conv (Cout, Cin/G, K)


def weight_specs(cfg: ModelConfig) -> dict[str, TensorSpec]:
    """Every tensor of the model with its shape and initialiser, in file order."""
    layout = layout_for(cfg.frontend)
    d = cfg.dim
    shapes: dict[str, tuple] = {}
    for b, w in enumerate(layout.widths):
        shapes[f"encoder.{b}.norm"] = (2 * w,)
        shapes[f"encoder.{b}.weight"] = (2 * w, d)
        shapes[f"encoder.{b}.bias"] = (d,)
    shapes["prompt.embedding"] = (len(PromptId), d)
    if cfg.sos:
        shapes["sos"] = (d,)
    transposed = set()
    for stage, sc in (("cross", cfg.cross), ("tse", cfg.tse)):
        for i in range(sc.blocks):
            for path, sb in (("freq", sc.freq), ("time", sc.time)):
                prefix = f"{stage}.{i}.{path}"
                shapes.update(sub_block_shapes(prefix, sb))
                for k, ffn in (("ffn1", sb.ffn1), ("ffn2", sb.ffn2)):
                    if ffn.present and not ffn.causal and not ffn.depthwise_separable:
                        transposed.add(f"{prefix}.{k}.out.weight")
    for b, w in enumerate(layout.widths):
        shapes[f"decoder.{b}.norm"] = (d,)
        shapes[f"decoder.{b}.fc1.weight"] = (d, 4 * d)
        shapes[f"decoder.{b}.fc1.bias"] = (4 * d,)
        shapes[f"decoder.{b}.fc2.weight"] = (4 * d, 4 * w)
        shapes[f"decoder.{b}.fc2.bias"] = (4 * w,)
    specs = {}
    for name, shape in shapes.items():
        if name in transposed:
            # (Cin, Cout/G, K): each output sample gathers Cin/G * K/S inputs; use Cin/G * K
            groups = _groups_of(cfg, name)
            specs[name] = TensorSpec(shape, "uniform", shape[0] // groups * shape[2])
        else:
            specs[name] = _spec(name, shape)
    return specs


def _groups_of(cfg: ModelConfig, name: str) -> int:
    stage, _, path, ffn = name.split(".")[:4]
    sb = getattr(getattr(cfg, stage), path)
    return getattr(sb, ffn).groups_for("output")


def weight_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    return {k: v.shape for k, v in weight_specs(cfg).items()}


@dataclass
class WeightBundle(Mapping[str, np.ndarray]):
    tensors: dict[str, np.ndarray]
    config_hash: str
    seed: Optional[int] = None

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise ConfigError(f"weight bundle has no tensor {name!r}") from None

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def n_params(self) -> int:
        return sum(int(t.size) for t in self.tensors.values())

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    def astype(self, dtype) -> "WeightBundle":
        return WeightBundle({k: v.astype(dtype) for k, v in self.tensors.items()}, self.config_hash, self.seed)

    def check(self, cfg: ModelConfig) -> "WeightBundle":
        expected = weight_shapes(cfg)
        if set(expected) != set(self.tensors):
            missing = sorted(set(expected) - set(self.tensors))[:3]
            extra = sorted(set(self.tensors) - set(expected))[:3]
            raise ConfigError(f"weights do not match config (missing {missing}, unexpected {extra})")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ConfigError(f"{name}: shape {self.tensors[name].shape}, config expects {shape}")
        return self


def init_weights(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> WeightBundle:
    """Deterministic init: uniform(+-1/sqrt(fan_in)) weights, unit norm gains, zero biases."""
    tensors = {}
    for name, spec in weight_specs(cfg).items():
        n = int(np.prod(spec.shape))
        if spec.init == "ones":
            arr = np.ones(spec.shape)
        elif spec.init == "zeros":
            arr = np.zeros(spec.shape)
        else:
            bound = 1.0 / np.sqrt(spec.fan_in)
            arr = Xoshiro256(tensor_seed(seed, name)).uniform(n, -bound, bound).reshape(spec.shape)
        tensors[name] = arr.astype(dtype)
    return WeightBundle(tensors, cfg.hash, seed)


def zero_weights(cfg: ModelConfig, dtype=np.float64) -> WeightBundle:
    """All-zero bundle (norm gains included): every block reduces to its residual path."""
    return WeightBundle({k: np.zeros(s, dtype) for k, s in weight_shapes(cfg).items()}, cfg.hash, None)


# --- forward -------------------------------------------------------------------


def prompt_tokens(prompts: Sequence[PromptId], weights: Mapping[str, np.ndarray], cfg: ModelConfig) -> np.ndarray:
    """(N', D) rows: the selected prompt embeddings followed by <SOS>."""
    table = weights["prompt.embedding"]
    rows = [table[p.index] for p in prompts]
    if cfg.sos:
        rows.append(weights["sos"])
    return np.stack(rows)


def cross_positions(n_prompt: int, n_frames: int) -> np.ndarray:
    """Prompts and <SOS> share position 0; frames are numbered from 1."""
    return np.concatenate([np.zeros(n_prompt, dtype=np.int64), np.arange(1, n_frames + 1)])


def _cross_mask(cfg: ModelConfig, n_prompts: int, n_frames: int) -> Optional[np.ndarray]:
    if cfg.mask_variant is MaskVariant.FULL:
        return None
    return build_mask(cfg.mask_variant, n_prompts, cfg.sos, n_frames).bits


def cross_prompt_tokens(
    frames: np.ndarray, prompts: Sequence[PromptId], weights: Mapping[str, np.ndarray], cfg: ModelConfig
) -> tuple[np.ndarray, np.ndarray]:
    """frames (T, F, D) -> (P~ as (N, F, D), Z~ as (T, F, D))."""
    t, f, d = frames.shape
    n = len(prompts)
    pt = prompt_tokens(prompts, weights, cfg).astype(frames.dtype)
    n_prompt = pt.shape[0]
    x = np.concatenate([np.broadcast_to(pt[:, None, :], (n_prompt, f, d)), frames])
    mask = _cross_mask(cfg, n, t)
    pos = cross_positions(n_prompt, t)
    for i in range(cfg.cross.blocks):
        x = loco_block_tokens(x, weights, f"cross.{i}", cfg.cross.freq, cfg.cross.time, mask, pos, n_prompt)
    return x[:n], x[n_prompt:]


def cross_prompt_forward(z: np.ndarray, prompts, weights, cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Z (D, T, F) -> (P~ (N, D, F), Z~ (D, T, F))."""
    prompts = parse_prompts(prompts, cfg.max_prompts)
    p, zt = cross_prompt_tokens(np.transpose(z, (1, 2, 0)), prompts, weights, cfg)
    return np.transpose(p, (0, 2, 1)), np.transpose(zt, (2, 0, 1))


def condition(z: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Z~ (D, T, F) times p~_n (D, F), broadcast over frames."""
    if p.shape != (z.shape[0], z.shape[2]):
        raise ConfigError(f"prompt shape {p.shape} does not match features {z.shape}")
    return z * p[:, None, :]


def tse_tokens(x: np.ndarray, weights, cfg: ModelConfig) -> np.ndarray:
    """(..., T, F, D) conditioned features through the shared extraction stack."""
    t = x.shape[-3]
    mask = temporal_mask(cfg.mask_variant, t)
    pos = np.arange(1, t + 1)
    for i in range(cfg.tse.blocks):
        x = loco_block_tokens(x, weights, f"tse.{i}", cfg.tse.freq, cfg.tse.time, mask, pos)
    return x


def conditional_tse_forward(zn: np.ndarray, weights, cfg: ModelConfig) -> np.ndarray:
    """(D, T, F) -> (D, T, F)."""
    return np.transpose(tse_tokens(np.transpose(zn, (1, 2, 0)), weights, cfg), (2, 0, 1))


def forward_spectra(
    values: np.ndarray, prompts: Sequence[PromptId], weights, cfg: ModelConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Spectrogram planes (2, T, n_bins) -> (TSE features (N, T, F, D), output planes (N, 2, T, n_bins))."""
    layout = layout_for(cfg.frontend)
    frames = encode_frames(values, layout, weights, cfg.dim)
    p, z = cross_prompt_tokens(frames, prompts, weights, cfg)
    zn = z[None] * p[:, None]  # element-wise conditioning, prompt tiled over frames
    feats = tse_tokens(zn, weights, cfg)
    return feats, decode_frames(feats, layout, weights)


def separate(x: np.ndarray, prompts, weights, cfg: ModelConfig) -> list[np.ndarray]:
    """Mixture waveform -> one waveform of the same length per prompt, in prompt order."""
    prompts = parse_prompts(prompts, cfg.max_prompts)
    x = np.asarray(x)
    if x.ndim != 1 or len(x) == 0:
        raise ConfigError("separate expects a non-empty mono waveform")
    dtype = np.dtype(weights["prompt.embedding"].dtype)
    fe = cfg.frontend
    window = frontend_window(fe)
    spec = stft(x.astype(dtype), fe.n_fft, fe.hop, window, fe.sample_rate)
    _, planes = forward_spectra(spec.values, prompts, weights, cfg)
    return [
        istft(Spectrogram(planes[n], fe.sample_rate, fe.n_fft, fe.hop, window), len(x), window)
        for n in range(len(prompts))
    ]
