"""Model configuration dataclasses, the preset catalog and JSON round-tripping."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Optional

from .kernels import ConfigError
from .masks import MaskVariant

FFN_VARIANTS = ("standard", "pointwise", "prompt_aware", "absent")
GROUP_SCOPES = ("all", "input", "deconv")

CALIBRATION_PATH = Path(__file__).parent / "data" / "calibration.json"


@dataclass(frozen=True)
class FfnConfig:
    variant: str = "standard"
    hidden: int = 384
    kernel: int = 4
    stride: int = 1
    conv_groups: int = 1
    channel_shuffle: bool = False
    depthwise_separable: bool = False
    # which convolutions receive conv_groups: both input convs, input convs only, or the output conv only
    group_scope: str = "all"
    causal: bool = False

    @property
    def present(self) -> bool:
        return self.variant != "absent"

    def groups_for(self, which: str) -> int:
        """Group count of the 'input' (gate/value) convolutions or the 'output' one."""
        if self.conv_groups == 1:
            return 1
        if which == "input":
            return self.conv_groups if self.group_scope in ("all", "input") else 1
        return self.conv_groups if self.group_scope in ("all", "deconv") else 1

    def validate(self, dim: int) -> None:
        if self.variant not in FFN_VARIANTS:
            raise ConfigError(f"unknown FFN variant {self.variant!r}")
        if not self.present:
            return
        if self.group_scope not in GROUP_SCOPES:
            raise ConfigError(f"unknown group scope {self.group_scope!r}")
        if self.hidden < 1 or self.kernel < 1 or self.stride < 1 or self.conv_groups < 1:
            raise ConfigError("FFN hidden, kernel, stride and groups must be positive")
        if self.variant == "pointwise" and (self.kernel != 1 or self.stride != 1):
            raise ConfigError("pointwise FFN requires kernel=1 and stride=1")
        if self.depthwise_separable and self.conv_groups != 1:
            raise ConfigError("depthwise-separable FFN sets its own groups; conv_groups must stay 1")
        if self.depthwise_separable and self.kernel == 1:
            raise ConfigError("depthwise-separable FFN needs kernel > 1")
        if self.causal and self.stride != 1:
            raise ConfigError("causal FFN requires stride 1")
        if self.causal and self.depthwise_separable:
            raise ConfigError("causal depthwise-separable FFN is not supported")
        g = self.conv_groups
        if self.hidden % g or dim % g:
            raise ConfigError(f"dim={dim} and hidden={self.hidden} must be divisible by conv_groups={g}")


@dataclass(frozen=True)
class SubBlockConfig:
    dim: int
    ffn1: FfnConfig
    ffn2: FfnConfig
    heads: int
    attn_dim: int
    rope: bool = True
    norm_groups: int = 8

    @property
    def head_dim(self) -> int:
        return self.attn_dim // self.heads

    def validate(self) -> None:
        if self.attn_dim % self.heads:
            raise ConfigError(f"attn_dim={self.attn_dim} not divisible by heads={self.heads}")
        if self.rope and self.head_dim % 2:
            raise ConfigError("RoPE requires an even head dimension")
        if self.dim % self.norm_groups:
            raise ConfigError(f"dim={self.dim} not divisible by norm_groups={self.norm_groups}")
        for ffn in (self.ffn1, self.ffn2):
            ffn.validate(self.dim)


@dataclass(frozen=True)
class StageConfig:
    blocks: int
    freq: SubBlockConfig
    time: SubBlockConfig


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = 48000
    n_fft: int = 2048
    hop: int = 480
    win_length: int = 1920
    n_bands: int = 61

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1


@dataclass(frozen=True)
class ModelConfig:
    name: str
    frontend: FrontendConfig
    dim: int
    cross: StageConfig
    tse: StageConfig
    mask_variant: MaskVariant = MaskVariant.FULL
    sos: bool = True
    max_prompts: int = 8

    @property
    def causal(self) -> bool:
        return self.mask_variant is MaskVariant.CAUSAL

    def sub_blocks(self):
        """(stage, path, SubBlockConfig) for the four path kinds."""
        return [
            ("cross", "freq", self.cross.freq),
            ("cross", "time", self.cross.time),
            ("tse", "freq", self.tse.freq),
            ("tse", "time", self.tse.time),
        ]

    def validate(self) -> "ModelConfig":
        fe = self.frontend
        if not 1 <= fe.n_bands <= fe.n_bins:
            raise ConfigError(f"n_bands={fe.n_bands} must be in [1, {fe.n_bins}]")
        for stage, path, sb in self.sub_blocks():
            if sb.dim != self.dim:
                raise ConfigError(f"{stage}.{path}: sub-block dim {sb.dim} != model dim {self.dim}")
            sb.validate()
            for ffn in (sb.ffn1, sb.ffn2):
                if ffn.variant == "prompt_aware" and not (stage == "cross" and path == "time"):
                    raise ConfigError("the prompt-aware FFN only applies to the cross-prompt temporal path")
                if ffn.causal and path == "freq":
                    raise ConfigError("frequency-path FFNs are never causal")
        if self.causal:
            for sb in (self.cross.time, self.tse.time):
                for ffn in (sb.ffn1, sb.ffn2):
                    if ffn.present and ffn.kernel > 1 and not ffn.causal:
                        raise ConfigError("CAUSAL models need causal temporal convolutions")
        if self.max_prompts < 1:
            raise ConfigError("max_prompts must be >= 1")
        return self

    # --- serialisation -------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["mask_variant"] = self.mask_variant.value
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def hash(self) -> str:
        """Hash of the architecture (the name is excluded)."""
        d = self.to_dict()
        d.pop("name")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelConfig":
        def sub(x):
            return SubBlockConfig(**{**x, "ffn1": FfnConfig(**x["ffn1"]), "ffn2": FfnConfig(**x["ffn2"])})

        def stage(x):
            return StageConfig(blocks=x["blocks"], freq=sub(x["freq"]), time=sub(x["time"]))

        try:
            return cls(
                name=d.get("name", "custom"),
                frontend=FrontendConfig(**d["frontend"]),
                dim=d["dim"],
                cross=stage(d["cross"]),
                tse=stage(d["tse"]),
                mask_variant=MaskVariant.parse(d.get("mask_variant", "FULL")),
                sos=d.get("sos", True),
                max_prompts=d.get("max_prompts", 8),
            ).validate()
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed config document: {exc}") from exc


# --- construction helpers ---------------------------------------------------


def _base(name: str, fe: FrontendConfig, dim: int, cross: tuple, tse: tuple, norm_groups: int) -> ModelConfig:
    """cross/tse: (blocks, hidden, heads, attn_dim)."""
    cb, cc, ch, ce = cross
    tb, tc, th, te = tse
    conv = lambda c: FfnConfig("standard", hidden=c, kernel=4)  # noqa: E731
    pw = FfnConfig("pointwise", hidden=cc, kernel=1)
    sb = lambda f1, f2, h, e: SubBlockConfig(dim, f1, f2, h, e, True, norm_groups)  # noqa: E731
    return ModelConfig(
        name=name,
        frontend=fe,
        dim=dim,
        cross=StageConfig(cb, sb(conv(cc), conv(cc), ch, ce), sb(pw, pw, ch, ce)),
        tse=StageConfig(tb, sb(conv(tc), conv(tc), th, te), sb(conv(tc), conv(tc), th, te)),
    )


def m5(name: str = "ID1") -> ModelConfig:
    return _base(name, FrontendConfig(), 64, (4, 384, 4, 256), (2, 256, 4, 96), norm_groups=8)


def toy(name: str = "TOY") -> ModelConfig:
    fe = FrontendConfig(sample_rate=8000, n_fft=64, hop=16, win_length=64, n_bands=4)
    return _base(name, fe, 8, (1, 16, 2, 8), (1, 16, 2, 8), norm_groups=2)


def _map_ffns(cfg: ModelConfig, fn) -> ModelConfig:
    def sub(stage, path, sb):
        return replace(sb, ffn1=fn(stage, path, 1, sb.ffn1), ffn2=fn(stage, path, 2, sb.ffn2))

    cross = replace(cfg.cross, freq=sub("cross", "freq", cfg.cross.freq), time=sub("cross", "time", cfg.cross.time))
    tse = replace(cfg.tse, freq=sub("tse", "freq", cfg.tse.freq), time=sub("tse", "time", cfg.tse.time))
    return replace(cfg, cross=cross, tse=tse)


def apply_speedups(
    cfg: ModelConfig,
    stride: int = 1,
    groups: int = 1,
    ffn1: bool = True,
    depthwise_separable: bool = False,
    prompt_aware: bool = False,
    group_scope: str = "all",
    name: Optional[str] = None,
) -> ModelConfig:
    """Apply the speed-up knobs to every kernel>1 FFN (never to the pointwise cross-prompt temporal path)."""

    def fn(stage, path, idx, ffn: FfnConfig) -> FfnConfig:
        if idx == 1 and not ffn1:
            return replace(ffn, variant="absent")
        if ffn.variant in ("standard", "prompt_aware") and ffn.kernel > 1:
            return replace(
                ffn,
                stride=stride,
                conv_groups=groups,
                channel_shuffle=groups > 1,
                depthwise_separable=depthwise_separable,
                group_scope=group_scope,
            )
        return ffn

    out = _map_ffns(cfg, fn)
    if prompt_aware:
        time = out.cross.time
        hidden = time.ffn2.hidden if time.ffn2.present else time.ffn1.hidden
        pa = FfnConfig("prompt_aware", hidden=hidden, kernel=4, stride=stride)
        out = replace(out, cross=replace(out.cross, time=replace(time, ffn2=pa)))
    return replace(out, name=name or cfg.name)


def with_mask(cfg: ModelConfig, variant: "MaskVariant | str", name: Optional[str] = None) -> ModelConfig:
    """Set the cross-prompt mask; CAUSAL also makes every temporal convolution causal."""
    variant = MaskVariant.parse(variant)
    causal = variant is MaskVariant.CAUSAL

    def fn(stage, path, idx, ffn):
        return replace(ffn, causal=causal) if path == "time" and ffn.present else ffn

    return replace(_map_ffns(cfg, fn), mask_variant=variant, name=name or cfg.name)


# --- preset catalog ---------------------------------------------------------

# ID presets: (stride, groups, FFN1 present, depthwise-separable, prompt-aware)
ID_ROWS = {
    "ID1": (1, 1, True, False, False),
    "ID2": (2, 1, True, False, False),
    "ID3": (4, 1, True, False, False),
    "ID4": (1, 8, True, False, False),
    "ID5": (1, 1, False, False, False),
    "ID6": (2, 1, False, False, False),
    "ID7": (4, 1, False, False, False),
    "ID7P": (4, 1, False, False, True),
    "ID8": (4, 8, False, False, False),
    "ID9": (4, 1, False, True, False),
}
MASK_PRESETS = ("BLINDPROMPT", "INDPROMPT", "INDALL", "CAUSAL")
ALIASES = {"ID7¶": "ID7P", "FASTUSS-11.7G": "ID7", "FASTUSS-8.3G": "ID8", "M5": "ID1"}
TOY_PRESETS = ("TOY",) + tuple(f"TOY-{m}" for m in MASK_PRESETS)


def preset_names() -> list[str]:
    return list(ID_ROWS) + list(MASK_PRESETS) + ["FasTUSS-11.7G", "FasTUSS-8.3G"] + list(TOY_PRESETS)


def load_calibration(path: Path = CALIBRATION_PATH) -> Optional[dict]:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        return None


def calibrated_group_scope() -> str:
    cal = load_calibration()
    return cal["grouping_scope"] if cal else "all"


def preset(preset_id: str, group_scope: Optional[str] = None) -> ModelConfig:
    """Return the named preset. ``group_scope`` defaults to the calibrated one."""
    key = ALIASES.get(preset_id.upper(), preset_id.upper())
    if key in ID_ROWS:
        s, g, f1, dws, pa = ID_ROWS[key]
        scope = group_scope or (calibrated_group_scope() if g > 1 else "all")
        cfg = apply_speedups(m5(preset_id), s, g, f1, dws, pa, scope)
    elif key in MASK_PRESETS:
        cfg = with_mask(m5(key), key)
    elif key == "TOY":
        cfg = toy()
    elif key.startswith("TOY-") and key[4:] in MASK_PRESETS:
        cfg = with_mask(toy(key), key[4:])
    else:
        raise ConfigError(f"unknown preset {preset_id!r}; known: {', '.join(preset_names())}")
    return cfg.validate()


def load_config(spec: str) -> ModelConfig:
    """A preset name or a path to a JSON config document."""
    p = Path(spec)
    if p.suffix == ".json" or p.exists():
        try:
            return ModelConfig.from_dict(json.loads(p.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{spec}: invalid JSON ({exc})") from exc
    return preset(spec)
