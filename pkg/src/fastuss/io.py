"""WAV I/O, the FTSS weight container and run manifests.

FTSS layout (all integers little-endian, no padding)::

    b"FTSS" | u16 version | u8 hash_len | hash (ASCII) | u64 seed | u32 count
    count x [ u16 name_len | name (UTF-8) | u8 dtype | u8 rank | rank x u32 dim | payload ]
    8-byte blake2b digest of everything above

dtype tags: 0 = float32, 1 = float64. Seed 2**64 - 1 means "not generated from a seed".
"""

from __future__ import annotations

import hashlib
import json
import struct
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.io import wavfile

from .config import ModelConfig
from .kernels import ConfigError
from .model import WeightBundle

MAGIC = b"FTSS"
VERSION = 1
NO_SEED = (1 << 64) - 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class FormatError(IOError):
    """Unreadable, truncated or corrupted file."""


# --- WAV -------------------------------------------------------------------------


def read_wav(path) -> tuple[np.ndarray, int]:
    """Mono float32 waveform in [-1, 1] and its sample rate."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except (ValueError, EOFError, struct.error) as exc:
        raise FormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if data.dtype == np.int16:
        x = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:  # 24- and 32-bit PCM arrive left-justified in int32
        x = (data.astype(np.float64) / 2**31).astype(np.float32)
    elif data.dtype == np.uint8:
        x = (data.astype(np.float32) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float32, copy=False)
    else:
        raise FormatError(f"{path}: unsupported sample format {data.dtype}")
    if x.ndim == 2:
        warnings.warn(f"{path}: {x.shape[1]} channels downmixed to mono", stacklevel=2)
        x = x.mean(axis=1, dtype=np.float64).astype(np.float32)
    if x.size == 0:
        raise FormatError(f"{path}: no samples")
    return x, int(rate)


def write_wav(path, waveform: np.ndarray, sample_rate: int, pcm16: bool = False) -> None:
    x = np.asarray(waveform)
    if pcm16:
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        data = x.astype(np.float32)
    wavfile.write(path, int(sample_rate), data)


# --- weights ---------------------------------------------------------------------


def _digest(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def encode_weights(bundle: WeightBundle) -> bytes:
    parts = [MAGIC, struct.pack("<H", VERSION)]
    h = bundle.config_hash.encode("ascii")
    parts += [struct.pack("<B", len(h)), h]
    seed = NO_SEED if bundle.seed is None else bundle.seed
    parts.append(struct.pack("<QI", seed, len(bundle.tensors)))
    for name, arr in bundle.tensors.items():
        tag = _TAGS.get(arr.dtype)
        if tag is None:
            raise ConfigError(f"{name}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<BB{arr.ndim}I", tag, arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes())
    body = b"".join(parts)
    return body + _digest(body)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("weight file truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_weights(data: bytes) -> WeightBundle:
    if len(data) < len(MAGIC) + 8 or data[:4] != MAGIC:
        raise FormatError("not an FTSS weight file")
    body, digest = data[:-8], data[-8:]
    if _digest(body) != digest:
        raise FormatError("weight file checksum mismatch (file corrupted)")
    r = _Reader(body)
    r.take(4)
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise FormatError(f"unsupported weight file version {version}")
    (hlen,) = r.unpack("<B")
    config_hash = r.take(hlen).decode("ascii")
    seed, count = r.unpack("<QI")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        tag, rank = r.unpack("<BB")
        if tag not in _DTYPES:
            raise FormatError(f"{name}: unknown dtype tag {tag}")
        shape = r.unpack(f"<{rank}I")
        dt = _DTYPES[tag]
        n = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(n * dt.itemsize), dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    if r.pos != len(body):
        raise FormatError("trailing bytes after the last tensor")
    return WeightBundle(tensors, config_hash, None if seed == NO_SEED else seed)


def save_weights(path, bundle: WeightBundle) -> None:
    Path(path).write_bytes(encode_weights(bundle))


def load_weights(path, config: Optional[ModelConfig] = None, strict: bool = False) -> WeightBundle:
    """Read a weight file; with ``config`` the embedded hash and every shape are checked.

    A hash mismatch raises under ``strict`` and warns otherwise (shapes must still match).
    """
    bundle = decode_weights(Path(path).read_bytes())
    if config is not None:
        if bundle.config_hash != config.hash:
            msg = f"{path}: weights were made for config {bundle.config_hash}, not {config.name} ({config.hash})"
            if strict:
                raise ConfigError(msg)
            warnings.warn(msg, stacklevel=2)
        bundle.check(config)
    return bundle


# --- manifest --------------------------------------------------------------------


@dataclass
class RunManifest:
    config: dict
    config_hash: str
    seed: Optional[int]
    weights: Optional[str]
    input: str
    prompts: list[str]
    chunk_s: Optional[float] = None
    overlap: Optional[float] = None
    streaming: bool = False
    outputs: list[str] = field(default_factory=list)
    mac_estimate: Optional[int] = None

    @classmethod
    def for_run(cls, cfg: ModelConfig, **kw) -> "RunManifest":
        return cls(config=cfg.to_dict(), config_hash=cfg.hash, **kw)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")
