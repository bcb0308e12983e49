"""STFT / iSTFT and the band-split encoder and band-wise decoder.

Spectrogram values are stored as real arrays of shape (2, T, n_bins) holding
the real and imaginary planes. Frames are centred (reflect padding of
n_fft // 2 on both sides). The analysis window is a periodic Hann of
``win_length`` samples zero-padded to n_fft; synthesis is weighted overlap-add
normalised by the summed squared window.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .config import FrontendConfig
from .kernels import ConfigError, linear, rms_group_norm, sigmoid

COLA_TOL = 1e-10


@dataclass
class Spectrogram:
    values: np.ndarray  # (2, T, n_bins)
    sample_rate: int
    n_fft: int
    hop: int
    window: Optional[np.ndarray] = None

    @property
    def n_frames(self) -> int:
        return self.values.shape[-2]

    @property
    def n_bins(self) -> int:
        return self.values.shape[-1]


def hann_window(win_length: int, n_fft: Optional[int] = None) -> np.ndarray:
    """Periodic Hann of ``win_length`` samples centred in an n_fft frame."""
    n_fft = n_fft or win_length
    if win_length > n_fft:
        raise ConfigError("win_length must not exceed n_fft")
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(win_length) / win_length)
    left = (n_fft - win_length) // 2
    return np.pad(w, (left, n_fft - win_length - left))


def cola_envelope(window: np.ndarray, hop: int) -> np.ndarray:
    """Sum of window**2 over all shifts, folded onto one hop period."""
    w2 = window.astype(np.float64) ** 2
    pad = (-len(w2)) % hop
    return np.pad(w2, (0, pad)).reshape(-1, hop).sum(axis=0)


def check_cola(window: np.ndarray, hop: int) -> float:
    """Return the constant squared-window overlap sum or raise if it is not constant."""
    if hop < 1 or hop > len(window):
        raise ConfigError(f"hop={hop} must be in [1, n_fft]")
    env = cola_envelope(window, hop)
    if env.min() <= 0 or np.ptp(env) > COLA_TOL * env.max():
        raise ConfigError(f"window/hop pair is not COLA (envelope spread {np.ptp(env):.3g})")
    return float(env.mean())


def frontend_window(fe: FrontendConfig) -> np.ndarray:
    w = hann_window(fe.win_length, fe.n_fft)
    check_cola(w, fe.hop)
    return w


def stft(
    x: np.ndarray,
    n_fft: int,
    hop: int,
    window: Optional[np.ndarray] = None,
    sample_rate: int = 48000,
) -> Spectrogram:
    x = np.asarray(x)
    if x.ndim != 1:
        raise ConfigError("stft expects a mono waveform")
    window = hann_window(n_fft) if window is None else window
    if len(window) != n_fft:
        raise ConfigError("window length must equal n_fft")
    if hop > n_fft or hop < 1:
        raise ConfigError("hop must be in [1, n_fft]")
    half = n_fft // 2
    if len(x) <= half:
        raise ConfigError(f"signal of {len(x)} samples is shorter than one frame (needs > {half})")
    dtype = x.dtype if x.dtype in (np.float32, np.float64) else np.float64
    xp = np.pad(x.astype(np.float64), (half, half), mode="reflect")
    n_frames = 1 + (len(xp) - n_fft) // hop
    frames = np.lib.stride_tricks.sliding_window_view(xp, n_fft)[:: hop][:n_frames] * window
    spec = np.fft.rfft(frames, axis=-1)
    values = np.stack([spec.real, spec.imag]).astype(dtype)
    return Spectrogram(values, sample_rate, n_fft, hop, window)


def _frame_signals(values: np.ndarray, n_fft: int, window: np.ndarray) -> np.ndarray:
    spec = values[0].astype(np.float64) + 1j * values[1].astype(np.float64)
    return np.fft.irfft(spec, n=n_fft, axis=-1) * window


def istft(spec: Spectrogram, length: Optional[int] = None, window: Optional[np.ndarray] = None) -> np.ndarray:
    n_fft, hop = spec.n_fft, spec.hop
    if window is None:
        window = spec.window if spec.window is not None else hann_window(n_fft)
    check_cola(window, hop)
    frames = _frame_signals(spec.values, n_fft, window)
    n_frames = frames.shape[0]
    total = n_fft + (n_frames - 1) * hop
    buf = np.zeros(total)
    env = np.zeros(total)
    w2 = window**2
    for t in range(n_frames):
        buf[t * hop : t * hop + n_fft] += frames[t]
        env[t * hop : t * hop + n_fft] += w2
    y = np.divide(buf, env, out=np.zeros_like(buf), where=env > 1e-11)
    half = n_fft // 2
    if length is None:
        length = (n_frames - 1) * hop
    y = y[half : half + length]
    if len(y) < length:
        y = np.pad(y, (0, length - len(y)))
    return y.astype(spec.values.dtype, copy=False)


class OverlapAdd:
    """Frame-at-a-time inverse STFT that reproduces :func:`istft` sample by sample.

    ``push`` returns the samples that became final (one hop per frame once the
    initial n_fft // 2 samples of padding have been consumed).
    """

    def __init__(self, n_fft: int, hop: int, window: np.ndarray, dtype=np.float64) -> None:
        self.n_fft, self.hop, self.window = n_fft, hop, window
        self.w2 = window**2
        self.buf = np.zeros(n_fft)
        self.env = np.zeros(n_fft)
        self.pos = 0  # padded-coordinate index of buf[0]
        self.half = n_fft // 2
        self.dtype = dtype

    def push(self, frame_values: np.ndarray) -> np.ndarray:
        frame = _frame_signals(frame_values[:, None, :], self.n_fft, self.window)[0]
        self.buf += frame
        self.env += self.w2
        return self._emit(self.hop)

    def flush(self) -> np.ndarray:
        return self._emit(self.n_fft)

    def _emit(self, n: int) -> np.ndarray:
        b, e = self.buf[:n], self.env[:n]
        out = np.divide(b, e, out=np.zeros_like(b), where=e > 1e-11)
        # drop samples that fall in the leading centre padding
        start = self.pos
        skip = max(0, self.half - start)
        out = out[skip:] if skip < n else out[:0]
        self.buf = np.concatenate([self.buf[n:], np.zeros(n)])
        self.env = np.concatenate([self.env[n:], np.zeros(n)])
        self.pos += n
        return out.astype(self.dtype, copy=False)


# --- band layout ------------------------------------------------------------


@dataclass(frozen=True)
class BandLayout:
    n_bins: int
    bands: tuple[tuple[int, int], ...]  # [lo, hi) bin ranges

    @property
    def widths(self) -> list[int]:
        return [hi - lo for lo, hi in self.bands]

    def __len__(self) -> int:
        return len(self.bands)


def _mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_inv(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def make_band_layout(n_bins: int, n_bands: int, sample_rate: int = 48000) -> BandLayout:
    """Mel-spaced partition of ``n_bins`` STFT bins into ``n_bands`` contiguous bands.

    Every band gets one bin, the remaining bins are shared out in proportion to
    the mel-spaced ideal widths (largest remainder), and the widths are sorted
    so they never shrink toward Nyquist.
    """
    if not 1 <= n_bands <= n_bins:
        raise ConfigError(f"cannot split {n_bins} bins into {n_bands} bands")
    nyq = sample_rate / 2
    edges = _mel_inv(np.linspace(0.0, _mel(nyq), n_bands + 1)) / nyq * n_bins
    ideal = np.diff(edges)
    spare = n_bins - n_bands
    share = ideal / ideal.sum() * spare
    extra = np.floor(share).astype(int)
    left = spare - extra.sum()
    order = np.argsort(-(share - extra), kind="stable")
    extra[order[:left]] += 1
    widths = np.sort(1 + extra)
    bounds = np.concatenate([[0], np.cumsum(widths)])
    return BandLayout(n_bins, tuple((int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])))


def layout_for(fe: FrontendConfig) -> BandLayout:
    return make_band_layout(fe.n_bins, fe.n_bands, fe.sample_rate)


# --- band-split encoder / band-wise decoder ----------------------------------


def _w(weights: Mapping[str, np.ndarray], name: str, shape: tuple) -> np.ndarray:
    try:
        arr = weights[name]
    except KeyError:
        raise ConfigError(f"missing weight {name!r}") from None
    if arr.shape != shape:
        raise ConfigError(f"weight {name!r} has shape {arr.shape}, layout expects {shape}")
    return arr


def encode_frames(values: np.ndarray, layout: BandLayout, weights: Mapping[str, np.ndarray], dim: int) -> np.ndarray:
    """(2, T, n_bins) spectrogram planes -> (T, F, D) band features."""
    if values.shape[-1] != layout.n_bins:
        raise ConfigError(f"spectrogram has {values.shape[-1]} bins, layout expects {layout.n_bins}")
    out = []
    for b, (lo, hi) in enumerate(layout.bands):
        w = hi - lo
        seg = np.moveaxis(values[:, :, lo:hi], 0, -1).reshape(values.shape[1], 2 * w)  # re/im interleaved
        h = rms_group_norm(seg, _w(weights, f"encoder.{b}.norm", (2 * w,)))
        out.append(linear(h, _w(weights, f"encoder.{b}.weight", (2 * w, dim)), _w(weights, f"encoder.{b}.bias", (dim,))))
    return np.stack(out, axis=1)


def decode_frames(x: np.ndarray, layout: BandLayout, weights: Mapping[str, np.ndarray]) -> np.ndarray:
    """(..., T, F, D) features -> (..., 2, T, n_bins) spectrogram planes.

    Per band: RMS norm, D -> 4D with tanh, then 4D -> 2 * (2w) split into a
    value half and a sigmoid gate half.
    """
    dim = x.shape[-1]
    if x.shape[-2] != len(layout):
        raise ConfigError(f"features have {x.shape[-2]} bands, layout has {len(layout)}")
    lead = x.shape[:-2]
    parts = []
    for b, (lo, hi) in enumerate(layout.bands):
        w = hi - lo
        h = rms_group_norm(x[..., b, :], _w(weights, f"decoder.{b}.norm", (dim,)))
        h = linear(h, _w(weights, f"decoder.{b}.fc1.weight", (dim, 4 * dim)), _w(weights, f"decoder.{b}.fc1.bias", (4 * dim,)))
        h = np.tanh(h)
        o = linear(h, _w(weights, f"decoder.{b}.fc2.weight", (4 * dim, 4 * w)), _w(weights, f"decoder.{b}.fc2.bias", (4 * w,)))
        val, gate = o[..., : 2 * w], o[..., 2 * w :]
        y = (val.astype(np.float64) * sigmoid(gate)).astype(x.dtype)
        parts.append(y.reshape(lead + (w, 2)))
    spec = np.concatenate(parts, axis=-2)  # (..., T, n_bins, 2)
    return np.moveaxis(spec, -1, -3)


def band_encode(spec: Spectrogram, layout: BandLayout, weights: Mapping[str, np.ndarray], dim: int) -> np.ndarray:
    """Spectrogram -> Z of shape (D, T, F)."""
    return np.transpose(encode_frames(spec.values, layout, weights, dim), (2, 0, 1))


def band_decode(features: np.ndarray, layout: BandLayout, weights: Mapping[str, np.ndarray], like: Spectrogram) -> Spectrogram:
    """Z of shape (D, T, F) -> Spectrogram with the same STFT settings as ``like``."""
    values = decode_frames(np.transpose(features, (1, 2, 0)), layout, weights)
    return Spectrogram(values, like.sample_rate, like.n_fft, like.hop, like.window)
