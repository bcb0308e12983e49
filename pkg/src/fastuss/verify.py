"""Property suites behind ``fastuss verify``.

Each suite returns a list of :class:`Check` results; a suite passes when all do.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import preset
from .cost import macs_conv1d
from .dsp import check_cola, frontend_window, hann_window, istft, stft
from .io import FormatError, load_weights, read_wav, save_weights, write_wav
from .kernels import conv1d, count_macs
from .masks import MaskVariant, build_mask, is_stream_realizable, validate_mask
from .model import forward_spectra, init_weights, parse_prompts, separate
from .streaming import offline_causal_forward, stream_separate


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.ok else 'FAIL'}] {self.name}" + (f": {self.detail}" if self.detail else "")


# reference matrices for N=2 prompts, no <SOS>, T=3 frames
REFERENCE_MASKS = {
    MaskVariant.BLINDPROMPT: ["10000", "01000", "11111", "11111", "11111"],
    MaskVariant.INDPROMPT: ["11000", "11000", "11111", "11111", "11111"],
    MaskVariant.INDALL: ["11000", "11000", "00111", "00111", "00111"],
    MaskVariant.CAUSAL: ["11000", "11000", "11100", "11110", "11111"],
}


def suite_masks() -> list[Check]:
    out = []
    for variant, rows in REFERENCE_MASKS.items():
        got = build_mask(variant, 2, False, 3).rows()
        out.append(Check(f"reference matrix {variant.value}", got == rows, "" if got == rows else " ".join(got)))
    bad = []
    for variant in MaskVariant:
        for n in range(1, 7):
            for t in range(1, 33):
                for sos in (False, True):
                    m = build_mask(variant, n, sos, t)
                    if not validate_mask(m, variant).ok or not m.bits.diagonal().all():
                        bad.append((variant.value, n, t, sos))
    out.append(Check("block equations for N<=6, T<=32", not bad, f"{len(bad)} failures" if bad else ""))
    realizable = {v.value for v in MaskVariant if is_stream_realizable(build_mask(v, 2, True, 4))}
    out.append(Check("stream-realizable only for CAUSAL", realizable == {"CAUSAL"}, ",".join(sorted(realizable))))
    return out


def naive_conv_macs(length: int, cin: int, cout: int, k: int, s: int, pad: int, g: int) -> int:
    """Count the multiply-accumulates of a literal nested-loop grouped convolution."""
    lout = (length + pad - k) // s + 1
    count = 0
    for _t in range(lout):
        for _co in range(cout):
            for _ci in range(cin // g):
                count += k
    return count


def suite_macs(n_cases: int = 1000, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    mismatches = 0
    kernel_mismatches = 0
    for i in range(n_cases):
        g = int(rng.choice([1, 2, 4]))
        cin, cout = g * int(rng.integers(1, 5)), g * int(rng.integers(1, 5))
        k, s = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        pad = int(rng.integers(0, 4))
        length = int(rng.integers(max(1, k - pad), 40))
        want = naive_conv_macs(length, cin, cout, k, s, pad, g)
        mismatches += macs_conv1d(length, cin, cout, k, s, pad, g) != want
        if i < 100:  # also check what the executing kernel reports
            x = rng.standard_normal((cin, length))
            w = rng.standard_normal((cout, cin // g, k))
            with count_macs() as c:
                conv1d(x, w, None, s, (pad // 2, pad - pad // 2), g)
            kernel_mismatches += c.total != want
    return [
        Check(f"analytic conv MACs vs naive loop ({n_cases} cases)", mismatches == 0, f"{mismatches} mismatches"),
        Check("kernel-reported conv MACs vs naive loop (100 cases)", kernel_mismatches == 0, f"{kernel_mismatches} mismatches"),
    ]


def kvcache_max_diff(seed: int, dtype, n_frames: int = 50, prompts=("Speech", "Drums")) -> float:
    cfg = preset("TOY-CAUSAL")
    w = init_weights(cfg, seed, dtype)
    fe = cfg.frontend
    x = np.random.default_rng(seed).standard_normal((n_frames - 1) * fe.hop).astype(dtype)
    _, feats = stream_separate(x, prompts, w, cfg)
    spec = stft(x, fe.n_fft, fe.hop, frontend_window(fe), fe.sample_rate)
    ref, _ = forward_spectra(spec.values, parse_prompts(prompts), w, cfg)
    return float(np.abs(feats.astype(np.float64) - ref).max())


def suite_kvcache(n_seeds: int = 20) -> list[Check]:
    out = []
    for dtype, tol in ((np.float32, 1e-4), (np.float64, 1e-9)):
        worst = max(kvcache_max_diff(s, dtype) for s in range(n_seeds))
        out.append(Check(f"stream vs offline features, {np.dtype(dtype).name}, {n_seeds} seeds", worst <= tol, f"max |diff| {worst:.2e}"))
    return out


def causality_max_diff(t_sample: int = 600, length: int = 1600, seed: int = 0) -> tuple[float, float]:
    """(max change before t - n_fft, max change after t) when x[t:] is perturbed."""
    cfg = preset("TOY-CAUSAL")
    w = init_weights(cfg, seed, np.float64)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(length)
    x2 = x.copy()
    x2[t_sample:] += rng.standard_normal(length - t_sample)
    ys = offline_causal_forward(x, ["Speech", "SFX"], w, cfg)
    ys2 = offline_causal_forward(x2, ["Speech", "SFX"], w, cfg)
    cut = t_sample - cfg.frontend.n_fft
    before = max(float(np.abs(a[:cut] - b[:cut]).max()) for a, b in zip(ys, ys2))
    after = max(float(np.abs(a[t_sample:] - b[t_sample:]).max()) for a, b in zip(ys, ys2))
    return before, after


def suite_causality() -> list[Check]:
    before, after = causality_max_diff()
    return [
        Check("no change earlier than t - n_fft", before <= 1e-6, f"max |diff| {before:.2e}"),
        Check("perturbation is visible after t", after > 1e-6, f"max |diff| {after:.2e}"),
    ]


def stft_roundtrip_error(seconds: float = 1.0, seed: int = 0) -> float:
    fe = preset("ID1").frontend
    x = np.random.default_rng(seed).standard_normal(int(seconds * fe.sample_rate))
    window = frontend_window(fe)
    y = istft(stft(x, fe.n_fft, fe.hop, window, fe.sample_rate), len(x), window)
    interior = slice(fe.n_fft, len(x) - fe.n_fft)
    return float(np.abs(y[interior] - x[interior]).max() / np.abs(x[interior]).max())


def suite_cola() -> list[Check]:
    fe = preset("ID1").frontend
    out = []
    try:
        check_cola(frontend_window(fe), fe.hop)
        out.append(Check(f"COLA, periodic Hann {fe.win_length} in {fe.n_fft}, hop {fe.hop}", True))
    except ValueError as exc:
        out.append(Check("COLA of shipped defaults", False, str(exc)))
    try:
        check_cola(hann_window(fe.n_fft), fe.hop)
        out.append(Check("non-COLA full-length window is rejected", False))
    except ValueError:
        out.append(Check("non-COLA full-length window is rejected", True))
    err = stft_roundtrip_error()
    out.append(Check("istft(stft(x)) interior relative error", err <= 1e-5, f"{err:.2e}"))
    return out


def permutation_max_diff(seed: int = 0) -> tuple[float, float]:
    """(permuted-prompt deviation, duplicate-Speech swap deviation) at TOY scale."""
    cfg = preset("TOY")
    w = init_weights(cfg, seed, np.float32)
    x = np.random.default_rng(seed).standard_normal(1200).astype(np.float32)
    prompts = ["Speech", "Bass", "Drums", "SFX"]
    perm = [2, 0, 3, 1]
    ys = separate(x, prompts, w, cfg)
    yp = separate(x, [prompts[i] for i in perm], w, cfg)
    dev = max(float(np.abs(yp[j] - ys[i]).max()) for j, i in enumerate(perm))
    # swapping two identical prompts leaves the list unchanged, so an exact swap means identical outputs
    yd = separate(x, ["Speech", "Vocals", "Speech"], w, cfg)
    dup = float(np.abs(yd[0] - yd[2]).max())
    return dev, dup


def suite_permutation() -> list[Check]:
    dev, dup = permutation_max_diff()
    return [
        Check("prompt permutation permutes outputs", dev <= 1e-5, f"max |diff| {dev:.2e}"),
        Check("duplicate Speech prompts swap exactly", dup == 0.0, f"max |diff| {dup:.2e}"),
    ]


def suite_io() -> list[Check]:
    cfg = preset("TOY")
    out = []
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "w.ftss")
        w = init_weights(cfg, 7)
        save_weights(path, w)
        back = load_weights(path, cfg, strict=True)
        same = w.keys() == back.keys() and all(w[k].tobytes() == back[k].tobytes() for k in w)
        out.append(Check("weight file round trip is bit-exact", same))
        data = bytearray(open(path, "rb").read())
        data[len(data) // 2] ^= 0x01
        open(path, "wb").write(bytes(data))
        try:
            load_weights(path)
            out.append(Check("corrupted weight file is detected", False))
        except FormatError:
            out.append(Check("corrupted weight file is detected", True))
        wav = os.path.join(d, "x.wav")
        x = np.random.default_rng(0).uniform(-1, 1, 4000).astype(np.float32)
        write_wav(wav, x, cfg.frontend.sample_rate)
        y, _ = read_wav(wav)
        out.append(Check("float32 WAV round trip is bit-exact", y.tobytes() == x.tobytes()))
        a = separate(x, ["Speech"], init_weights(cfg, 3), cfg)[0]
        b = separate(x, ["Speech"], init_weights(cfg, 3), cfg)[0]
        out.append(Check("same seed and input give identical outputs", a.tobytes() == b.tobytes()))
    return out


SUITES: dict[str, Callable[[], list[Check]]] = {
    "masks": suite_masks,
    "macs": suite_macs,
    "kvcache": suite_kvcache,
    "causality": suite_causality,
    "cola": suite_cola,
    "permutation": suite_permutation,
    "io": suite_io,
}
