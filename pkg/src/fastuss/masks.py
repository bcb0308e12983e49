"""Attention masks over the [prompts, <SOS>, frames] token sequence.

The mask is split into four blocks: A (prompt -> prompt), B (prompt reads
frames), C (frame reads prompts) and D (frame -> frame). Row i, column j is
True when token j may influence the update of token i. The <SOS> token is part
of the prompt block.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kernels import ConfigError


class MaskVariant(str, enum.Enum):
    FULL = "FULL"
    BLINDPROMPT = "BLINDPROMPT"
    INDPROMPT = "INDPROMPT"
    INDALL = "INDALL"
    CAUSAL = "CAUSAL"

    @classmethod
    def parse(cls, value: "str | MaskVariant") -> "MaskVariant":
        try:
            return cls(str(value.value if isinstance(value, MaskVariant) else value).upper())
        except ValueError:
            raise ConfigError(f"unknown mask variant {value!r}; expected one of {[v.value for v in cls]}") from None


@dataclass(frozen=True)
class AttentionMask:
    n_prompt: int  # prompts plus <SOS>
    n_frames: int
    bits: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.n_prompt + self.n_frames

    def blocks(self) -> dict[str, np.ndarray]:
        p = self.n_prompt
        return {"A": self.bits[:p, :p], "B": self.bits[:p, p:], "C": self.bits[p:, :p], "D": self.bits[p:, p:]}

    def additive(self) -> np.ndarray:
        """0 / -inf matrix for use before the softmax."""
        return np.where(self.bits, 0.0, -np.inf)

    def rows(self) -> list[str]:
        return ["".join("1" if b else "0" for b in row) for row in self.bits]


def _expected_blocks(variant: MaskVariant, p: int, t: int) -> dict[str, np.ndarray]:
    ones = lambda r, c: np.ones((r, c), dtype=bool)  # noqa: E731
    zeros = lambda r, c: np.zeros((r, c), dtype=bool)  # noqa: E731
    if variant is MaskVariant.FULL:
        return {"A": ones(p, p), "B": ones(p, t), "C": ones(t, p), "D": ones(t, t)}
    if variant is MaskVariant.BLINDPROMPT:
        return {"A": np.eye(p, dtype=bool), "B": zeros(p, t), "C": ones(t, p), "D": ones(t, t)}
    if variant is MaskVariant.INDPROMPT:
        return {"A": ones(p, p), "B": zeros(p, t), "C": ones(t, p), "D": ones(t, t)}
    if variant is MaskVariant.INDALL:
        return {"A": ones(p, p), "B": zeros(p, t), "C": zeros(t, p), "D": ones(t, t)}
    return {"A": ones(p, p), "B": zeros(p, t), "C": ones(t, p), "D": np.tri(t, dtype=bool)}


def build_mask(variant: "MaskVariant | str", n_prompts: int, has_sos: bool, n_frames: int) -> AttentionMask:
    variant = MaskVariant.parse(variant)
    if n_prompts < 1:
        raise ConfigError("a prompted model needs at least one prompt")
    if n_frames < 0:
        raise ConfigError("n_frames must be non-negative")
    p = n_prompts + int(has_sos)
    blk = _expected_blocks(variant, p, n_frames)
    bits = np.block([[blk["A"], blk["B"]], [blk["C"], blk["D"]]])
    return AttentionMask(p, n_frames, bits)


def temporal_mask(variant: "MaskVariant | str", n_frames: int) -> Optional[np.ndarray]:
    """Frame-only mask for the extraction stage: lower triangle under CAUSAL, none otherwise."""
    if MaskVariant.parse(variant) is MaskVariant.CAUSAL:
        return np.tri(n_frames, dtype=bool)
    return None


@dataclass
class MaskReport:
    variant: MaskVariant
    ok: bool
    first_violation: Optional[tuple[int, int]]
    block_violations: dict[str, tuple[int, int]]

    def __str__(self) -> str:
        if self.ok:
            return f"{self.variant.value}: ok"
        blocks = ", ".join(f"{k}@{v}" for k, v in self.block_violations.items())
        return f"{self.variant.value}: violation at {self.first_violation} ({blocks})"


def validate_mask(mask: AttentionMask, variant: "MaskVariant | str") -> MaskReport:
    """Check every block against the recipe of ``variant``.

    ``first_violation`` is the first mismatch in row-major order over the
    whole matrix; ``block_violations`` holds the first mismatch of each block,
    in full-matrix coordinates.
    """
    variant = MaskVariant.parse(variant)
    p, t = mask.n_prompt, mask.n_frames
    exp = _expected_blocks(variant, p, t)
    want = np.block([[exp["A"], exp["B"]], [exp["C"], exp["D"]]])
    bad = mask.bits != want
    first = None
    if bad.any():
        i, j = np.argwhere(bad)[0]
        first = (int(i), int(j))
    offsets = {"A": (0, 0), "B": (0, p), "C": (p, 0), "D": (p, p)}
    per_block = {}
    for name, (r0, c0) in offsets.items():
        sub = bad[r0 : r0 + (p if name in "AB" else t), c0 : c0 + (p if name in "AC" else t)]
        if sub.any():
            i, j = np.argwhere(sub)[0]
            per_block[name] = (int(i) + r0, int(j) + c0)
    return MaskReport(variant, first is None, first, per_block)


def is_stream_realizable(mask: AttentionMask) -> bool:
    """True iff prompts never read frames and frames only read the past.

    These two conditions are exactly what make prompt-first, then
    frame-by-frame evaluation with a key/value cache reproduce the masked
    full-sequence attention.
    """
    blk = mask.blocks()
    d = blk["D"]
    return not blk["B"].any() and np.array_equal(d, np.tri(mask.n_frames, dtype=bool))
