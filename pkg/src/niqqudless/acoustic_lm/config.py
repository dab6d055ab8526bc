from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from ..codec import CodecSpec

PAPER_TOP_K = 50
PAPER_PEAK_LR = 5e-2
# AdamW steps are not scaled by parameter magnitude, so its peak sits an order lower
DEFAULT_PEAK_LR = 5e-3
MAX_GEN_SECONDS = 18.0


@dataclass(frozen=True)
class LMConfig:
    """Architecture, vocabulary layout and decoding defaults for the AR and NAR models."""

    text_vocab_size: int
    codec: CodecSpec = field(default_factory=CodecSpec)
    model_dim: int = 128
    n_layers: int = 4
    n_heads: int = 4
    ff_dim: int = 512
    max_seq_frames: int = 4096
    top_k: int = PAPER_TOP_K
    temperature: float = 1.0
    max_gen_seconds: float = MAX_GEN_SECONDS
    seed: int = 0

    def __post_init__(self):
        for name in ("text_vocab_size", "model_dim", "n_layers", "n_heads", "ff_dim", "max_seq_frames", "top_k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.model_dim % self.n_heads:
            raise ValueError(f"model_dim {self.model_dim} is not divisible by n_heads {self.n_heads}")
        if self.model_dim % 2:
            raise ValueError("model_dim must be even for sinusoidal positions")
        if self.top_k > self.ar_output_size:
            raise ValueError(f"top_k {self.top_k} exceeds the {self.ar_output_size} acoustic outputs")
        if not (self.temperature >= 0 and math.isfinite(self.temperature)):
            raise ValueError("temperature must be a finite non-negative number")
        if not self.max_gen_seconds > 0:
            raise ValueError("max_gen_seconds must be positive")

    # AR table: [text ids | K code ids | EOS]
    @property
    def code_offset(self) -> int:
        return self.text_vocab_size

    @property
    def eos_id(self) -> int:
        """EOS as an AR output class (code ids occupy 0..K-1)."""
        return self.codec.codebook_size

    @property
    def ar_output_size(self) -> int:
        return self.codec.codebook_size + 1

    @property
    def ar_table_size(self) -> int:
        return self.text_vocab_size + self.ar_output_size

    # NAR table: [text ids | codebook 0 ids | codebook 1 ids | ...]
    @property
    def nar_table_size(self) -> int:
        return self.text_vocab_size + self.codec.n_codebooks * self.codec.codebook_size

    @property
    def max_gen_frames(self) -> int:
        return self.codec.frames_for(self.max_gen_seconds)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LMConfig":
        d = dict(d)
        if not isinstance(d["codec"], CodecSpec):
            d["codec"] = CodecSpec(**d["codec"])
        return cls(**d)

    def replace(self, **changes) -> "LMConfig":
        d = self.to_dict()
        d.update(changes)
        return LMConfig.from_dict(d)
