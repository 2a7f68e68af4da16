from dataclasses import asdict, dataclass, fields
from typing import Dict, Tuple

from errors import ConfigError

MODES = ('none', 'crope_qk', 'crope_qkv', 'crope_all', 'half_rope_qk', 'half_rope_all')

# Tied flags for the (Q, K, V, out) projections
MODE_TIES: Dict[str, Tuple[bool, bool, bool, bool]] = {
    'none': (False, False, False, False),
    'crope_qk': (True, True, False, False),
    'crope_qkv': (True, True, True, False),
    'crope_all': (True, True, True, True),
    'half_rope_qk': (False, False, False, False),
    'half_rope_all': (False, False, False, False),
}

HALF_QK_MODES = ('half_rope_qk', 'half_rope_all')
HALF_VO_MODES = ('half_rope_all',)

# Parameter-matched pairs: each tied mode and the half-width dense model of equal size
MATCHED_PAIRS = (('crope_qk', 'half_rope_qk'), ('crope_all', 'half_rope_all'))

DTYPES = ('float32', 'float64')


@dataclass
class ModelConfig:
    """Decoder hyperparameters plus the placement mode of the complex tie"""

    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 128
    d_ff: int = 256
    vocab_size: int = 256
    max_seq_len: int = 128
    rope_base: float = 5000.0
    mode: str = 'none'
    seed: int = 0
    dtype: str = 'float32'
    causal: bool = True

    @classmethod
    def full(cls, **overrides) -> 'ModelConfig':
        """Full-size architecture: 16 layers, 8 heads, width 1024, context 512"""
        values = dict(n_layers=16, n_heads=8, d_model=1024, d_ff=1024, max_seq_len=512)
        values.update(overrides)
        return cls(**values)

    @property
    def ties(self) -> Tuple[bool, bool, bool, bool]:
        return MODE_TIES[self.mode]

    @property
    def qk_width(self) -> int:
        return self.d_model // 2 if self.mode in HALF_QK_MODES else self.d_model

    @property
    def v_width(self) -> int:
        return self.d_model // 2 if self.mode in HALF_VO_MODES else self.d_model

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def qk_head_dim(self) -> int:
        return self.qk_width // self.n_heads

    @property
    def v_head_dim(self) -> int:
        return self.v_width // self.n_heads

    def validate(self) -> 'ModelConfig':
        for name in ('n_layers', 'n_heads', 'd_model', 'd_ff', 'vocab_size', 'max_seq_len'):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {DTYPES}, got {self.dtype!r}")
        if self.rope_base <= 0:
            raise ConfigError(f"rope_base must be positive, got {self.rope_base}")
        if self.d_model % self.n_heads:
            raise ConfigError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})")
        if self.head_dim % 2:
            raise ConfigError(f"head_dim = d_model / n_heads = {self.head_dim} must be even")
        if self.mode in HALF_QK_MODES:
            if self.qk_width % self.n_heads or self.qk_head_dim % 2:
                raise ConfigError(
                    f"mode {self.mode} needs d_model / 2 = {self.d_model // 2} split into "
                    f"{self.n_heads} heads of even width")
        return self

    def with_mode(self, mode: str) -> 'ModelConfig':
        values = self.to_dict()
        values['mode'] = mode
        return ModelConfig.from_dict(values)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> 'ModelConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown model config keys: {', '.join(unknown)}")
        return cls(**values)
