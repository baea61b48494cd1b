"""Python bindings for the vora C++ core."""

from ._vora import (
    ConfigError,
    LayoutError,
    Model,
    ModelConfig,
    NumericError,
    ShapeError,
    StateError,
    VoraError,
    build_mask,
    decode,
    encode,
    gen_image_caption,
    gen_text_sample,
    gradcheck,
    lr_at,
    param_count,
    vocab_size,
)

__all__ = [
    "ConfigError",
    "LayoutError",
    "Model",
    "ModelConfig",
    "NumericError",
    "ShapeError",
    "StateError",
    "VoraError",
    "build_mask",
    "decode",
    "encode",
    "gen_image_caption",
    "gen_text_sample",
    "gradcheck",
    "lr_at",
    "param_count",
    "vocab_size",
]
