"""Width presets and model/run configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigurationError

STROKE_CHANNELS = 28
MAX_SEQ_LEN = 512


@dataclass(frozen=True)
class EncoderConfig:
    """Geometry of the glyph conv stack: four conv/residual/pool blocks."""

    map_size: int = 32
    channels: tuple[int, int, int, int] = (32, 64, 128, 256)
    hidden: int = 256
    in_channels: int = STROKE_CHANNELS

    @property
    def final_spatial(self) -> int:
        return self.map_size // 16

    @property
    def flat_size(self) -> int:
        return self.channels[-1] * self.final_spatial ** 2

    def validate(self) -> None:
        if self.map_size % 16 != 0:
            raise ConfigurationError(
                f"map_size {self.map_size} must survive four 2x2 poolings")


@dataclass(frozen=True)
class DecoderConfig:
    """Width of the token/fusion stack."""

    vocab: int
    hidden: int = 256
    heads: int = 8
    mlp_hidden: int = 1024
    n_blocks: int = 4
    max_len: int = MAX_SEQ_LEN

    @property
    def bos_id(self) -> int:
        return self.vocab

    def validate(self) -> None:
        if self.hidden % self.heads != 0:
            raise ConfigurationError(
                f"hidden {self.hidden} not divisible by {self.heads} heads")
        if self.vocab < 2:
            raise ConfigurationError("vocabulary needs at least 2 symbols")


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig
    decoder: DecoderConfig
    preset: str = "custom"

    def validate(self) -> None:
        self.encoder.validate()
        self.decoder.validate()
        if self.encoder.hidden != self.decoder.hidden:
            raise ConfigurationError(
                "glyph vector width must match the fusion width "
                f"({self.encoder.hidden} vs {self.decoder.hidden})")


DESK_VOCAB_CAP = 64
DESK_HIDDEN_CAP = 64


def preset_config(preset: str, vocab: int) -> ModelConfig:
    """The two named width presets.

    ``paper``: 32x32 maps, channel plan 28->32->64->128->256, hidden 256,
    eight heads, depth 4.  ``desk``: halved channels over 16x16-pooled maps,
    hidden 64, four heads; capped at 64 symbols so CPU training stays fast.
    """
    if preset == "paper":
        enc = EncoderConfig(map_size=32, channels=(32, 64, 128, 256), hidden=256)
        dec = DecoderConfig(vocab=vocab, hidden=256, heads=8, mlp_hidden=1024)
    elif preset == "desk":
        if vocab > DESK_VOCAB_CAP:
            raise ConfigurationError(
                f"desk preset caps the vocabulary at {DESK_VOCAB_CAP}, got {vocab}")
        enc = EncoderConfig(map_size=16, channels=(16, 32, 64, 128), hidden=64)
        dec = DecoderConfig(vocab=vocab, hidden=64, heads=4, mlp_hidden=256)
    else:
        raise ConfigurationError(f"unknown preset {preset!r} (use 'desk' or 'paper')")
    cfg = ModelConfig(enc, dec, preset=preset)
    cfg.validate()
    return cfg


def toy_config(vocab: int = 7, hidden: int = 8, heads: int = 2,
               map_size: int = 16, channels=(4, 4, 8, 8)) -> ModelConfig:
    """Tiny widths for gradient checks and unit tests."""
    enc = EncoderConfig(map_size=map_size, channels=tuple(channels), hidden=hidden)
    dec = DecoderConfig(vocab=vocab, hidden=hidden, heads=heads,
                        mlp_hidden=2 * hidden, max_len=64)
    cfg = ModelConfig(enc, dec, preset="toy")
    cfg.validate()
    return cfg
