"""Glyph representation: four conv/residual/max-pool blocks and a fully
connected projection from the flattened feature maps to the glyph vector.

Each block computes

    z_c = relu(conv3x3(input))
    z_r = shortcut1x1(z_c) + conv3x3(relu(conv3x3(z_c)))
    z   = max_pool_2x2(z_r)

The residual shortcut is always a learned 1x1 projection so channel counts
match.  Four poolings take 32x32 maps to 2x2 (or 16x16 to 1x1 at desk scale);
the final maps are flattened and projected to the glyph vector.  Application
over a sentence is position-wise: glyphs never mix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .config import EncoderConfig
from .errors import DimensionError
from .nn import Initializer, ParameterStore, Tensor

PREFIX = "glyph."


@dataclass
class ConvBlockParams:
    conv_w: Tensor
    conv_b: Tensor
    res1_w: Tensor
    res1_b: Tensor
    res2_w: Tensor
    res2_b: Tensor
    short_w: Tensor
    short_b: Tensor

    def tensors(self) -> list[Tensor]:
        return [self.conv_w, self.conv_b, self.res1_w, self.res1_b,
                self.res2_w, self.res2_b, self.short_w, self.short_b]


@dataclass
class EncoderParams:
    blocks: list[ConvBlockParams]
    proj_w: Tensor
    proj_b: Tensor

    def tensors(self) -> list[Tensor]:
        out = [t for b in self.blocks for t in b.tensors()]
        return out + [self.proj_w, self.proj_b]


@dataclass
class BlockActivations:
    """Intermediates of one block: post-conv, post-residual, post-pool."""

    z_c: Tensor
    z_r: Tensor
    z: Tensor


def init_encoder(init: Initializer, cfg: EncoderConfig, prefix: str = PREFIX) -> None:
    cfg.validate()
    c_prev = cfg.in_channels
    for i, c_out in enumerate(cfg.channels):
        base = f"{prefix}block{i}."
        init.uniform_fan_in(base + "conv.w", (c_out, c_prev, 3, 3), fan_in=c_prev * 9)
        init.zeros(base + "conv.b", (c_out,))
        init.uniform_fan_in(base + "res1.w", (c_out, c_out, 3, 3), fan_in=c_out * 9)
        init.zeros(base + "res1.b", (c_out,))
        init.uniform_fan_in(base + "res2.w", (c_out, c_out, 3, 3), fan_in=c_out * 9)
        init.zeros(base + "res2.b", (c_out,))
        init.uniform_fan_in(base + "short.w", (c_out, c_out, 1, 1), fan_in=c_out)
        init.zeros(base + "short.b", (c_out,))
        c_prev = c_out
    init.uniform_fan_in(prefix + "proj.w", (cfg.flat_size, cfg.hidden), fan_in=cfg.flat_size)
    init.zeros(prefix + "proj.b", (cfg.hidden,))


def encoder_params(store: ParameterStore, cfg: EncoderConfig,
                   prefix: str = PREFIX) -> EncoderParams:
    blocks = []
    for i in range(len(cfg.channels)):
        base = f"{prefix}block{i}."
        blocks.append(ConvBlockParams(
            store[base + "conv.w"], store[base + "conv.b"],
            store[base + "res1.w"], store[base + "res1.b"],
            store[base + "res2.w"], store[base + "res2.b"],
            store[base + "short.w"], store[base + "short.b"]))
    return EncoderParams(blocks, store[prefix + "proj.w"], store[prefix + "proj.b"])


def conv_block_detail(x: Tensor, p: ConvBlockParams) -> BlockActivations:
    z_c = nn.relu(nn.conv2d(x, p.conv_w, p.conv_b, padding=1))
    branch = nn.conv2d(nn.relu(nn.conv2d(z_c, p.res1_w, p.res1_b, padding=1)),
                       p.res2_w, p.res2_b, padding=1)
    shortcut = nn.conv2d(z_c, p.short_w, p.short_b, padding=0)
    z_r = nn.add(shortcut, branch)
    return BlockActivations(z_c=z_c, z_r=z_r, z=nn.max_pool_2x2(z_r))


def conv_block(x: Tensor, p: ConvBlockParams) -> Tensor:
    return conv_block_detail(x, p).z


def _conv_block_cm(x: Tensor, p: ConvBlockParams) -> Tensor:
    """conv_block over channel-major activations [C, B, H, W]."""
    z_c = nn.relu(nn.conv2d_cm(x, p.conv_w, p.conv_b, padding=1))
    branch = nn.conv2d_cm(nn.relu(nn.conv2d_cm(z_c, p.res1_w, p.res1_b, padding=1)),
                          p.res2_w, p.res2_b, padding=1)
    shortcut = nn.conv2d_cm(z_c, p.short_w, p.short_b, padding=0)
    return nn.max_pool_2x2(nn.add(shortcut, branch))


def encode_batch(maps: np.ndarray, params: EncoderParams, cfg: EncoderConfig) -> Tensor:
    """Encode a batch of stroke-map stacks (B, 28, S, S) to (B, hidden).

    Internally the conv stack runs channel-major so gemm outputs stay
    contiguous; results are identical to block-by-block `conv_block` calls.
    """
    if maps.ndim != 4 or maps.shape[1:] != (cfg.in_channels, cfg.map_size, cfg.map_size):
        raise DimensionError(
            f"expected maps of shape (B, {cfg.in_channels}, {cfg.map_size}, "
            f"{cfg.map_size}), got {maps.shape}")
    dtype = params.proj_w.data.dtype
    x = Tensor(np.ascontiguousarray(maps.transpose(1, 0, 2, 3), dtype=dtype))
    for p in params.blocks:
        x = _conv_block_cm(x, p)
    b = maps.shape[0]
    flat = _channel_major_flatten(x, b, cfg.flat_size)
    return nn.linear(flat, params.proj_w, params.proj_b)


def _channel_major_flatten(x: Tensor, b: int, flat_size: int) -> Tensor:
    """[C, B, h, w] -> [B, C*h*w] (matches batch-major flatten order)."""
    out = Tensor(np.ascontiguousarray(x.data.transpose(1, 0, 2, 3)).reshape(b, flat_size))

    def backward():
        if x.requires_grad:
            g = out.grad.reshape(b, x.shape[0], x.shape[2], x.shape[3])
            x._ensure_grad()[...] += g.transpose(1, 0, 2, 3)

    return nn.tensor_record(out, (x,), backward)


def encode_glyph(maps: np.ndarray, params: EncoderParams, cfg: EncoderConfig) -> Tensor:
    """Encode one stroke-map stack (28, S, S) to a glyph vector (hidden,)."""
    if maps.ndim != 3:
        raise DimensionError(f"expected a single (C, S, S) stack, got {maps.shape}")
    out = encode_batch(maps[None], params, cfg)
    return nn.reshape(out, (cfg.hidden,))


def encode_sequence(sentence_maps: Sequence[np.ndarray], params: EncoderParams,
                    cfg: EncoderConfig) -> Tensor:
    """Position-wise encoding of a sentence: (n, hidden), no cross-position
    mixing."""
    if len(sentence_maps) < 1:
        raise DimensionError("encode_sequence needs at least one glyph")
    return encode_batch(np.stack(sentence_maps), params, cfg)


def downsample_maps(maps: np.ndarray, map_size: int) -> np.ndarray:
    """Reduce binary stroke maps to `map_size` per side by 2x2 max steps."""
    size = maps.shape[-1]
    while size > map_size:
        h = size // 2
        maps = maps.reshape(maps.shape[:-2] + (h, 2, h, 2)).max(axis=(-3, -1))
        size = h
    return maps


def glyph_input_maps(glyph, cfg: EncoderConfig) -> np.ndarray:
    """Rasterize a glyph and pool the fixed 32x32 maps down to the preset's
    input size."""
    from .strokes import build_char_tensor

    return downsample_maps(build_char_tensor(glyph), cfg.map_size)
