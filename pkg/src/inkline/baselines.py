"""Comparison models.

* ``SbdcnnModel``: the single-character classifier — glyph encoder, linear
  head, softmax.  Every character is predicted independently of its
  neighbors.
* ``VcnModel``: glyph encoder feeding a sequence head over glyph vectors
  (no word embeddings; context enters only through the encoded strokes of
  previous characters).  Two variants of depth 4: ``recurrent`` (stacked
  LSTM layers) and ``decoder`` (causal attention+MLP blocks, input projected
  from glyph vectors, positional table and blocks shaped exactly like the
  pretrainable token stack so pretrained weights drop in).

Checkpoint prefixes: "sbdcnn." and "vcn." beside the shared "glyph." encoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import nn
from .config import ModelConfig
from .decoder import (BlockParams, TopKPrediction, blocks_from_store, init_blocks,
                      init_head, lm_block, top_k_from_probs)
from .encoder import encode_batch, encoder_params, glyph_input_maps, init_encoder
from .errors import DimensionError, ValidationError
from .nn import Initializer, ParameterStore, Tensor
from .strokes import Glyph, InkSentence

SBDCNN_PREFIX = "sbdcnn."
VCN_PREFIX = "vcn."


class VcnVariant(Enum):
    RECURRENT = "recurrent"
    DECODER = "decoder"


class _EncoderMixin:
    def glyph_maps(self, glyph: Glyph) -> np.ndarray:
        return glyph_input_maps(glyph, self.cfg.encoder)

    def encode_glyph_batch(self, maps: np.ndarray) -> Tensor:
        return encode_batch(maps, self._enc, self.cfg.encoder)

    def encode_glyphs(self, glyphs: Sequence[Glyph]) -> Tensor:
        maps = np.stack([self.glyph_maps(g) for g in glyphs])
        return self.encode_glyph_batch(maps)


class SbdcnnModel(_EncoderMixin):
    """Single-character classifier: encode_glyph -> linear -> softmax."""

    def __init__(self, cfg: ModelConfig, store: ParameterStore | None = None,
                 seed: int = 0, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        if store is None:
            store = ParameterStore()
            init = Initializer(store, np.random.default_rng(seed), dtype=dtype)
            init_encoder(init, cfg.encoder)
            init_head(init, cfg.decoder, SBDCNN_PREFIX)
        self.store = store
        self._enc = encoder_params(store, cfg.encoder)
        self._head_w = store[SBDCNN_PREFIX + "head.w"]
        self._head_b = store[SBDCNN_PREFIX + "head.b"]

    @property
    def vocab(self) -> int:
        return self.cfg.decoder.vocab

    def logits_from_maps(self, maps: np.ndarray) -> Tensor:
        vecs = self.encode_glyph_batch(maps)
        return nn.linear(vecs, self._head_w, self._head_b)

    def classify(self, glyph: Glyph, k: int = 5) -> TopKPrediction:
        logits = self.logits_from_maps(self.glyph_maps(glyph)[None]).data[0]
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        return top_k_from_probs(probs, k)

    def classify_sentence(self, sentence: InkSentence, k: int = 5) -> list[TopKPrediction]:
        maps = np.stack([self.glyph_maps(g) for g in sentence.glyphs])
        logits = self.logits_from_maps(maps).data
        out = []
        for row in logits:
            probs = np.exp(row - row.max())
            probs /= probs.sum()
            out.append(top_k_from_probs(probs, k))
        return out

    # uniform prediction surface shared with the sequence models
    predict_sentence = classify_sentence

    def loss_glyph_batch(self, maps: np.ndarray, labels: Sequence[int]) -> Tensor:
        logits = self.logits_from_maps(maps)
        return nn.assert_finite(nn.cross_entropy(logits, labels), "classifier loss")

    def loss_from_maps(self, maps: np.ndarray,
                       targets_batch: Sequence[Sequence[int]]) -> Tensor:
        return self.loss_glyph_batch(maps, [t for row in targets_batch for t in row])

    def loss(self, sentences: Sequence[InkSentence]) -> Tensor:
        maps = np.stack([self.glyph_maps(g) for s in sentences for g in s.glyphs])
        labels = [t for s in sentences for t in s.targets]
        return self.loss_glyph_batch(maps, labels)


@dataclass
class LstmLayerParams:
    w_ih: Tensor
    w_hh: Tensor
    b: Tensor


class VcnModel(_EncoderMixin):
    """Glyph-sequence model: encoder plus a recurrent or decoder head."""

    def __init__(self, cfg: ModelConfig, variant: VcnVariant | str = VcnVariant.DECODER,
                 store: ParameterStore | None = None, seed: int = 0, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.variant = VcnVariant(variant)
        d = cfg.decoder.hidden
        if store is None:
            store = ParameterStore()
            init = Initializer(store, np.random.default_rng(seed), dtype=dtype)
            init_encoder(init, cfg.encoder)
            init.uniform_fan_in(VCN_PREFIX + "in_proj.w", (d, d), fan_in=d)
            init.zeros(VCN_PREFIX + "in_proj.b", (d,))
            if self.variant is VcnVariant.DECODER:
                init.uniform_variance(VCN_PREFIX + "pos.table", (cfg.decoder.max_len, d),
                                      variance=0.5)
                init_blocks(init, cfg.decoder, VCN_PREFIX)
            else:
                for i in range(cfg.decoder.n_blocks):
                    base = f"{VCN_PREFIX}lstm{i}."
                    init.uniform_fan_in(base + "w_ih", (d, 4 * d), fan_in=d)
                    init.uniform_fan_in(base + "w_hh", (d, 4 * d), fan_in=d)
                    b = init.zeros(base + "b", (4 * d,))
                    b.data[d:2 * d] = 1.0  # forget gate bias
            init_head(init, cfg.decoder, VCN_PREFIX)
        self.store = store
        self._enc = encoder_params(store, cfg.encoder)
        self._head_w = store[VCN_PREFIX + "head.w"]
        self._head_b = store[VCN_PREFIX + "head.b"]
        self._in_w = store[VCN_PREFIX + "in_proj.w"]
        self._in_b = store[VCN_PREFIX + "in_proj.b"]
        if self.variant is VcnVariant.DECODER:
            self._pos = store[VCN_PREFIX + "pos.table"]
            self._blocks = blocks_from_store(store, cfg.decoder, VCN_PREFIX)
        else:
            self._lstm = [LstmLayerParams(
                store[f"{VCN_PREFIX}lstm{i}.w_ih"],
                store[f"{VCN_PREFIX}lstm{i}.w_hh"],
                store[f"{VCN_PREFIX}lstm{i}.b"])
                for i in range(cfg.decoder.n_blocks)]

    @property
    def vocab(self) -> int:
        return self.cfg.decoder.vocab

    def load_pretrained_stack(self, arrays: dict[str, np.ndarray],
                              lm_prefix: str = "lm.") -> None:
        """Adopt a pretrained token stack: positions, blocks, and head are
        copied; the input projection stays fresh (glyph vectors replace word
        embeddings)."""
        if self.variant is not VcnVariant.DECODER:
            raise ValidationError("only the decoder variant accepts pretrained weights")
        renamed = {}
        for name, arr in arrays.items():
            if not name.startswith(lm_prefix):
                continue
            rest = name[len(lm_prefix):]
            if rest.startswith("embed."):
                continue
            renamed[VCN_PREFIX + rest] = arr
        self.store.load_arrays(renamed)

    # -- forward -----------------------------------------------------------

    def forward_vecs(self, vecs: Tensor) -> Tensor:
        """Logits over (n, d) or batched (B, n, d) glyph vectors.  Row i sees
        glyph vectors up to and including position i."""
        x = nn.linear(vecs, self._in_w, self._in_b)
        if self.variant is VcnVariant.DECODER:
            n = x.shape[-2]
            if n > self.cfg.decoder.max_len:
                raise DimensionError(f"sequence length {n} exceeds the cap")
            x = nn.add(x, nn.embedding(self._pos, np.arange(n)))
            for p in self._blocks:
                x = lm_block(x, p, self.cfg.decoder.heads)
            return nn.linear(x, self._head_w, self._head_b)
        return self._lstm_logits(x)

    def _lstm_logits(self, x: Tensor) -> Tensor:
        batched = x.data.ndim == 3
        if not batched:
            x = nn.reshape(x, (1,) + x.shape)
        b, n, d = x.shape
        for layer in self._lstm:
            zeros = Tensor(np.zeros((b, d), dtype=x.data.dtype))
            h, c = zeros, zeros
            hs = []
            for t in range(n):
                x_t = nn.reshape(nn.narrow_axis(x, 1, t, 1), (b, d))
                gates = nn.add(nn.add(nn.matmul(x_t, layer.w_ih),
                                      nn.matmul(h, layer.w_hh)), layer.b)
                i_g = nn.sigmoid(nn.narrow(gates, 0, d))
                f_g = nn.sigmoid(nn.narrow(gates, d, d))
                g_g = nn.tanh(nn.narrow(gates, 2 * d, d))
                o_g = nn.sigmoid(nn.narrow(gates, 3 * d, d))
                c = nn.add(nn.mul(f_g, c), nn.mul(i_g, g_g))
                h = nn.mul(o_g, nn.tanh(c))
                hs.append(h)
            x = nn.stack(hs, axis=1)
        out = nn.linear(x, self._head_w, self._head_b)
        return out if batched else nn.reshape(out, out.shape[1:])

    # -- loss / prediction ---------------------------------------------------

    def loss_batch(self, sentences: Sequence[InkSentence]) -> Tensor:
        n = len(sentences[0])
        if any(len(s) != n for s in sentences):
            raise DimensionError("loss_batch requires equal-length sentences")
        maps = np.stack([self.glyph_maps(g) for s in sentences for g in s.glyphs])
        return self.loss_from_maps(maps, [s.targets for s in sentences])

    def loss_from_maps(self, maps: np.ndarray,
                       targets_batch: Sequence[Sequence[int]]) -> Tensor:
        b = len(targets_batch)
        n = len(targets_batch[0])
        vecs = self.encode_glyph_batch(maps)
        vecs = nn.reshape(vecs, (b, n, self.cfg.decoder.hidden))
        logits = self.forward_vecs(vecs)
        targets = [t for row in targets_batch for t in row]
        return nn.cross_entropy(logits, targets)

    def loss(self, sentences: Sequence[InkSentence]) -> Tensor:
        groups: dict[int, list[InkSentence]] = {}
        for s in sentences:
            groups.setdefault(len(s), []).append(s)
        total = None
        for n in sorted(groups):
            part = nn.scale(self.loss_batch(groups[n]), len(groups[n]) / len(sentences))
            total = part if total is None else nn.add(total, part)
        return nn.assert_finite(total, "glyph-sequence loss")

    def predict_sentence(self, sentence: InkSentence, k: int = 5) -> list[TopKPrediction]:
        vecs = self.encode_glyphs(sentence.glyphs)
        logits = self.forward_vecs(vecs).data
        out = []
        for row in logits:
            probs = np.exp(row - row.max())
            probs /= probs.sum()
            out.append(top_k_from_probs(probs, k))
        return out
