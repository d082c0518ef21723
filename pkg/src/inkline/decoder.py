"""Fused recognition decoder.

The token stack embeds committed symbols (with a leading BOS) plus learned
positions and runs four blocks of

    h_M = LayerNorm(h_prev + MaskedMultiHeadAttention(h_prev))
    h_F = LayerNorm(h_M + W_F . [h_M_i ; R_i] + b)      (position-wise fusion)
    h   = LayerNorm(h_F + MLP(h_F))

followed by a linear head over the vocabulary.  The same glyph vectors R are
fed to every block.  The autoregressive pretraining path runs the identical
pipeline with the fusion sub-layer skipped and shares every attention, MLP,
embedding, and head parameter ("lm." checkpoint prefix); the fusion
projection and its normalization live under "fusion.".

Fusion initialization makes a freshly attached fusion sub-layer pass-through
relative to the pretrained stack: the glyph half of W_F is zero (so glyph
input cannot perturb logits) and the token half is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .config import DecoderConfig, ModelConfig
from .encoder import PREFIX as GLYPH_PREFIX
from .encoder import (downsample_maps, encode_batch, encoder_params, glyph_input_maps,
                      init_encoder)
from .errors import DimensionError, ValidationError
from .nn import Initializer, ParameterStore, Tensor
from .strokes import Glyph, InkSentence, build_char_tensor

LM_PREFIX = "lm."
FUSION_PREFIX = "fusion."
RESIDUAL_GAIN_KEYS = ("attn.wo", "mlp.w2")


@dataclass(frozen=True)
class TopKPrediction:
    """Ranked candidate symbols, descending by probability with stable id
    tie-break."""

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if len(self.entries) > 5:
            raise ValidationError(f"top-k holds at most 5 entries, got {len(self.entries)}")
        keys = [(-p, i) for i, p in self.entries]
        if keys != sorted(keys):
            raise ValidationError("top-k entries must be sorted by (-probability, id)")
        for _, p in self.entries:
            if not (0.0 < p <= 1.0):
                raise ValidationError(f"probability {p} outside (0, 1]")

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.entries)

    @property
    def probs(self) -> tuple[float, ...]:
        return tuple(p for _, p in self.entries)

    @property
    def top1(self) -> int:
        return self.entries[0][0]


def top_k_from_probs(probs: np.ndarray, k: int) -> TopKPrediction:
    if k > 5:
        raise ValidationError(f"k must be <= 5, got {k}")
    order = np.lexsort((np.arange(probs.shape[0]), -probs))[:k]
    return TopKPrediction(tuple((int(i), float(probs[i])) for i in order))


@dataclass
class BlockParams:
    wq: Tensor; bq: Tensor
    wk: Tensor; bk: Tensor
    wv: Tensor; bv: Tensor
    wo: Tensor; bo: Tensor
    ln_attn_g: Tensor; ln_attn_s: Tensor
    mlp_w1: Tensor; mlp_b1: Tensor
    mlp_w2: Tensor; mlp_b2: Tensor
    ln_mlp_g: Tensor; ln_mlp_s: Tensor


@dataclass
class FusionParams:
    w: Tensor
    b: Tensor
    ln_g: Tensor
    ln_s: Tensor


@dataclass
class DecoderParams:
    embed: Tensor
    pos: Tensor
    blocks: list[BlockParams]
    head_w: Tensor
    head_b: Tensor
    fusion: list[FusionParams] | None = None


def init_blocks(init: Initializer, cfg: DecoderConfig, prefix: str) -> None:
    """Attention/MLP block parameters under `prefix`.

    Residual output projections get an extra 1/sqrt(2*depth) gain so the
    residual stream keeps near-unit variance through the stack.
    """
    d = cfg.hidden
    res_gain = 1.0 / np.sqrt(2.0 * cfg.n_blocks)
    for i in range(cfg.n_blocks):
        base = f"{prefix}block{i}."
        for nm in ("wq", "wk", "wv"):
            init.uniform_fan_in(base + f"attn.{nm}", (d, d), fan_in=d)
            init.zeros(base + f"attn.b{nm[1]}", (d,))
        init.uniform_fan_in(base + "attn.wo", (d, d), fan_in=d, gain=res_gain)
        init.zeros(base + "attn.bo", (d,))
        init.ones(base + "ln_attn.gain", (d,))
        init.zeros(base + "ln_attn.shift", (d,))
        init.uniform_fan_in(base + "mlp.w1", (d, cfg.mlp_hidden), fan_in=d)
        init.zeros(base + "mlp.b1", (cfg.mlp_hidden,))
        init.uniform_fan_in(base + "mlp.w2", (cfg.mlp_hidden, d),
                            fan_in=cfg.mlp_hidden, gain=res_gain)
        init.zeros(base + "mlp.b2", (d,))
        init.ones(base + "ln_mlp.gain", (d,))
        init.zeros(base + "ln_mlp.shift", (d,))


def init_head(init: Initializer, cfg: DecoderConfig, prefix: str) -> None:
    init.uniform_fan_in(prefix + "head.w", (cfg.hidden, cfg.vocab),
                        fan_in=cfg.hidden, gain=0.5)
    init.zeros(prefix + "head.b", (cfg.vocab,))


def init_lm(init: Initializer, cfg: DecoderConfig, prefix: str = LM_PREFIX) -> None:
    """Token stack parameters.

    Embedding and positional tables carry variance 1/2 each so their sum
    enters the first normalization near unit variance.
    """
    cfg.validate()
    d = cfg.hidden
    init.uniform_variance(prefix + "embed.table", (cfg.vocab + 1, d), variance=0.5)
    init.uniform_variance(prefix + "pos.table", (cfg.max_len, d), variance=0.5)
    init_blocks(init, cfg, prefix)
    init_head(init, cfg, prefix)


def init_fusion(init: Initializer, cfg: DecoderConfig, prefix: str = FUSION_PREFIX,
                style: str = "identity") -> None:
    """Fusion sub-layer parameters, pass-through at initialization.

    ``identity``: token half of W_F is the identity, glyph half zero.
    ``zero``: both halves zero.
    """
    d = cfg.hidden
    for i in range(cfg.n_blocks):
        base = f"{prefix}block{i}."
        w = np.zeros((2 * d, d))
        if style == "identity":
            w[:d] = np.eye(d)
        elif style != "zero":
            raise ValidationError(f"unknown fusion init style {style!r}")
        init.constant(base + "w", w)
        init.zeros(base + "b", (d,))
        init.ones(base + "ln.gain", (d,))
        init.zeros(base + "ln.shift", (d,))


def blocks_from_store(store: ParameterStore, cfg: DecoderConfig,
                      prefix: str) -> list[BlockParams]:
    blocks = []
    for i in range(cfg.n_blocks):
        base = f"{prefix}block{i}."
        blocks.append(BlockParams(
            wq=store[base + "attn.wq"], bq=store[base + "attn.bq"],
            wk=store[base + "attn.wk"], bk=store[base + "attn.bk"],
            wv=store[base + "attn.wv"], bv=store[base + "attn.bv"],
            wo=store[base + "attn.wo"], bo=store[base + "attn.bo"],
            ln_attn_g=store[base + "ln_attn.gain"], ln_attn_s=store[base + "ln_attn.shift"],
            mlp_w1=store[base + "mlp.w1"], mlp_b1=store[base + "mlp.b1"],
            mlp_w2=store[base + "mlp.w2"], mlp_b2=store[base + "mlp.b2"],
            ln_mlp_g=store[base + "ln_mlp.gain"], ln_mlp_s=store[base + "ln_mlp.shift"]))
    return blocks


def decoder_params(store: ParameterStore, cfg: DecoderConfig,
                   with_fusion: bool = True) -> DecoderParams:
    blocks = blocks_from_store(store, cfg, LM_PREFIX)
    fusion = None
    if with_fusion:
        fusion = []
        for i in range(cfg.n_blocks):
            base = f"{FUSION_PREFIX}block{i}."
            fusion.append(FusionParams(
                w=store[base + "w"], b=store[base + "b"],
                ln_g=store[base + "ln.gain"], ln_s=store[base + "ln.shift"]))
    return DecoderParams(
        embed=store[LM_PREFIX + "embed.table"],
        pos=store[LM_PREFIX + "pos.table"],
        blocks=blocks,
        head_w=store[LM_PREFIX + "head.w"],
        head_b=store[LM_PREFIX + "head.b"],
        fusion=fusion)


def _attn(x: Tensor, p: BlockParams, heads: int) -> Tensor:
    return nn.masked_multi_head_attention(
        x, p.wq, p.bq, p.wk, p.bk, p.wv, p.bv, p.wo, p.bo, heads)


def _mlp(x: Tensor, p: BlockParams) -> Tensor:
    return nn.linear(nn.relu(nn.linear(x, p.mlp_w1, p.mlp_b1)), p.mlp_w2, p.mlp_b2)


def fusion_block(h_prev: Tensor, glyphs: Tensor, p: BlockParams,
                 f: FusionParams, heads: int) -> Tensor:
    """One fused block over (n, d) or batched (B, n, d) activations."""
    if h_prev.shape != glyphs.shape:
        raise DimensionError(
            f"token activations {h_prev.shape} and glyph vectors {glyphs.shape} disagree")
    h_m = nn.layer_norm(nn.add(h_prev, _attn(h_prev, p, heads)), p.ln_attn_g, p.ln_attn_s)
    y = nn.linear(nn.concat_last(h_m, glyphs), f.w, f.b)
    h_f = nn.layer_norm(nn.add(h_m, y), f.ln_g, f.ln_s)
    return nn.layer_norm(nn.add(h_f, _mlp(h_f, p)), p.ln_mlp_g, p.ln_mlp_s)


def lm_block(h_prev: Tensor, p: BlockParams, heads: int) -> Tensor:
    """One pretraining block: the fusion sub-layer is skipped entirely."""
    h_m = nn.layer_norm(nn.add(h_prev, _attn(h_prev, p, heads)), p.ln_attn_g, p.ln_attn_s)
    return nn.layer_norm(nn.add(h_m, _mlp(h_m, p)), p.ln_mlp_g, p.ln_mlp_s)


def _embed_tokens(tokens: np.ndarray, params: DecoderParams, cfg: DecoderConfig) -> Tensor:
    n = tokens.shape[-1]
    if n > cfg.max_len:
        raise DimensionError(f"sequence length {n} exceeds the {cfg.max_len} cap")
    tok = nn.embedding(params.embed, tokens)
    pos = nn.embedding(params.pos, np.arange(n))
    return nn.add(tok, pos)


def dstfn_forward(tokens: np.ndarray, glyph_vecs: Tensor,
                  params: DecoderParams, cfg: DecoderConfig) -> Tensor:
    """Logits for every position.

    ``tokens`` holds BOS followed by the symbols written so far, so position
    i carries the context of symbols before i while ``glyph_vecs`` row i is
    the encoding of the character being written at step i.  Shapes: tokens
    (n,) with glyph_vecs (n, d), or batched (B, n) with (B, n, d).
    """
    tokens = np.asarray(tokens)
    if params.fusion is None:
        raise DimensionError("decoder params were built without fusion parameters")
    if tokens.shape != glyph_vecs.shape[:-1]:
        raise DimensionError(
            f"{tokens.shape[-1]} tokens vs {glyph_vecs.shape[-2]} glyph vectors")
    x = _embed_tokens(tokens, params, cfg)
    for p, f in zip(params.blocks, params.fusion):
        x = fusion_block(x, glyph_vecs, p, f, cfg.heads)
    return nn.linear(x, params.head_w, params.head_b)


def pretrain_forward(tokens: np.ndarray, params: DecoderParams,
                     cfg: DecoderConfig) -> Tensor:
    """Next-word logits from the shared stack alone (no glyph input)."""
    tokens = np.asarray(tokens)
    x = _embed_tokens(tokens, params, cfg)
    for p in params.blocks:
        x = lm_block(x, p, cfg.heads)
    return nn.linear(x, params.head_w, params.head_b)


# ---------------------------------------------------------------------------
# full model: conv encoder + fused decoder
# ---------------------------------------------------------------------------

class DstfnModel:
    """Glyph encoder plus fused decoder, bound to one parameter store."""

    def __init__(self, cfg: ModelConfig, store: ParameterStore | None = None,
                 seed: int = 0, dtype=np.float32, fusion_init: str = "identity"):
        cfg.validate()
        self.cfg = cfg
        if store is None:
            store = ParameterStore()
            init = Initializer(store, np.random.default_rng(seed), dtype=dtype)
            init_encoder(init, cfg.encoder)
            init_lm(init, cfg.decoder)
            init_fusion(init, cfg.decoder, style=fusion_init)
        self.store = store
        self._enc = encoder_params(store, cfg.encoder)
        self._dec = decoder_params(store, cfg.decoder, with_fusion=True)
        self._empty_vec: np.ndarray | None = None

    @property
    def vocab(self) -> int:
        return self.cfg.decoder.vocab

    @property
    def bos(self) -> int:
        return self.cfg.decoder.bos_id

    # -- glyph pipeline ----------------------------------------------------

    def glyph_maps(self, glyph: Glyph) -> np.ndarray:
        return glyph_input_maps(glyph, self.cfg.encoder)

    def encode_glyph_batch(self, maps: np.ndarray) -> Tensor:
        return encode_batch(maps, self._enc, self.cfg.encoder)

    def encode_glyphs(self, glyphs: Sequence[Glyph]) -> Tensor:
        maps = np.stack([self.glyph_maps(g) for g in glyphs])
        return self.encode_glyph_batch(maps)

    def empty_glyph_vector(self) -> np.ndarray:
        """Encoding of the zero-stroke glyph (cached; call invalidate_caches
        after parameter updates)."""
        if self._empty_vec is None:
            maps = np.zeros((1, self.cfg.encoder.in_channels,
                             self.cfg.encoder.map_size, self.cfg.encoder.map_size))
            with nn.suspend_tape():
                self._empty_vec = self.encode_glyph_batch(maps).data[0].copy()
        return self._empty_vec

    def invalidate_caches(self) -> None:
        self._empty_vec = None

    # -- forward / loss ----------------------------------------------------

    def forward(self, tokens: np.ndarray, glyph_vecs: Tensor) -> Tensor:
        return dstfn_forward(tokens, glyph_vecs, self._dec, self.cfg.decoder)

    def pretrain_logits(self, tokens: np.ndarray) -> Tensor:
        return pretrain_forward(tokens, self._dec, self.cfg.decoder)

    def teacher_tokens(self, targets: Sequence[int]) -> np.ndarray:
        return np.array([self.bos] + list(targets[:-1]), dtype=np.int64)

    def loss_batch(self, sentences: Sequence[InkSentence]) -> Tensor:
        """Teacher-forced loss over equal-length sentences."""
        n = len(sentences[0])
        if any(len(s) != n for s in sentences):
            raise DimensionError("loss_batch requires equal-length sentences")
        maps = np.stack([self.glyph_maps(g) for s in sentences for g in s.glyphs])
        return self.loss_from_maps(maps, [s.targets for s in sentences])

    def loss_from_maps(self, maps: np.ndarray,
                       targets_batch: Sequence[Sequence[int]]) -> Tensor:
        """Teacher-forced loss from pre-built stroke maps (B*n, C, S, S) and
        B equal-length target rows."""
        b = len(targets_batch)
        n = len(targets_batch[0])
        tokens = np.stack([self.teacher_tokens(t) for t in targets_batch])
        vecs = self.encode_glyph_batch(maps)
        vecs = nn.reshape(vecs, (b, n, self.cfg.decoder.hidden))
        logits = self.forward(tokens, vecs)
        targets = [t for row in targets_batch for t in row]
        return nn.cross_entropy(logits, targets)

    def loss(self, sentences: Sequence[InkSentence]) -> Tensor:
        """Mean over sentences of the per-sentence mean loss (so duplicating
        a sentence in a batch leaves the value unchanged)."""
        groups: dict[int, list[InkSentence]] = {}
        for s in sentences:
            groups.setdefault(len(s), []).append(s)
        total = None
        for n in sorted(groups):
            part = nn.scale(self.loss_batch(groups[n]), len(groups[n]) / len(sentences))
            total = part if total is None else nn.add(total, part)
        return nn.assert_finite(total, "fused-decoder loss")

    def pretrain_loss(self, token_seqs: Sequence[Sequence[int]]) -> Tensor:
        groups: dict[int, list] = {}
        for seq in token_seqs:
            groups.setdefault(len(seq), []).append(list(seq))
        total = None
        for n in sorted(groups):
            batch = groups[n]
            tokens = np.stack([[self.bos] + seq[:-1] for seq in batch]).astype(np.int64)
            logits = self.pretrain_logits(tokens)
            targets = [t for seq in batch for t in seq]
            part = nn.scale(nn.cross_entropy(logits, targets), len(batch) / len(token_seqs))
            total = part if total is None else nn.add(total, part)
        return nn.assert_finite(total, "pretraining loss")

    # -- inference ---------------------------------------------------------

    def position_logits(self, history: Sequence[int], glyph_vecs: Tensor) -> np.ndarray:
        """Logits for the position after `history` given glyph vectors for
        positions 0..len(history)."""
        tokens = np.array([self.bos] + list(history), dtype=np.int64)
        logits = self.forward(tokens, glyph_vecs)
        return logits.data[-1]

    def recognize_stepwise(self, glyph_stream: Sequence[Glyph], k: int = 5,
                           gold_history: Sequence[int] | None = None) -> list[TopKPrediction]:
        """Greedy left-to-right decoding with recognized-character feedback.

        At step i the token context is BOS plus the previously committed
        symbols (the model's own top-1 unless `gold_history` supplies them)
        and the glyph vectors cover characters 1..i.
        """
        if len(glyph_stream) == 0:
            raise ValidationError("glyph stream is empty")
        if k > 5:
            raise ValidationError(f"k must be <= 5, got {k}")
        vecs_all = self.encode_glyphs(glyph_stream)
        history: list[int] = []
        out: list[TopKPrediction] = []
        for i in range(len(glyph_stream)):
            vecs = nn.Tensor(vecs_all.data[: i + 1])
            row = self.position_logits(history, vecs)
            probs = np.exp(row - row.max())
            probs /= probs.sum()
            pred = top_k_from_probs(probs, k)
            out.append(pred)
            committed = pred.top1 if gold_history is None else int(gold_history[i])
            history.append(committed)
        return out

    def predict_sentence(self, sentence: InkSentence, k: int = 5) -> list[TopKPrediction]:
        return self.recognize_stepwise(list(sentence.glyphs), k=k)

    def predict_sentences(self, sentences: Sequence[InkSentence],
                          k: int = 5) -> list[list[TopKPrediction]]:
        """Stepwise decoding with predicted-history feedback, batched over
        equal-length groups; equals per-sentence recognize_stepwise."""
        by_len: dict[int, list[int]] = {}
        for idx, s in enumerate(sentences):
            by_len.setdefault(len(s), []).append(idx)
        out: list[list[TopKPrediction]] = [None] * len(sentences)  # type: ignore
        d = self.cfg.decoder.hidden
        for n, idxs in sorted(by_len.items()):
            maps = np.stack([self.glyph_maps(g)
                             for i in idxs for g in sentences[i].glyphs])
            vecs = self.encode_glyph_batch(maps).data.reshape(len(idxs), n, d)
            b = len(idxs)
            tokens = np.full((b, n), self.bos, dtype=np.int64)
            preds: list[list[TopKPrediction]] = [[] for _ in idxs]
            for i in range(n):
                logits = self.forward(tokens[:, : i + 1],
                                      nn.Tensor(vecs[:, : i + 1])).data[:, i]
                for j in range(b):
                    row = logits[j]
                    probs = np.exp(row - row.max())
                    probs /= probs.sum()
                    pred = top_k_from_probs(probs, k)
                    preds[j].append(pred)
                    if i + 1 < n:
                        tokens[j, i + 1] = pred.top1
            for j, idx in enumerate(idxs):
                out[idx] = preds[j]
        return out
