"""Training loops: next-word pretraining of the token stack and two-period
curriculum training of the recognition models.

During curriculum training every character's retention level is drawn from
the active period's position-quartile table; drawn level frequencies are
logged per interval so the period switch is observable.  Handwriting styles
are refreshed by re-rendering sentences from their targets every
``style_refresh`` steps (a new style stream seed per refresh window).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import nn
from .baselines import SbdcnnModel, VcnModel, VcnVariant
from .config import ModelConfig, preset_config
from .decoder import DstfnModel
from .errors import ConfigurationError
from .forge import (Alphabet, CurriculumTable, curriculum_table, position_quartile,
                    sample_retention_level)
from .strokes import InkSentence, retained_count

MODEL_KINDS = ("dstfn", "vcn-decoder", "vcn-lstm", "sbdcnn")


@dataclass
class TrainSettings:
    steps_period1: int = 400
    steps_period2: int = 400
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0
    style_refresh: int = 1000
    log_every: int = 25
    freeze_lm: bool = False


@dataclass
class LogRow:
    step: int
    loss: float
    period: int
    level_freq: dict[str, float] = field(default_factory=dict)


class SentencePool:
    """Length-grouped batch sampler with periodic style re-rendering.

    Rendered sentences are rasterized once per style window into per-stroke
    bitmaps, so a curriculum draw only stacks a stroke-count prefix into the
    channel tensor.
    """

    def __init__(self, sentences: Sequence[InkSentence], alphabet: Alphabet | None,
                 seed: int, style_refresh: int, map_size: int = 16,
                 channels: int = 28):
        self.sentences = list(sentences)
        self.alphabet = alphabet
        self.seed = seed
        self.style_refresh = max(1, style_refresh)
        self.map_size = map_size
        self.channels = channels
        self._by_len: dict[int, list[int]] = {}
        for i, s in enumerate(self.sentences):
            self._by_len.setdefault(len(s), []).append(i)
        self._lengths = sorted(self._by_len)
        self._weights = np.array([len(self._by_len[n]) for n in self._lengths],
                                 dtype=np.float64)
        self._weights /= self._weights.sum()
        self._window = -1
        self._cache: dict[int, list[np.ndarray]] = {}

    def _stroke_maps(self, idx: int, window: int) -> list[np.ndarray]:
        """Per-glyph arrays of per-stroke binary maps (k, S, S)."""
        from .encoder import downsample_maps
        from .strokes import rasterize_stroke

        if window != self._window:
            self._cache.clear()
            self._window = window
        cached = self._cache.get(idx)
        if cached is not None:
            return cached
        s = self.sentences[idx]
        if self.alphabet is not None:
            style = np.random.default_rng(
                self.seed * 1_000_003 + window * 9176 + idx)
            s = self.alphabet.render_sentence(s.targets, style)
        out = []
        for g in s.glyphs:
            if g.stroke_count == 0:
                out.append(np.zeros((0, self.map_size, self.map_size), dtype=np.uint8))
                continue
            maps = np.stack([rasterize_stroke(st) for st in g.strokes])
            out.append(downsample_maps(maps, self.map_size))
        self._cache[idx] = out
        return out

    def draw_maps(self, step: int, rng: np.random.Generator, batch_size: int,
                  table: CurriculumTable,
                  counts: dict[str, int]) -> tuple[np.ndarray, list[tuple[int, ...]]]:
        """One curriculum batch: channel tensors (B*n, C, S, S) float32 plus
        the B target rows (equal length)."""
        n = int(rng.choice(self._lengths, p=self._weights))
        idxs = rng.choice(self._by_len[n], size=min(batch_size, len(self._by_len[n])),
                          replace=False)
        window = step // self.style_refresh
        maps = np.zeros((len(idxs) * n, self.channels, self.map_size, self.map_size),
                        dtype=np.float32)
        targets = []
        row = 0
        for i in idxs:
            stroke_maps = self._stroke_maps(int(i), window)
            for pos, glyph_maps in enumerate(stroke_maps):
                level = sample_retention_level(table, position_quartile(pos, n), rng)
                counts[level.value] = counts.get(level.value, 0) + 1
                kept = retained_count(level, glyph_maps.shape[0])
                if kept:
                    maps[row, :kept] = glyph_maps[:kept]
                row += 1
            targets.append(self.sentences[int(i)].targets)
        return maps, targets


def train_curriculum(model, sentences: Sequence[InkSentence],
                     alphabet: Alphabet | None, settings: TrainSettings,
                     tables: Sequence[CurriculumTable] | None = None,
                     on_period_end: Callable[[int], None] | None = None) -> list[LogRow]:
    """Two-period curriculum training of any model exposing ``loss``.

    Returns the log rows (step, loss, drawn-level frequencies per interval).
    """
    if tables is None:
        tables = (curriculum_table(1), curriculum_table(2))
    rng = np.random.default_rng(settings.seed)
    enc_cfg = model.cfg.encoder
    pool = SentencePool(sentences, alphabet, settings.seed, settings.style_refresh,
                        map_size=enc_cfg.map_size, channels=enc_cfg.in_channels)
    trainable = None
    if settings.freeze_lm:
        trainable = lambda name: not name.startswith("lm.")
    opt = nn.Adam(model.store, lr=settings.lr, trainable=trainable)
    rows: list[LogRow] = []
    counts: dict[str, int] = {}
    loss_acc: list[float] = []
    step = 0
    schedule = [(1, settings.steps_period1), (2, settings.steps_period2)]
    for period_idx, (period, steps) in enumerate(schedule):
        table = tables[period_idx] if period_idx < len(tables) else tables[-1]
        for _ in range(steps):
            maps, targets = pool.draw_maps(step, rng, settings.batch_size,
                                           table, counts)
            with nn.GradTape() as tape:
                loss = model.loss_from_maps(maps, targets)
            tape.backward(loss)
            opt.step()
            loss_acc.append(float(loss.data))
            step += 1
            if step % settings.log_every == 0:
                total = max(1, sum(counts.values()))
                rows.append(LogRow(
                    step=step, loss=float(np.mean(loss_acc)), period=period,
                    level_freq={k: v / total for k, v in sorted(counts.items())}))
                counts = {}
                loss_acc = []
        if on_period_end is not None:
            on_period_end(period)
    if loss_acc:
        total = max(1, sum(counts.values()))
        rows.append(LogRow(
            step=step, loss=float(np.mean(loss_acc)), period=schedule[-1][0],
            level_freq={k: v / total for k, v in sorted(counts.items())}))
    if hasattr(model, "invalidate_caches"):
        model.invalidate_caches()
    return rows


def pretrain_lm(model: DstfnModel, token_seqs: Sequence[Sequence[int]],
                epochs: int = 8, batch_size: int = 16, lr: float = 1e-3,
                seed: int = 0, log_every: int = 25) -> tuple[list[LogRow], float]:
    """Next-word pretraining over the shared stack.

    Returns (loss curve rows, final perplexity over the corpus).
    """
    rng = np.random.default_rng(seed)
    by_len: dict[int, list[int]] = {}
    for i, seq in enumerate(token_seqs):
        by_len.setdefault(len(seq), []).append(i)
    opt = nn.Adam(model.store, lr=lr,
                  trainable=lambda name: name.startswith("lm."))
    rows: list[LogRow] = []
    loss_acc: list[float] = []
    step = 0
    for _ in range(epochs):
        order = []
        for n in sorted(by_len):
            idxs = list(by_len[n])
            rng.shuffle(idxs)
            order.extend([idxs[i:i + batch_size]
                          for i in range(0, len(idxs), batch_size)])
        perm = rng.permutation(len(order))
        for bi in perm:
            batch = [token_seqs[i] for i in order[bi]]
            with nn.GradTape() as tape:
                loss = model.pretrain_loss(batch)
            tape.backward(loss)
            opt.step()
            loss_acc.append(float(loss.data))
            step += 1
            if step % log_every == 0:
                rows.append(LogRow(step=step, loss=float(np.mean(loss_acc)), period=0))
                loss_acc = []
    model.invalidate_caches()
    final = float(model.pretrain_loss(list(token_seqs)).data)
    return rows, float(np.exp(final))


def write_log_csv(path: str | Path, rows: Sequence[LogRow]) -> None:
    levels = ("full", "mls", "r70", "r50", "r30")
    with open(path, "w") as fh:
        fh.write("step,period,loss," + ",".join(levels) + "\n")
        for r in rows:
            freqs = ",".join(f"{r.level_freq.get(l, 0.0):.4f}" for l in levels)
            fh.write(f"{r.step},{r.period},{r.loss:.6f},{freqs}\n")


# ---------------------------------------------------------------------------
# model construction and persistence
# ---------------------------------------------------------------------------

def build_model(kind: str, cfg: ModelConfig, seed: int = 0):
    if kind == "dstfn":
        return DstfnModel(cfg, seed=seed)
    if kind == "sbdcnn":
        return SbdcnnModel(cfg, seed=seed)
    if kind == "vcn-decoder":
        return VcnModel(cfg, variant=VcnVariant.DECODER, seed=seed)
    if kind == "vcn-lstm":
        return VcnModel(cfg, variant=VcnVariant.RECURRENT, seed=seed)
    raise ConfigurationError(f"unknown model kind {kind!r} (use one of {MODEL_KINDS})")


def save_model(path: str | Path, model, kind: str, meta: dict | None = None) -> None:
    path = Path(path)
    nn.save_checkpoint(path, model.store.as_arrays())
    info = {
        "kind": kind,
        "preset": model.cfg.preset,
        "vocab": model.cfg.decoder.vocab,
    }
    if kind.startswith("vcn"):
        info["variant"] = model.variant.value
    if meta:
        info.update(meta)
    path.with_suffix(path.suffix + ".meta.json").write_text(
        json.dumps(info, sort_keys=True, indent=1))


def load_model(path: str | Path):
    """Rebuild a model from a checkpoint plus its sidecar metadata."""
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".meta.json").read_text())
    cfg = preset_config(meta["preset"], meta["vocab"])
    model = build_model(meta["kind"], cfg, seed=0)
    model.store.load_arrays(nn.load_checkpoint(path))
    if hasattr(model, "invalidate_caches"):
        model.invalidate_caches()
    return model, meta
