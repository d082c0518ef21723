"""Evaluation protocols: top-k precision, stroke-retention scenarios,
continuous reduction, and the minimum-strokes-per-position analysis.

Every scenario applies a retention transform to a fresh style rendering of
the test sentences, decodes with each model's own contract (stepwise
predicted-history feedback for the fused decoder, one causal pass for the
glyph-sequence models, per-character classification for the single-character
baseline), and averages precision over the repeat count.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .decoder import DstfnModel, TopKPrediction
from .errors import ValidationError
from .forge import Alphabet, position_quartile
from .strokes import (Glyph, InkSentence, RetentionLevel, apply_retention,
                      drop_last_n, truncate_strokes)


class Scenario(Enum):
    FULL_STROKES = "full"
    MLS_ALL = "mls"
    RETAIN70_ALL = "r70"
    CONTINUOUS_REDUCTION = "creduce"


DEFAULT_REPEATS = 5


def precision_at_k(predictions: Sequence[TopKPrediction],
                   targets: Sequence[int]) -> tuple[float, float, float, float, float]:
    """P@k for k=1..5: the fraction of positions whose target appears among
    the k highest-probability candidates."""
    if len(predictions) != len(targets):
        raise ValidationError(
            f"{len(predictions)} predictions vs {len(targets)} targets")
    if len(predictions) == 0:
        raise ValidationError("nothing to score")
    hits = np.zeros(5)
    for pred, target in zip(predictions, targets):
        if len(pred.entries) < 5:
            raise ValidationError("each prediction needs at least 5 candidates")
        ids = pred.ids
        for k in range(5):
            if target in ids[: k + 1]:
                hits[k:] += 1
                break
    return tuple(hits / len(predictions))


def continuous_reduction_transform(sentence: InkSentence,
                                   drop_one_everywhere: bool = False) -> InkSentence:
    """Progressively heavier reduction by position quartile: drop 1/2/3
    strokes over the first three quartiles and keep 70% in the last.  The
    alternate reading (`drop_one_everywhere`) drops a single stroke at every
    position."""
    n = len(sentence)
    glyphs = []
    for i, g in enumerate(sentence.glyphs):
        q = position_quartile(i, n)
        if drop_one_everywhere:
            glyphs.append(drop_last_n(g, 1))
        elif q < 3:
            glyphs.append(drop_last_n(g, q + 1))
        else:
            glyphs.append(apply_retention(g, RetentionLevel.R70))
    return InkSentence(tuple(glyphs), sentence.targets)


def scenario_transform(sentence: InkSentence, scenario: Scenario) -> InkSentence:
    if scenario is Scenario.FULL_STROKES:
        return sentence
    if scenario is Scenario.MLS_ALL:
        glyphs = tuple(apply_retention(g, RetentionLevel.MLS) for g in sentence.glyphs)
        return InkSentence(glyphs, sentence.targets)
    if scenario is Scenario.RETAIN70_ALL:
        glyphs = tuple(apply_retention(g, RetentionLevel.R70) for g in sentence.glyphs)
        return InkSentence(glyphs, sentence.targets)
    return continuous_reduction_transform(sentence)


@dataclass
class ScenarioEntry:
    model: str
    scenario: str
    per_repeat: list[tuple[float, float, float, float, float]]

    def __post_init__(self):
        for pk in self.per_repeat:
            if any(a > b + 1e-12 for a, b in zip(pk, pk[1:])):
                raise ValidationError(f"P@k not monotone: {pk}")

    @property
    def mean(self) -> tuple[float, float, float, float, float]:
        return tuple(np.mean([pk[k] for pk in self.per_repeat]) for k in range(5))


@dataclass
class EvalReport:
    entries: list[ScenarioEntry] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def entry(self, model: str, scenario: str) -> ScenarioEntry:
        for e in self.entries:
            if e.model == model and e.scenario == scenario:
                return e
        raise KeyError((model, scenario))

    def merged(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(entries=self.entries + other.entries,
                          meta={**self.meta, **other.meta})


def _predict(model, sentences: Sequence[InkSentence], k: int = 5):
    if isinstance(model, DstfnModel):
        return model.predict_sentences(sentences, k=k)
    return [model.predict_sentence(s, k=k) for s in sentences]


def run_scenario(model, testset: Sequence[InkSentence], scenario: Scenario,
                 rng: np.random.Generator, repeats: int = DEFAULT_REPEATS,
                 alphabet: Alphabet | None = None,
                 model_name: str = "model") -> EvalReport:
    """Evaluate one model under one scenario.

    Each repeat redraws every character's handwritten form from the alphabet
    style model (when an alphabet is given), applies the scenario's retention
    transform, and scores P@1..P@5 over all positions.
    """
    per_repeat = []
    for _ in range(repeats):
        style_rng = np.random.default_rng(int(rng.integers(0, 2**63)))
        if alphabet is not None:
            rendered = [alphabet.render_sentence(s.targets, style_rng) for s in testset]
        else:
            rendered = list(testset)
        transformed = [scenario_transform(s, scenario) for s in rendered]
        preds = _predict(model, transformed)
        flat_preds = [p for ps in preds for p in ps]
        flat_targets = [t for s in transformed for t in s.targets]
        per_repeat.append(precision_at_k(flat_preds, flat_targets))
    entry = ScenarioEntry(model_name, scenario.value, per_repeat)
    meta = {"repeats": repeats, "sentences": len(testset),
            "positions": sum(len(s) for s in testset)}
    return EvalReport(entries=[entry], meta=meta)


@dataclass
class MinStrokesResult:
    per_sentence: np.ndarray      # (num_sentences, n) minimal stroke counts
    mean_per_position: np.ndarray  # (n,)


def min_strokes_analysis(model: DstfnModel, sentences: Sequence[InkSentence],
                         k_metric: int = 3) -> MinStrokesResult:
    """Fewest strokes per position for the target to enter the top-k.

    All sentences must share one length.  Earlier characters are committed as
    gold with their full strokes; the character under test is truncated to a
    writing-order prefix, searching s = 0, 1, ... upward.  A position never
    recognized even with full strokes reports its full stroke count.
    """
    if not sentences:
        raise ValidationError("need at least one sentence")
    n = len(sentences[0])
    if any(len(s) != n for s in sentences):
        raise ValidationError("minimum-strokes analysis requires equal-length sentences")
    m = len(sentences)
    d = model.cfg.decoder.hidden
    maps = np.stack([model.glyph_maps(g) for s in sentences for g in s.glyphs])
    full_vecs = model.encode_glyph_batch(maps).data.reshape(m, n, d)
    result = np.zeros((m, n), dtype=np.int64)
    for i in range(n):
        tokens = np.stack([
            np.array([model.bos] + list(s.targets[:i]), dtype=np.int64)
            for s in sentences])
        stroke_counts = np.array([s.glyphs[i].stroke_count for s in sentences])
        found = np.full(m, -1, dtype=np.int64)
        s_level = 0
        while True:
            active = [j for j in range(m)
                      if found[j] < 0 and s_level <= stroke_counts[j]]
            if not active:
                break
            trunc_maps = np.stack([
                model.glyph_maps(truncate_strokes(sentences[j].glyphs[i], s_level))
                for j in active])
            trunc_vecs = model.encode_glyph_batch(trunc_maps).data
            vecs = full_vecs[active][:, : i + 1].copy()
            vecs[:, i] = trunc_vecs
            logits = model.forward(tokens[active][:, : i + 1],
                                   nn.Tensor(vecs)).data[:, i]
            for row, j in zip(logits, active):
                order = np.lexsort((np.arange(row.shape[0]), -row))[:k_metric]
                if sentences[j].targets[i] in order:
                    found[j] = s_level
            s_level += 1
        for j in range(m):
            result[j, i] = found[j] if found[j] >= 0 else stroke_counts[j]
    return MinStrokesResult(result, result.mean(axis=0))


# ---------------------------------------------------------------------------
# report files: CSV, JSON, SVG (all byte-deterministic)
# ---------------------------------------------------------------------------

def write_report_csv(path: str | Path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "scenario", "metric", "value"])
        for e in report.entries:
            for k, value in enumerate(e.mean, start=1):
                writer.writerow([e.model, e.scenario, f"P@{k}", f"{value:.6f}"])


def write_report_json(path: str | Path, report: EvalReport) -> None:
    obj = {
        "meta": report.meta,
        "entries": [
            {"model": e.model, "scenario": e.scenario,
             "mean": [round(v, 6) for v in e.mean],
             "per_repeat": [[round(v, 6) for v in pk] for pk in e.per_repeat]}
            for e in report.entries],
    }
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1))


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def write_pk_chart_svg(path: str | Path, title: str,
                       series: dict[str, Sequence[float]]) -> None:
    """Line chart of P@1..P@5 per model; plain handwritten SVG so two runs
    with the same data are byte-identical."""
    w, h, pad = 480, 300, 45
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
             f'viewBox="0 0 {w} {h}">',
             f'<rect width="{w}" height="{h}" fill="white"/>',
             f'<text x="{w // 2}" y="20" text-anchor="middle" font-size="14" '
             f'font-family="sans-serif">{title}</text>']
    def sx(k):
        return pad + (w - 2 * pad) * (k / 4.0)
    def sy(v):
        return h - pad - (h - 2 * pad) * v
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(frac)
        lines.append(f'<line x1="{pad}" y1="{y:.1f}" x2="{w - pad}" y2="{y:.1f}" '
                     f'stroke="#dddddd"/>')
        lines.append(f'<text x="{pad - 6}" y="{y + 4:.1f}" text-anchor="end" '
                     f'font-size="10" font-family="sans-serif">{frac:.2f}</text>')
    for k in range(5):
        lines.append(f'<text x="{sx(k):.1f}" y="{h - pad + 16}" text-anchor="middle" '
                     f'font-size="10" font-family="sans-serif">P@{k + 1}</text>')
    for idx, (name, values) in enumerate(sorted(series.items())):
        color = _SVG_COLORS[idx % len(_SVG_COLORS)]
        points = " ".join(f"{sx(k):.1f},{sy(v):.1f}" for k, v in enumerate(values))
        lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" '
                     f'points="{points}"/>')
        lines.append(f'<text x="{w - pad + 4}" y="{sy(values[-1]) + 4:.1f}" '
                     f'font-size="10" font-family="sans-serif" fill="{color}">'
                     f'{name}</text>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines))


def write_min_strokes_svg(path: str | Path, mean_per_position: np.ndarray,
                          title: str = "minimum strokes per position") -> None:
    w, h, pad = 520, 260, 40
    n = len(mean_per_position)
    top = max(1.0, float(mean_per_position.max()))
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
             f'viewBox="0 0 {w} {h}">',
             f'<rect width="{w}" height="{h}" fill="white"/>',
             f'<text x="{w // 2}" y="18" text-anchor="middle" font-size="13" '
             f'font-family="sans-serif">{title}</text>']
    bar_w = (w - 2 * pad) / max(n, 1)
    for i, v in enumerate(mean_per_position):
        bh = (h - 2 * pad) * float(v) / top
        x = pad + i * bar_w
        lines.append(f'<rect x="{x:.1f}" y="{h - pad - bh:.1f}" '
                     f'width="{bar_w * 0.8:.1f}" height="{bh:.1f}" fill="#1f77b4"/>')
    lines.append(f'<text x="{pad}" y="{h - 8}" font-size="10" '
                 f'font-family="sans-serif">positions 1..{n}, peak {top:.2f}</text>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines))
