"""Synthetic stroke-glyph corpus.

A procedurally generated alphabet stands in for a real handwritten character
set: every symbol has a canonical stroke template plus a style model
(per-point Gaussian jitter and stroke-endpoint truncation).  Templates are
built in *families* that share a writing-order stroke prefix and diverge in
their final strokes, so percentage retention makes family members genuinely
confusable while full strokes stay separable.  A fraction of templates are
single-stroke so that missing-last-stroke retention produces zero-stroke
glyphs.

The sentence corpus is an order-2 Markov model over symbols with a mandated
share of deterministic rows (a single successor), giving context-forced
positions where the next symbol is predictable before any stroke is written.

The two-period position-quartile retention tables are hard-coded as integer
percentages so each row sums to exactly one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ForgeError, ValidationError
from .strokes import (Glyph, InkSentence, Point, RetentionLevel, Stroke,
                      apply_retention, rasterize_stroke)

LENGTH_RANGE = (10, 40)

RETENTION_ORDER = (RetentionLevel.FULL, RetentionLevel.MLS, RetentionLevel.R70,
                   RetentionLevel.R50, RetentionLevel.R30)

# per-quartile retention percentages, first and second training period
PERIOD1_ROWS = ((60, 30, 10, 0, 0),
                (10, 40, 40, 10, 0),
                (10, 10, 30, 40, 10),
                (10, 10, 20, 40, 20))
PERIOD2_ROWS = ((5, 45, 50, 0, 0),
                (0, 30, 40, 30, 0),
                (0, 10, 20, 40, 30),
                (0, 0, 20, 30, 50))


# ---------------------------------------------------------------------------
# curriculum tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurriculumTable:
    """4 position-quartile rows x 5 retention levels, integer percages."""

    period: int
    rows: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.rows) != 4 or any(len(r) != 5 for r in self.rows):
            raise ConfigurationError("curriculum table must be 4x5")
        for r in self.rows:
            if any(p < 0 for p in r):
                raise ConfigurationError(f"negative probability in row {r}")
            if sum(r) != 100:
                raise ConfigurationError(f"row {r} sums to {sum(r)}%, not 100%")

    def probabilities(self) -> list[list[Fraction]]:
        return [[Fraction(p, 100) for p in row] for row in self.rows]


def curriculum_table(period: int) -> CurriculumTable:
    if period == 1:
        return CurriculumTable(1, PERIOD1_ROWS)
    if period == 2:
        return CurriculumTable(2, PERIOD2_ROWS)
    raise ConfigurationError(f"period must be 1 or 2, got {period}")


FULL_ONLY_TABLE = CurriculumTable(0, ((100, 0, 0, 0, 0),) * 4)


def position_quartile(index: int, n: int) -> int:
    """floor(4*index/n), clamped to 3."""
    if not 0 <= index < n:
        raise ValidationError(f"index {index} outside [0, {n})")
    return min(4 * index // n, 3)


def sample_retention_level(table: CurriculumTable, quartile: int,
                           rng: np.random.Generator) -> RetentionLevel:
    """Categorical draw from the quartile's row (exact integer arithmetic)."""
    row = table.rows[quartile]
    draw = int(rng.integers(0, 100))
    acc = 0
    for level, p in zip(RETENTION_ORDER, row):
        acc += p
        if draw < acc:
            return level
    raise ConfigurationError(f"row {row} sums below 100")


def curriculum_sentence(sentence: InkSentence, table: CurriculumTable,
                        rng: np.random.Generator) -> InkSentence:
    n = len(sentence)
    glyphs = tuple(
        apply_retention(g, sample_retention_level(table, position_quartile(i, n), rng))
        for i, g in enumerate(sentence.glyphs))
    return InkSentence(glyphs, sentence.targets)


def curriculum_batch(sentences: Sequence[InkSentence], table: CurriculumTable,
                     rng: np.random.Generator) -> list[InkSentence]:
    """Per-character retention draw at each position's quartile; labels and
    sentence order untouched."""
    return [curriculum_sentence(s, table, rng) for s in sentences]


# ---------------------------------------------------------------------------
# alphabet
# ---------------------------------------------------------------------------

LATTICE = 5  # stroke endpoints snap to a (LATTICE x LATTICE) grid


@dataclass
class Alphabet:
    """V symbol templates plus the style-perturbation parameters."""

    templates: list[tuple[Stroke, ...]]  # index = symbol id
    jitter_sigma: float = 0.012
    dropout_radius: float = 0.15
    dropout_prob: float = 0.3

    @property
    def vocab(self) -> int:
        return len(self.templates)

    def render(self, symbol: int, rng: np.random.Generator) -> Glyph:
        """One styled glyph: jittered points, occasionally truncated final
        segment per stroke.  Zero jitter and zero radius reproduce the
        template exactly."""
        strokes = []
        for stroke in self.templates[symbol]:
            pts = np.array([[p.x, p.y] for p in stroke.points])
            if self.jitter_sigma > 0:
                pts = pts + rng.normal(0.0, self.jitter_sigma, size=pts.shape)
                pts = np.clip(pts, 0.0, 1.0)
            if (self.dropout_radius > 0 and len(pts) >= 2
                    and rng.random() < self.dropout_prob):
                frac = rng.uniform(0.0, self.dropout_radius)
                pts[-1] = pts[-1] + (pts[-2] - pts[-1]) * frac
            strokes.append(Stroke.from_xy(pts.tolist()))
        return Glyph(symbol, tuple(strokes))

    def render_sentence(self, symbols: Sequence[int],
                        rng: np.random.Generator) -> InkSentence:
        glyphs = tuple(self.render(int(s), rng) for s in symbols)
        return InkSentence(glyphs, tuple(int(s) for s in symbols))

    def to_json_obj(self) -> dict:
        return {
            "jitter_sigma": self.jitter_sigma,
            "dropout_radius": self.dropout_radius,
            "dropout_prob": self.dropout_prob,
            "templates": [
                {"symbol": i, "strokes": [[[p.x, p.y] for p in s.points] for s in t]}
                for i, t in enumerate(self.templates)],
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "Alphabet":
        templates = []
        for entry in sorted(obj["templates"], key=lambda e: e["symbol"]):
            templates.append(tuple(Stroke.from_xy(pts) for pts in entry["strokes"]))
        return Alphabet(templates,
                        jitter_sigma=float(obj["jitter_sigma"]),
                        dropout_radius=float(obj["dropout_radius"]),
                        dropout_prob=float(obj.get("dropout_prob", 0.3)))


def _lattice_point(rng: np.random.Generator) -> tuple[float, float]:
    i, j = rng.integers(0, LATTICE, size=2)
    return (float(i) / (LATTICE - 1), float(j) / (LATTICE - 1))


def _random_stroke(rng: np.random.Generator) -> Stroke:
    n_pts = int(rng.integers(2, 4))
    pts = [_lattice_point(rng)]
    while len(pts) < n_pts:
        cand = _lattice_point(rng)
        if cand != pts[-1]:
            pts.append(cand)
    return Stroke.from_xy(pts)


def make_alphabet(vocab: int, seed: int, single_stroke_fraction: float = 0.15,
                  max_strokes: int = 12, jitter_sigma: float = 0.012,
                  dropout_radius: float = 0.15) -> Alphabet:
    """Procedural templates: a share of single-stroke symbols plus families
    sharing a stroke prefix; all pairwise distinct at zero jitter."""
    if vocab < 10:
        raise ConfigurationError(f"alphabet needs at least 10 symbols, got {vocab}")
    rng = np.random.default_rng(seed)
    templates: list[tuple[Stroke, ...]] = []
    seen: set[bytes] = set()

    def admit(strokes: tuple[Stroke, ...]) -> bool:
        grid = np.zeros((32, 32), dtype=np.uint8)
        for s in strokes:
            grid |= rasterize_stroke(s)
        key = grid.tobytes()
        if key in seen:
            return False
        seen.add(key)
        templates.append(strokes)
        return True

    n_single = max(2, int(round(vocab * single_stroke_fraction)))
    guard = 0
    while len(templates) < n_single:
        if not admit((_random_stroke(rng),)):
            guard += 1
            if guard > 1000:
                raise ForgeError("could not build distinct single-stroke templates")

    while len(templates) < vocab:
        base_len = int(rng.integers(2, 6))
        base = tuple(_random_stroke(rng) for _ in range(base_len))
        family = int(rng.integers(2, 5))
        for _ in range(family):
            if len(templates) >= vocab:
                break
            extra = int(rng.integers(1, max(2, max_strokes - base_len + 1)))
            extra = min(extra, 5)
            guard = 0
            while True:
                own = tuple(_random_stroke(rng) for _ in range(extra))
                if admit(base + own):
                    break
                guard += 1
                if guard > 1000:
                    raise ForgeError("could not extend a template family distinctly")
    return Alphabet(templates, jitter_sigma=jitter_sigma,
                    dropout_radius=dropout_radius)


# ---------------------------------------------------------------------------
# sentence corpus
# ---------------------------------------------------------------------------

@dataclass
class CorpusModel:
    """Order-2 Markov model over symbols with deterministic rows."""

    vocab: int
    succ_ids: np.ndarray      # (V, V, B) successor symbol ids
    succ_probs: np.ndarray    # (V, V, B) row-stochastic
    order1_ids: np.ndarray    # (V, B) for the second symbol
    order1_probs: np.ndarray  # (V, B)
    det_mask: np.ndarray      # (V, V) bool: single-successor contexts
    length_range: tuple[int, int] = LENGTH_RANGE

    def __post_init__(self):
        sums = self.succ_probs.sum(axis=-1)
        if not np.allclose(sums, 1.0, atol=1e-9):
            raise ConfigurationError("transition rows must sum to 1 within 1e-9")
        self._succ_cum = np.cumsum(self.succ_probs, axis=-1)
        self._order1_cum = np.cumsum(self.order1_probs, axis=-1)

    def sample_length(self, rng: np.random.Generator) -> int:
        lo, hi = self.length_range
        return int(rng.integers(lo, hi + 1))

    def sample_symbols(self, rng: np.random.Generator,
                       length: int | None = None) -> list[int]:
        n = length if length is not None else self.sample_length(rng)
        first = int(rng.integers(0, self.vocab))
        j = int(np.searchsorted(self._order1_cum[first], rng.random(), side="right"))
        second = int(self.order1_ids[first, min(j, self.order1_ids.shape[1] - 1)])
        out = [first, second]
        draws = rng.random(n)
        for i in range(n - 2):
            a, b = out[-2], out[-1]
            j = int(np.searchsorted(self._succ_cum[a, b], draws[i], side="right"))
            out.append(int(self.succ_ids[a, b, min(j, self.succ_ids.shape[2] - 1)]))
        return out

    def is_forced(self, a: int, b: int) -> bool:
        return bool(self.det_mask[a, b])

    def forced_positions(self, targets: Sequence[int]) -> list[int]:
        """Positions whose symbol is fully determined by the two before it."""
        return [i for i in range(2, len(targets))
                if self.is_forced(targets[i - 2], targets[i - 1])]

    def to_json_obj(self) -> dict:
        return {
            "vocab": self.vocab,
            "succ_ids": self.succ_ids.tolist(),
            "succ_probs": self.succ_probs.tolist(),
            "order1_ids": self.order1_ids.tolist(),
            "order1_probs": self.order1_probs.tolist(),
            "det_mask": self.det_mask.astype(int).tolist(),
            "length_range": list(self.length_range),
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "CorpusModel":
        return CorpusModel(
            vocab=int(obj["vocab"]),
            succ_ids=np.asarray(obj["succ_ids"], dtype=np.int64),
            succ_probs=np.asarray(obj["succ_probs"], dtype=np.float64),
            order1_ids=np.asarray(obj["order1_ids"], dtype=np.int64),
            order1_probs=np.asarray(obj["order1_probs"], dtype=np.float64),
            det_mask=np.asarray(obj["det_mask"], dtype=bool),
            length_range=tuple(obj["length_range"]))


def make_corpus(vocab: int, seed: int, deterministic_fraction: float = 0.25,
                branching: int = 4) -> CorpusModel:
    """Transition tables with balanced successor usage: each context's
    successor set comes from a fixed permutation offset, so every symbol is
    reachable; at least `deterministic_fraction` of order-2 rows are
    deterministic."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(vocab)
    succ_ids = np.zeros((vocab, vocab, branching), dtype=np.int64)
    succ_probs = np.zeros((vocab, vocab, branching))
    det_mask = np.zeros((vocab, vocab), dtype=bool)
    period = max(2, int(round(1.0 / deterministic_fraction)))
    for a in range(vocab):
        for b in range(vocab):
            offset = (a * 7 + b * 13) % vocab
            ids = [int(perm[(offset + j * 3) % vocab]) for j in range(branching)]
            succ_ids[a, b] = ids
            if (a * 31 + b * 17) % period == 0:
                det_mask[a, b] = True
                succ_probs[a, b, 0] = 1.0
            else:
                w = rng.uniform(0.5, 3.0, size=branching)
                succ_probs[a, b] = w / w.sum()
    order1_ids = np.zeros((vocab, branching), dtype=np.int64)
    order1_probs = np.zeros((vocab, branching))
    for a in range(vocab):
        offset = (a * 11) % vocab
        order1_ids[a] = [int(perm[(offset + j * 5) % vocab]) for j in range(branching)]
        w = rng.uniform(0.5, 3.0, size=branching)
        order1_probs[a] = w / w.sum()
    return CorpusModel(vocab, succ_ids, succ_probs, order1_ids, order1_probs, det_mask)


def forge_sentence(corpus: CorpusModel, alphabet: Alphabet,
                   rng: np.random.Generator) -> InkSentence:
    """Sample a symbol sequence and render each symbol with a fresh style
    perturbation."""
    return alphabet.render_sentence(corpus.sample_symbols(rng), rng)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

@dataclass
class SplitStats:
    sizes: dict[str, int]
    length_percent: dict[str, tuple[float, float, float]]

    def to_json_obj(self) -> dict:
        return {
            "sizes": self.sizes,
            "length_percent": {k: list(v) for k, v in self.length_percent.items()},
        }


def _length_buckets(sentences: Sequence[InkSentence]) -> tuple[float, float, float]:
    counts = [0, 0, 0]
    for s in sentences:
        n = len(s)
        counts[0 if n < 20 else 1 if n < 30 else 2] += 1
    total = max(1, len(sentences))
    return tuple(100.0 * c / total for c in counts)


def _covers_vocab(sentences: Sequence[InkSentence], vocab: int) -> set[int]:
    seen: set[int] = set()
    for s in sentences:
        seen.update(s.targets)
    return set(range(vocab)) - seen


def make_splits(corpus: CorpusModel, alphabet: Alphabet,
                sizes: dict[str, int], seed: int,
                max_rounds: int = 20) -> tuple[dict[str, list[InkSentence]], SplitStats]:
    """Disjoint train/dev/test sentence sets, every symbol present in every
    split; bounded resampling, then a forge error."""
    rng = np.random.default_rng(seed)
    taken: set[tuple[int, ...]] = set()
    splits: dict[str, list[InkSentence]] = {}
    for name in ("train", "dev", "test"):
        want = sizes[name]
        sentences: list[InkSentence] = []
        guard = 0
        while len(sentences) < want:
            s = forge_sentence(corpus, alphabet, rng)
            key = s.targets
            if key in taken:
                guard += 1
                if guard > 50 * want:
                    raise ForgeError(f"cannot sample {want} distinct sentences for {name}")
                continue
            taken.add(key)
            sentences.append(s)
        for _ in range(max_rounds):
            missing = _covers_vocab(sentences, corpus.vocab)
            if not missing:
                break
            replaced = False
            guard = 0
            while not replaced:
                s = forge_sentence(corpus, alphabet, rng)
                if s.targets in taken or not (missing & set(s.targets)):
                    guard += 1
                    if guard > 5000:
                        raise ForgeError(
                            f"cannot cover symbols {sorted(missing)} in {name}")
                    continue
                taken.add(s.targets)
                drop = int(rng.integers(0, len(sentences)))
                sentences[drop] = s
                replaced = True
        else:
            raise ForgeError(
                f"symbol coverage unreachable for split {name}: {sorted(missing)}")
        splits[name] = sentences
    stats = SplitStats(
        sizes={k: len(v) for k, v in splits.items()},
        length_percent={k: _length_buckets(v) for k, v in splits.items()})
    return splits, stats


def default_sizes(train: int) -> dict[str, int]:
    return {"train": train, "dev": max(50, train // 20), "test": max(100, train // 10)}


# ---------------------------------------------------------------------------
# on-disk corpus bundle
# ---------------------------------------------------------------------------

def write_forge_output(out_dir: str | Path, splits: dict[str, list[InkSentence]],
                       stats: SplitStats, alphabet: Alphabet,
                       corpus: CorpusModel) -> None:
    from .strokes import write_jsonl

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, sentences in splits.items():
        write_jsonl(out / f"{name}.jsonl", sentences)
    (out / "alphabet.json").write_text(
        json.dumps(alphabet.to_json_obj(), sort_keys=True))
    (out / "corpus.json").write_text(
        json.dumps(corpus.to_json_obj(), sort_keys=True))
    (out / "stats.json").write_text(
        json.dumps(stats.to_json_obj(), sort_keys=True, indent=1))


def load_alphabet(path: str | Path) -> Alphabet:
    return Alphabet.from_json_obj(json.loads(Path(path).read_text()))


def load_corpus(path: str | Path) -> CorpusModel:
    return CorpusModel.from_json_obj(json.loads(Path(path).read_text()))
