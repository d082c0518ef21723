"""Stroke, glyph, and sentence domain types; rasterization; retention
transforms; and the JSON wire format shared by the forge, CLI, and service.

Coordinates are normalized to [0,1] with x growing rightwards (columns) and
y growing downwards (rows); input devices are responsible for normalization.
A glyph's strokes are rasterized one per channel into a stack of 28 binary
32x32 maps, with unused channels all-zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, ValidationError

GRID = 32
MAX_STROKES = 28


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValidationError(f"point ({self.x}, {self.y}) outside the unit square")


@dataclass(frozen=True)
class Stroke:
    points: tuple[Point, ...]

    def __post_init__(self):
        if len(self.points) == 0:
            raise ValidationError("a stroke needs at least one point")

    @staticmethod
    def from_xy(pairs: Iterable[Sequence[float]]) -> "Stroke":
        return Stroke(tuple(Point(float(x), float(y)) for x, y in pairs))


@dataclass(frozen=True)
class Glyph:
    """One handwritten character: a symbol id plus its ordered strokes."""

    symbol: int
    strokes: tuple[Stroke, ...]

    def __post_init__(self):
        if len(self.strokes) > MAX_STROKES:
            raise CapacityError(
                f"glyph has {len(self.strokes)} strokes; encoder capacity is {MAX_STROKES}")

    @property
    def stroke_count(self) -> int:
        return len(self.strokes)


@dataclass(frozen=True)
class InkSentence:
    """Aligned glyph and target sequences.

    Retention transforms may later empty a glyph's strokes but never touch
    the targets.
    """

    glyphs: tuple[Glyph, ...]
    targets: tuple[int, ...]

    def __post_init__(self):
        if len(self.glyphs) != len(self.targets):
            raise ValidationError(
                f"{len(self.glyphs)} glyphs vs {len(self.targets)} targets")

    def __len__(self) -> int:
        return len(self.targets)


class RetentionLevel(Enum):
    """How many strokes of a character survive."""

    FULL = "full"
    MLS = "mls"      # drop the final stroke
    R70 = "r70"
    R50 = "r50"
    R30 = "r30"

    @property
    def keep_percent(self) -> int | None:
        return {"r70": 70, "r50": 50, "r30": 30}.get(self.value)


def _to_grid(v: float) -> int:
    # scale by 31 and round half-up
    return math.floor(v * (GRID - 1) + 0.5)


def rasterize_stroke(stroke: Stroke) -> np.ndarray:
    """Draw one stroke as a binary 32x32 map.

    Consecutive points are joined by an integer line walk over the grid; each
    segment is drawn from its lexicographically smaller endpoint so reversing
    the point order of a straight segment sets the same cells.  Single-point
    strokes set exactly one cell.
    """
    grid = np.zeros((GRID, GRID), dtype=np.uint8)
    cells = [(_to_grid(p.x), _to_grid(p.y)) for p in stroke.points]
    if len(cells) == 1:
        x, y = cells[0]
        grid[y, x] = 1
        return grid
    for (x0, y0), (x1, y1) in zip(cells, cells[1:]):
        if (x1, y1) < (x0, y0):
            x0, y0, x1, y1 = x1, y1, x0, y0
        steps = max(abs(x1 - x0), abs(y1 - y0))
        if steps == 0:
            grid[y0, x0] = 1
            continue
        ts = np.arange(steps + 1, dtype=np.float64)
        xs = np.floor(x0 + (x1 - x0) * ts / steps + 0.5).astype(np.intp)
        ys = np.floor(y0 + (y1 - y0) * ts / steps + 0.5).astype(np.intp)
        grid[ys, xs] = 1
    return grid


def build_char_tensor(glyph: Glyph) -> np.ndarray:
    """Stack per-stroke maps into the fixed (28, 32, 32) binary tensor.

    Channel j holds stroke j's rasterization; channels beyond the glyph's
    stroke count stay all-zero.  A zero-stroke glyph yields the all-zero
    tensor.
    """
    if glyph.stroke_count > MAX_STROKES:
        raise CapacityError(f"glyph has {glyph.stroke_count} strokes (max {MAX_STROKES})")
    out = np.zeros((MAX_STROKES, GRID, GRID), dtype=np.uint8)
    for j, stroke in enumerate(glyph.strokes):
        out[j] = rasterize_stroke(stroke)
    return out


def retained_count(level: RetentionLevel, k: int) -> int:
    """Strokes surviving retention: k for FULL, max(k-1, 0) for MLS,
    ceil(p*k) for percentage levels (exact integer arithmetic)."""
    if level is RetentionLevel.FULL:
        return k
    if level is RetentionLevel.MLS:
        return max(k - 1, 0)
    percent = level.keep_percent
    return -((-percent * k) // 100)


def apply_retention(glyph: Glyph, level: RetentionLevel) -> Glyph:
    """Keep a writing-order prefix of strokes according to the level.

    FULL is the identity; MLS drops the final stroke (a one-stroke glyph
    becomes a zero-stroke glyph); percentage levels keep the first
    ceil(p * k) strokes.  The symbol label never changes.
    """
    if level is RetentionLevel.FULL:
        return glyph
    return Glyph(glyph.symbol,
                 glyph.strokes[: retained_count(level, glyph.stroke_count)])


def drop_last_n(glyph: Glyph, n: int) -> Glyph:
    """Keep the first max(k - n, 0) strokes."""
    if n < 0:
        raise ValidationError("n must be >= 0")
    if n == 0:
        return glyph
    return Glyph(glyph.symbol, glyph.strokes[: max(glyph.stroke_count - n, 0)])


def truncate_strokes(glyph: Glyph, count: int) -> Glyph:
    """Keep the first `count` strokes (used by the minimum-strokes search)."""
    return Glyph(glyph.symbol, glyph.strokes[: max(0, count)])


# ---------------------------------------------------------------------------
# JSON wire format
# ---------------------------------------------------------------------------

def glyph_to_json_obj(glyph: Glyph) -> dict:
    return {
        "symbol": glyph.symbol,
        "strokes": [[[p.x, p.y] for p in s.points] for s in glyph.strokes],
    }


def glyph_from_json_obj(obj: dict) -> Glyph:
    strokes = tuple(Stroke.from_xy(pts) for pts in obj["strokes"])
    return Glyph(int(obj["symbol"]), strokes)


def sentence_to_json_line(sentence: InkSentence) -> str:
    obj = {
        "targets": list(sentence.targets),
        "glyphs": [glyph_to_json_obj(g) for g in sentence.glyphs],
    }
    return json.dumps(obj, separators=(",", ":"))


def sentence_from_json_line(line: str) -> InkSentence:
    obj = json.loads(line)
    glyphs = tuple(glyph_from_json_obj(g) for g in obj["glyphs"])
    return InkSentence(glyphs, tuple(int(t) for t in obj["targets"]))


def write_jsonl(path, sentences: Iterable[InkSentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(sentence_to_json_line(s))
            fh.write("\n")


def read_jsonl(path) -> list[InkSentence]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(sentence_from_json_line(line))
    return out
