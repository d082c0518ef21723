"""Checkpoint format round-trip tests."""

import numpy as np
import pytest

from inkline import nn
from inkline.nn.checkpoint import MAGIC, CheckpointError


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    arrays = {
        "glyph.block0.conv.w": rng.standard_normal((4, 3, 3, 3)).astype(np.float32),
        "lm.embed.table": rng.standard_normal((10, 8)).astype(np.float64),
        "scalar": np.asarray(3.25, dtype=np.float32),
    }
    path = tmp_path / "model.inkl"
    nn.save_checkpoint(path, arrays)
    loaded = nn.load_checkpoint(path)
    assert sorted(loaded) == sorted(arrays)
    for name in arrays:
        assert loaded[name].dtype == arrays[name].dtype
        assert loaded[name].shape == arrays[name].shape
        assert loaded[name].tobytes() == arrays[name].tobytes(), name


def test_save_load_save_identical_bytes(tmp_path):
    rng = np.random.default_rng(6)
    arrays = {f"p{i}": rng.standard_normal((i + 1, 2)).astype(np.float32) for i in range(4)}
    p1, p2 = tmp_path / "a.inkl", tmp_path / "b.inkl"
    nn.save_checkpoint(p1, arrays)
    nn.save_checkpoint(p2, nn.load_checkpoint(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_magic_bytes(tmp_path):
    path = tmp_path / "m.inkl"
    nn.save_checkpoint(path, {"x": np.zeros(1, dtype=np.float32)})
    assert path.read_bytes()[:4] == MAGIC == b"INKL"


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.inkl"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError):
        nn.load_checkpoint(path)


def test_store_round_trip(tmp_path):
    store = nn.ParameterStore()
    rng = np.random.default_rng(7)
    store.add("a.w", rng.standard_normal((3, 3)).astype(np.float32))
    store.add("a.b", rng.standard_normal(3).astype(np.float32))
    path = tmp_path / "s.inkl"
    nn.save_checkpoint(path, store.as_arrays())
    other = nn.ParameterStore()
    other.add("a.w", np.zeros((3, 3), dtype=np.float32))
    other.add("a.b", np.zeros(3, dtype=np.float32))
    other.load_arrays(nn.load_checkpoint(path))
    for name in store.names():
        assert np.array_equal(store[name].data, other[name].data)
