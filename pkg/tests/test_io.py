import struct

import numpy as np
import pytest
from hypothesis import given, settings, HealthCheck, strategies as st
from hypothesis.extra.numpy import arrays

from matchret import io
from matchret.errors import FormatError
from matchret.geometry import OverlapMask
from matchret.retrieval import RankList


def test_scene_text_round_trip(tmp_path, default_scene):
    sc = default_scene
    p = tmp_path / "scene.txt"
    io.write_scene(p, sc.cameras, sc.mesh, sc.tracks)
    cams, mesh, tracks = io.read_scene(p)
    assert cams == sc.cameras and mesh == sc.mesh and tracks == sc.tracks
    q = tmp_path / "again.txt"
    io.write_scene(q, cams, mesh, tracks)
    assert p.read_bytes() == q.read_bytes()


def test_scene_text_errors():
    with pytest.raises(FormatError):
        io.parse_scene("camera 0 1 2 3\n")
    with pytest.raises(FormatError):
        io.parse_scene("sphere 1 2 3\n")
    with pytest.raises(FormatError):
        io.parse_scene("v 1 x 3\n")


f32 = arrays(np.float32, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 5)),
             elements=st.floats(-1e6, 1e6, width=32))


@settings(suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(f32)
def test_fmap_round_trip(tmp_path, a):
    p, q = tmp_path / "a.fmap", tmp_path / "b.fmap"
    io.write_fmap(p, a)
    back = io.read_fmap(p)
    assert back.tobytes() == a.tobytes() and back.shape == a.shape
    io.write_fmap(q, back)
    assert p.read_bytes() == q.read_bytes()


def test_binary_layouts(tmp_path):
    e = np.arange(6, dtype=np.float32).reshape(2, 3)
    io.write_emb(tmp_path / "x.emb", e)
    data = (tmp_path / "x.emb").read_bytes()
    assert data[:4] == b"EMB1" and struct.unpack("<II", data[4:12]) == (2, 3)
    assert np.frombuffer(data[12:], "<f4").tolist() == [0, 1, 2, 3, 4, 5]
    np.testing.assert_array_equal(io.read_emb(tmp_path / "x.emb"), e)
    io.write_lemb(tmp_path / "w.lemb", e.T)
    data = (tmp_path / "w.lemb").read_bytes()
    assert data[:4] == b"LEMB" and struct.unpack("<II", data[4:12]) == (3, 2)
    np.testing.assert_array_equal(io.read_lemb(tmp_path / "w.lemb"), e.T)


def test_binary_errors(tmp_path):
    p = tmp_path / "bad.fmap"
    p.write_bytes(b"FMAQ" + struct.pack("<III", 1, 1, 1) + b"\0" * 4)
    with pytest.raises(FormatError):
        io.read_fmap(p)
    p.write_bytes(b"FMAP" + struct.pack("<III", 2, 2, 2) + b"\0" * 8)
    with pytest.raises(FormatError):
        io.read_fmap(p)
    p.write_bytes(b"EMB1\x01")
    with pytest.raises(FormatError):
        io.read_emb(p)


def test_overlap_visibility_masks(tmp_path, default_scene):
    sc = default_scene
    io.write_overlap(tmp_path / "o.txt", sc.overlap)
    t = io.read_overlap(tmp_path / "o.txt", sc.scene_id)
    assert t.image_ids == sc.overlap.image_ids
    np.testing.assert_allclose(t.co, sc.overlap.co, atol=5e-7)
    np.testing.assert_array_equal(t.co, t.co.T)
    io.write_visibility(tmp_path / "v.txt", sc.visibility)
    assert io.read_visibility(tmp_path / "v.txt") == sc.visibility
    pair = (OverlapMask(np.eye(3, dtype=np.uint8)), OverlapMask(np.ones((3, 3), dtype=np.uint8)))
    io.write_mask_pair(tmp_path / "m.mask", pair)
    back = io.read_mask_pair(tmp_path / "m.mask")
    for a, b in zip(pair, back):
        np.testing.assert_array_equal(a.grid, b.grid)


def test_rank_lists_history_ids(tmp_path):
    rl = [RankList("q", ["a", "b"], np.array([0.1, 0.25])), RankList("r", ["b"], np.array([1.5]))]
    io.write_rank_lists(tmp_path / "r.txt", rl)
    assert (tmp_path / "r.txt").read_text().splitlines()[0] == "q a 1 0.100000"
    back = io.read_rank_lists(tmp_path / "r.txt")
    assert [(x.query_id, x.items) for x in back] == [("q", ["a", "b"]), ("r", ["b"])]
    io.write_history(tmp_path / "h.txt", [(0, 1.5, 0.002), (1, 1.25, 0.002)])
    assert io.read_history(tmp_path / "h.txt") == [(0, 1.5, 0.002), (1, 1.25, 0.002)]
    io.write_ids(tmp_path / "i.txt", ["s/0", "s/1"])
    assert io.read_ids(tmp_path / "i.txt") == ["s/0", "s/1"]


def test_manifest_deterministic(tmp_path):
    a = io.write_manifest(tmp_path / "a.json", "synth", {"seed": 7, "scales": (1, 2)}, [], [tmp_path / "x"], 7)
    io.write_manifest(tmp_path / "b.json", "synth", {"scales": (1, 2), "seed": 7}, [], [tmp_path / "x"], 7)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert io.read_manifest(tmp_path / "a.json") == a
    assert a["config"]["scales"] == [1, 2] and "version" in a
