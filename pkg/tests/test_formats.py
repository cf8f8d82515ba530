import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scanssc.formats import (
    FormatError,
    decode_logit_grid,
    decode_voxel_grid,
    encode_logit_grid,
    encode_voxel_grid,
    read_voxel_grid,
    voxels_from_csv,
    voxels_to_csv,
    write_voxel_grid,
)

shapes = st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))


@settings(max_examples=40, deadline=None)
@given(grid=shapes.flatmap(lambda s: arrays(np.int64, s, elements=st.integers(0, 300))))
def test_voxel_round_trip(grid):
    assert np.array_equal(decode_voxel_grid(encode_voxel_grid(grid)), grid)


@settings(max_examples=40, deadline=None)
@given(grid=st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 4)).flatmap(
    lambda s: arrays(np.float32, s, elements=st.floats(-1e6, 1e6, width=32))))
def test_logit_round_trip(grid):
    assert np.array_equal(decode_logit_grid(encode_logit_grid(grid)), grid)


def test_single_voxel():
    blob = encode_voxel_grid(np.array([[[255]]]))
    assert len(blob) == 4 + 2 + 12 + 1 + 1 + 4
    assert blob[:4] == b"SSCG" and decode_voxel_grid(blob).tolist() == [[[255]]]


def test_z_fastest_layout():
    g = np.arange(8).reshape(2, 2, 2)
    blob = encode_voxel_grid(g)
    assert list(blob[19:27]) == [0, 1, 2, 3, 4, 5, 6, 7]
    g[0, 0, 1] = 9
    assert encode_voxel_grid(g)[20] == 9


def test_wide_labels_pick_u16():
    g = np.array([[[256, 1]]])
    blob = encode_voxel_grid(g)
    assert blob[18] == 2
    with pytest.raises(FormatError):
        encode_voxel_grid(g, label_width=1)


@pytest.mark.parametrize("decode,encode,grid", [
    (decode_voxel_grid, encode_voxel_grid, np.arange(24).reshape(2, 3, 4)),
    (decode_logit_grid, encode_logit_grid, np.linspace(-1, 1, 24).reshape(2, 3, 2, 2)),
])
def test_corruption_detected(decode, encode, grid):
    blob = bytearray(encode(grid))
    blob[-6] ^= 0x01
    with pytest.raises(FormatError, match="CRC"):
        decode(bytes(blob))
    with pytest.raises(FormatError):
        decode(bytes(blob[:-1]))
    bad = bytearray(encode(grid))
    bad[0] = ord("X")
    with pytest.raises(FormatError, match="magic"):
        decode(bytes(bad))


def test_encode_rejects_bad_input():
    with pytest.raises(FormatError):
        encode_voxel_grid(np.zeros((2, 2)))
    with pytest.raises(FormatError):
        encode_voxel_grid(np.array([[[-1]]]))
    with pytest.raises(FormatError):
        encode_logit_grid(np.full((1, 1, 1, 2), np.nan))


def test_csv_round_trip(rng, tmp_path):
    g = rng.integers(0, 20, size=(3, 2, 4))
    text = voxels_to_csv(g)
    assert text.splitlines()[:3] == ["x,y,z,label", f"0,0,0,{g[0, 0, 0]}", f"0,0,1,{g[0, 0, 1]}"]
    assert np.array_equal(voxels_from_csv(text), g)
    write_voxel_grid(tmp_path / "g.sscg", g)
    assert np.array_equal(read_voxel_grid(tmp_path / "g.sscg"), g)


def test_csv_must_cover_grid():
    with pytest.raises(FormatError):
        voxels_from_csv("x,y,z,label\n1,0,0,3\n")
    with pytest.raises(FormatError):
        voxels_from_csv("x,y,z,label\n")
