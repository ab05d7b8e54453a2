import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hercules.beamform import VolumeGrid
from hercules.io import (ContainerError, mid_slices, read_channel_data, read_pgm, read_volume, slice_to_gray,
                         volume_bytes, write_channel_data, write_pgm, write_volume)
from hercules.schemes import TransmitScheme
from hercules.wavesim import ChannelData, Domain


def make_data(rng, complex_=False, domain=Domain.ENCODED):
    x = rng.standard_normal((4, 3, 17))
    if complex_:
        x = x + 1j * rng.standard_normal(x.shape)
    scheme = TransmitScheme("tilted_plane_wave", 4, tpw_angles_deg=(-3.0, 5.5), label="tpw")
    return ChannelData(x, 50e6, 1.25e-6, scheme, domain)


@pytest.mark.parametrize("complex_,domain", [(False, Domain.ENCODED), (True, Domain.DECODED)])
def test_channel_roundtrip(tmp_path, rng, complex_, domain):
    d = make_data(rng, complex_, domain)
    write_channel_data(tmp_path / "c.hrf", d)
    back = read_channel_data(tmp_path / "c.hrf")
    assert back.samples.tobytes() == d.samples.tobytes()
    assert back.samples.dtype == d.samples.dtype
    assert (back.fs, back.t0, back.domain, back.scheme) == (d.fs, d.t0, d.domain, d.scheme)
    assert back.scheme.label == "tpw"
    write_channel_data(tmp_path / "c2.hrf", back)
    assert (tmp_path / "c2.hrf").read_bytes() == (tmp_path / "c.hrf").read_bytes()


def test_channel_header_layout(tmp_path, rng):
    d = make_data(rng)
    write_channel_data(tmp_path / "c.hrf", d)
    raw = (tmp_path / "c.hrf").read_bytes()
    assert raw[:8] == b"HERCRF01"
    assert raw[8] == 0 and raw[9] == 0
    assert struct.unpack_from("<3I", raw, 12) == (4, 3, 17)
    assert struct.unpack_from("<2d", raw, 24) == (50e6, 1.25e-6)
    meta_len = struct.unpack_from("<Q", raw, 40)[0]
    assert raw[48:64] == bytes(16)
    assert len(raw) == 64 + meta_len + 4 * 3 * 17 * 8


def test_channel_truncated_and_foreign(tmp_path, rng):
    write_channel_data(tmp_path / "c.hrf", make_data(rng))
    raw = (tmp_path / "c.hrf").read_bytes()
    (tmp_path / "t.hrf").write_bytes(raw[:-5])
    with pytest.raises(ContainerError, match="truncated"):
        read_channel_data(tmp_path / "t.hrf")
    (tmp_path / "h.hrf").write_bytes(raw[:30])
    with pytest.raises(ContainerError, match="header"):
        read_channel_data(tmp_path / "h.hrf")
    (tmp_path / "v.hrf").write_bytes(b"HERCRF02" + raw[8:])
    with pytest.raises(ContainerError, match="version"):
        read_channel_data(tmp_path / "v.hrf")
    (tmp_path / "m.hrf").write_bytes(b"NOTMAGIC" + raw[8:])
    with pytest.raises(ContainerError, match="magic"):
        read_channel_data(tmp_path / "m.hrf")


@pytest.mark.parametrize("complex_", [True, False])
def test_volume_roundtrip(tmp_path, rng, complex_):
    vals = rng.standard_normal((3, 4, 5))
    if complex_:
        vals = vals + 1j * rng.standard_normal(vals.shape)
    v = VolumeGrid((-1e-3, 2e-4, 5e-3), (1e-4, 2e-4, 3e-5), (3, 4, 5), vals)
    write_volume(tmp_path / "v.hvol", v)
    back = read_volume(tmp_path / "v.hvol")
    assert back.values.tobytes() == v.values.tobytes()
    assert (back.origin, back.spacing, back.counts) == (v.origin, v.spacing, v.counts)


def test_volume_header_and_x_fastest(rng):
    vals = np.arange(24, dtype=float).reshape(2, 3, 4)
    raw = volume_bytes(VolumeGrid((0, 0, 1e-3), (1e-4, 1e-4, 1e-4), (2, 3, 4), vals))
    assert raw[:8] == b"HERCVOL1" and raw[8] == 1
    assert struct.unpack_from("<3H", raw, 10) == (2, 3, 4)
    data = np.frombuffer(raw[64:], "<f8")
    # first two values step along x
    assert data[0] == vals[0, 0, 0] and data[1] == vals[1, 0, 0] and data[2] == vals[0, 1, 0]


def test_volume_truncated(tmp_path):
    v = VolumeGrid((0, 0, 1e-3), (1e-4, 1e-4, 1e-4), (2, 2, 2), np.ones((2, 2, 2), complex))
    raw = volume_bytes(v)
    (tmp_path / "v.hvol").write_bytes(raw[:-1])
    with pytest.raises(ContainerError):
        read_volume(tmp_path / "v.hvol")


@settings(max_examples=25, deadline=None)
@given(st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5)), st.integers(0, 2 ** 32 - 1))
def test_volume_roundtrip_property(tmp_path_factory, counts, seed):
    vals = np.random.default_rng(seed).standard_normal(counts) * 1e-3
    v = VolumeGrid((0, 0, 1e-3), (1e-4, 1e-4, 1e-4), counts, vals)
    path = tmp_path_factory.mktemp("vol") / "v.hvol"
    write_volume(path, v)
    assert read_volume(path).values.tobytes() == vals.tobytes()


def test_gray_mapping_and_pgm(tmp_path):
    db = np.array([[0.0, -30.0, -60.0, -100.0]])
    assert slice_to_gray(db).tolist() == [[255, 128, 0, 0]]
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    write_pgm(tmp_path / "s.pgm", img)
    assert (tmp_path / "s.pgm").read_bytes().startswith(b"P5\n4 3\n255\n")
    assert np.array_equal(read_pgm(tmp_path / "s.pgm"), img)


def test_mid_slices_orientation():
    vals = np.full((5, 6, 7), -80.0)
    vals[1, 2, 3] = 0.0
    s = mid_slices(VolumeGrid((0, 0, 1e-3), (1e-4, 1e-4, 1e-4), (5, 6, 7), vals))
    assert s["lateral_axial"].shape == (7, 5) and s["lateral_axial"][3, 1] == 0
    assert s["elevational_axial"].shape == (7, 6) and s["elevational_axial"][3, 2] == 0
    assert s["lateral_elevational"].shape == (6, 5) and s["lateral_elevational"][2, 1] == 0
