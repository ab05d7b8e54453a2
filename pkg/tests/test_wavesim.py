import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import hilbert

from hercules.hadamard import decode
from hercules.schemes import TransmitScheme
from hercules.wavesim import (ChannelData, Domain, Scene, SimulationError, WindowTooShortError, add_noise,
                              incident_field, make_excitation, required_samples, simulate, simulate_event,
                              simulate_matrix_reference)

from conftest import C, FC, FS, make_geometry


def random_scene(rng, n=3):
    pos = np.c_[rng.uniform(-1e-3, 1e-3, (n, 2)), rng.uniform(3e-3, 6e-3, n)]
    return Scene(pos, rng.standard_normal(n), C)


# excitation ------------------------------------------------------------------------------


def test_gated_sine_one_cycle():
    ex = make_excitation("gated_sine", FS, fc=FC, cycles=1)
    # fs / fc = 7.94 samples per period
    assert ex.length == 8
    assert np.max(np.abs(ex.samples)) == pytest.approx(1.0)
    assert ex.duration == pytest.approx(1 / FC)
    assert ex.samples[0] == 0.0 and ex.samples[2] > 0.99 and ex.samples[6] < -0.99


def test_zero_bandwidth_chirp_degenerates_to_gated_sine():
    sine = make_excitation("gated_sine", FS, fc=FC)
    chirp = make_excitation("linear_chirp", FS, f0=FC, f1=FC, duration=1 / FC, taper=0.0)
    np.testing.assert_allclose(chirp.samples, sine.samples, atol=1e-14)


def test_chirp_length_and_midpoint_frequency():
    ex = make_excitation("linear_chirp", FS, f0=4e6, f1=8e6, duration=30e-6)
    assert ex.length == 1500
    assert np.max(np.abs(ex.samples)) == pytest.approx(1.0)
    phase = np.unwrap(np.angle(hilbert(ex.samples)))
    inst = np.diff(phase) * FS / (2 * np.pi)
    assert inst[745:755].mean() == pytest.approx(6e6, rel=0.01)
    # cosine taper brings both ends to zero
    assert abs(ex.samples[0]) < 1e-12 and abs(ex.samples[-1]) < 0.01


@pytest.mark.parametrize("kwargs", [dict(fc=30e6), dict(fc=25e6)])
def test_nyquist_violation(kwargs):
    with pytest.raises(SimulationError, match="Nyquist"):
        make_excitation("gated_sine", FS, **kwargs)


def test_bad_excitation_parameters():
    with pytest.raises(SimulationError):
        make_excitation("linear_chirp", FS, f0=2e6, f1=8e6, duration=0.0)
    with pytest.raises(SimulationError):
        make_excitation("linear_chirp", FS, f0=2e6, f1=8e6)
    with pytest.raises(ValueError):
        make_excitation("square", FS, fc=FC)


# scene -------------------------------------------------------------------------------


def test_scene_validation():
    with pytest.raises(SimulationError, match="in front"):
        Scene.points((0, 0, -1e-3))
    with pytest.raises(SimulationError):
        Scene.points((0, 0, 0.0))
    with pytest.raises(SimulationError):
        Scene([[0, 0, 1e-3]], [np.inf])


def test_scene_file_roundtrip(tmp_path, rng):
    scene = random_scene(rng, 5)
    scene.write(tmp_path / "s.txt")
    back = Scene.read(tmp_path / "s.txt")
    assert np.array_equal(back.positions, scene.positions)
    assert np.array_equal(back.reflectivity, scene.reflectivity)
    assert back.speed_of_sound == scene.speed_of_sound


def test_scene_file_errors(tmp_path):
    (tmp_path / "bad.txt").write_text("0 0 1\n")
    with pytest.raises(SimulationError, match="bad.txt:1"):
        Scene.read(tmp_path / "bad.txt")


# simulation --------------------------------------------------------------------------


def test_round_trip_onset(geom8, pulse):
    z = 5e-3
    scene = Scene.points((0, 0, z))
    trace = simulate_event(scene, geom8, TransmitScheme("hercules_plane", 8), pulse, 0)[4]
    onset = np.flatnonzero(np.abs(trace) > 1e-3 * np.abs(trace).max())[0]
    assert abs(onset - 2 * z / C * FS) <= 1


def test_zero_reflectivity_gives_zero(geom8, pulse):
    scene = Scene([[0, 0, 4e-3]], [0.0])
    out = simulate_event(scene, geom8, TransmitScheme("walking_vls", 8), pulse, 2, n_samples=400)
    assert not np.any(out)


def test_empty_scene_matrix_reference(geom8, pulse):
    empty = Scene(np.zeros((0, 3)), np.zeros(0))
    s = simulate_matrix_reference(empty, geom8, TransmitScheme("hercules_plane", 8), pulse, n_samples=50)
    assert s.shape == (8, 8, 50) and not np.any(s)


def test_window_too_short_reports_minimum(geom8, pulse):
    scene = Scene.points((0, 0, 5e-3))
    need = required_samples(scene, geom8, TransmitScheme("hercules_plane", 8), pulse)
    with pytest.raises(WindowTooShortError) as err:
        simulate_event(scene, geom8, TransmitScheme("hercules_plane", 8), pulse, 0, n_samples=100)
    assert err.value.required == need
    assert str(need) in str(err.value)


def test_receive_axis_must_be_orthogonal(geom8, pulse):
    with pytest.raises(SimulationError):
        simulate_event(Scene.points((0, 0, 3e-3)), geom8, TransmitScheme("hercules_plane", 8), pulse, 0, "rows")


@pytest.mark.parametrize("kind", ["hercules_plane", "hercules_diverging"])
def test_hero_encode_identity(geom8, pulse, rng, kind):
    scene = random_scene(rng)
    s = TransmitScheme(kind, 8)
    fast = simulate(scene, geom8, s, pulse)
    slow = simulate(scene, geom8, s, pulse, per_event=True)
    scale = np.abs(slow.samples).max()
    assert np.max(np.abs(fast.samples - slow.samples)) <= 1e-10 * scale
    ref = simulate_matrix_reference(scene, geom8, s, pulse, n_samples=slow.n_samples)
    dec = decode(slow.samples, s.bias_schedule(geom8))
    assert np.max(np.abs(dec - ref)) <= 1e-10 * np.abs(ref).max()


def test_hero_identity_columns_biased(pulse, rng):
    g = make_geometry(4, 8)
    scene = random_scene(rng)
    s = TransmitScheme("hercules_plane", 8, transmit_axis="columns")
    fast = simulate(scene, g, s, pulse)
    slow = simulate(scene, g, s, pulse, per_event=True)
    np.testing.assert_allclose(fast.samples, slow.samples, rtol=0, atol=1e-10 * np.abs(slow.samples).max())
    assert fast.samples.shape == (8, 8, fast.n_samples)
    assert not np.any(fast.samples[:, 4:])  # rows receive: 4 live channels, rest padding


@pytest.mark.parametrize("kind", ["hercules_plane", "hercules_diverging"])
def test_transmit_field_invariance(geom8, pulse, kind):
    s = TransmitScheme(kind, 8)
    point = (0.7e-3, -0.4e-3, 4e-3)
    fields = [incident_field(point, geom8, s, pulse, e, n_samples=300) for e in range(8)]
    dev = max(np.max(np.abs(f - fields[0])) for f in fields)
    assert dev <= 1e-12 * np.abs(fields[0]).max()
    uncorrected = [incident_field(point, geom8, s, pulse, e, n_samples=300, polarity_correction=False)
                   for e in range(8)]
    assert max(np.max(np.abs(f - uncorrected[0])) for f in uncorrected) > 0.1 * np.abs(uncorrected[0]).max()


def test_matrix_reference_mirror_symmetry(geom8, pulse):
    s = simulate_matrix_reference(Scene.points((0, 0, 4e-3)), geom8, TransmitScheme("hercules_plane", 8), pulse)
    scale = np.abs(s).max()
    np.testing.assert_allclose(s, s[::-1], atol=1e-12 * scale)
    np.testing.assert_allclose(s, s[:, ::-1], atol=1e-12 * scale)


def test_axis_reciprocity(geom8, pulse, rng):
    scene = random_scene(rng)
    mirrored = Scene(scene.positions[:, [1, 0, 2]], scene.reflectivity)
    a = simulate(scene, geom8, TransmitScheme("hercules_diverging", 8, transmit_axis="rows"), pulse)
    b = simulate(mirrored, geom8, TransmitScheme("hercules_diverging", 8, transmit_axis="columns"), pulse,
                 n_samples=a.n_samples)
    np.testing.assert_allclose(a.samples, b.samples, atol=1e-12 * np.abs(a.samples).max())


def test_two_way_spreading(pulse):
    g = make_geometry(2)
    s = TransmitScheme("hercules_plane", 2)
    peaks = []
    for z in (15.4e-3, 30.8e-3):  # round trips of exactly 1000 and 2000 samples
        ref = simulate_matrix_reference(Scene.points((0, 0, z)), g, s, pulse)
        peaks.append(np.abs(hilbert(ref[0, 0])).max())
    assert peaks[0] / peaks[1] == pytest.approx(4.0, rel=0.02)


def test_tpw_channel_padding(pulse, rng):
    g = make_geometry(8, 4)
    data = simulate(random_scene(rng), g, TransmitScheme("tilted_plane_wave", 4), pulse)
    assert data.samples.shape[:2] == (4, 8)
    assert np.any(data.samples[0, 7]) and not np.any(data.samples[3, 4:])
    assert data.bias is None and data.domain is Domain.ENCODED


def test_channel_data_validation():
    s = TransmitScheme("walking_vls", 2)
    with pytest.raises(SimulationError):
        ChannelData(np.zeros((2, 2)), FS, 0.0, s)
    with pytest.raises(SimulationError):
        ChannelData(np.zeros((2, 2, 2)), FS, -1e-6, s)


@settings(max_examples=8, deadline=None)
@given(st.floats(-3.0, 3.0).filter(lambda k: abs(k) > 1e-3), st.integers(0, 1000))
def test_simulation_linear_in_reflectivity(k, seed):
    rng = np.random.default_rng(seed)
    g = make_geometry(4)
    pulse = make_excitation("gated_sine", FS, fc=FC)
    a, b = random_scene(rng, 2), random_scene(rng, 2)
    s = TransmitScheme("walking_vls", 4)
    n = max(required_samples(x, g, s, pulse) for x in (a, b))
    sa = simulate(a, g, s, pulse, n_samples=n).samples
    sb = simulate(Scene(b.positions, k * b.reflectivity), g, s, pulse, n_samples=n).samples
    sab = simulate(a + Scene(b.positions, k * b.reflectivity), g, s, pulse, n_samples=n).samples
    np.testing.assert_allclose(sab, sa + sb, atol=1e-10 * np.abs(sab).max())


# noise -------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def channel_data(geom8, pulse):
    return simulate(Scene.points((0, 0, 4e-3), (0.5e-3, 0, 5e-3)), geom8, TransmitScheme("hercules_plane", 8), pulse)


def test_add_noise_infinite_snr_unchanged(channel_data):
    out = add_noise(channel_data, math.inf, 0)
    assert np.array_equal(out.samples, channel_data.samples)


def test_add_noise_deterministic(channel_data):
    a = add_noise(channel_data, 10.0, 7)
    b = add_noise(channel_data, 10.0, 7)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert not np.array_equal(a.samples, add_noise(channel_data, 10.0, 8).samples)


def test_add_noise_empirical_snr(channel_data):
    x = channel_data.samples
    noisy = add_noise(channel_data, 0.0, 3).samples
    support = x != 0
    measured = 10 * np.log10(np.mean(x[support] ** 2) / np.mean((noisy - x)[support] ** 2))
    assert abs(measured) <= 0.5


def test_add_noise_errors(channel_data):
    with pytest.raises(SimulationError):
        add_noise(channel_data.with_samples(np.zeros_like(channel_data.samples)), 10.0, 0)
    with pytest.raises(SimulationError):
        add_noise(channel_data, float("nan"), 0)
