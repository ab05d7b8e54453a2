"""Point-scatterer RF simulator for row-column arrays.

Elements are point sources/receivers at the lattice centers.  For transmit
event ``e`` receive channel ``q`` records

    sum_{p in q} b_e(p) sum_k a_k sum_j m_e(j) w(t - tau_j - R_jk/c - R_kp/c) / (R_jk R_kp)

where ``b_e`` is the bias sign of element ``p``, ``m_e(j)`` the emitted sign of
element ``j`` (bias times drive), ``tau_j`` its firing delay and ``w`` the
excitation, linearly interpolated between samples.

The sum over transmit elements is first evaluated for a unit excitation on a
grid ``UPSAMPLE`` times finer than ``fs``; receive delays then interpolate
that incident field, and the excitation is applied last by discrete
convolution (exact, because every stage is linear and shift-invariant on the
sample grid).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve
from scipy.signal.windows import tukey

from . import _kernels
from .geometry import ArrayGeometry, ChannelAxis
from .hadamard import BiasSchedule, encode
from .schemes import TransmitScheme, element_tx_delays, SchemeError

log = logging.getLogger(__name__)

UPSAMPLE = 4
_DIRECT_CONV_MAX = 64


class SimulationError(ValueError):
    pass


class WindowTooShortError(SimulationError):
    def __init__(self, required: int, given: int):
        super().__init__(f"acquisition window of {given} samples cannot hold every echo; "
                         f"at least {required} samples are required")
        self.required = required
        self.given = given


# --------------------------------------------------------------------------- scene


@dataclass(frozen=True)
class Scene:
    positions: np.ndarray
    reflectivity: np.ndarray
    speed_of_sound: float = 1540.0

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float)).reshape(-1, 3)
        amp = np.asarray(self.reflectivity, dtype=float).reshape(-1)
        if pos.shape[0] != amp.shape[0]:
            raise SimulationError(f"{pos.shape[0]} positions but {amp.shape[0]} reflectivities")
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(amp)):
            raise SimulationError("scatterer positions and reflectivities must be finite")
        if np.any(pos[:, 2] <= 0):
            bad = int(np.argmax(pos[:, 2] <= 0))
            raise SimulationError(f"scatterer {bad} at z = {pos[bad, 2]!r} m is not in front of the array")
        if not self.speed_of_sound > 0:
            raise SimulationError("speed_of_sound must be positive")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "reflectivity", amp)

    def __len__(self):
        return self.positions.shape[0]

    @classmethod
    def points(cls, *points, speed_of_sound: float = 1540.0) -> "Scene":
        """Scene from ``(x, y, z)`` or ``(x, y, z, a)`` tuples."""
        rows = [tuple(p) + (1.0,) * (4 - len(p)) for p in points]
        arr = np.array(rows, dtype=float).reshape(-1, 4)
        return cls(arr[:, :3], arr[:, 3], speed_of_sound)

    def __add__(self, other: "Scene") -> "Scene":
        return Scene(np.vstack([self.positions, other.positions]),
                     np.concatenate([self.reflectivity, other.reflectivity]), self.speed_of_sound)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# speed_of_sound {float(self.speed_of_sound)!r}\n# x y z reflectivity (SI)\n")
            for (x, y, z), a in zip(self.positions, self.reflectivity):
                fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r} {float(a)!r}\n")

    @classmethod
    def read(cls, path) -> "Scene":
        c = 1540.0
        rows = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                parts = text[1:].split()
                if len(parts) == 2 and parts[0] == "speed_of_sound":
                    c = float(parts[1])
                continue
            fields = text.split()
            if len(fields) != 4:
                raise SimulationError(f"{path}:{lineno}: expected 'x y z reflectivity', got {text!r}")
            rows.append([float(v) for v in fields])
        arr = np.array(rows, dtype=float).reshape(-1, 4)
        return cls(arr[:, :3], arr[:, 3], c)


def cyst_phantom(rng: np.random.Generator, lo, hi, density: float, cyst_center, cyst_radius: float,
                 cyst_axis: int = 0, speed_of_sound: float = 1540.0) -> Scene:
    """Uniform random scatterers in the box ``[lo, hi]`` with an anechoic cylinder removed.

    ``density`` is in scatterers per cubic meter; amplitudes are standard normal.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = int(round(density * np.prod(hi - lo)))
    pos = lo + (hi - lo) * rng.random((n, 3))
    amp = rng.standard_normal(n)
    keep = [i for i in range(3) if i != cyst_axis]
    d = np.hypot(pos[:, keep[0]] - cyst_center[keep[0]], pos[:, keep[1]] - cyst_center[keep[1]])
    amp[d < cyst_radius] = 0.0
    return Scene(pos, amp, speed_of_sound)


# ---------------------------------------------------------------------- excitation


class ExcitationKind(enum.Enum):
    GATED_SINE = "gated_sine"
    LINEAR_CHIRP = "linear_chirp"


@dataclass(frozen=True)
class Excitation:
    kind: ExcitationKind
    fs: float
    f0: float
    f1: float
    duration: float
    samples: np.ndarray
    taper: float = 0.0

    @property
    def length(self) -> int:
        return self.samples.size

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "fs": self.fs, "f0": self.f0, "f1": self.f1,
                "duration": self.duration, "taper": self.taper}


def make_excitation(kind, fs: float, *, fc: float | None = None, cycles: float = 1.0,
                    f0: float | None = None, f1: float | None = None,
                    duration: float | None = None, taper: float = 0.2) -> Excitation:
    """Sampled unit-amplitude transmit waveform.

    ``gated_sine`` needs ``fc`` and ``cycles``; ``linear_chirp`` sweeps
    ``f0 -> f1`` over ``duration`` with a cosine taper covering ``taper`` of
    the length at each end.
    """
    kind = ExcitationKind(kind) if not isinstance(kind, ExcitationKind) else kind
    if kind is ExcitationKind.GATED_SINE:
        if fc is None:
            raise SimulationError("gated_sine excitation needs fc")
        f0 = f1 = float(fc)
        duration = cycles / fc
        taper = 0.0
    else:
        if f0 is None or f1 is None or duration is None:
            raise SimulationError("linear_chirp excitation needs f0, f1 and duration")
    if duration is None or duration <= 0:
        raise SimulationError("excitation duration must be positive")
    for f in (f0, f1):
        if not 0 < f < fs / 2:
            raise SimulationError(f"excitation frequency {f!r} Hz violates Nyquist (fs/2 = {fs / 2!r} Hz)")
    if not 0 <= taper <= 0.5:
        raise SimulationError("taper fraction must lie in [0, 0.5]")
    n = max(int(round(duration * fs)), 1)
    t = np.arange(n) / fs
    phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / duration * t ** 2)
    samples = np.sin(phase)
    if taper > 0:
        samples = samples * tukey(n, 2 * taper)
    peak = np.max(np.abs(samples))
    if peak == 0:
        raise SimulationError("excitation has no energy at this sampling rate")
    return Excitation(kind, float(fs), float(f0), float(f1), float(duration), samples / peak, float(taper))


# -------------------------------------------------------------------- channel data


class Domain(enum.Enum):
    ENCODED = "encoded_channels"
    DECODED = "decoded_elements"


@dataclass(frozen=True)
class ChannelData:
    """RF data ``[event, channel, time]`` (encoded) or ``[row, col, time]`` (decoded).

    Events whose receive side has fewer channels than the widest side are
    zero-padded along the channel axis.
    """

    samples: np.ndarray
    fs: float
    t0: float
    scheme: TransmitScheme
    domain: Domain = Domain.ENCODED
    bias: BiasSchedule | None = None

    def __post_init__(self):
        if self.samples.ndim != 3:
            raise SimulationError(f"channel data must be 3-D, got shape {self.samples.shape}")
        if not self.t0 >= 0:
            raise SimulationError("t0 must be >= 0")
        if not self.fs > 0:
            raise SimulationError("fs must be positive")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[-1]

    def with_samples(self, samples: np.ndarray, **changes) -> "ChannelData":
        return replace(self, samples=samples, **changes)


# ---------------------------------------------------------------------- simulation


def _tx_elements(scheme: TransmitScheme, geom: ArrayGeometry, event: int, polarity_correction: bool = True):
    pattern = element_tx_delays(scheme, geom, event)
    ch = geom.element_channel(pattern.axis)
    bias = scheme.bias_schedule(geom).signs[event][geom.element_channel(scheme.transmit_axis)]
    # without correction the drive is never inverted, so the emission follows the bias
    drive = pattern.signs[ch] if polarity_correction or not scheme.is_hercules else np.ones(ch.size)
    amp = pattern.active[ch] * drive * bias
    delays = np.where(pattern.active[ch], pattern.delays[ch], 0.0)
    return geom.element_positions(), delays.astype(float), amp.astype(float), bias.astype(float)


def _channel_lists(channel_of_element: np.ndarray, n_channels: int):
    order = np.argsort(channel_of_element, kind="stable").astype(np.int64)
    counts = np.bincount(channel_of_element, minlength=n_channels)
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return ptr, order


def _required_samples(m0, length, sc_pos, geom: ArrayGeometry, c: float, fs: float, t0: float, n_exc: int) -> int:
    x = geom.col_centers()[[0, -1]]
    y = geom.row_centers()[[0, -1]]
    corners = np.array([[xi, yi, 0.0] for xi in x for yi in y])
    far = np.max(np.linalg.norm(sc_pos[:, None, :] - corners[None], axis=-1), axis=1)
    dt = 1.0 / (UPSAMPLE * fs)
    live = length > 0
    if not np.any(live):
        return 1
    end = np.max((m0[live] + length[live]) * dt + far[live] / c)
    return int(math.ceil((end - t0) * fs)) + n_exc + 1


def _apply_excitation(h: np.ndarray, w: np.ndarray) -> np.ndarray:
    n = h.shape[-1]
    if w.size <= _DIRECT_CONV_MAX:
        out = np.zeros_like(h)
        for m, wm in enumerate(w):
            if wm != 0.0:
                out[..., m:] += wm * h[..., : n - m]
        return out
    return fftconvolve(h, w.reshape((1,) * (h.ndim - 1) + (-1,)), axes=-1)[..., :n]


def _run(scene: Scene, geom: ArrayGeometry, tx, rx_weight, channel_of_element, n_channels,
         excitation: Excitation, n_samples, t0):
    tx_pos, tx_delay, tx_amp = tx
    c = scene.speed_of_sound
    fs = geom.sampling_frequency
    if abs(excitation.fs - fs) > 1e-9 * fs:
        raise SimulationError("excitation and geometry sampling frequencies differ")
    sc_pos = np.ascontiguousarray(scene.positions)
    sc_amp = np.ascontiguousarray(scene.reflectivity)
    if len(scene) == 0:
        if n_samples is None:
            raise SimulationError("an empty scene needs an explicit n_samples")
        return np.zeros((n_channels, int(n_samples)))
    m0, length, offset, inc = _kernels.incident_fields(
        np.ascontiguousarray(tx_pos), tx_delay, tx_amp, sc_pos, fs, c, UPSAMPLE)
    required = _required_samples(m0, length, sc_pos, geom, c, fs, t0, excitation.length)
    if n_samples is None:
        n_samples = required
    elif n_samples < required:
        raise WindowTooShortError(required, int(n_samples))
    ptr, elems = _channel_lists(channel_of_element, n_channels)
    h = _kernels.receive(m0, length, offset, inc, sc_pos, sc_amp, geom.element_positions(),
                         np.ascontiguousarray(rx_weight, dtype=float), ptr, elems,
                         fs, c, float(t0), int(n_samples), UPSAMPLE)
    return _apply_excitation(h, excitation.samples)


def simulate_event(scene: Scene, geom: ArrayGeometry, scheme: TransmitScheme, excitation: Excitation,
                   event: int, receive_axis=None, *, n_samples: int | None = None, t0: float = 0.0,
                   polarity_correction: bool = True) -> np.ndarray:
    """RF traces ``[channel, time]`` of one transmit event, bias-weighted on receive."""
    rx_axis = scheme.event_receive_axis(event) if receive_axis is None else ChannelAxis.parse(receive_axis)
    if rx_axis is scheme.event_transmit_axis(event):
        raise SimulationError("receive axis must be orthogonal to the transmit axis")
    pos, delays, amp, bias = _tx_elements(scheme, geom, event, polarity_correction)
    return _run(scene, geom, (pos, delays, amp), bias, geom.element_channel(rx_axis),
                geom.n_channels(rx_axis), excitation, n_samples, t0)


def simulate_matrix_reference(scene: Scene, geom: ArrayGeometry, scheme: TransmitScheme,
                              excitation: Excitation, event: int = 0, *, n_samples: int | None = None,
                              t0: float = 0.0) -> np.ndarray:
    """Per-element RF ``[row, col, time]`` as a fully wired matrix array would record it.

    Uses the emission of ``event`` with no receive bias.  For HERCULES schemes
    the emission is the same for every event.
    """
    pos, delays, amp, _ = _tx_elements(scheme, geom, event)
    n_el = geom.n_rows * geom.n_cols
    data = _run(scene, geom, (pos, delays, amp), np.ones(n_el), np.arange(n_el),
                n_el, excitation, n_samples, t0)
    return data.reshape(geom.n_rows, geom.n_cols, -1)


def required_samples(scene: Scene, geom: ArrayGeometry, scheme: TransmitScheme, excitation: Excitation,
                     t0: float = 0.0) -> int:
    """Smallest window (in samples) that holds every echo of every event."""
    need = 1
    if len(scene) == 0:
        return need
    for event in range(scheme.n_events):
        pos, delays, amp, _ = _tx_elements(scheme, geom, event)
        m0, length, _, _ = _kernels.incident_fields(pos, delays, amp, np.ascontiguousarray(scene.positions),
                                                    geom.sampling_frequency, scene.speed_of_sound, UPSAMPLE)
        need = max(need, _required_samples(m0, length, scene.positions, geom, scene.speed_of_sound,
                                           geom.sampling_frequency, t0, excitation.length))
        if scheme.is_hercules:
            break
    return need


def simulate(scene: Scene, geom: ArrayGeometry, scheme: TransmitScheme, excitation: Excitation, *,
             n_samples: int | None = None, t0: float = 0.0, per_event: bool = False) -> ChannelData:
    """Channel data for the whole transmit sequence of ``scheme``.

    For HERCULES the element data are simulated once and bias-encoded, which
    equals per-event simulation by linearity; ``per_event=True`` forces the
    direct route.
    """
    scheme.validate(geom)
    if n_samples is None:
        n_samples = required_samples(scene, geom, scheme, excitation, t0)
    width = max(geom.n_rows, geom.n_cols)
    bias = scheme.bias_schedule(geom)
    if scheme.is_hercules and not per_event:
        s = simulate_matrix_reference(scene, geom, scheme, excitation, n_samples=n_samples, t0=t0)
        if scheme.transmit_axis is ChannelAxis.COLUMNS:
            s = s.transpose(1, 0, 2)
        g = encode(s, bias.signs)
        samples = np.zeros((scheme.n_events, width, n_samples))
        samples[:, : g.shape[1]] = g
    else:
        samples = np.zeros((scheme.n_events, width, n_samples))
        for event in range(scheme.n_events):
            trace = simulate_event(scene, geom, scheme, excitation, event, n_samples=n_samples, t0=t0)
            samples[event, : trace.shape[0]] = trace
    return ChannelData(samples, geom.sampling_frequency, float(t0), scheme, Domain.ENCODED,
                       None if bias.is_uniform else bias)


def incident_field(point, geom: ArrayGeometry, scheme: TransmitScheme, excitation: Excitation, event: int,
                   *, n_samples: int, polarity_correction: bool = True, speed_of_sound: float | None = None):
    """Transmitted pressure at ``point`` sampled at ``fs`` from t = 0.

    Evaluated directly from the element superposition (no intermediate grid).
    """
    pos, delays, amp, _ = _tx_elements(scheme, geom, event, polarity_correction)
    c = geom.speed_of_sound if speed_of_sound is None else speed_of_sound
    fs = geom.sampling_frequency
    dist = np.linalg.norm(pos - np.asarray(point, dtype=float)[None], axis=1)
    arrival = delays + dist / c
    t = np.arange(n_samples) / fs
    w = excitation.samples
    padded = np.concatenate([[0.0], w, [0.0]])
    out = np.zeros(n_samples)
    for j in np.flatnonzero(amp):
        x = (t - arrival[j]) * fs + 1.0
        out += amp[j] / dist[j] * np.interp(x, np.arange(padded.size), padded, left=0.0, right=0.0)
    return out


def add_noise(data: ChannelData, snr_db: float, seed: int) -> ChannelData:
    """Additive white Gaussian noise at ``snr_db`` relative to the mean power over nonzero samples."""
    if math.isinf(snr_db) and snr_db > 0:
        return data
    if not math.isfinite(snr_db):
        raise SimulationError("snr_db must be finite or +inf")
    x = data.samples
    support = x != 0
    if not np.any(support):
        raise SimulationError("cannot set an SNR on all-zero channel data")
    power = float(np.mean(np.abs(x[support]) ** 2))
    sigma = math.sqrt(power / 10 ** (snr_db / 10))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(x.shape)
    if np.iscomplexobj(x):
        noise = (noise + 1j * rng.standard_normal(x.shape)) / math.sqrt(2)
    return data.with_samples(x + sigma * noise)


__all__ = [
    "Scene", "cyst_phantom", "Excitation", "ExcitationKind", "make_excitation", "ChannelData", "Domain",
    "simulate_event", "simulate_matrix_reference", "simulate", "required_samples", "incident_field",
    "add_noise", "SimulationError", "WindowTooShortError", "SchemeError",
]
