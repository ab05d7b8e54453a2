"""Reconstruction chain: matched filter, analytic signal, decode, delay-and-sum, compounding.

HERCULES data are decoded to the full element lattice and focused in
receive with 3-D distances; VLS and TPW data are focused per event with
line-channel receive delays (separable row/column focusing).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve, hilbert
from scipy.signal.windows import hann

from . import _kernels
from .geometry import ArrayGeometry, ChannelAxis
from .hadamard import decode
from .schemes import TransmitScheme, transmit_time
from .wavesim import ChannelData, Domain, Excitation

DB_FLOOR = -100.0


class BeamformError(ValueError):
    pass


@dataclass(frozen=True)
class VolumeGrid:
    """Voxel lattice; ``values[ix, iy, iz]`` sits at ``origin + (ix, iy, iz) * spacing``.

    Values are complex after beamforming and real (dB) after :func:`envelope_db`.
    """

    origin: tuple
    spacing: tuple
    counts: tuple
    values: np.ndarray | None = None

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        spacing = tuple(float(v) for v in self.spacing)
        counts = tuple(int(v) for v in self.counts)
        if len(origin) != 3 or len(spacing) != 3 or len(counts) != 3:
            raise BeamformError("origin, spacing and counts need three entries (x, y, z)")
        if not all(s > 0 for s in spacing):
            raise BeamformError(f"grid spacing must be positive, got {spacing}")
        if not all(n >= 1 for n in counts):
            raise BeamformError(f"grid counts must be >= 1, got {counts}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "counts", counts)
        if self.values is not None and self.values.shape != counts:
            raise BeamformError(f"values shape {self.values.shape} does not match counts {counts}")

    def axis(self, i: int) -> np.ndarray:
        return self.origin[i] + self.spacing[i] * np.arange(self.counts[i])

    @property
    def x(self):
        return self.axis(0)

    @property
    def y(self):
        return self.axis(1)

    @property
    def z(self):
        return self.axis(2)

    def points(self) -> np.ndarray:
        """Voxel centers ``(nx*ny*nz, 3)`` in C order of ``values``."""
        gx, gy, gz = np.meshgrid(self.x, self.y, self.z, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def same_lattice(self, other: "VolumeGrid") -> bool:
        return self.origin == other.origin and self.spacing == other.spacing and self.counts == other.counts

    def with_values(self, values: np.ndarray) -> "VolumeGrid":
        return replace(self, values=values)

    def index_of(self, point) -> tuple:
        """Nearest voxel index to ``point``."""
        return tuple(int(np.clip(round((point[i] - self.origin[i]) / self.spacing[i]), 0, self.counts[i] - 1))
                     for i in range(3))


def psf_grid(center, wavelength: float, half_lateral: float = 10.0, half_axial: float = 5.0,
             lateral_step: float = 0.25, axial_step: float = 0.125) -> VolumeGrid:
    """Standard PSF grid about ``center``: ±10λ at λ/4 across, ±5λ at λ/8 in depth (in wavelengths)."""
    n_lat = int(round(2 * half_lateral / lateral_step)) + 1
    n_ax = int(round(2 * half_axial / axial_step)) + 1
    dl = lateral_step * wavelength
    da = axial_step * wavelength
    origin = (center[0] - half_lateral * wavelength, center[1] - half_lateral * wavelength,
              center[2] - half_axial * wavelength)
    return VolumeGrid(origin, (dl, dl, da), (n_lat, n_lat, n_ax))


class RxMode(enum.Enum):
    ELEMENT_2D = "element_2d"
    LINE_CHANNEL = "line_channel"


@dataclass(frozen=True)
class DelayLaw:
    """Transmit arrival law plus receive focusing mode of one beamformed event."""

    tx_delay: Callable[[np.ndarray], np.ndarray]
    rx_mode: RxMode
    rx_axis: ChannelAxis | None = None
    aperture_taper: str = "none"
    f_number: float = 0.0


def delay_law(scheme: TransmitScheme, geom: ArrayGeometry, event: int, *, aperture_taper: str = "none",
              f_number: float = 0.0) -> DelayLaw:
    """Delay law for ``event``; HERCULES events are focused on decoded elements."""
    def tx(points, _e=event):
        return transmit_time(scheme, geom, _e, points)

    if scheme.is_hercules:
        return DelayLaw(tx, RxMode.ELEMENT_2D, None, aperture_taper, f_number)
    return DelayLaw(tx, RxMode.LINE_CHANNEL, scheme.event_receive_axis(event), aperture_taper, f_number)


def matched_filter(data: ChannelData, excitation: Excitation) -> ChannelData:
    """Cross-correlate every trace with the unit-energy excitation.

    Output sample ``n`` holds the correlation at lag ``n``, so an echo that
    starts at sample ``n`` peaks there: time zero is unchanged.
    """
    k = np.asarray(excitation.samples, dtype=float)
    if k.size == 0:
        raise BeamformError("excitation has no samples")
    n = data.n_samples
    if k.size > n:
        raise BeamformError(f"excitation ({k.size} samples) is longer than the traces ({n})")
    k = k / np.sqrt(np.sum(k ** 2))
    full = fftconvolve(data.samples, k[::-1].reshape(1, 1, -1), axes=-1)
    return data.with_samples(full[..., k.size - 1: k.size - 1 + n])


def analytic_signal(traces: np.ndarray) -> np.ndarray:
    """Analytic signal along the last axis; the real part is the input itself."""
    x = np.asarray(traces, dtype=float)
    if x.shape[-1] < 2:
        raise BeamformError("traces need at least two samples")
    return x + 1j * np.imag(hilbert(x, axis=-1))


def decode_channels(data: ChannelData, geom: ArrayGeometry) -> ChannelData:
    """HERO-decode encoded HERCULES events into ``[row, col, time]`` element data."""
    scheme = data.scheme
    if data.domain is Domain.DECODED:
        return data
    if not scheme.is_hercules:
        raise BeamformError(f"{scheme.kind.value} data are not Hadamard encoded")
    bias = scheme.bias_schedule(geom)
    n_rx = geom.n_channels(scheme.transmit_axis.other)
    s = decode(data.samples[:, :n_rx], bias.signs)
    if scheme.transmit_axis is ChannelAxis.COLUMNS:
        s = s.transpose(1, 0, 2)
    return data.with_samples(np.ascontiguousarray(s), domain=Domain.DECODED)


def _taper(n: int, kind: str) -> np.ndarray:
    if kind == "none":
        return np.ones(n)
    if kind == "hann":
        return hann(n + 2)[1:-1]
    raise BeamformError(f"unknown aperture taper {kind!r} (expected 'none' or 'hann')")


def das_event(traces: np.ndarray, fs: float, t0: float, geom: ArrayGeometry, law: DelayLaw,
              grid: VolumeGrid) -> VolumeGrid:
    """Delay-and-sum one event's analytic traces onto ``grid``.

    ``traces`` is ``[row, col, time]`` for element receive or ``[channel, time]``
    for line-channel receive.
    """
    if fs is None or t0 is None:
        raise BeamformError("traces need fs and t0")
    if max(grid.spacing) > 1e-2 or max(abs(v) for v in grid.origin) > 1.0:
        raise BeamformError("grid spacing or origin looks like millimeters; the grid must be in meters")
    traces = np.asarray(traces)
    if law.rx_mode is RxMode.ELEMENT_2D:
        if traces.shape[:2] != (geom.n_rows, geom.n_cols):
            raise BeamformError(f"element traces must be [{geom.n_rows}, {geom.n_cols}, time]")
        data = traces.reshape(geom.n_rows * geom.n_cols, -1)
        rx_pos = geom.element_positions()
        weights = np.outer(_taper(geom.n_rows, law.aperture_taper), _taper(geom.n_cols, law.aperture_taper)).ravel()
        line_coord = -1
    else:
        axis = law.rx_axis
        n = geom.n_channels(axis)
        data = traces[:n]
        rx_pos = geom.line_positions(axis)
        weights = _taper(n, law.aperture_taper)
        line_coord = axis.coordinate
    vox = grid.points()
    tx = np.ascontiguousarray(law.tx_delay(vox), dtype=float)
    values = _kernels.das(np.ascontiguousarray(data, dtype=np.complex128), float(fs), float(t0), tx, vox,
                          np.ascontiguousarray(rx_pos), int(line_coord), geom.speed_of_sound,
                          np.ascontiguousarray(weights, dtype=float), float(law.f_number))
    return grid.with_values(values.reshape(grid.counts))


def das(data: ChannelData, geom: ArrayGeometry, grid: VolumeGrid, *, aperture_taper: str = "none",
        f_number: float = 0.0) -> list[VolumeGrid]:
    """Low-resolution volume of every event (one volume for decoded HERCULES data)."""
    scheme = data.scheme
    if scheme.is_hercules:
        if data.domain is not Domain.DECODED:
            raise BeamformError("HERCULES data must be decoded before delay-and-sum")
        law = delay_law(scheme, geom, 0, aperture_taper=aperture_taper, f_number=f_number)
        return [das_event(data.samples, data.fs, data.t0, geom, law, grid)]
    if data.domain is Domain.DECODED:
        raise BeamformError(f"{scheme.kind.value} data must stay in the channel domain")
    out = []
    for event in range(scheme.n_events):
        law = delay_law(scheme, geom, event, aperture_taper=aperture_taper, f_number=f_number)
        out.append(das_event(data.samples[event], data.fs, data.t0, geom, law, grid))
    return out


def compound(volumes: Sequence[VolumeGrid]) -> VolumeGrid:
    """Coherent (complex) sum in input order."""
    if not volumes:
        raise BeamformError("nothing to compound")
    first = volumes[0]
    acc = np.array(first.values, dtype=np.complex128)
    for v in volumes[1:]:
        if not v.same_lattice(first):
            raise BeamformError("cannot compound volumes on different grids")
        acc += v.values
    return first.with_values(acc)


def envelope_db(volume: VolumeGrid, floor: float = DB_FLOOR) -> VolumeGrid:
    """Max-normalized log envelope, clamped at ``floor`` dB."""
    mag = np.abs(volume.values)
    peak = mag.max()
    if not peak > 0:
        raise BeamformError("volume is all zeros")
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(mag / peak)
    return volume.with_values(np.maximum(db, floor))


def reconstruct_complex(scheme: TransmitScheme, data: ChannelData, excitation: Excitation, geom: ArrayGeometry,
                        grid: VolumeGrid, *, aperture_taper: str = "none", f_number: float = 0.0) -> VolumeGrid:
    """Compounded complex volume (everything before envelope detection)."""
    if data.scheme.kind is not scheme.kind or data.scheme.n_events != scheme.n_events:
        raise BeamformError(f"channel data were acquired with {data.scheme.kind.value}, "
                            f"not {scheme.kind.value}")
    data = replace(data, scheme=scheme)
    filtered = matched_filter(data, excitation)
    analytic = filtered.with_samples(analytic_signal(filtered.samples))
    if scheme.is_hercules:
        analytic = decode_channels(analytic, geom)
    return compound(das(analytic, geom, grid, aperture_taper=aperture_taper, f_number=f_number))


def reconstruct(scheme: TransmitScheme, data: ChannelData, excitation: Excitation, geom: ArrayGeometry,
                grid: VolumeGrid, **kwargs) -> VolumeGrid:
    """Full chain ending in a dB intensity volume."""
    return envelope_db(reconstruct_complex(scheme, data, excitation, geom, grid, **kwargs))
