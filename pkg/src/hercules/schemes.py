"""Transmit sequences for the four imaging schemes and their delay laws.

Each scheme fixes, per transmit event, which channels fire, their firing
delays and drive signs (:func:`element_tx_delays`), and the arrival time of
the modeled wavefront at any point (:func:`transmit_time`), which is what the
beamformer uses as its transmit delay.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import ArrayGeometry, ChannelAxis
from .hadamard import BiasSchedule, transmit_polarity


class SchemeError(ValueError):
    pass


class SchemeKind(enum.Enum):
    HERCULES_PLANE = "hercules_plane"
    HERCULES_DIVERGING = "hercules_diverging"
    WALKING_VLS = "walking_vls"
    TILTED_PLANE_WAVE = "tilted_plane_wave"

    @classmethod
    def parse(cls, value) -> "SchemeKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise SchemeError(f"unknown scheme kind {value!r} (expected one of {names})") from None


_DEFAULT_TX_AXIS = {
    SchemeKind.HERCULES_PLANE: ChannelAxis.ROWS,
    SchemeKind.HERCULES_DIVERGING: ChannelAxis.ROWS,
    SchemeKind.WALKING_VLS: ChannelAxis.COLUMNS,
    SchemeKind.TILTED_PLANE_WAVE: ChannelAxis.COLUMNS,
}


@dataclass(frozen=True)
class TransmitScheme:
    """Transmit sequence description.

    ``transmit_axis`` is the side that fires (and, for HERCULES, the side
    that is Hadamard-biased); reception is on the orthogonal side.  For the
    tilted plane wave scheme the second half of the events swaps the two
    roles.  ``None`` parameters take geometry-dependent defaults.
    """

    kind: SchemeKind
    n_events: int
    transmit_axis: ChannelAxis | None = None
    half_angle_deg: float = 45.0
    vls_positions: tuple | None = None
    vls_standoff: float | None = None
    vls_active: int | None = None
    tpw_max_angle_deg: float = 16.0
    tpw_angles_deg: tuple | None = None
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", SchemeKind.parse(self.kind))
        axis = _DEFAULT_TX_AXIS[self.kind] if self.transmit_axis is None else ChannelAxis.parse(self.transmit_axis)
        object.__setattr__(self, "transmit_axis", axis)
        if int(self.n_events) != self.n_events or self.n_events < 1:
            raise SchemeError(f"n_events must be a positive integer, got {self.n_events!r}")
        object.__setattr__(self, "n_events", int(self.n_events))
        if self.kind is SchemeKind.HERCULES_DIVERGING and not 0 < self.half_angle_deg < 90:
            raise SchemeError(f"half_angle_deg must lie in (0, 90), got {self.half_angle_deg!r}")
        if self.kind is SchemeKind.TILTED_PLANE_WAVE:
            if self.n_events % 2:
                raise SchemeError("tilted plane wave needs an even n_events (half per axis)")
            if self.tpw_angles_deg is not None and len(self.tpw_angles_deg) != self.n_events // 2:
                raise SchemeError("tpw_angles_deg must list n_events/2 angles")
        if self.vls_positions is not None:
            object.__setattr__(self, "vls_positions", tuple(float(v) for v in self.vls_positions))
            if len(self.vls_positions) != self.n_events:
                raise SchemeError("vls_positions must list one position per event")
        if self.tpw_angles_deg is not None:
            object.__setattr__(self, "tpw_angles_deg", tuple(float(v) for v in self.tpw_angles_deg))
        if not self.label:
            object.__setattr__(self, "label", self.kind.value)

    @property
    def is_hercules(self) -> bool:
        return self.kind in (SchemeKind.HERCULES_PLANE, SchemeKind.HERCULES_DIVERGING)

    def with_label(self, label: str) -> "TransmitScheme":
        return replace(self, label=label)

    def event_transmit_axis(self, event: int) -> ChannelAxis:
        self._check_event(event)
        if self.kind is SchemeKind.TILTED_PLANE_WAVE and event >= self.n_events // 2:
            return self.transmit_axis.other
        return self.transmit_axis

    def event_receive_axis(self, event: int) -> ChannelAxis:
        return self.event_transmit_axis(event).other

    def bias_schedule(self, geom: ArrayGeometry) -> BiasSchedule:
        """Hadamard bias on the transmit side for HERCULES, uniform +1 otherwise."""
        n_ch = geom.n_channels(self.transmit_axis)
        if self.is_hercules:
            if self.n_events != n_ch:
                raise SchemeError(
                    f"HERCULES needs n_events equal to the {self.transmit_axis.value} count "
                    f"({n_ch}), got {self.n_events}")
            return BiasSchedule.hadamard(n_ch)
        return BiasSchedule.uniform(self.n_events, n_ch)

    def validate(self, geom: ArrayGeometry) -> None:
        self.bias_schedule(geom)
        if self.kind is SchemeKind.WALKING_VLS:
            active = self.active_channels(geom)
            if not 1 <= active <= geom.n_channels(self.transmit_axis):
                raise SchemeError(f"vls_active must lie in [1, {geom.n_channels(self.transmit_axis)}]")

    # scheme parameters resolved against a geometry

    def diverging_standoff(self, geom: ArrayGeometry) -> float:
        return (geom.extent(self.transmit_axis) / 2) / np.tan(np.deg2rad(self.half_angle_deg))

    def line_positions(self, geom: ArrayGeometry) -> np.ndarray:
        if self.vls_positions is not None:
            return np.asarray(self.vls_positions)
        a = geom.extent(self.transmit_axis)
        return (np.arange(self.n_events) + 0.5) * a / self.n_events - a / 2

    def line_standoff(self, geom: ArrayGeometry) -> float:
        if self.vls_standoff is not None:
            return float(self.vls_standoff)
        return geom.extent(self.transmit_axis) / 2

    def active_channels(self, geom: ArrayGeometry) -> int:
        if self.vls_active is not None:
            return int(self.vls_active)
        return max(geom.n_channels(self.transmit_axis) // 2, 1)

    def tilt_angles(self) -> np.ndarray:
        """Tilt angle (radians) of every event."""
        if self.tpw_angles_deg is not None:
            half = np.asarray(self.tpw_angles_deg)
        else:
            half = np.linspace(-self.tpw_max_angle_deg, self.tpw_max_angle_deg, self.n_events // 2)
        return np.deg2rad(np.concatenate([half, half]))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "label": self.label,
            "n_events": self.n_events,
            "transmit_axis": self.transmit_axis.value,
            "half_angle_deg": self.half_angle_deg,
            "vls_positions": None if self.vls_positions is None else list(self.vls_positions),
            "vls_standoff": self.vls_standoff,
            "vls_active": self.vls_active,
            "tpw_max_angle_deg": self.tpw_max_angle_deg,
            "tpw_angles_deg": None if self.tpw_angles_deg is None else list(self.tpw_angles_deg),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransmitScheme":
        d = dict(d)
        for key in ("vls_positions", "tpw_angles_deg"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)

    def _check_event(self, event):
        if not 0 <= event < self.n_events:
            raise IndexError(f"event {event} out of range [0, {self.n_events})")


@dataclass(frozen=True)
class TransmitPattern:
    """Per-channel firing description of one event on ``axis``."""

    axis: ChannelAxis
    delays: np.ndarray
    signs: np.ndarray
    active: np.ndarray


def diverging_delay(u, standoff: float, c: float):
    """Firing delay that makes a line source ``standoff`` behind the array."""
    u = np.asarray(u, dtype=float)
    return (np.sqrt(u ** 2 + standoff ** 2) - standoff) / c


def element_tx_delays(scheme: TransmitScheme, geom: ArrayGeometry, event: int) -> TransmitPattern:
    axis = scheme.event_transmit_axis(event)
    u = geom.channel_centers(axis)
    c = geom.speed_of_sound
    n = u.size
    kind = scheme.kind
    if kind is SchemeKind.HERCULES_PLANE:
        delays = np.zeros(n)
        signs = transmit_polarity(scheme.bias_schedule(geom), event)
        active = np.ones(n, dtype=bool)
    elif kind is SchemeKind.HERCULES_DIVERGING:
        delays = diverging_delay(u, scheme.diverging_standoff(geom), c)
        signs = transmit_polarity(scheme.bias_schedule(geom), event)
        active = np.ones(n, dtype=bool)
    elif kind is SchemeKind.WALKING_VLS:
        centre = scheme.line_positions(geom)[event]
        # stable sort keeps the sub-aperture choice deterministic at ties
        nearest = np.argsort(np.abs(u - centre), kind="stable")[: scheme.active_channels(geom)]
        active = np.zeros(n, dtype=bool)
        active[nearest] = True
        delays = np.where(active, diverging_delay(u - centre, scheme.line_standoff(geom), c), 0.0)
        signs = np.ones(n, dtype=np.int64)
    elif kind is SchemeKind.TILTED_PLANE_WAVE:
        alpha = scheme.tilt_angles()[event]
        s = u * np.sin(alpha)
        delays = (s - s.min()) / c
        signs = np.ones(n, dtype=np.int64)
        active = np.ones(n, dtype=bool)
    else:  # pragma: no cover - enum is closed
        raise SchemeError(f"unknown scheme kind {kind!r}")
    return TransmitPattern(axis=axis, delays=delays, signs=np.asarray(signs, dtype=np.int64), active=active)


def transmit_time(scheme: TransmitScheme, geom: ArrayGeometry, event: int, points: np.ndarray) -> np.ndarray:
    """Wavefront arrival time of ``event`` at ``points`` (shape ``(n, 3)``)."""
    points = np.asarray(points, dtype=float)
    axis = scheme.event_transmit_axis(event)
    u = points[:, axis.coordinate]
    z = points[:, 2]
    c = geom.speed_of_sound
    kind = scheme.kind
    if kind is SchemeKind.HERCULES_PLANE:
        return z / c
    if kind is SchemeKind.HERCULES_DIVERGING:
        d = scheme.diverging_standoff(geom)
        return (np.sqrt(u ** 2 + (z + d) ** 2) - d) / c
    if kind is SchemeKind.WALKING_VLS:
        d = scheme.line_standoff(geom)
        centre = scheme.line_positions(geom)[event]
        return (np.sqrt((u - centre) ** 2 + (z + d) ** 2) - d) / c
    if kind is SchemeKind.TILTED_PLANE_WAVE:
        alpha = scheme.tilt_angles()[event]
        s_min = (geom.channel_centers(axis) * np.sin(alpha)).min()
        return (u * np.sin(alpha) + z * np.cos(alpha) - s_min) / c
    raise SchemeError(f"unknown scheme kind {kind!r}")  # pragma: no cover
