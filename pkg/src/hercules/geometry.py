"""Row-column array element lattice.

Coordinates: x lateral, y elevational, z depth (array face at z = 0, normal +z).
Rows span x and are stacked along y; columns span y and are stacked along x.
Element ``(r, c)`` is the overlap of row ``r`` and column ``c``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Invalid array description."""


class ChannelAxis(enum.Enum):
    ROWS = "rows"
    COLUMNS = "columns"

    @property
    def other(self) -> "ChannelAxis":
        return ChannelAxis.COLUMNS if self is ChannelAxis.ROWS else ChannelAxis.ROWS

    @property
    def coordinate(self) -> int:
        """Index (0 = x, 1 = y) of the coordinate along which channel centers vary."""
        return 1 if self is ChannelAxis.ROWS else 0

    @classmethod
    def parse(cls, value) -> "ChannelAxis":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise GeometryError(f"unknown channel axis {value!r} (expected 'rows' or 'columns')") from None


@dataclass(frozen=True)
class ArrayGeometry:
    n_rows: int
    n_cols: int
    pitch: float
    kerf: float
    center_frequency: float
    sampling_frequency: float
    speed_of_sound: float

    def __post_init__(self):
        for name in ("n_rows", "n_cols"):
            value = getattr(self, name)
            if int(value) != value or value < 2:
                raise GeometryError(f"{name} must be an integer >= 2, got {value!r}")
        for name in ("pitch", "center_frequency", "sampling_frequency", "speed_of_sound"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise GeometryError(f"{name} must be positive, got {value!r}")
        if not np.isfinite(self.kerf) or self.kerf < 0:
            raise GeometryError(f"kerf must be >= 0, got {self.kerf!r}")
        if self.kerf >= self.pitch:
            raise GeometryError(f"kerf ({self.kerf!r}) must be smaller than pitch ({self.pitch!r})")

    @property
    def wavelength(self) -> float:
        return self.speed_of_sound / self.center_frequency

    @property
    def element_width(self) -> float:
        return self.pitch - self.kerf

    @property
    def extent_x(self) -> float:
        return self.n_cols * self.pitch

    @property
    def extent_y(self) -> float:
        return self.n_rows * self.pitch

    def n_channels(self, axis: ChannelAxis) -> int:
        return self.n_rows if ChannelAxis.parse(axis) is ChannelAxis.ROWS else self.n_cols

    def extent(self, axis: ChannelAxis) -> float:
        """Aperture length across which the channels of ``axis`` are stacked."""
        return self.extent_y if ChannelAxis.parse(axis) is ChannelAxis.ROWS else self.extent_x

    def row_centers(self) -> np.ndarray:
        """y-coordinate of every row."""
        return (np.arange(self.n_rows) - (self.n_rows - 1) / 2) * self.pitch

    def col_centers(self) -> np.ndarray:
        """x-coordinate of every column."""
        return (np.arange(self.n_cols) - (self.n_cols - 1) / 2) * self.pitch

    def channel_centers(self, axis: ChannelAxis) -> np.ndarray:
        if ChannelAxis.parse(axis) is ChannelAxis.ROWS:
            return self.row_centers()
        return self.col_centers()

    def element_positions(self) -> np.ndarray:
        """All element centers, shape ``(n_rows * n_cols, 3)``, row-major (index ``r * n_cols + c``)."""
        x = np.tile(self.col_centers(), self.n_rows)
        y = np.repeat(self.row_centers(), self.n_cols)
        return np.stack([x, y, np.zeros_like(x)], axis=1)

    def element_rows(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_rows), self.n_cols)

    def element_cols(self) -> np.ndarray:
        return np.tile(np.arange(self.n_cols), self.n_rows)

    def element_channel(self, axis: ChannelAxis) -> np.ndarray:
        """Channel index of every element on ``axis``."""
        if ChannelAxis.parse(axis) is ChannelAxis.ROWS:
            return self.element_rows()
        return self.element_cols()

    def line_positions(self, axis: ChannelAxis) -> np.ndarray:
        """Representative point of each line channel: the channel center on the array axis."""
        axis = ChannelAxis.parse(axis)
        pos = np.zeros((self.n_channels(axis), 3))
        pos[:, axis.coordinate] = self.channel_centers(axis)
        return pos


def build_array(n_rows, n_cols, pitch, kerf, fc, fs, c) -> ArrayGeometry:
    """Construct an :class:`ArrayGeometry`; raises :class:`GeometryError` naming the bad field."""
    return ArrayGeometry(
        n_rows=n_rows,
        n_cols=n_cols,
        pitch=float(pitch),
        kerf=float(kerf),
        center_frequency=float(fc),
        sampling_frequency=float(fs),
        speed_of_sound=float(c),
    )


def elements_of_channel(geom: ArrayGeometry, axis, index: int) -> np.ndarray:
    """Element centers belonging to one row or column, shape ``(n, 3)``."""
    axis = ChannelAxis.parse(axis)
    n = geom.n_channels(axis)
    if not 0 <= index < n:
        raise IndexError(f"{axis.value} index {index} out of range [0, {n})")
    pos = geom.element_positions()
    return pos[geom.element_channel(axis) == index]
