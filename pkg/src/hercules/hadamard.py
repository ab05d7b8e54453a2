"""Hadamard matrices, bias schedules and HERO encoding/decoding.

The encoded side (the biased channels) carries index ``r``; the receiving side
carries index ``c``.  For transmit event ``e`` the receive channel ``c`` sees

    g[e, c, t] = sum_r H[e, r] * s[r, c, t]

and the element signals are recovered with ``s = H.T @ g / n`` because a
Sylvester matrix satisfies ``H @ H.T = n I``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class UnsupportedOrderError(ValueError):
    """Hadamard order that cannot be built (only powers of two are supported)."""


def _check_order(order) -> int:
    if int(order) != order or order < 1 or (int(order) & (int(order) - 1)):
        raise UnsupportedOrderError(
            f"Hadamard order {order!r} is not a power of two; Hadamard matrices do not "
            "exist for an arbitrary number of elements and only Sylvester orders are supported"
        )
    return int(order)


def sylvester(order: int) -> np.ndarray:
    """Sylvester-Hadamard matrix of ``order`` (int64 entries, ±1)."""
    order = _check_order(order)
    h = np.ones((1, 1), dtype=np.int64)
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    return h


@dataclass(frozen=True)
class BiasSchedule:
    """Per-event bias sign of every encoded channel, ``signs[event, channel]``."""

    signs: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.signs)
        if s.ndim != 2 or not np.all(np.abs(s) == 1):
            raise ValueError("bias signs must be a 2-D array of ±1")

    @property
    def n_events(self) -> int:
        return self.signs.shape[0]

    @property
    def n_channels(self) -> int:
        return self.signs.shape[1]

    @classmethod
    def hadamard(cls, order: int) -> "BiasSchedule":
        return cls(sylvester(order))

    @classmethod
    def uniform(cls, n_events: int, n_channels: int) -> "BiasSchedule":
        return cls(np.ones((n_events, n_channels), dtype=np.int64))

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.signs == 1))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(self.signs.tolist())

    @classmethod
    def from_csv(cls, path) -> "BiasSchedule":
        with open(Path(path), newline="") as fh:
            rows = [[int(v) for v in row] for row in csv.reader(fh) if row]
        return cls(np.array(rows, dtype=np.int64))


def transmit_polarity(schedule: BiasSchedule, event: int) -> np.ndarray:
    """Drive sign per encoded channel for ``event``.

    The drive is inverted wherever the bias is negative, so the emitted
    waveform (bias sign times drive sign) is the same for every event.
    """
    if not 0 <= event < schedule.n_events:
        raise IndexError(f"event {event} out of range [0, {schedule.n_events})")
    return schedule.signs[event].copy()


def _as_matrix(h) -> np.ndarray:
    if isinstance(h, BiasSchedule):
        h = h.signs
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"Hadamard matrix must be square, got shape {h.shape}")
    return h


def encode(s: np.ndarray, h) -> np.ndarray:
    """Bias-encode element data ``s[r, c, t]`` into channel data ``g[e, c, t]``."""
    h = _as_matrix(h)
    s = np.asarray(s)
    if s.ndim < 1 or s.shape[0] != h.shape[1]:
        raise ValueError(f"element data has {s.shape[0] if s.ndim else 0} encoded rows, "
                         f"Hadamard order is {h.shape[1]}")
    out = np.zeros((h.shape[0],) + s.shape[1:], dtype=np.result_type(s.dtype, np.float64))
    # fixed summation order over r keeps every output sample independent of partitioning
    for r in range(h.shape[1]):
        out += h[:, r].reshape((-1,) + (1,) * (s.ndim - 1)) * s[r]
    return out


def decode(g: np.ndarray, h) -> np.ndarray:
    """Recover element data ``s[r, c, t]`` from encoded events ``g[e, c, t]``."""
    h = _as_matrix(h)
    g = np.asarray(g)
    if g.ndim < 1 or g.shape[0] != h.shape[0]:
        raise ValueError(f"channel data has {g.shape[0] if g.ndim else 0} events, "
                         f"Hadamard order is {h.shape[0]}")
    n = h.shape[0]
    out = np.zeros((h.shape[1],) + g.shape[1:], dtype=np.result_type(g.dtype, np.float64))
    for e in range(n):
        out += h[e, :].reshape((-1,) + (1,) * (g.ndim - 1)) * g[e]
    out /= n
    return out
