"""Image-quality measurements on reconstructed volumes.

Profiles and volumes are taken as envelope amplitude (not dB, not intensity);
half maximum of the amplitude is the -6 dB level.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .beamform import VolumeGrid


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class PsfReport:
    lateral_fwhm: float
    elevational_fwhm: float
    axial_fwhm: float
    inner_energy_ratio: float
    energy_quotient: float = float("nan")
    label: str = ""

    def __post_init__(self):
        for name in ("lateral_fwhm", "elevational_fwhm", "axial_fwhm"):
            if not getattr(self, name) > 0:
                raise MetricsError(f"{name} must be positive")
        if not 0 <= self.inner_energy_ratio <= 1:
            raise MetricsError("inner_energy_ratio must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CylinderRegionPair:
    """Inside (``r < inner``) and outside (``guard <= r < outer``) regions around an axis."""

    center: tuple
    axis: tuple
    inner_radius: float
    guard_radius: float
    outer_radius: float
    length: float

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        norm = np.linalg.norm(a)
        if a.shape != (3,) or norm == 0:
            raise MetricsError("cylinder axis must be a nonzero 3-vector")
        object.__setattr__(self, "axis", tuple(a / norm))
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if not 0 < self.inner_radius <= self.guard_radius < self.outer_radius:
            raise MetricsError("cylinder radii must satisfy 0 < inner <= guard < outer")
        if not self.length > 0:
            raise MetricsError("cylinder length must be positive")

    @classmethod
    def around_cyst(cls, center, axis, cyst_radius: float, length: float,
                    inner: float = 0.7, guard: float = 1.3, outer: float = 2.0) -> "CylinderRegionPair":
        return cls(center, axis, inner * cyst_radius, guard * cyst_radius, outer * cyst_radius, length)


def _crossing(profile, i_peak, half, step):
    i = i_peak
    while 0 <= i + step < profile.size and profile[i + step] >= half:
        i += step
    j = i + step
    if not 0 <= j < profile.size:
        raise MetricsError("profile never drops below half maximum inside the window")
    # linear interpolation between the last sample above and the first below
    return i + step * (profile[i] - half) / (profile[i] - profile[j])


def fwhm(profile, spacing: float) -> float:
    """Full width at half maximum of an amplitude profile sampled at ``spacing``."""
    p = np.abs(np.asarray(profile, dtype=float))
    if p.ndim != 1 or p.size < 3:
        raise MetricsError("profile must be 1-D with at least three samples")
    i_peak = int(np.argmax(p))
    if i_peak in (0, p.size - 1):
        raise MetricsError("profile maximum lies on the window boundary; widen the window")
    half = p[i_peak] / 2
    if not half > 0:
        raise MetricsError("profile is all zeros")
    left = _crossing(p, i_peak, half, -1)
    right = _crossing(p, i_peak, half, +1)
    return float((right - left) * spacing)


def _amplitude(volume):
    if isinstance(volume, VolumeGrid):
        v = volume.values
        if v is None:
            raise MetricsError("volume has no values")
        if np.iscomplexobj(v):
            return np.abs(v)
        # real values are taken as dB
        return 10.0 ** (v / 20.0)
    return np.abs(np.asarray(volume))


def inner_energy_ratio(volume: VolumeGrid, center, wavelength: float, radius: float = 2.5,
                       min_margin: float = 5.0) -> tuple[float, float]:
    """Fraction of envelope energy within ``radius`` wavelengths of ``center``.

    Returns ``(E_in / (E_in + E_out), E_in / E_out)``.  The grid must extend
    at least ``min_margin`` wavelengths beyond the center along every axis.
    """
    amp = _amplitude(volume)
    center = np.asarray(center, dtype=float)
    for i in range(3):
        ax = volume.axis(i)
        tol = 1e-6 * volume.spacing[i]
        lo, hi = center[i] - min_margin * wavelength, center[i] + min_margin * wavelength
        if ax[0] > lo + tol or ax[-1] < hi - tol:
            raise MetricsError(f"volume extends less than {min_margin} wavelengths beyond the center "
                               f"along axis {'xyz'[i]}")
    gx, gy, gz = np.meshgrid(volume.x - center[0], volume.y - center[1], volume.z - center[2], indexing="ij")
    inside = gx ** 2 + gy ** 2 + gz ** 2 <= (radius * wavelength) ** 2
    energy = amp ** 2
    e_in = float(energy[inside].sum())
    e_out = float(energy[~inside].sum())
    total = e_in + e_out
    if total == 0:
        raise MetricsError("volume has no energy")
    return e_in / total, (e_in / e_out if e_out > 0 else float("inf"))


def gcnr(inside, outside, n_bins: int = 100) -> float:
    """Generalized CNR: one minus the overlap of the two normalized histograms."""
    a = np.asarray(inside, dtype=float).ravel()
    b = np.asarray(outside, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise MetricsError("gcnr needs two nonempty sample sets")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        return 0.0
    edges = np.linspace(lo, hi, n_bins + 1)
    ha = np.histogram(a, bins=edges)[0] / a.size
    hb = np.histogram(b, bins=edges)[0] / b.size
    return float(np.clip(1.0 - np.minimum(ha, hb).sum(), 0.0, 1.0))


def extract_region_samples(volume: VolumeGrid, region: CylinderRegionPair):
    """Envelope amplitudes inside the inner cylinder and in the outer annulus.

    One of the two sets may be empty (e.g. an inner radius covering the whole
    grid); both being empty is an error.
    """
    amp = _amplitude(volume)
    pts = volume.points() - np.asarray(region.center)
    axis = np.asarray(region.axis)
    along = pts @ axis
    radial = np.linalg.norm(pts - along[:, None] * axis[None], axis=1)
    in_len = np.abs(along) <= region.length / 2
    flat = amp.ravel()
    inside = flat[in_len & (radial < region.inner_radius)]
    outside = flat[in_len & (radial >= region.guard_radius) & (radial < region.outer_radius)]
    if inside.size == 0 and outside.size == 0:
        raise MetricsError("cylinder regions are empty after clipping to the grid")
    return inside, outside


def psf_report(volume: VolumeGrid, center, wavelength: float, label: str = "") -> PsfReport:
    """FWHMs through the envelope maximum plus the inner energy ratio about ``center``."""
    amp = _amplitude(volume)
    ix, iy, iz = np.unravel_index(int(np.argmax(amp)), amp.shape)
    ratio, quotient = inner_energy_ratio(volume, center, wavelength)
    return PsfReport(
        lateral_fwhm=fwhm(amp[:, iy, iz], volume.spacing[0]),
        elevational_fwhm=fwhm(amp[ix, :, iz], volume.spacing[1]),
        axial_fwhm=fwhm(amp[ix, iy, :], volume.spacing[2]),
        inner_energy_ratio=ratio,
        energy_quotient=quotient,
        label=label,
    )


def format_report(entries: dict) -> str:
    """``key = value`` lines; floats use ``repr`` so the file round-trips exactly."""
    lines = []
    for key in sorted(entries):
        value = entries[key]
        lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise MetricsError(f"malformed report line {line!r}")
        key, value = key.strip(), value.strip()
        try:
            out[key] = float(value) if value.lower() not in ("true", "false") else value
        except ValueError:
            out[key] = value
    return out


_KNOWN_COLUMNS = ("lateral_fwhm", "elevational_fwhm", "axial_fwhm", "inner_energy_ratio", "energy_quotient", "gcnr")


def _cell(key, value):
    if isinstance(value, str):
        return value
    if key.endswith("_fwhm"):
        return f"{value * 1e6:.1f}"
    if float(value).is_integer() and abs(value) < 1e6:
        return str(int(value))
    return f"{value:.4f}"


def comparison_table(rows: list[dict]) -> str:
    """Plain-text table, one row per scheme sorted by label; FWHM columns in micrometers."""
    keys = {k for r in rows for k in r if k != "scheme"}
    cols = [k for k in _KNOWN_COLUMNS if k in keys] + sorted(keys - set(_KNOWN_COLUMNS))
    titles = ["scheme"] + [k.replace("_fwhm", "_fwhm_um") for k in cols]
    cells = [titles]
    for r in sorted(rows, key=lambda r: str(r.get("scheme", ""))):
        cells.append([str(r.get("scheme", ""))] + [_cell(k, r[k]) if k in r else "" for k in cols])
    widths = [max(len(row[i]) for row in cells) for i in range(len(titles))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
