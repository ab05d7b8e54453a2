"""Experiment configuration: sectioned plain text with explicit units.

Dimensional values carry a unit suffix (``250 um``, ``6.3 MHz``, ``30 us``,
``45 deg``, ``1540 m/s``, ``20 dB``, ``40 /mm3``).  Vectors are written as
space-separated components sharing one trailing unit (``0 0 12.8 mm``).
See ``configs/*.cfg`` for complete examples.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .beamform import VolumeGrid, psf_grid
from .geometry import ArrayGeometry, GeometryError, build_array
from .hadamard import UnsupportedOrderError, sylvester
from .schemes import SchemeError, SchemeKind, TransmitScheme
from .wavesim import Excitation, Scene, SimulationError, cyst_phantom, make_excitation


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names ``section.key``."""


_UNITS = {
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "µm": 1e-6},
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9},
    "angle": {"deg": 1.0},
    "speed": {"m/s": 1.0, "mm/us": 1e3},
    "level": {"dB": 1.0},
    "density": {"/m3": 1.0, "/mm3": 1e9},
}


def parse_quantity(text: str, kind: str, where: str = "value") -> float:
    vec = parse_vector(text, kind, where)
    if vec.size != 1:
        raise ConfigError(f"{where}: expected a single value, got {text!r}")
    return float(vec[0])


def parse_vector(text: str, kind: str, where: str = "value") -> np.ndarray:
    parts = text.split()
    if len(parts) < 2:
        raise ConfigError(f"{where}: {text!r} needs a unit ({', '.join(_UNITS[kind])})")
    *nums, unit = parts
    if unit not in _UNITS[kind]:
        raise ConfigError(f"{where}: unit {unit!r} is not a {kind} unit ({', '.join(_UNITS[kind])})")
    try:
        values = np.array([float(v) for v in nums])
    except ValueError:
        raise ConfigError(f"{where}: cannot parse numbers in {text!r}") from None
    if kind == "level":
        return values
    if not np.all(np.isfinite(values)):
        raise ConfigError(f"{where}: values must be finite")
    return values * _UNITS[kind][unit]


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: ArrayGeometry
    excitation: Excitation
    scene: Scene
    schemes: tuple
    grid: VolumeGrid
    psf_target: tuple | None = None
    cyst: dict | None = None
    probes: tuple = ()
    gcnr_bins: int = 100
    snr_db: float = math.inf
    seed: int = 0
    aperture_taper: str = "none"
    f_number: float = 0.0
    name: str = "experiment"
    source_text: str = field(default="", compare=False, repr=False)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode()).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))


class _Reader:
    def __init__(self, parser: configparser.ConfigParser):
        self.p = parser

    def has(self, section, key):
        return self.p.has_option(section, key)

    def raw(self, section, key, default=None):
        if not self.p.has_section(section):
            if default is not None:
                return default
            raise ConfigError(f"missing section [{section}]")
        if not self.p.has_option(section, key):
            if default is not None:
                return default
            raise ConfigError(f"{section}.{key}: missing")
        return self.p.get(section, key).strip()

    def quantity(self, section, key, kind, default=None):
        text = self.raw(section, key, default)
        return parse_quantity(text, kind, f"{section}.{key}")

    def vector(self, section, key, kind, n=3, default=None):
        text = self.raw(section, key, default)
        v = parse_vector(text, kind, f"{section}.{key}")
        if v.size != n:
            raise ConfigError(f"{section}.{key}: expected {n} components, got {v.size}")
        return tuple(float(x) for x in v)

    def integer(self, section, key, default=None):
        text = self.raw(section, key, None if default is None else str(default))
        try:
            value = int(text)
        except ValueError:
            raise ConfigError(f"{section}.{key}: expected an integer, got {text!r}") from None
        return value

    def number(self, section, key, default=None):
        text = self.raw(section, key, None if default is None else repr(default))
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{section}.{key}: expected a number, got {text!r}") from None


def _geometry(r: _Reader) -> ArrayGeometry:
    try:
        return build_array(
            r.integer("geometry", "n_rows"), r.integer("geometry", "n_cols"),
            r.quantity("geometry", "pitch", "length"), r.quantity("geometry", "kerf", "length"),
            r.quantity("geometry", "center_frequency", "frequency"),
            r.quantity("geometry", "sampling_frequency", "frequency"),
            r.quantity("geometry", "speed_of_sound", "speed"),
        )
    except GeometryError as exc:
        raise ConfigError(f"geometry: {exc}") from None


def _excitation(r: _Reader, geom: ArrayGeometry) -> Excitation:
    kind = r.raw("excitation", "kind")
    try:
        if kind == "gated_sine":
            fc = r.quantity("excitation", "frequency", "frequency", f"{geom.center_frequency!r} Hz")
            return make_excitation(kind, geom.sampling_frequency, fc=fc, cycles=r.number("excitation", "cycles", 1.0))
        if kind == "linear_chirp":
            return make_excitation(kind, geom.sampling_frequency,
                                   f0=r.quantity("excitation", "f0", "frequency"),
                                   f1=r.quantity("excitation", "f1", "frequency"),
                                   duration=r.quantity("excitation", "duration", "time"),
                                   taper=r.number("excitation", "taper", 0.2))
    except SimulationError as exc:
        raise ConfigError(f"excitation: {exc}") from None
    raise ConfigError(f"excitation.kind: unknown kind {kind!r} (gated_sine or linear_chirp)")


def _scene(r: _Reader, geom: ArrayGeometry, base: Path, seed: int) -> Scene:
    c = geom.speed_of_sound
    kind = r.raw("scene", "type")
    try:
        if kind == "points":
            text = r.raw("scene", "points")
            pts = [parse_vector(p.strip(), "length", "scene.points") for p in text.split(";") if p.strip()]
            if any(p.size != 3 for p in pts):
                raise ConfigError("scene.points: each point needs x y z and a unit")
            return Scene(np.array(pts), np.ones(len(pts)), c)
        if kind == "file":
            path = base / r.raw("scene", "path")
            if not path.is_file():
                raise ConfigError(f"scene.path: file {path} does not exist")
            return Scene.read(path)
        if kind == "cyst_phantom":
            rng = np.random.default_rng(seed)
            return cyst_phantom(rng, r.vector("scene", "lo", "length"), r.vector("scene", "hi", "length"),
                                r.quantity("scene", "density", "density"),
                                r.vector("scene", "cyst_center", "length"),
                                r.quantity("scene", "cyst_radius", "length"),
                                "xyz".index(r.raw("scene", "cyst_axis", "x")), c)
    except SimulationError as exc:
        raise ConfigError(f"scene: {exc}") from None
    raise ConfigError(f"scene.type: unknown type {kind!r} (points, file or cyst_phantom)")


def _schemes(r: _Reader, geom: ArrayGeometry) -> tuple:
    names = [n.strip() for n in r.raw("schemes", "kinds").split(",") if n.strip()]
    if not names:
        raise ConfigError("schemes.kinds: no schemes listed")
    n_events = r.integer("schemes", "n_events")
    out = []
    for name in names:
        try:
            kind = SchemeKind.parse(name)
            kw = {}
            if kind is SchemeKind.HERCULES_DIVERGING:
                kw["half_angle_deg"] = r.quantity("schemes", "half_angle", "angle", "45 deg")
            if kind is SchemeKind.TILTED_PLANE_WAVE:
                kw["tpw_max_angle_deg"] = r.quantity("schemes", "tpw_max_angle", "angle", "16 deg")
            if kind is SchemeKind.WALKING_VLS and r.has("schemes", "vls_active"):
                kw["vls_active"] = r.integer("schemes", "vls_active")
            if kind is SchemeKind.WALKING_VLS and r.has("schemes", "vls_standoff"):
                kw["vls_standoff"] = r.quantity("schemes", "vls_standoff", "length")
            scheme = TransmitScheme(kind, n_events, **kw)
            if scheme.is_hercules:
                # report an impossible Hadamard order before any count mismatch
                sylvester(n_events)
            scheme.validate(geom)
        except UnsupportedOrderError as exc:
            raise ConfigError(f"schemes.n_events: {exc}") from exc
        except SchemeError as exc:
            raise ConfigError(f"schemes ({name}): {exc}") from None
        out.append(scheme)
    return tuple(out)


def _grid(r: _Reader, geom: ArrayGeometry) -> VolumeGrid:
    kind = r.raw("grid", "type", "psf")
    if kind == "psf":
        return psf_grid(r.vector("grid", "center", "length"), geom.wavelength)
    if kind == "box":
        try:
            counts = tuple(int(v) for v in r.raw("grid", "counts").split())
        except ValueError:
            raise ConfigError("grid.counts: expected three integers") from None
        if len(counts) != 3:
            raise ConfigError("grid.counts: expected three integers")
        try:
            return VolumeGrid(r.vector("grid", "origin", "length"), r.vector("grid", "spacing", "length"), counts)
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from None
    raise ConfigError(f"grid.type: unknown type {kind!r} (psf or box)")


def parse_config(text: str, base_dir=".", seed: int | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    r = _Reader(parser)
    seed = r.integer("run", "seed", 0) if seed is None else int(seed)
    geom = _geometry(r)
    exc = _excitation(r, geom)
    scene = _scene(r, geom, Path(base_dir), seed)
    schemes = _schemes(r, geom)
    grid = _grid(r, geom)
    target = r.vector("metrics", "psf_target", "length") if r.has("metrics", "psf_target") else None
    cyst = None
    if r.has("metrics", "cyst_center"):
        cyst = {
            "center": r.vector("metrics", "cyst_center", "length"),
            "axis": tuple(float(v) for v in r.raw("metrics", "cyst_axis", "1 0 0").split()),
            "radius": r.quantity("metrics", "cyst_radius", "length"),
            "length": r.quantity("metrics", "cyst_length", "length"),
            "inner": r.number("metrics", "inner_factor", 0.7),
            "guard": r.number("metrics", "guard_factor", 1.3),
            "outer": r.number("metrics", "outer_factor", 2.0),
        }
    probes = ()
    if r.has("metrics", "probes"):
        probes = tuple(tuple(float(x) for x in parse_vector(p.strip(), "length", "metrics.probes"))
                       for p in r.raw("metrics", "probes").split(";") if p.strip())
        if any(len(p) != 3 for p in probes):
            raise ConfigError("metrics.probes: each probe needs x y z and a unit")
    snr_text = r.raw("noise", "snr", "inf dB")
    snr = parse_quantity(snr_text, "level", "noise.snr")
    if math.isnan(snr) or snr == -math.inf:
        raise ConfigError("noise.snr: must be finite or inf")
    taper = r.raw("run", "aperture_taper", "none")
    if taper not in ("none", "hann"):
        raise ConfigError(f"run.aperture_taper: expected none or hann, got {taper!r}")
    f_number = r.number("run", "f_number", 0.0)
    if f_number < 0:
        raise ConfigError("run.f_number: must be >= 0")
    bins = r.integer("metrics", "gcnr_bins", 100)
    if bins < 1:
        raise ConfigError("metrics.gcnr_bins: must be >= 1")
    return ExperimentConfig(geom, exc, scene, schemes, grid, target, cyst, probes, bins, snr, seed, taper, f_number,
                            r.raw("run", "name", "experiment"), text)


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent, seed)


def bundled_config(name: str) -> Path:
    path = Path(__file__).parent / "configs" / name
    if not path.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return path
