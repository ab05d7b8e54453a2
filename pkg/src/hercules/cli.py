"""Experiment runner and command-line interface.

Output layout under ``--out``::

    manifest.txt                 config hash, versions, wall-clock (full runs only)
    report.txt                   comparison table over all schemes
    <scheme>/channels.hrf        HERCRF01 channel data
    <scheme>/volume.hvol         HERCVOL1 complex compounded volume
    <scheme>/volume_db.hvol      HERCVOL1 dB volume
    <scheme>/<plane>.pgm         mid-plane dB slices, 60 dB display range
    <scheme>/metrics.txt         key = value metrics

Exit codes: 0 success, 1 invalid configuration or input, 2 runtime failure,
3 file or container I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import platform
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .beamform import envelope_db, reconstruct_complex
from .config import ConfigError, ExperimentConfig, load_config
from .geometry import GeometryError
from .hadamard import UnsupportedOrderError
from .io import (ContainerError, mid_slices, read_channel_data, read_volume, slice_to_gray,
                 write_channel_data, write_pgm, write_volume)
from .metrics import (CylinderRegionPair, comparison_table, extract_region_samples, format_report, gcnr,
                      parse_report, psf_report)
from .schemes import SchemeError
from .wavesim import add_noise, required_samples, simulate

log = logging.getLogger("hercules")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3
MEMORY_ENV = "HERCULES_MAX_MEMORY_MB"
STAGES = ("simulate", "reconstruct", "metrics", "report")


class ResourceError(RuntimeError):
    pass


class _Outputs:
    """Tracks written files so a failed run can remove what it produced."""

    def __init__(self, root: Path):
        self.root = root
        self.created_root = not root.exists()
        self.files: list[Path] = []
        self.dirs: list[Path] = []

    def path(self, *parts) -> Path:
        p = self.root.joinpath(*parts)
        for d in reversed(p.parents):
            if not d.exists():
                d.mkdir()
                self.dirs.append(d)
        self.files.append(p)
        return p

    def rollback(self):
        if self.created_root:
            shutil.rmtree(self.root, ignore_errors=True)
            return
        for f in self.files:
            f.unlink(missing_ok=True)
        for d in reversed(self.dirs):
            try:
                d.rmdir()
            except OSError:
                pass


def _check_memory(cfg: ExperimentConfig):
    cap = os.environ.get(MEMORY_ENV)
    if not cap:
        return
    try:
        cap_bytes = float(cap) * 2 ** 20
    except ValueError:
        raise ConfigError(f"{MEMORY_ENV}: expected a number of megabytes, got {cap!r}") from None
    geom = cfg.geometry
    width = max(geom.n_rows, geom.n_cols)
    worst = 0
    for scheme in cfg.schemes:
        n_t = required_samples(cfg.scene, geom, scheme, cfg.excitation)
        # real + analytic copies of the channel data plus the complex volumes
        need = scheme.n_events * width * n_t * (8 + 2 * 16) + 3 * 16 * int(np.prod(cfg.grid.counts))
        worst = max(worst, need)
    if worst > cap_bytes:
        raise ResourceError(f"estimated peak memory {worst / 2 ** 20:.0f} MB exceeds {MEMORY_ENV}={cap}")


def _simulate(cfg: ExperimentConfig, index: int):
    scheme = cfg.schemes[index]
    data = simulate(cfg.scene, cfg.geometry, scheme, cfg.excitation)
    return add_noise(data, cfg.snr_db, cfg.seed + index)


def _reconstruct(cfg: ExperimentConfig, scheme, data):
    vol = reconstruct_complex(scheme, data, cfg.excitation, cfg.geometry, cfg.grid,
                              aperture_taper=cfg.aperture_taper, f_number=cfg.f_number)
    return vol, envelope_db(vol)


def _metrics(cfg: ExperimentConfig, label: str, vol) -> dict:
    entries = {"scheme": label}
    wl = cfg.geometry.wavelength
    if cfg.psf_target is not None:
        rep = psf_report(vol, cfg.psf_target, wl, label)
        entries.update({k: v for k, v in rep.to_dict().items() if k != "label"})
        amp = np.abs(vol.values)
        peak = np.array(np.unravel_index(int(np.argmax(amp)), amp.shape))
        target = np.array(vol.index_of(cfg.psf_target))
        entries["peak_offset_voxels"] = int(np.max(np.abs(peak - target)))
    if cfg.probes:
        amp = np.abs(vol.values)
        peak = amp.max()
        for i, point in enumerate(cfg.probes):
            entries[f"probe_{i}_db"] = float(20 * np.log10(max(amp[vol.index_of(point)] / peak, 1e-5)))
    if cfg.cyst is not None:
        c = cfg.cyst
        region = CylinderRegionPair.around_cyst(c["center"], c["axis"], c["radius"], c["length"],
                                                c["inner"], c["guard"], c["outer"])
        inside, outside = extract_region_samples(vol, region)
        entries["gcnr"] = gcnr(inside, outside, cfg.gcnr_bins)
        entries["cyst_contrast_db"] = float(20 * np.log10(np.mean(inside) / np.mean(outside)))
    return entries


def _write_volume_outputs(out: _Outputs, label: str, vol, vol_db):
    write_volume(out.path(label, "volume.hvol"), vol)
    write_volume(out.path(label, "volume_db.hvol"), vol_db)
    for plane, image in mid_slices(vol_db).items():
        write_pgm(out.path(label, f"{plane}.pgm"), slice_to_gray(image))


def _write_report(out: _Outputs, rows: list[dict]) -> str:
    table = comparison_table(rows)
    out.path("report.txt").write_text(table)
    return table


def stage_simulate(cfg: ExperimentConfig, out: _Outputs):
    for i, scheme in enumerate(cfg.schemes):
        log.info("simulating %s", scheme.label)
        write_channel_data(out.path(scheme.label, "channels.hrf"), _simulate(cfg, i))


def stage_reconstruct(cfg: ExperimentConfig, out: _Outputs, input_path: Path | None = None):
    if input_path is not None:
        data = read_channel_data(input_path)
        matches = [s for s in cfg.schemes if s.kind is data.scheme.kind]
        scheme = matches[0] if matches else data.scheme
        pairs = [(scheme, data)]
    else:
        pairs = []
        for scheme in cfg.schemes:
            src = out.root / scheme.label / "channels.hrf"
            if not src.is_file():
                raise ContainerError(f"{src}: channel data missing; run the simulate stage first")
            pairs.append((scheme, read_channel_data(src)))
    for scheme, data in pairs:
        log.info("reconstructing %s", scheme.label)
        vol, vol_db = _reconstruct(cfg, scheme, data)
        _write_volume_outputs(out, scheme.label, vol, vol_db)


def stage_metrics(cfg: ExperimentConfig, out: _Outputs):
    rows = []
    for scheme in cfg.schemes:
        src = out.root / scheme.label / "volume.hvol"
        if not src.is_file():
            raise ContainerError(f"{src}: volume missing; run the reconstruct stage first")
        entries = _metrics(cfg, scheme.label, read_volume(src))
        out.path(scheme.label, "metrics.txt").write_text(format_report(entries))
        rows.append(entries)
    return rows


def collect_reports(root: Path) -> list[dict]:
    rows = []
    for path in sorted(Path(root).rglob("metrics.txt")):
        entries = parse_report(path.read_text())
        entries.setdefault("scheme", path.parent.name)
        rows.append(entries)
    return rows


def stage_report(out: _Outputs) -> str:
    rows = collect_reports(out.root)
    if not rows:
        raise ContainerError(f"{out.root}: no metrics.txt files found")
    return _write_report(out, rows)


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Simulate, reconstruct and measure every scheme of ``cfg``; returns metrics by scheme label.

    Removes whatever it wrote if any stage fails.
    """
    out = _Outputs(Path(out_dir))
    start = time.time()
    try:
        _check_memory(cfg)
        results = {}
        for i, scheme in enumerate(cfg.schemes):
            log.info("running %s", scheme.label)
            data = _simulate(cfg, i)
            write_channel_data(out.path(scheme.label, "channels.hrf"), data)
            vol, vol_db = _reconstruct(cfg, scheme, data)
            _write_volume_outputs(out, scheme.label, vol, vol_db)
            entries = _metrics(cfg, scheme.label, vol)
            out.path(scheme.label, "metrics.txt").write_text(format_report(entries))
            results[scheme.label] = entries
        _write_report(out, list(results.values()))
        _write_manifest(out, cfg, time.time() - start)
        return results
    except BaseException:
        out.rollback()
        raise


def _write_manifest(out: _Outputs, cfg: ExperimentConfig, elapsed: float):
    import numba
    import scipy

    lines = {
        "name": cfg.name,
        "config_sha256": cfg.config_hash,
        "seed": cfg.seed,
        "schemes": ", ".join(s.label for s in cfg.schemes),
        "hercules_version": __version__,
        "python_version": platform.python_version(),
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "numba_version": numba.__version__,
        "threads": _threads(),
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(time.time() - elapsed)),
        "wall_clock_s": round(elapsed, 3),
    }
    out.path("manifest.txt").write_text("".join(f"{k} = {v}\n" for k, v in lines.items()))


def _threads() -> int:
    import numba

    return numba.get_num_threads()


def _set_threads(n: int | None):
    if n is None:
        return
    import numba

    if n < 1:
        raise ConfigError(f"--threads must be >= 1, got {n}")
    limit = numba.config.NUMBA_NUM_THREADS
    if n > limit:
        log.warning("only %d threads available; using %d", limit, limit)
        n = limit
    numba.set_num_threads(n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hercules", description="Simulate and reconstruct row-column array "
                                "acquisitions (HERCULES, VLS, TPW) and measure image quality.")
    p.add_argument("--config", type=Path, help="experiment config file (not needed for --stage report)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=None, help="number of compute threads")
    p.add_argument("--stage", choices=STAGES, default=None, help="run a single stage (default: all)")
    p.add_argument("--input", type=Path, default=None, help="channel data file for --stage reconstruct")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    out = _Outputs(args.out)
    try:
        _set_threads(args.threads)
        if args.stage == "report":
            print(stage_report(out), end="")
            return EXIT_OK
        if args.config is None:
            raise ConfigError("--config is required for this stage")
        cfg = load_config(args.config, args.seed)
        if args.stage is None:
            results = run_experiment(cfg, args.out)
            print(comparison_table(list(results.values())), end="")
            return EXIT_OK
        try:
            if args.stage == "simulate":
                _check_memory(cfg)
                stage_simulate(cfg, out)
            elif args.stage == "reconstruct":
                stage_reconstruct(cfg, out, args.input)
            elif args.stage == "metrics":
                print(comparison_table(stage_metrics(cfg, out)), end="")
        except BaseException:
            out.rollback()
            raise
        return EXIT_OK
    except (ConfigError, GeometryError, SchemeError, UnsupportedOrderError) as exc:
        print(f"hercules: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"hercules: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:
        print(f"hercules: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
