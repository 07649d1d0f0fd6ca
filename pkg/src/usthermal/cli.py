"""Command-line entry point.

Exit codes: 0 success, 1 runtime or solver failure, 2 usage or configuration
error. Errors are written to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__, analysis, exports
from .acoustics import AcousticsError, GridSpec, field_grid, focal_metrics, focus_phases
from .config import Config, ConfigError, load_config, resolve_path, read_json, apply_overrides
from .modulation import Envelope
from .thermal import ThermalError, calibrate_eta, simulate, stability_limit, initial_grid

log = logging.getLogger("usthermal")

FIGURES = ("fig2", "fig3")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _plane(text: str) -> float:
    axis, _, value = text.partition("=")
    if axis.strip() != "z" or not value:
        raise argparse.ArgumentTypeError("plane must be given as z=<meters>")
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad plane coordinate {value!r}") from None


def _times(text: str) -> list[float]:
    try:
        out = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated times, got {text!r}") from None
    if any(t < 0 for t in out):
        raise argparse.ArgumentTypeError("snapshot times must be >= 0")
    return out


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _manifest(args, cfg: Config, out: Path, extra: dict | None = None) -> None:
    exports.write_json(out / "manifest.json", {
        "version": __version__,
        "command": args.command,
        "config": str(args.config),
        "overrides": list(args.set),
        "seed": args.seed,
        "arguments": {k: v for k, v in vars(args).items() if k not in ("config", "set", "seed", "command", "func", "verbose")},
        "resolved": cfg.resolved(),
        **(extra or {}),
    })


def _load(args) -> Config:
    return load_config(args.config, args.set)


def cmd_validate(args) -> int:
    cfg = _load(args)
    a = cfg.assembly
    grid = initial_grid(cfg.surface, cfg.skin, cfg.solver.nz, "uniform")
    _emit({
        "valid": True,
        "units": len(a.units),
        "enabled_units": [i for i, e in enumerate(a.enabled) if e],
        "elements": a.n_transducers,
        "enabled_elements": a.n_enabled,
        "wavenumber_rad_m": cfg.medium.wavenumber,
        "wavelength_m": cfg.medium.wavelength,
        "stability_dt_s": stability_limit(grid, cfg.skin),
        "thermal_grid": list(grid.shape),
        "envelope": cfg.envelope.to_dict(),
        "focus": list(cfg.focus),
    })
    return 0


def cmd_field(args) -> int:
    cfg = _load(args)
    drive = focus_phases(cfg.assembly, cfg.medium, cfg.focus).scaled(cfg.drive_amplitude)
    center = (cfg.focus[0], cfg.focus[1], args.plane)
    spec = GridSpec.centered(center, args.extent, args.res)
    grid = field_grid(cfg.assembly, cfg.medium, drive, spec, "intensity")
    out = Path(args.out)
    exports.field_csv(out / "intensity.csv", grid)
    exports.write_pgm(out / "intensity.pgm", grid.values, "intensity_W_m2")
    result = {"grid": {"nx": spec.nx, "ny": spec.ny, "spacing_m": args.res, "plane_z_m": args.plane}}
    try:
        result["focal_metrics"] = focal_metrics(grid, cfg.focus)
        exports.write_json(out / "focal_metrics.json", result["focal_metrics"])
    except AcousticsError as exc:
        print(json.dumps({"warning": f"focal metrics omitted: {exc}"}), file=sys.stderr)
    _manifest(args, cfg, out)
    _emit(result)
    return 0


def _envelope_from_args(args, cfg: Config) -> Envelope:
    if args.envelope is None:
        env = cfg.envelope
    elif args.envelope == "static":
        env = Envelope.static()
    else:
        base = cfg.envelope if cfg.envelope.kind == "square" else Envelope.square(50.0, 0.9)
        env = Envelope.square(args.freq or base.mod_frequency, base.duty if args.duty is None else args.duty)
    return env


def _run(cfg: Config, envelope: Envelope, duration: float, snapshots=(), skin=None, mode=None):
    drive = focus_phases(cfg.assembly, cfg.medium, cfg.focus).scaled(cfg.drive_amplitude)
    solver = cfg.solver if mode is None else replace(cfg.solver, mode=mode)
    probe = (cfg.surface.center if cfg.surface is not None else None)
    return simulate(cfg.assembly, cfg.medium, drive, envelope, skin or cfg.skin, cfg.surface, duration,
                    probe=probe, snapshot_times=snapshots, settings=solver)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    if args.duty is not None and not 0 <= args.duty <= 1:
        raise ConfigError("envelope.duty", f"must lie in [0, 1], got {args.duty}")
    env = _envelope_from_args(args, cfg)
    run = _run(cfg, env, args.duration, args.snapshots, mode=args.mode)
    out = Path(args.out)
    analysis.export_run(run, out)
    _manifest(args, cfg, out)
    summary = {"final_time_s": float(run.times[-1]), "final_probe_dT": float(run.probe_deltaT[-1]),
               "time_to_threshold_s": analysis.time_to_threshold(run), "envelope": env.to_dict(),
               "absorbed_fraction": cfg.skin.absorbed_fraction}
    _emit(summary)
    return 0


def _calibrate(cfg: Config, target_dt: float, target_t: float):
    static_cfg = replace(cfg, envelope=Envelope.static())
    return calibrate_eta(static_cfg, target_dt, target_t)


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    cal = _calibrate(cfg, args.target_dt, args.target_t)
    result = asdict(cal)
    if args.write:
        raw = apply_overrides(read_json(resolve_path(args.config)), args.set)
        raw.setdefault("skin", {})["absorbed_fraction"] = cal.eta
        out = Path(args.out) if args.out else Path(".")
        stem = resolve_path(args.config).stem
        path = out / f"{stem}.calibrated.json"
        exports.write_json(path, raw)
        result["written"] = str(path)
    if args.out:
        _manifest(args, cfg, Path(args.out), {"calibration": asdict(cal)})
    _emit(result)
    return 0


def cmd_reproduce(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    cal = _calibrate(cfg, 5.4, 5.0)
    skin = replace(cfg.skin, absorbed_fraction=cal.eta)
    static = _run(cfg, Envelope.static(), 30.0, (5.0, 30.0) if args.figure == "fig3" else (), skin)
    extra = {"calibration": asdict(cal)}
    if args.figure == "fig2":
        square = _run(cfg, Envelope.square(50.0, 0.9), 30.0, (), skin)
        analysis.export_run(static, out / "static", extra)
        analysis.export_run(square, out / "square", extra)
        report = analysis.comparison_report(static, square)
        report["static_dT_30s_over_5s"] = static.value_at(30.0) / static.value_at(5.0)
        report["calibration"] = asdict(cal)
        exports.write_json(out / "report.json", report)
        exports.timeseries_csv(out / "static_timeseries.csv", static.times, static.probe_deltaT)
        exports.timeseries_csv(out / "square_timeseries.csv", square.times, square.probe_deltaT)
        summary = {"static_dT_5s": static.value_at(5.0), "static_dT_30s": static.value_at(30.0),
                   "square_dT_5s": square.value_at(5.0), "square_dT_30s": square.value_at(30.0),
                   "ratio_5s": report["rows"][0]["ratio"], "measured_ratio_5s": 4.5 / 5.4}
    else:
        analysis.export_run(static, out, extra)
        m = analysis.map_summary(static, 30.0)
        exports.write_json(out / "map_summary.json", m)
        summary = m
    _manifest(args, cfg, out, extra)
    _emit(summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="usthermal", description="Airborne-ultrasound skin heating simulator")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required=True):
        if config_required:
            sp.add_argument("config", help="config JSON path, or ref:<name> for a bundled config")
        else:
            sp.add_argument("--config", default="ref:sec24")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value by dotted path (repeatable)")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("validate", help="check a config and report derived constants")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("field", help="intensity map on a plane through the focus")
    common(sp)
    sp.add_argument("--plane", type=_plane, required=True, help="z=<meters>")
    sp.add_argument("--extent", type=_positive, default=0.08)
    sp.add_argument("--res", type=_positive, default=1e-3)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_field)

    sp = sub.add_parser("simulate", help="heat the skin and export the run")
    common(sp)
    sp.add_argument("--envelope", choices=("static", "square"))
    sp.add_argument("--freq", type=_positive)
    sp.add_argument("--duty", type=float)
    sp.add_argument("--mode", choices=("mean", "resolved"))
    sp.add_argument("--duration", type=_positive, required=True)
    sp.add_argument("--snapshots", type=_times, default=[])
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("calibrate", help="fit the absorbed fraction to a target rise")
    common(sp)
    sp.add_argument("--target-dt", type=_positive, default=5.4)
    sp.add_argument("--target-t", type=_positive, default=5.0)
    sp.add_argument("--write", action="store_true", help="write <config>.calibrated.json")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("reproduce", help="regenerate a figure's data bundle")
    sp.add_argument("figure", choices=FIGURES)
    common(sp, config_required=False)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(json.dumps({"error": str(exc), "kind": "usage"}), file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({**exc.to_dict(), "kind": "config"}), file=sys.stderr)
        return 2
    except (ThermalError, AcousticsError, exports.ExportError, analysis.AnalysisError) as exc:
        print(json.dumps({"error": str(exc), "kind": type(exc).__name__}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
