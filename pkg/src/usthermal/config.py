"""JSON scenario configuration: parsing, validation, dotted overrides.

Top-level keys::

    medium    {sound_speed, density, attenuation, frequency}
    units     [{origin, rotation, rows, cols, pitch, omitted, radius, source_strength}, ...]
    enabled   [unit indices]            (default: all units)
    focus     [x, y, z]                 (default: [0, 0, 0.296])
    drive     {amplitude}               (global amplitude scale in [0, 1])
    envelope  {kind: static} | {kind: square, freq_hz, duty}
    skin      SkinModel fields
    thermal   {extent, nx, nz, output_dt, dt, mode, initial, safety}

Lengths in meters, angles in radians. Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import geometry as geo
from .acoustics import AcousticsError, GridSpec, MediumParams
from .modulation import Envelope, EnvelopeError
from .thermal import SkinModel, SolverSettings, ThermalError

DEFAULT_FOCUS = (0.0, 0.0, 0.296)
DEFAULT_EXTENT = 0.08
DEFAULT_NX = 61

_TOP_KEYS = {"medium", "units", "enabled", "focus", "drive", "envelope", "skin", "thermal"}
_UNIT_KEYS = {"origin", "rotation", "rows", "cols", "pitch", "omitted", "radius", "source_strength"}
_MEDIUM_KEYS = {"sound_speed", "density", "attenuation", "frequency"}
_SKIN_KEYS = set(SkinModel.__dataclass_fields__)
_THERMAL_KEYS = {"extent", "nx", "nz", "output_dt", "dt", "mode", "initial", "safety", "center"}


class ConfigError(ValueError):
    """Configuration problem located at a dotted key path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message

    def to_dict(self) -> dict:
        return {"error": self.message, "path": self.path}


@dataclass(frozen=True)
class Config:
    assembly: geo.ArrayAssembly
    medium: MediumParams
    focus: tuple[float, float, float]
    drive_amplitude: float
    envelope: Envelope
    skin: SkinModel
    surface: GridSpec
    solver: SolverSettings
    raw: dict
    source: str | None = None

    def resolved(self) -> dict:
        """Fully expanded parameters (defaults filled in), JSON-serializable."""
        return {
            "medium": asdict(self.medium),
            **self.assembly.to_dict(),
            "focus": list(self.focus),
            "drive": {"amplitude": self.drive_amplitude},
            "envelope": self.envelope.to_dict(),
            "skin": asdict(self.skin),
            "thermal": {
                "extent": (self.surface.nx - 1) * self.surface.dx,
                "nx": self.surface.nx,
                "center": self.surface.center.tolist(),
                **{k: v for k, v in asdict(self.solver).items()},
            },
        }

    def with_raw(self, raw: dict) -> "Config":
        return parse_config(raw, self.source)


def _check_keys(obj, allowed: set, path: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected an object")
    for key in obj:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigError(where, f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _num(obj: dict, key: str, path: str, default=None, *, integer: bool = False):
    if key not in obj:
        if default is None:
            raise ConfigError(f"{path}.{key}", "required")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{path}.{key}", f"expected a finite number, got {v!r}")
    if integer:
        if int(v) != v:
            raise ConfigError(f"{path}.{key}", f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _vec3(v, path: str) -> tuple[float, float, float]:
    if (not isinstance(v, (list, tuple)) or len(v) != 3
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
        raise ConfigError(path, f"expected [x, y, z], got {v!r}")
    return tuple(float(x) for x in v)


def _rotation(v, path: str) -> tuple[float, float, float, float]:
    if v is None:
        return (1.0, 0.0, 0.0, 0.0)
    if isinstance(v, dict):
        _check_keys(v, {"axis", "angle"}, path)
        axis = _vec3(v.get("axis"), f"{path}.axis")
        angle = _num(v, "angle", path)
        try:
            return geo.quaternion_from_axis_angle(axis, angle)
        except geo.GeometryError as exc:
            raise ConfigError(f"{path}.axis", str(exc)) from None
    if not isinstance(v, (list, tuple)) or len(v) != 4:
        raise ConfigError(path, "expected a quaternion [w, x, y, z] or {axis, angle}")
    q = np.asarray(v, dtype=float)
    n = np.linalg.norm(q)
    if not abs(n - 1.0) < 1e-6:
        raise ConfigError(path, f"quaternion must have unit norm (got {n:.6g})")
    return tuple(float(x) for x in q / n)


def _parse_unit(u, path: str) -> geo.ArrayUnit:
    _check_keys(u, _UNIT_KEYS, path)
    if "origin" not in u:
        raise ConfigError(f"{path}.origin", "required")
    rows = _num(u, "rows", path, geo.DEFAULT_ROWS, integer=True)
    cols = _num(u, "cols", path, geo.DEFAULT_COLS, integer=True)
    if rows < 1:
        raise ConfigError(f"{path}.rows", "must be >= 1")
    if cols < 1:
        raise ConfigError(f"{path}.cols", "must be >= 1")
    pitch = _num(u, "pitch", path, geo.DEFAULT_PITCH)
    if not pitch > 0:
        raise ConfigError(f"{path}.pitch", f"must be > 0, got {pitch}")
    radius = _num(u, "radius", path, geo.DEFAULT_RADIUS)
    if not radius > 0:
        raise ConfigError(f"{path}.radius", f"must be > 0, got {radius}")
    strength = _num(u, "source_strength", path, geo.DEFAULT_SOURCE_STRENGTH)
    if not strength >= 0:
        raise ConfigError(f"{path}.source_strength", f"must be >= 0, got {strength}")
    default_layout = rows == geo.DEFAULT_ROWS and cols == geo.DEFAULT_COLS
    omitted_raw = u.get("omitted", [list(c) for c in geo.DEFAULT_OMITTED] if default_layout else [])
    if not isinstance(omitted_raw, list):
        raise ConfigError(f"{path}.omitted", "expected a list of [row, col]")
    omitted = []
    for n, cell in enumerate(omitted_raw):
        cpath = f"{path}.omitted.{n}"
        if not (isinstance(cell, (list, tuple)) and len(cell) == 2 and all(isinstance(x, int) for x in cell)):
            raise ConfigError(cpath, f"expected [row, col], got {cell!r}")
        r, c = cell
        if not (0 <= r < rows and 0 <= c < cols):
            raise ConfigError(cpath, f"cell {cell} outside the {rows}x{cols} grid")
        if (r, c) in omitted:
            raise ConfigError(cpath, f"duplicate omitted cell {cell}")
        omitted.append((r, c))
    return geo.ArrayUnit(
        origin=_vec3(u["origin"], f"{path}.origin"),
        orientation=_rotation(u.get("rotation"), f"{path}.rotation"),
        rows=rows, cols=cols, pitch=pitch, omitted_cells=tuple(omitted),
        radius=radius, source_strength=strength,
    )


def parse_config(raw: dict, source: str | None = None) -> Config:
    _check_keys(raw, _TOP_KEYS, "")
    units_raw = raw.get("units")
    if not isinstance(units_raw, list) or not units_raw:
        raise ConfigError("units", "at least one unit is required")
    units = tuple(_parse_unit(u, f"units.{i}") for i, u in enumerate(units_raw))

    enabled_raw = raw.get("enabled", list(range(len(units))))
    if not isinstance(enabled_raw, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in enabled_raw):
        raise ConfigError("enabled", "expected a list of unit indices")
    for n, i in enumerate(enabled_raw):
        if not 0 <= i < len(units):
            raise ConfigError(f"enabled.{n}", f"unit index {i} out of range for {len(units)} units")
    if not enabled_raw:
        raise ConfigError("enabled", "no enabled units")
    assembly = geo.ArrayAssembly(units, tuple(i in set(enabled_raw) for i in range(len(units))))

    med = raw.get("medium", {})
    _check_keys(med, _MEDIUM_KEYS, "medium")
    d = MediumParams()
    medium_kw = {k: _num(med, k, "medium", getattr(d, k)) for k in _MEDIUM_KEYS}
    for k in ("sound_speed", "density", "frequency"):
        if not medium_kw[k] > 0:
            raise ConfigError(f"medium.{k}", "must be > 0")
    if not medium_kw["attenuation"] >= 0:
        raise ConfigError("medium.attenuation", "must be >= 0")
    medium = MediumParams(**medium_kw)

    focus = _vec3(raw.get("focus", list(DEFAULT_FOCUS)), "focus")

    drive = raw.get("drive", {})
    _check_keys(drive, {"amplitude"}, "drive")
    amplitude = _num(drive, "amplitude", "drive", 1.0)
    if not 0.0 <= amplitude <= 1.0:
        raise ConfigError("drive.amplitude", f"must lie in [0, 1], got {amplitude}")

    envelope = parse_envelope(raw.get("envelope", {"kind": "static"}), "envelope")

    skin_raw = raw.get("skin", {})
    _check_keys(skin_raw, _SKIN_KEYS, "skin")
    sd = SkinModel()
    skin_kw = {k: _num(skin_raw, k, "skin", getattr(sd, k)) for k in _SKIN_KEYS}
    try:
        skin = SkinModel(**skin_kw)
    except ThermalError as exc:
        key = str(exc).split()[0]
        raise ConfigError(f"skin.{key}", str(exc)) from None

    th = raw.get("thermal", {})
    _check_keys(th, _THERMAL_KEYS, "thermal")
    sdef = SolverSettings()
    extent = _num(th, "extent", "thermal", DEFAULT_EXTENT)
    nx = _num(th, "nx", "thermal", DEFAULT_NX, integer=True)
    if not extent > 0:
        raise ConfigError("thermal.extent", "must be > 0")
    if nx < 3 or nx % 2 == 0:
        raise ConfigError("thermal.nx", "must be an odd integer >= 3 (a node sits on the focus)")
    center = _vec3(th.get("center", list(focus)), "thermal.center")
    surface = GridSpec.centered(center, extent, extent / (nx - 1))
    for key in ("mode", "initial"):
        if key in th and th[key] not in (("mean", "resolved") if key == "mode" else ("steady", "uniform")):
            raise ConfigError(f"thermal.{key}", f"invalid value {th[key]!r}")
    dt = th.get("dt")
    if dt is not None:
        dt = _num(th, "dt", "thermal")
        if not dt > 0:
            raise ConfigError("thermal.dt", "must be > 0")
    nz = _num(th, "nz", "thermal", sdef.nz, integer=True)
    if nz < 3:
        raise ConfigError("thermal.nz", "must be >= 3")
    output_dt = _num(th, "output_dt", "thermal", sdef.output_dt)
    if not output_dt > 0:
        raise ConfigError("thermal.output_dt", "must be > 0")
    safety = _num(th, "safety", "thermal", sdef.safety)
    if not 0 < safety <= 1:
        raise ConfigError("thermal.safety", "must lie in (0, 1]")
    solver = SolverSettings(nz=nz, output_dt=output_dt, dt=dt, mode=th.get("mode", sdef.mode),
                            initial=th.get("initial", sdef.initial), safety=safety)
    return Config(assembly, medium, focus, amplitude, envelope, skin, surface, solver, copy.deepcopy(raw), source)


def parse_envelope(env, path: str = "envelope") -> Envelope:
    if not isinstance(env, dict):
        raise ConfigError(path, "expected an object")
    kind = env.get("kind")
    if kind == "static":
        _check_keys(env, {"kind"}, path)
        return Envelope.static()
    if kind == "square":
        _check_keys(env, {"kind", "freq_hz", "duty"}, path)
        freq = _num(env, "freq_hz", path)
        duty = _num(env, "duty", path)
        if not freq > 0:
            raise ConfigError(f"{path}.freq_hz", f"must be > 0, got {freq}")
        if not 0.0 <= duty <= 1.0:
            raise ConfigError(f"{path}.duty", f"must lie in [0, 1], got {duty}")
        try:
            return Envelope.square(freq, duty)
        except EnvelopeError as exc:
            raise ConfigError(path, str(exc)) from None
    raise ConfigError(f"{path}.kind", f"expected 'static' or 'square', got {kind!r}")


def read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("", f"file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{p}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def resolve_path(path) -> Path:
    """Map ``ref:<name>`` to a bundled reference config; other values are plain paths."""
    s = str(path)
    if s.startswith("ref:"):
        return Path(str(resources.files("usthermal") / "ref" / f"{s[4:]}.json"))
    return Path(s)


def load_config(path, overrides=()) -> Config:
    p = resolve_path(path)
    raw = apply_overrides(read_json(p), overrides)
    try:
        return parse_config(raw, str(p))
    except (geo.GeometryError, AcousticsError, ThermalError, EnvelopeError) as exc:
        raise ConfigError("", str(exc)) from None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``key.path=value`` assignments; ``*`` addresses every list element."""
    out = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key.path=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigError(key, "empty path segment")
        _assign(out, parts, _parse_value(text.strip()), key)
    return out


def _assign(node, parts, value, full):
    head, rest = parts[0], parts[1:]
    if isinstance(node, list):
        if head == "*":
            targets = range(len(node))
        else:
            try:
                targets = [int(head)]
            except ValueError:
                raise ConfigError(full, f"{head!r} is not a list index") from None
        for i in targets:
            if not 0 <= i < len(node):
                raise ConfigError(full, f"index {i} out of range")
            if rest:
                _assign(node[i], rest, value, full)
            else:
                node[i] = copy.deepcopy(value)
        return
    if not isinstance(node, dict):
        raise ConfigError(full, "cannot descend into a scalar")
    if rest:
        _assign(node.setdefault(head, {}), rest, value, full)
    else:
        node[head] = copy.deepcopy(value)
