"""Plain-text writers for grids and time series (CSV, PGM P2, JSON).

Floats are written with 6 significant digits (``%.6g``) so that identical
inputs give byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .acoustics import FieldGrid, GridSpec

FLOAT_FMT = "{:.6g}"
PGM_MAX = 65535


class ExportError(OSError):
    pass


def _fmt(v: float) -> str:
    s = FLOAT_FMT.format(float(v))
    return "0" if s == "-0" else s


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_json(path, obj) -> Path:
    return _write_text(Path(path), json.dumps(obj, indent=2, sort_keys=True) + "\n")


def grid_csv(path, spec: GridSpec, values: np.ndarray, columns: tuple[str, ...]) -> Path:
    """One row per cell; ``x_m, y_m`` are in-plane coordinates along the grid axes."""
    vals = np.asarray(values)
    origin = np.asarray(spec.origin, float)
    ou, ov = origin @ np.asarray(spec.u, float), origin @ np.asarray(spec.v, float)
    lines = [",".join(columns)]
    for j in range(spec.ny):
        y = _fmt(ov + j * spec.dy)
        for i in range(spec.nx):
            x = _fmt(ou + i * spec.dx)
            v = vals[j, i]
            if np.iscomplexobj(vals):
                lines.append(f"{x},{y},{_fmt(v.real)},{_fmt(v.imag)}")
            else:
                lines.append(f"{x},{y},{_fmt(v)}")
    return _write_text(Path(path), "\n".join(lines) + "\n")


def field_csv(path, grid: FieldGrid) -> Path:
    if grid.quantity == "pressure":
        return grid_csv(path, grid.spec, grid.values, ("x_m", "y_m", "re_Pa", "im_Pa"))
    return grid_csv(path, grid.spec, grid.values, ("x_m", "y_m", "intensity_W_m2"))


def write_pgm(path, values: np.ndarray, units: str) -> Path:
    """16-bit ASCII PGM, linearly scaled between the map minimum and maximum.

    Rows run from +y (top) to -y. The scale is recorded as comment lines and
    in a ``<name>.scale.txt`` sidecar: ``value = offset + level * step``.
    """
    vals = np.asarray(values, dtype=float)
    ny, nx = vals.shape
    lo, hi = float(vals.min()), float(vals.max())
    step = (hi - lo) / PGM_MAX if hi > lo else 0.0
    levels = np.zeros_like(vals, dtype=np.int64) if step == 0 else np.rint((vals - lo) / step).astype(np.int64)
    levels = np.clip(levels, 0, PGM_MAX)[::-1]
    header = [f"units={units}", f"offset={lo:.9g}", f"step={step:.9g}", f"min={lo:.9g}", f"max={hi:.9g}"]
    body = ["P2"] + [f"# {h}" for h in header] + [f"{nx} {ny}", str(PGM_MAX)]
    body += [" ".join(str(int(v)) for v in row) for row in levels]
    p = Path(path)
    _write_text(p.with_name(p.name + ".scale.txt"), "\n".join(header) + "\n")
    return _write_text(p, "\n".join(body) + "\n")


def read_pgm(path) -> tuple[np.ndarray, dict]:
    """Parse a PGM written by :func:`write_pgm`; returns values in physical units (rows +y first)."""
    meta = {}
    tokens = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
        else:
            tokens.extend(line.split())
    if tokens[0] != "P2":
        raise ExportError(f"{path}: not an ASCII PGM")
    nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    levels = np.asarray(tokens[4:], dtype=np.int64).reshape(ny, nx)
    meta["maxval"] = maxval
    return float(meta.get("offset", 0)) + levels * float(meta.get("step", 1)), meta


def timeseries_csv(path, times, values) -> Path:
    lines = ["time_s,delta_T_C"] + [f"{_fmt(t)},{_fmt(v)}" for t, v in zip(times, values)]
    return _write_text(Path(path), "\n".join(lines) + "\n")


def read_timeseries(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]
