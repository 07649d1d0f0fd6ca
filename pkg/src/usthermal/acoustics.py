"""Focusing and field evaluation for a phased array of baffled pistons.

Each transducer is a far-field point source with the circular-piston
directivity ``2 J1(ka sin(theta)) / (ka sin(theta))``. The complex pressure at
a point ``r`` is

    p(r) = sum_i a_i s_i D(theta_i) exp(-alpha d_i) exp(j (k d_i + phi_i)) / d_i

summed in ascending transducer order over enabled units only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import j1

from .geometry import ArrayAssembly

# points per vectorized block in field evaluation
_CHUNK = 512


class AcousticsError(ValueError):
    pass


@dataclass(frozen=True)
class MediumParams:
    sound_speed: float = 343.0
    density: float = 1.204
    attenuation: float = 0.12
    frequency: float = 40e3

    def __post_init__(self) -> None:
        if not (self.sound_speed > 0 and self.density > 0 and self.frequency > 0):
            raise AcousticsError("sound_speed, density and frequency must be > 0")
        if not self.attenuation >= 0:
            raise AcousticsError("attenuation must be >= 0")

    @property
    def wavenumber(self) -> float:
        return 2 * np.pi * self.frequency / self.sound_speed

    @property
    def wavelength(self) -> float:
        return self.sound_speed / self.frequency

    @property
    def impedance(self) -> float:
        return self.density * self.sound_speed


@dataclass(frozen=True)
class DriveVector:
    amplitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.amplitudes, dtype=float)
        ph = np.asarray(self.phases, dtype=float)
        if a.shape != ph.shape or a.ndim != 1:
            raise AcousticsError("amplitudes and phases must be 1-D and equal length")
        if np.any(a < 0) or np.any(a > 1):
            raise AcousticsError("amplitudes must lie in [0, 1]")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "phases", ph)

    def __len__(self) -> int:
        return len(self.amplitudes)

    def scaled(self, factor: float) -> "DriveVector":
        return DriveVector(self.amplitudes * factor, self.phases)


@dataclass(frozen=True)
class GridSpec:
    """Planar sampling grid. Cell ``(i, j)`` is at ``origin + i*dx*u + j*dy*v``."""

    origin: tuple[float, float, float]
    u: tuple[float, float, float]
    v: tuple[float, float, float]
    nx: int
    ny: int
    dx: float
    dy: float

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise AcousticsError("grid needs nx, ny >= 1")
        if not (self.dx > 0 and self.dy > 0):
            raise AcousticsError("grid spacing must be > 0")
        u, v = np.asarray(self.u, float), np.asarray(self.v, float)
        if not (np.isclose(u @ u, 1) and np.isclose(v @ v, 1) and abs(u @ v) < 1e-9):
            raise AcousticsError("grid axes must be orthonormal")

    @classmethod
    def centered(cls, center: Sequence[float], extent: float, spacing: float,
                 u=(1.0, 0.0, 0.0), v=(0.0, 1.0, 0.0)) -> "GridSpec":
        """Square grid of side ``extent`` with a cell at ``center``."""
        if not spacing > 0:
            raise AcousticsError("grid spacing must be > 0")
        half = int(round(extent / (2 * spacing)))
        n = 2 * half + 1
        c = np.asarray(center, float)
        origin = c - half * spacing * (np.asarray(u, float) + np.asarray(v, float))
        return cls(tuple(origin), tuple(u), tuple(v), n, n, spacing, spacing)

    def points(self) -> np.ndarray:
        """Cell centers with shape ``(ny, nx, 3)``."""
        i = np.arange(self.nx) * self.dx
        j = np.arange(self.ny) * self.dy
        return (np.asarray(self.origin, float)
                + j[:, None, None] * np.asarray(self.v, float)
                + i[None, :, None] * np.asarray(self.u, float))

    def point(self, i: int, j: int) -> np.ndarray:
        return (np.asarray(self.origin, float) + i * self.dx * np.asarray(self.u, float)
                + j * self.dy * np.asarray(self.v, float))

    @property
    def center(self) -> np.ndarray:
        return self.point((self.nx - 1) / 2, (self.ny - 1) / 2)


@dataclass(frozen=True)
class FieldGrid:
    spec: GridSpec
    values: np.ndarray  # (ny, nx); complex pressure or real intensity
    quantity: str = "pressure"


def directivity(ka, theta):
    """Far-field directivity of a baffled circular piston, ``2 J1(x)/x`` with ``x = ka sin(theta)``."""
    x = np.asarray(ka, dtype=float) * np.sin(np.asarray(theta, dtype=float))
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    d = np.where(small, 1.0 - x * x / 8.0, 2.0 * j1(safe) / safe)
    return d if d.ndim else float(d)


def _check_drive(assembly: ArrayAssembly, drive: DriveVector) -> None:
    if len(drive) != assembly.n_enabled:
        raise AcousticsError(f"drive has {len(drive)} entries, assembly has {assembly.n_enabled} enabled transducers")


def _pressure_block(act: dict, medium: MediumParams, drive: DriveVector, points: np.ndarray) -> np.ndarray:
    k = medium.wavenumber
    diff = points[:, None, :] - act["positions"][None, :, :]
    d = np.sqrt(np.einsum("mnc,mnc->mn", diff, diff))
    if np.any(d == 0):
        m, n = np.argwhere(d == 0)[0]
        raise AcousticsError(f"point {points[m].tolist()} coincides with transducer {n}")
    cos_t = np.einsum("mnc,nc->mn", diff, act["normals"]) / d
    theta = np.arccos(np.clip(cos_t, -1.0, 1.0))
    amp = drive.amplitudes * act["strengths"] * directivity(k * act["radii"], theta) * np.exp(-medium.attenuation * d) / d
    terms = amp * np.exp(1j * (k * d + drive.phases))
    return terms.sum(axis=1)


def pressure_many(assembly: ArrayAssembly, medium: MediumParams, drive: DriveVector, points) -> np.ndarray:
    """Complex pressure at each row of ``points`` (shape ``(..., 3)``)."""
    _check_drive(assembly, drive)
    act = assembly.active()
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 3)
    out = np.empty(len(flat), dtype=complex)
    for s in range(0, len(flat), _CHUNK):
        out[s:s + _CHUNK] = _pressure_block(act, medium, drive, flat[s:s + _CHUNK])
    return out.reshape(pts.shape[:-1])


def pressure_at(assembly: ArrayAssembly, medium: MediumParams, drive: DriveVector, point) -> complex:
    return complex(pressure_many(assembly, medium, drive, np.asarray(point, float)[None, :])[0])


def intensity_from_pressure(p, medium: MediumParams):
    return np.abs(p) ** 2 / (2.0 * medium.impedance)


def intensity_at(assembly: ArrayAssembly, medium: MediumParams, drive: DriveVector, point) -> float:
    return float(intensity_from_pressure(pressure_at(assembly, medium, drive, point), medium))


def focus_phases(assembly: ArrayAssembly, medium: MediumParams, focal_point) -> DriveVector:
    """Phases that bring every enabled transducer into phase at ``focal_point``."""
    act = assembly.active()
    d = np.linalg.norm(np.asarray(focal_point, float) - act["positions"], axis=1)
    inside = d < act["radii"]
    if np.any(inside):
        raise AcousticsError(f"focal point lies within the radius of transducer {int(np.argmax(inside))}")
    phases = np.mod(-medium.wavenumber * d, 2 * np.pi)
    return DriveVector(np.ones(len(d)), phases)


def field_grid(assembly: ArrayAssembly, medium: MediumParams, drive: DriveVector, spec: GridSpec,
               quantity: str = "pressure") -> FieldGrid:
    if quantity not in ("pressure", "intensity"):
        raise AcousticsError(f"unknown quantity {quantity!r}")
    pts = spec.points()
    try:
        p = pressure_many(assembly, medium, drive, pts)
    except AcousticsError as exc:
        d = np.linalg.norm(pts.reshape(-1, 1, 3) - assembly.active()["positions"][None], axis=2)
        flat = int(np.argwhere(d == 0)[0][0]) if np.any(d == 0) else -1
        if flat < 0:
            raise
        j, i = divmod(flat, spec.nx)
        raise AcousticsError(f"cell (i={i}, j={j}): {exc}") from exc
    values = p if quantity == "pressure" else intensity_from_pressure(p, medium)
    return FieldGrid(spec, values, quantity)


def _width_along(line: np.ndarray, peak: int, level: float, spacing: float) -> float:
    lo = peak
    while lo - 1 >= 0 and line[lo - 1] >= level:
        lo -= 1
    hi = peak
    while hi + 1 < len(line) and line[hi + 1] >= level:
        hi += 1
    return (hi - lo + 1) * spacing


def contour_width(values: np.ndarray, spec: GridSpec, fraction: float) -> tuple[float, tuple[int, int]]:
    """Mean contiguous width (both axes) of the region around the maximum above ``fraction * max``.

    Width is the number of cells at or above the level on the line through the
    peak, times the cell size, so a single hot cell has the width of one cell.
    """
    j, i = np.unravel_index(int(np.argmax(values)), values.shape)
    level = values[j, i] * fraction
    wx = _width_along(values[j, :], i, level, spec.dx)
    wy = _width_along(values[:, i], j, level, spec.dy)
    return 0.5 * (wx + wy), (int(i), int(j))


def focal_metrics(intensity: FieldGrid, focus=None) -> dict:
    """Peak intensity, its location, and the -6 dB (quarter-intensity) focal width."""
    vals = np.asarray(intensity.values)
    if np.iscomplexobj(vals):
        raise AcousticsError("focal_metrics needs an intensity grid")
    spec = intensity.spec
    width, (i, j) = contour_width(vals, spec, 0.25)
    if i in (0, spec.nx - 1) or j in (0, spec.ny - 1):
        raise AcousticsError("intensity peak lies on the grid boundary; enlarge the grid")
    loc = spec.point(i, j)
    out = {"peak": float(vals[j, i]), "peak_location": loc.tolist(), "width_6dB": float(width)}
    if focus is not None:
        out["peak_offset"] = float(np.linalg.norm(loc - np.asarray(focus, float)))
    return out
