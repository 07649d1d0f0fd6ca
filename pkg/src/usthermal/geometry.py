"""Transducer and array-unit geometry.

An :class:`ArrayUnit` is a planar grid of transducers. Cell ``(r, c)`` sits at
``(r * pitch, c * pitch, 0)`` in the unit frame, so the row index runs along
the unit's local x axis (18 elements on the default board) and the column
index along local y. The unit origin is the position of cell ``(0, 0)``; the
unit radiates along its local +z axis.

The default layout mirrors the AUTD3 board: 18 x 14 cells at 10.16 mm pitch
with three cells left empty for mounting holes, 249 transducers in total.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

DEFAULT_ROWS = 18
DEFAULT_COLS = 14
DEFAULT_PITCH = 10.16e-3
# (row, col) cells without a transducer on the AUTD3 board
DEFAULT_OMITTED = ((1, 1), (2, 1), (16, 1))
DEFAULT_RADIUS = 4.5e-3
DEFAULT_SOURCE_STRENGTH = 1.0


class GeometryError(ValueError):
    """Invalid geometry or subset selection."""


@dataclass(frozen=True)
class Transducer:
    position: np.ndarray
    normal: np.ndarray
    radius: float
    source_strength: float


@dataclass(frozen=True)
class ArrayUnit:
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    # unit quaternion, scalar first (w, x, y, z)
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    rows: int = DEFAULT_ROWS
    cols: int = DEFAULT_COLS
    pitch: float = DEFAULT_PITCH
    omitted_cells: tuple[tuple[int, int], ...] = DEFAULT_OMITTED
    radius: float = DEFAULT_RADIUS
    source_strength: float = DEFAULT_SOURCE_STRENGTH

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise GeometryError("rows and cols must be >= 1")
        if not self.pitch > 0:
            raise GeometryError("pitch must be > 0")
        if not self.radius > 0:
            raise GeometryError("radius must be > 0")
        if not self.source_strength >= 0:
            raise GeometryError("source_strength must be >= 0")
        if len(set(self.omitted_cells)) != len(self.omitted_cells):
            raise GeometryError("duplicate omitted cells")
        for r, c in self.omitted_cells:
            if not (0 <= r < self.rows and 0 <= c < self.cols):
                raise GeometryError(f"omitted cell ({r}, {c}) outside {self.rows}x{self.cols} grid")
        q = np.asarray(self.orientation, dtype=float)
        if q.shape != (4,) or not np.isclose(np.linalg.norm(q), 1.0, atol=1e-9):
            raise GeometryError("orientation must be a unit quaternion (w, x, y, z)")

    @property
    def rotation(self) -> Rotation:
        w, x, y, z = self.orientation
        return Rotation.from_quat([x, y, z, w])

    @property
    def n_transducers(self) -> int:
        return self.rows * self.cols - len(self.omitted_cells)

    def local_positions(self) -> np.ndarray:
        """Cell positions in the unit frame, row-major, omitted cells skipped."""
        skip = set(self.omitted_cells)
        cells = [(r, c) for r in range(self.rows) for c in range(self.cols) if (r, c) not in skip]
        pos = np.zeros((len(cells), 3))
        pos[:, :2] = np.asarray(cells, dtype=float).reshape(-1, 2) * self.pitch
        return pos

    def world_positions(self) -> np.ndarray:
        return self.rotation.apply(self.local_positions()) + np.asarray(self.origin, dtype=float)

    def world_normal(self) -> np.ndarray:
        n = self.rotation.apply([0.0, 0.0, 1.0])
        return n / np.linalg.norm(n)


def quaternion_from_axis_angle(axis: Sequence[float], angle: float) -> tuple[float, float, float, float]:
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm == 0:
        raise GeometryError("rotation axis must be nonzero")
    x, y, z, w = Rotation.from_rotvec(axis / norm * angle).as_quat()
    return (float(w), float(x), float(y), float(z))


def default_unit(
    origin: Sequence[float] = (0.0, 0.0, 0.0),
    orientation: Sequence[float] = (1.0, 0.0, 0.0, 0.0),
) -> ArrayUnit:
    """AUTD3-style unit (18 x 14 cells, 10.16 mm pitch, 249 transducers)."""
    return ArrayUnit(
        origin=tuple(float(v) for v in origin),
        orientation=tuple(float(v) for v in orientation),
    )


@dataclass(frozen=True)
class ArrayAssembly:
    """All transducers of a set of units, in world coordinates.

    Transducer arrays are ordered unit-major, row-major within a unit.
    ``enabled`` masks whole units; disabled units are dropped before any
    field sum.
    """

    units: tuple[ArrayUnit, ...]
    enabled: tuple[bool, ...] = ()
    positions: np.ndarray = field(init=False, repr=False, compare=False)
    normals: np.ndarray = field(init=False, repr=False, compare=False)
    radii: np.ndarray = field(init=False, repr=False, compare=False)
    strengths: np.ndarray = field(init=False, repr=False, compare=False)
    unit_index: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        units = tuple(self.units)
        if not units:
            raise GeometryError("assembly needs at least one unit")
        enabled = tuple(bool(e) for e in self.enabled) if self.enabled else (True,) * len(units)
        if len(enabled) != len(units):
            raise GeometryError("enabled mask length must match the number of units")
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "enabled", enabled)

        pos, nrm, rad, strength, idx = [], [], [], [], []
        for i, u in enumerate(units):
            p = u.world_positions()
            pos.append(p)
            nrm.append(np.tile(u.world_normal(), (len(p), 1)))
            rad.append(np.full(len(p), u.radius))
            strength.append(np.full(len(p), u.source_strength))
            idx.append(np.full(len(p), i))
        for name, parts in (("positions", pos), ("normals", nrm), ("radii", rad),
                            ("strengths", strength), ("unit_index", idx)):
            arr = np.concatenate(parts)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_transducers(self) -> int:
        return len(self.positions)

    @property
    def enabled_mask(self) -> np.ndarray:
        """Per-transducer boolean mask derived from the unit mask."""
        return np.asarray(self.enabled)[self.unit_index]

    @property
    def n_enabled(self) -> int:
        return int(self.enabled_mask.sum())

    def active(self) -> dict[str, np.ndarray]:
        """Arrays restricted to enabled transducers, in assembly order."""
        if not any(self.enabled):
            raise GeometryError("no enabled units")
        m = self.enabled_mask
        return {
            "positions": self.positions[m],
            "normals": self.normals[m],
            "radii": self.radii[m],
            "strengths": self.strengths[m],
        }

    def transducers(self) -> list[Transducer]:
        return [
            Transducer(self.positions[i], self.normals[i], float(self.radii[i]), float(self.strengths[i]))
            for i in range(self.n_transducers)
        ]

    def digest(self) -> str:
        """SHA-256 over the enabled transducer arrays; identifies an assembly in run metadata."""
        act = self.active()
        h = hashlib.sha256()
        for key in ("positions", "normals", "radii", "strengths"):
            h.update(np.ascontiguousarray(act[key], dtype="<f8").tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "units": [unit_to_dict(u) for u in self.units],
            "enabled": [i for i, e in enumerate(self.enabled) if e],
        }


def unit_to_dict(u: ArrayUnit) -> dict:
    return {
        "origin": list(u.origin),
        "rotation": list(u.orientation),
        "rows": u.rows,
        "cols": u.cols,
        "pitch": u.pitch,
        "omitted": [list(c) for c in u.omitted_cells],
        "radius": u.radius,
        "source_strength": u.source_strength,
    }


def enable_subset(assembly: ArrayAssembly, unit_indices: Iterable[int]) -> ArrayAssembly:
    idx = list(unit_indices)
    n = len(assembly.units)
    for i in idx:
        if not 0 <= i < n:
            raise GeometryError(f"unit index {i} out of range for {n} units")
    if not idx:
        raise GeometryError("no enabled units")
    mask = tuple(i in set(idx) for i in range(n))
    return ArrayAssembly(assembly.units, mask)


def translate(assembly: ArrayAssembly, offset: Sequence[float]) -> ArrayAssembly:
    v = np.asarray(offset, dtype=float)
    units = tuple(replace(u, origin=tuple(float(a) for a in np.asarray(u.origin) + v)) for u in assembly.units)
    return ArrayAssembly(units, assembly.enabled)


def load_assembly(config_path) -> ArrayAssembly:
    from .config import load_config

    return load_config(config_path).assembly
