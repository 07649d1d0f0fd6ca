"""Skin-slab heat conduction driven by absorbed ultrasound.

The slab is discretized on a vertex-centred grid: node ``(k, j, i)`` sits at
depth ``k*dz`` below the surface and at lateral cell ``(i, j)`` of the surface
:class:`~usthermal.acoustics.GridSpec`. Each node owns a control volume
(half cells on the surface and lateral faces), which makes the explicit update
exactly conservative. Boundary conditions:

* surface (k = 0): absorbed flux ``eta * I`` in, convection ``h (T - T_amb)`` out
* bottom (k = nz - 1): held at the core temperature
* lateral faces: adiabatic
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from .acoustics import GridSpec, focus_phases, intensity_from_pressure, pressure_many
from .modulation import Envelope, envelope_value, mean_intensity_factor

log = logging.getLogger(__name__)

# largest step allowed when the envelope is resolved in time
RESOLVED_MAX_DT = 1e-3


class ThermalError(RuntimeError):
    pass


class StabilityError(ThermalError):
    pass


@dataclass(frozen=True)
class SkinModel:
    conductivity: float = 0.37
    density: float = 1109.0
    specific_heat: float = 3391.0
    absorbed_fraction: float = 1.0
    convection_h: float = 10.0
    ambient_T: float = 25.0
    core_T: float = 33.0
    slab_thickness: float = 0.01
    perfusion_rate: float = 0.0

    def __post_init__(self) -> None:
        for name in ("conductivity", "density", "specific_heat", "slab_thickness"):
            if not getattr(self, name) > 0:
                raise ThermalError(f"{name} must be > 0")
        for name in ("absorbed_fraction", "perfusion_rate", "convection_h"):
            if not getattr(self, name) >= 0:
                raise ThermalError(f"{name} must be >= 0")

    @property
    def heat_capacity(self) -> float:
        """Volumetric heat capacity rho*c, J/(m^3 K)."""
        return self.density * self.specific_heat

    @property
    def diffusivity(self) -> float:
        return self.conductivity / self.heat_capacity


@dataclass(frozen=True)
class SolverSettings:
    nz: int = 41
    output_dt: float = 0.1
    dt: float | None = None
    mode: str = "mean"  # "mean" (duty-averaged flux) or "resolved" (on/off envelope per step)
    initial: str = "steady"  # "steady" (no-stimulus equilibrium) or "uniform" (core_T everywhere)
    safety: float = 0.9

    def __post_init__(self) -> None:
        if self.nz < 3:
            raise ThermalError("nz must be >= 3")
        if not self.output_dt > 0:
            raise ThermalError("output_dt must be > 0")
        if self.dt is not None and not self.dt > 0:
            raise ThermalError("dt must be > 0")
        if self.mode not in ("mean", "resolved"):
            raise ThermalError(f"unknown mode {self.mode!r}")
        if self.initial not in ("steady", "uniform"):
            raise ThermalError(f"unknown initial state {self.initial!r}")
        if not 0 < self.safety <= 1:
            raise ThermalError("safety must lie in (0, 1]")


@dataclass(frozen=True)
class ThermalGrid:
    temperatures: np.ndarray  # (nz, ny, nx), k = 0 at the surface
    dx: float
    dy: float
    dz: float

    def __post_init__(self) -> None:
        t = np.asarray(self.temperatures, dtype=float)
        if t.ndim != 3:
            raise ThermalError("temperatures must be a 3-D array (nz, ny, nx)")
        nz, ny, nx = t.shape
        if nx < 3 or ny < 3 or nz < 2:
            raise ThermalError("thermal grid needs nx, ny >= 3 and nz >= 2")
        if not np.all(np.isfinite(t)):
            raise ThermalError("temperatures must be finite")
        object.__setattr__(self, "temperatures", t)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.temperatures.shape

    @property
    def surface(self) -> np.ndarray:
        return self.temperatures[0]


def _widths(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


class _Operator:
    """Precomputed conductances and capacities for one grid and skin model."""

    def __init__(self, shape: tuple[int, int, int], dx: float, dy: float, dz: float, skin: SkinModel):
        nz, ny, nx = shape
        self.shape = shape
        self.skin = skin
        kc = skin.conductivity
        wx, wy = _widths(nx, dx), _widths(ny, dy)
        wz = np.full(nz, dz)
        wz[0] = dz / 2
        self.area = wy[:, None] * wx[None, :]  # surface control areas (ny, nx)
        vol = wz[:, None, None] * self.area[None]
        self.cap = skin.heat_capacity * vol[:-1]  # free nodes only
        self.gx = kc * (wz[:-1, None, None] * wy[None, :, None]) / dx  # (nz-1, ny, 1)
        self.gy = kc * (wz[:-1, None, None] * wx[None, None, :]) / dy  # (nz-1, 1, nx)
        self.gz = kc * self.area / dz  # (ny, nx)
        self.hA = skin.convection_h * self.area
        self.perf = skin.heat_capacity * skin.perfusion_rate * vol[:-1]

        gsum = np.zeros(self.cap.shape)
        gsum[:, :, :-1] += self.gx
        gsum[:, :, 1:] += self.gx
        gsum[:, :-1, :] += self.gy
        gsum[:, 1:, :] += self.gy
        gsum += self.gz[None]
        gsum[1:] += self.gz[None]
        gsum[0] += self.hA
        gsum += self.perf
        self.dt_max = float(np.min(self.cap / gsum))

    def power(self, T: np.ndarray, q: np.ndarray | None, factor: float) -> tuple[np.ndarray, dict]:
        """Net heating power (W) into every free node, plus boundary exchange terms."""
        s = self.skin
        free = T[:-1]
        P = np.zeros_like(free)
        fx = self.gx * (free[:, :, 1:] - free[:, :, :-1])
        P[:, :, :-1] += fx
        P[:, :, 1:] -= fx
        fy = self.gy * (free[:, 1:, :] - free[:, :-1, :])
        P[:, :-1, :] += fy
        P[:, 1:, :] -= fy
        fz = self.gz[None] * (T[1:] - T[:-1])  # into node k from k+1
        P += fz
        P[1:] -= fz[:-1]
        conv = self.hA * (T[0] - s.ambient_T)
        P[0] -= conv
        absorbed = 0.0
        if q is not None and factor != 0.0:
            qa = factor * q * self.area
            P[0] += qa
            absorbed = float(qa.sum())
        perf = self.perf * (free - s.core_T)
        P -= perf
        terms = {
            "absorbed": absorbed,
            "convective": float(conv.sum()),
            "bottom": -float(fz[-1].sum()),
            "perfusion": float(perf.sum()),
        }
        return P, terms

    def advance(self, T: np.ndarray, q: np.ndarray | None, factor: float, dt: float) -> tuple[np.ndarray, dict]:
        P, terms = self.power(T, q, factor)
        out = T.copy()
        out[:-1] += dt * P / self.cap
        return out, terms


def stability_limit(grid: ThermalGrid, skin: SkinModel) -> float:
    """Largest stable explicit step for this grid (node-wise bound, includes convection and perfusion)."""
    return _Operator(grid.shape, grid.dx, grid.dy, grid.dz, skin).dt_max


def textbook_stability_limit(skin: SkinModel, dx: float, dy: float, dz: float) -> float:
    return 0.5 / (skin.diffusivity * (1 / dx**2 + 1 / dy**2 + 1 / dz**2))


def step(grid: ThermalGrid, skin: SkinModel, flux: np.ndarray | None, dt: float) -> ThermalGrid:
    """Advance the slab one explicit (forward-time, central-space) step."""
    op = _Operator(grid.shape, grid.dx, grid.dy, grid.dz, skin)
    if dt > op.dt_max * (1 + 1e-12):
        raise StabilityError(f"dt={dt:g} s exceeds the explicit stability limit {op.dt_max:g} s")
    if flux is not None and np.shape(flux) != grid.shape[1:]:
        raise ThermalError(f"flux map shape {np.shape(flux)} does not match surface {grid.shape[1:]}")
    T, _ = op.advance(grid.temperatures, flux, 1.0, dt)
    if not np.all(np.isfinite(T)):
        raise ThermalError("non-finite temperature after step")
    return replace(grid, temperatures=T)


def surface_flux(intensity, skin: SkinModel, surface: GridSpec | None = None) -> np.ndarray:
    """Absorbed heat flux map ``eta * I`` (W/m^2) for an intensity FieldGrid."""
    if surface is not None and intensity.spec != surface:
        raise ThermalError("intensity grid does not match the skin surface grid")
    vals = np.asarray(intensity.values)
    if np.iscomplexobj(vals):
        raise ThermalError("surface_flux needs an intensity grid, not complex pressure")
    return skin.absorbed_fraction * vals


def steady_profile(skin: SkinModel, nz: int, dz: float) -> np.ndarray:
    """Depth profile in equilibrium with no stimulus, on the same discretization as the solver."""
    # per unit area: node 0 has half thickness; bottom node fixed at core_T
    n = nz - 1
    kc, hc = skin.conductivity / dz, skin.convection_h
    w = skin.heat_capacity * skin.perfusion_rate
    vol = np.full(n, dz)
    vol[0] = dz / 2
    diag = np.full(n, 2 * kc) + w * vol
    diag[0] = kc + hc + w * vol[0]
    rhs = w * vol * skin.core_T
    rhs[0] += hc * skin.ambient_T
    rhs[-1] += kc * skin.core_T
    ab = np.zeros((3, n))
    ab[0, 1:] = -kc
    ab[1] = diag
    ab[2, :-1] = -kc
    prof = np.empty(nz)
    prof[:-1] = solve_banded((1, 1), ab, rhs)
    prof[-1] = skin.core_T
    return prof


def initial_grid(surface: GridSpec, skin: SkinModel, nz: int, initial: str = "steady") -> ThermalGrid:
    dz = skin.slab_thickness / (nz - 1)
    if initial == "steady":
        prof = steady_profile(skin, nz, dz)
    else:
        prof = np.full(nz, skin.core_T)
    T = np.broadcast_to(prof[:, None, None], (nz, surface.ny, surface.nx)).copy()
    return ThermalGrid(T, surface.dx, surface.dy, dz)


@dataclass(frozen=True)
class SimulationRun:
    times: np.ndarray
    probe_deltaT: np.ndarray
    snapshots: list  # [(time, surface delta-T map (ny, nx))]
    surface: GridSpec
    metadata: dict = field(default_factory=dict)
    energy: dict = field(default_factory=dict)  # cumulative J at each output time
    intensity: np.ndarray | None = None

    def value_at(self, t: float) -> float:
        i = int(round(t / (self.times[1] - self.times[0])))
        if not math.isclose(self.times[i], t, rel_tol=1e-9, abs_tol=1e-9):
            raise ThermalError(f"t={t} is not an output time")
        return float(self.probe_deltaT[i])

    def snapshot(self, t: float) -> np.ndarray:
        for ts, m in self.snapshots:
            if math.isclose(ts, t, rel_tol=1e-9, abs_tol=1e-9):
                return m
        raise KeyError(t)


def _probe_weights(surface: GridSpec, probe) -> tuple[int, int, float, float]:
    rel = np.asarray(probe, float) - np.asarray(surface.origin, float)
    u, v = np.asarray(surface.u, float), np.asarray(surface.v, float)
    normal = np.cross(u, v)
    if abs(rel @ normal) > 1e-6:
        raise ThermalError("probe does not lie on the surface plane")
    fi, fj = rel @ u / surface.dx, rel @ v / surface.dy
    tol = 1e-9
    if not (-tol <= fi <= surface.nx - 1 + tol and -tol <= fj <= surface.ny - 1 + tol):
        raise ThermalError("probe lies outside the surface grid")
    fi = min(max(fi, 0.0), surface.nx - 1.0)
    fj = min(max(fj, 0.0), surface.ny - 1.0)
    i0, j0 = min(int(math.floor(fi)), surface.nx - 2), min(int(math.floor(fj)), surface.ny - 2)
    return i0, j0, fi - i0, fj - j0


def _bilinear(m: np.ndarray, w) -> float:
    i0, j0, a, b = w
    return float((1 - a) * (1 - b) * m[j0, i0] + a * (1 - b) * m[j0, i0 + 1]
                 + (1 - a) * b * m[j0 + 1, i0] + a * b * m[j0 + 1, i0 + 1])


def _choose_dt(settings: SolverSettings, dt_max: float) -> float:
    cap = settings.safety * dt_max
    if settings.mode == "resolved":
        cap = min(cap, RESOLVED_MAX_DT)
    if settings.dt is not None:
        if settings.dt > dt_max * (1 + 1e-12):
            raise StabilityError(f"dt={settings.dt:g} s exceeds the explicit stability limit {dt_max:g} s")
        if settings.mode == "resolved" and settings.dt > RESOLVED_MAX_DT * (1 + 1e-12):
            raise ThermalError(f"resolved mode needs dt <= {RESOLVED_MAX_DT} s")
        cap = settings.dt
    n_sub = max(1, math.ceil(settings.output_dt / cap - 1e-9))
    return settings.output_dt / n_sub


def surface_intensity(assembly, medium, drive, surface: GridSpec) -> np.ndarray:
    return intensity_from_pressure(pressure_many(assembly, medium, drive, surface.points()), medium)


def integrate(intensity: np.ndarray, envelope: Envelope, skin: SkinModel, surface: GridSpec,
              duration: float, settings: SolverSettings = SolverSettings(), probe=None,
              snapshot_times: Sequence[float] = ()) -> SimulationRun:
    """Time-integrate the slab under a fixed intensity map scaled by ``envelope``."""
    if not duration > 0:
        raise ThermalError("duration must be > 0")
    n_out = int(round(duration / settings.output_dt))
    if n_out < 1 or not math.isclose(n_out * settings.output_dt, duration, rel_tol=1e-9):
        raise ThermalError(f"duration {duration} is not a multiple of output_dt {settings.output_dt}")
    if np.shape(intensity) != (surface.ny, surface.nx):
        raise ThermalError("intensity map does not match the surface grid")
    probe = surface.center if probe is None else probe
    pw = _probe_weights(surface, probe)
    snap_idx = {}
    for ts in snapshot_times:
        m = int(round(ts / settings.output_dt))
        if not (0 <= m <= n_out) or not math.isclose(m * settings.output_dt, ts, rel_tol=1e-9, abs_tol=1e-12):
            raise ThermalError(f"snapshot time {ts} is not an output time within the run")
        snap_idx[m] = float(ts)

    grid = initial_grid(surface, skin, settings.nz, settings.initial)
    op = _Operator(grid.shape, grid.dx, grid.dy, grid.dz, skin)
    dt = _choose_dt(settings, op.dt_max)
    n_sub = int(round(settings.output_dt / dt))
    q = skin.absorbed_fraction * np.asarray(intensity, float)
    mean_factor = mean_intensity_factor(envelope)
    log.debug("thermal grid %s, dt=%g s (limit %g s), %d steps", grid.shape, dt, op.dt_max, n_out * n_sub)

    T0 = grid.temperatures
    T = T0.copy()
    surf0 = T0[0].copy()
    times = np.arange(n_out + 1) * settings.output_dt
    probe_dT = np.zeros(n_out + 1)
    ledger = {key: np.zeros(n_out + 1) for key in ("absorbed", "convective", "bottom", "perfusion", "stored")}
    acc = dict.fromkeys(("absorbed", "convective", "bottom", "perfusion"), 0.0)
    snaps = []
    if 0 in snap_idx:
        snaps.append((snap_idx[0], np.zeros_like(surf0)))

    step_no = 0
    for m in range(1, n_out + 1):
        for _ in range(n_sub):
            if settings.mode == "resolved":
                factor = float(envelope_value(envelope, step_no * dt)) ** 2
            else:
                factor = mean_factor
            T, terms = op.advance(T, q, factor, dt)
            for key in acc:
                acc[key] += terms[key] * dt
            step_no += 1
        if not np.all(np.isfinite(T)):
            bad = np.argwhere(~np.isfinite(T))[0].tolist()
            raise ThermalError(f"solver diverged before t={times[m]:g} s at node {bad} (dt={dt:g} s)")
        dsurf = T[0] - surf0
        probe_dT[m] = _bilinear(dsurf, pw)
        for key in acc:
            ledger[key][m] = acc[key]
        ledger["stored"][m] = float(np.sum(op.cap * (T[:-1] - T0[:-1])))
        if m in snap_idx:
            snaps.append((snap_idx[m], dsurf.copy()))

    meta = {
        "envelope": envelope.to_dict(),
        "skin": asdict(skin),
        "solver": {**asdict(settings), "dt_used": dt, "dt_limit": op.dt_max,
                   "grid_shape": list(grid.shape), "dx": grid.dx, "dy": grid.dy, "dz": grid.dz},
        "probe": np.asarray(probe, float).tolist(),
        "duration": duration,
    }
    return SimulationRun(times, probe_dT, snaps, surface, meta, ledger, np.asarray(intensity, float))


def simulate(assembly, medium, drive, envelope: Envelope, skin: SkinModel, surface: GridSpec,
             duration: float, probe=None, snapshot_times: Sequence[float] = (),
             settings: SolverSettings = SolverSettings()) -> SimulationRun:
    """Acoustic intensity on the skin surface (computed once), then the heat solve."""
    intensity = surface_intensity(assembly, medium, drive, surface)
    run = integrate(intensity, envelope, skin, surface, duration, settings, probe, snapshot_times)
    run.metadata["assembly_sha256"] = assembly.digest()
    return run


@dataclass(frozen=True)
class Calibration:
    eta: float
    unit_deltaT: float
    baseline_deltaT: float
    confirmed_deltaT: float
    target_deltaT: float
    target_time: float


def calibrate_eta(scenario, target_dT: float = 5.4, target_t: float = 5.0) -> Calibration:
    """Absorbed fraction that makes the probe reach ``target_dT`` at ``target_t``.

    ``scenario`` is a loaded configuration (see :mod:`usthermal.config`). The
    rise is affine in eta, so one unit-eta run (plus a zero-eta baseline when the
    slab does not start in equilibrium) fixes it; a third run confirms.
    """
    drive = focus_phases(scenario.assembly, scenario.medium, scenario.focus).scaled(scenario.drive_amplitude)
    intensity = surface_intensity(scenario.assembly, scenario.medium, drive, scenario.surface)

    def rise(eta: float) -> float:
        skin = replace(scenario.skin, absorbed_fraction=eta)
        run = integrate(intensity, scenario.envelope, skin, scenario.surface, target_t, scenario.solver)
        return run.value_at(target_t)

    baseline = rise(0.0) if scenario.solver.initial == "uniform" else 0.0
    unit = rise(1.0)
    if unit - baseline <= 0:
        raise ThermalError("unit absorbed fraction produces no temperature rise; check focus and enabled units")
    eta = (target_dT - baseline) / (unit - baseline)
    if eta < 0:
        raise ThermalError(f"target {target_dT} degC is below the no-stimulus drift {baseline:.4g} degC")
    confirmed = rise(eta)
    return Calibration(eta, unit, baseline, confirmed, target_dT, target_t)
