"""Perception threshold, run comparison and run export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import label, maximum_filter

from . import exports
from .acoustics import contour_width
from .thermal import SimulationRun

# Measured skin temperature rises at the palm, degC, and the warm-sensation
# threshold at 33 degC acclimation. Embedded in reports for comparison only.
REFERENCE_MEASUREMENTS = {
    "static_dT_5s": 5.4,
    "square_50Hz_duty0.9_dT_5s": 4.5,
    "static_dT_30s": 8.6,
    "square_50Hz_duty0.9_dT_30s": 5.4,
    "warm_threshold_C": 0.2,
    "acclimation_T_C": 33.0,
    "focus_distance_m": 0.296,
}


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class PerceptionModel:
    warm_threshold: float = 0.2
    acclimation_T: float = 33.0

    def __post_init__(self) -> None:
        if not self.warm_threshold > 0:
            raise AnalysisError("warm_threshold must be > 0")


def time_to_threshold(run: SimulationRun, model: PerceptionModel = PerceptionModel()) -> float | None:
    """First time the probe rise reaches the warm threshold, or None if it never does."""
    t, y = np.asarray(run.times), np.asarray(run.probe_deltaT)
    if len(t) < 2:
        raise AnalysisError("run needs at least two samples")
    thr = model.warm_threshold
    hit = np.nonzero(y >= thr)[0]
    if len(hit) == 0:
        return None
    k = int(hit[0])
    if k == 0:
        return float(t[0])
    y0, y1 = y[k - 1], y[k]
    return float(t[k - 1] + (thr - y0) / (y1 - y0) * (t[k] - t[k - 1]))


def compare_runs(a: SimulationRun, b: SimulationRun, at_times) -> list[dict]:
    """Probe rise of both runs and the ratio b/a at each requested time."""
    if not np.allclose(a.metadata.get("probe", []), b.metadata.get("probe", []), atol=1e-12):
        raise AnalysisError("runs use different probe locations")
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise AnalysisError("runs use different output time grids")
    rows = []
    for t in at_times:
        da, db = a.value_at(t), b.value_at(t)
        rows.append({"time_s": float(t), "a_dT": da, "b_dT": db,
                     "ratio": db / da if abs(da) >= 1e-6 else None})
    return rows


def count_peaks(values: np.ndarray, fraction: float = 0.5) -> int:
    """Local maxima (8-neighbourhood) at or above ``fraction`` of the global maximum."""
    v = np.asarray(values, float)
    top = v.max()
    if top <= 0:
        return 0
    local = (v == maximum_filter(v, size=3, mode="nearest")) & (v >= fraction * top)
    # a flat plateau counts once per connected group
    return int(label(local, structure=np.ones((3, 3)))[1])


def map_summary(run: SimulationRun, t: float) -> dict:
    m = run.snapshot(t)
    width, (i, j) = contour_width(m, run.surface, 0.5)
    return {
        "time_s": float(t),
        "peak_dT": float(m.max()),
        "peak_location": run.surface.point(i, j).tolist(),
        "width_50pct_m": float(width),
        "n_peaks": count_peaks(m),
    }


def _map_stem(t: float) -> str:
    return f"map_{t:.1f}s"


def export_run(run: SimulationRun, out_dir, extra_meta: dict | None = None) -> list[Path]:
    """Write ``timeseries.csv``, ``map_<t>s.csv``/``.pgm`` per snapshot and ``meta.json``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise exports.ExportError(f"cannot create {out}: {exc.strerror or exc}") from exc
    paths = [exports.timeseries_csv(out / "timeseries.csv", run.times, run.probe_deltaT)]
    for t, m in run.snapshots:
        stem = _map_stem(t)
        paths.append(exports.grid_csv(out / f"{stem}.csv", run.surface, m, ("x_m", "y_m", "delta_T_C")))
        paths.append(exports.write_pgm(out / f"{stem}.pgm", m, "delta_T_C"))
    final = {k: float(v[-1]) for k, v in run.energy.items()}
    meta = {
        **run.metadata,
        "surface_grid": {"origin": list(run.surface.origin), "u": list(run.surface.u), "v": list(run.surface.v),
                         "nx": run.surface.nx, "ny": run.surface.ny, "dx": run.surface.dx, "dy": run.surface.dy},
        "snapshot_times": [float(t) for t, _ in run.snapshots],
        "final_probe_dT": float(run.probe_deltaT[-1]),
        "energy_J": final,
        "float_format": exports.FLOAT_FMT,
        "reference_measurements": REFERENCE_MEASUREMENTS,
        **(extra_meta or {}),
    }
    paths.append(exports.write_json(out / "meta.json", meta))
    return paths


def comparison_report(static: SimulationRun, square: SimulationRun, at_times=(5.0, 30.0)) -> dict:
    """Model ratios next to the measured ones, with the gap flagged."""
    times = [t for t in at_times if t <= static.times[-1] + 1e-9]
    rows = compare_runs(static, square, times)
    measured = {5.0: (5.4, 4.5), 30.0: (8.6, 5.4)}
    for row in rows:
        ref = measured.get(row["time_s"])
        if ref:
            row["measured_static_dT"], row["measured_square_dT"] = ref
            row["measured_ratio"] = ref[1] / ref[0]
            if row["ratio"] is not None:
                row["ratio_gap"] = row["ratio"] - row["measured_ratio"]
    model = PerceptionModel()
    return {
        "rows": rows,
        "time_to_threshold_s": {"static": time_to_threshold(static, model),
                                "square": time_to_threshold(square, model)},
        "note": ("linear heat conduction scales the rise with the duty-averaged flux; "
                 "measured square/static ratios below the duty are not reproduced by this model"),
        "reference_measurements": REFERENCE_MEASUREMENTS,
    }


def energy_balance_error(run: SimulationRun) -> np.ndarray:
    """Relative mismatch between net boundary energy and stored energy at each output step."""
    e = run.energy
    net = e["absorbed"] - e["convective"] - e["bottom"] - e["perfusion"]
    stored = e["stored"]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(net - stored) / np.maximum(np.abs(stored), np.abs(e["absorbed"]))
    return np.where(np.isfinite(rel), rel, 0.0)

