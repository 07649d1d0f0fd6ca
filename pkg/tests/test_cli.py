import filecmp
import json

import numpy as np
import pytest

from usthermal import exports
from usthermal.cli import main
from usthermal.config import ConfigError, apply_overrides, load_config

FAST = ["--set", "thermal.extent=0.04", "--set", "thermal.nx=41", "--set", "thermal.nz=21"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_fig1(capsys):
    code, out, _ = run(capsys, "validate", "ref:fig1")
    info = json.loads(out)
    assert code == 0
    assert info["units"] == 12 and info["elements"] == 2988
    assert info["wavelength_m"] == pytest.approx(343 / 40e3)
    assert info["stability_dt_s"] > 0


def test_validate_bad_duty(capsys):
    code, _, err = run(capsys, "validate", "ref:sec24", "--set", "envelope={\"kind\":\"square\",\"freq_hz\":50,\"duty\":1.5}")
    assert code == 2
    assert json.loads(err)["path"] == "envelope.duty"


def test_validate_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "validate", tmp_path / "nope.json")
    assert code == 2
    msg = json.loads(err)["error"]
    assert "file not found" in msg and "nope.json" in msg


def test_field_peak_near_focus(capsys, tmp_path):
    code, out, _ = run(capsys, "field", "ref:sec24", "--plane", "z=0.296", "--extent", "0.08", "--res", "0.001",
                       "--out", tmp_path)
    assert code == 0
    metrics = json.loads((tmp_path / "focal_metrics.json").read_text())
    assert metrics["peak_offset"] <= 343 / 40e3 / 2
    assert (tmp_path / "intensity.pgm").exists() and (tmp_path / "manifest.json").exists()


def test_field_zero_resolution_is_usage_error(capsys, tmp_path):
    code, _, err = run(capsys, "field", "ref:sec24", "--plane", "z=0.296", "--res", "0", "--out", tmp_path)
    assert code == 2
    assert json.loads(err)["kind"] == "usage"


def test_field_zero_amplitude(capsys, tmp_path):
    code, _, err = run(capsys, "field", "ref:sec24", "--plane", "z=0.296", "--extent", "0.01", "--res", "0.001",
                       "--set", "drive.amplitude=0", "--out", tmp_path)
    assert code == 0
    data = np.loadtxt(tmp_path / "intensity.csv", delimiter=",", skiprows=1)
    assert np.all(data[:, 2] == 0)
    assert "focal metrics omitted" in err


def test_simulate_static_calibrated(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "ref:sec24", "--envelope", "static", "--duration", "5", "--out", tmp_path)
    assert code == 0
    t, y = exports.read_timeseries(tmp_path / "timeseries.csv")
    assert t[-1] == 5.0
    assert y[-1] == pytest.approx(5.4, abs=0.01)


def test_simulate_square_is_nine_tenths(capsys, tmp_path):
    run(capsys, "simulate", "ref:sec24", *FAST, "--envelope", "static", "--duration", "5", "--out", tmp_path / "s")
    run(capsys, "simulate", "ref:sec24", *FAST, "--envelope", "square", "--duration", "5", "--out", tmp_path / "q")
    ys = exports.read_timeseries(tmp_path / "s" / "timeseries.csv")[1][-1]
    yq = exports.read_timeseries(tmp_path / "q" / "timeseries.csv")[1][-1]
    assert yq / ys == pytest.approx(0.9, abs=0.02)


@pytest.mark.parametrize("duration", ["0", "-1"])
def test_simulate_bad_duration(capsys, tmp_path, duration):
    code, _, _ = run(capsys, "simulate", "ref:sec24", "--duration", duration, "--out", tmp_path)
    assert code == 2


def test_simulate_runtime_error_exit_1(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "ref:sec24", *FAST, "--duration", "1", "--snapshots", "0.05",
                       "--out", tmp_path)
    assert code == 1
    assert "snapshot" in json.loads(err)["error"]


def test_simulate_is_byte_reproducible(capsys, tmp_path):
    for d in ("a", "b"):
        run(capsys, "simulate", "ref:sec24", *FAST, "--duration", "2", "--snapshots", "1,2", "--out", tmp_path / d)
    names = sorted(p.name for p in (tmp_path / "a").iterdir() if p.name != "manifest.json")
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert not mismatch and not errors
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    ma["arguments"].pop("out"), mb["arguments"].pop("out")
    assert ma == mb


def test_calibrate_defaults_and_write(capsys, tmp_path):
    code, out, _ = run(capsys, "calibrate", "ref:sec24", "--write", "--out", tmp_path)
    assert code == 0
    res = json.loads(out)
    assert res["eta"] > 0
    assert res["confirmed_deltaT"] == pytest.approx(5.4, abs=0.01)
    written = load_config(tmp_path / "sec24.calibrated.json")
    assert written.skin.absorbed_fraction == res["eta"]
    code, out2, _ = run(capsys, "calibrate", "ref:sec24")
    assert json.loads(out2)["eta"] == pytest.approx(res["eta"], rel=1e-12)


def test_calibrate_negative_target(capsys):
    code, _, _ = run(capsys, "calibrate", "ref:sec24", "--target-dt", "-1")
    assert code == 2


def test_calibrate_zero_coupling_is_runtime_error(capsys):
    code, _, err = run(capsys, "calibrate", "ref:sec24", *FAST, "--set", "drive.amplitude=0")
    assert code == 1
    assert "no temperature rise" in json.loads(err)["error"]


def test_reproduce_unknown_figure(capsys, tmp_path):
    code, _, err = run(capsys, "reproduce", "fig9", "--out", tmp_path)
    assert code == 2
    assert "fig2" in json.loads(err)["error"] and "fig3" in json.loads(err)["error"]


def test_reproduce_fig3_single_hot_spot(capsys, tmp_path):
    code, out, _ = run(capsys, "reproduce", "fig3", *FAST, "--out", tmp_path)
    assert code == 0
    assert (tmp_path / "map_30.0s.pgm").exists()
    levels, meta = exports.read_pgm(tmp_path / "map_30.0s.pgm")
    from usthermal.analysis import count_peaks

    assert count_peaks(levels) == 1
    assert json.loads(out)["n_peaks"] == 1


def test_reproduce_fig2_bundle(capsys, tmp_path):
    code, out, _ = run(capsys, "reproduce", "fig2", *FAST, "--out", tmp_path)
    assert code == 0
    for name in ("static/timeseries.csv", "square/timeseries.csv", "report.json", "manifest.json"):
        assert (tmp_path / name).exists()
    t, y = exports.read_timeseries(tmp_path / "static" / "timeseries.csv")
    assert y[np.argmin(np.abs(t - 5.0))] == pytest.approx(5.4, abs=0.01)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["rows"][0]["measured_ratio"] == pytest.approx(4.5 / 5.4)
    assert report["reference_measurements"]["static_dT_30s"] == 8.6


class TestOverrides:
    def test_dotted_and_star(self):
        raw = {"units": [{"origin": [0, 0, 0]}, {"origin": [1, 0, 0]}]}
        out = apply_overrides(raw, ["units.*.source_strength=2", "skin.core_T=34", "units.1.rows=3"])
        assert [u["source_strength"] for u in out["units"]] == [2, 2]
        assert out["skin"]["core_T"] == 34 and out["units"][1]["rows"] == 3
        assert "skin" not in raw

    @pytest.mark.parametrize("bad", ["noequals", "units.5.rows=1", "units.x.rows=1", "a..b=1"])
    def test_bad_overrides(self, bad):
        with pytest.raises(ConfigError):
            apply_overrides({"units": [{"origin": [0, 0, 0]}]}, [bad])

    def test_unknown_key_via_override_rejected(self):
        with pytest.raises(ConfigError) as exc:
            load_config("ref:sec24", ["skin.absorbtion=1"])
        assert exc.value.path == "skin.absorbtion"
