"""Regenerate the bundled reference configurations in src/usthermal/ref/.

Layout (an interpretation of the 12-board photograph): four columns of three
AUTD3 boards around a 40 mm camera gap. The six central boards lie in the
z = 0 plane; the outer columns are hinged at their inner edge and tilted so
their centre normals pass through the focus. Units 0-5 are the central six.
"""

import json
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.spatial.transform import Rotation

PITCH = 10.16e-3
ROWS, COLS = 18, 14
BOARD_W, BOARD_H = 192e-3, 151.4e-3
CAMERA_GAP = 40e-3
FOCUS = np.array([0.0, 0.0, 0.296])

SPAN = np.array([(ROWS - 1) * PITCH, (COLS - 1) * PITCH, 0.0])


def unit(center, rot):
    origin = center - rot.apply(SPAN / 2)
    w = rot.as_quat()  # x, y, z, w
    return {
        "origin": [round(float(v), 12) for v in origin],
        "rotation": [round(float(v), 15) for v in (w[3], w[0], w[1], w[2])],
    }


def outer_tilt(inner_edge):
    # tilt b about y: unit x axis -> (cos b, 0, sin b), normal -> (-sin b, 0, cos b)
    def miss(b):
        c = np.array([inner_edge + BOARD_W / 2 * np.cos(b), 0.0, BOARD_W / 2 * np.sin(b)])
        n = np.array([-np.sin(b), 0.0, np.cos(b)])
        d = FOCUS - c
        return d[0] * n[2] - d[2] * n[0]
    return brentq(miss, 0.0, 1.2)


def units():
    xc = CAMERA_GAP / 2 + BOARD_W / 2
    rows_y = (-BOARD_H, 0.0, BOARD_H)
    out = []
    for sx in (-1, 1):
        for y in rows_y:
            out.append(unit(np.array([sx * xc, y, 0.0]), Rotation.identity()))
    inner = CAMERA_GAP / 2 + BOARD_W
    b = outer_tilt(inner)
    for sx in (-1, 1):
        rot = Rotation.from_rotvec([0.0, -sx * b, 0.0])
        cx = sx * (inner + BOARD_W / 2 * np.cos(b))
        for y in rows_y:
            out.append(unit(np.array([cx, y, BOARD_W / 2 * np.sin(b)]), rot))
    return out


def main(dest):
    dest = Path(dest)
    common = {"medium": {"sound_speed": 343.0, "density": 1.204, "attenuation": 0.12, "frequency": 40000.0},
              "units": units(), "focus": FOCUS.tolist()}
    fig1 = {**common, "enabled": list(range(12)), "envelope": {"kind": "static"}}
    sec24 = {**common, "enabled": list(range(6)), "envelope": {"kind": "static"}}
    old = dest / "sec24.json"
    if old.exists():
        prev = json.loads(old.read_text())
        if "skin" in prev:
            sec24["skin"] = prev["skin"]
    for name, cfg in (("fig1", fig1), ("sec24", sec24)):
        (dest / f"{name}.json").write_text(json.dumps(cfg, indent=2) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parents[1] / "src" / "usthermal" / "ref")
