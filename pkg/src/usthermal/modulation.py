"""Amplitude envelopes: static drive or on/off square-wave modulation.

Square envelopes start "on" at t = 0 and stay on for ``duty / freq`` seconds
of every period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# phase tolerance so that t = n*dt lands on the intended side of a period edge
_EDGE_EPS = 1e-9


class EnvelopeError(ValueError):
    pass


@dataclass(frozen=True)
class Envelope:
    kind: str = "static"
    mod_frequency: float = 0.0
    duty: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("static", "square"):
            raise EnvelopeError(f"unknown envelope kind {self.kind!r}")
        if not 0.0 <= self.duty <= 1.0:
            raise EnvelopeError("duty must lie in [0, 1]")
        if self.kind == "square" and not self.mod_frequency > 0:
            raise EnvelopeError("square envelope needs mod_frequency > 0")

    @classmethod
    def static(cls) -> "Envelope":
        return cls("static")

    @classmethod
    def square(cls, freq_hz: float, duty: float) -> "Envelope":
        return cls("square", float(freq_hz), float(duty))

    @property
    def period(self) -> float:
        return math.inf if self.kind == "static" else 1.0 / self.mod_frequency

    def to_dict(self) -> dict:
        if self.kind == "static":
            return {"kind": "static"}
        return {"kind": "square", "freq_hz": self.mod_frequency, "duty": self.duty}


def _phase_fraction(t, freq):
    ph = np.asarray(t, dtype=float) * freq
    frac = ph - np.floor(ph)
    return np.where(frac > 1.0 - _EDGE_EPS, 0.0, frac)


def envelope_value(env: Envelope, t):
    """Amplitude factor (0 or 1) at time ``t`` >= 0. Vectorizes over ``t``."""
    if env.kind == "static" or env.duty == 1.0:
        out = np.ones_like(np.asarray(t, dtype=float))
    else:
        frac = _phase_fraction(t, env.mod_frequency)
        out = (frac < env.duty - _EDGE_EPS).astype(float)
    return float(out) if out.ndim == 0 else out


def mean_intensity_factor(env: Envelope) -> float:
    """Period average of the squared envelope; equals the duty for on/off drive."""
    return 1.0 if env.kind == "static" else float(env.duty)


def sample_envelope(env: Envelope, dt: float, duration: float) -> np.ndarray:
    """Envelope values at t = 0, dt, 2 dt, ... up to and including ``duration``."""
    if not (dt > 0 and duration > 0):
        raise EnvelopeError("dt and duration must be > 0")
    n = int(math.floor(duration / dt + 1e-9)) + 1
    return np.atleast_1d(envelope_value(env, np.arange(n) * dt))
