"""Rate coding of binary images into Bernoulli-discretised Poisson spike trains."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyWindow, RateTooHighForDt


@dataclass
class SpikeTrain:
    events: np.ndarray  # (timesteps, channels) bool
    dt_ms: float = 1.0

    @property
    def timesteps(self) -> int:
        return self.events.shape[0]

    @property
    def channels(self) -> int:
        return self.events.shape[1]


def encode_poisson(
    img,
    rate_hz: float = 200.0,
    duration_ms: float = 150.0,
    dt_ms: float = 1.0,
    background_rate_hz: float = 0.0,
    rng: np.random.Generator | None = None,
    complement: bool = False,
) -> SpikeTrain:
    """Independent per-step Bernoulli draws with p = rate * dt.

    ``img`` is a GsnImage or a 2-D 0/1 array; channels follow row-major pixel
    order.  With ``complement`` a second block of channels is appended that
    fires at ``rate_hz`` on black pixels (and at the background rate on white).
    """
    pixels = np.asarray(getattr(img, "pixels", img)).ravel().astype(bool)
    if duration_ms <= 0 or dt_ms <= 0:
        raise ValueError("duration_ms and dt_ms must be positive")
    p_on = rate_hz * dt_ms / 1000.0
    p_off = background_rate_hz * dt_ms / 1000.0
    if p_on > 1 or p_off > 1 or p_on < 0 or p_off < 0:
        raise RateTooHighForDt(f"rate * dt must lie in [0, 1]; got {p_on:.3f} / {p_off:.3f}")
    if rng is None:
        rng = np.random.default_rng()
    prob = np.where(pixels, p_on, p_off)
    if complement:
        prob = np.concatenate([prob, np.where(pixels, p_off, p_on)])
    steps = int(round(duration_ms / dt_ms))
    events = rng.random((steps, prob.size)) < prob
    return SpikeTrain(events, dt_ms)


def count_spikes(raster, window: tuple[float, float], dt_ms: float = 1.0) -> np.ndarray:
    """Per-neuron event counts over steps whose time ``i * dt_ms`` lies in [t0, t1).

    ``raster`` is a (timesteps, n_neurons) 0/1 record; at most one event per
    neuron per step.
    """
    t0, t1 = window
    if not t0 < t1:
        raise EmptyWindow(f"window [{t0}, {t1}) is empty")
    raster = np.asarray(raster)
    times = np.arange(raster.shape[0]) * dt_ms
    sel = (times >= t0) & (times < t1)
    return raster[sel].astype(np.int64).sum(axis=0)


def write_spike_csv(train: SpikeTrain, path) -> None:
    """Dense 0/1 dump, one row per timestep (debugging aid)."""
    np.savetxt(Path(path), train.events.astype(np.uint8), fmt="%d", delimiter=",")
