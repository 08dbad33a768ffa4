"""Hierarchical winner-take-all spiking network with STDP learning.

Layout: the input image is cut into equal tiles; each tile drives its own WTA
circuit of hidden neurons, and every hidden neuron projects to a single output
WTA circuit.  One time step is one potential inhibition cycle per circuit:

* a circuit whose afferents delivered at least one spike integrates
  ``u = W @ x`` (plus an optional top-down bias for hidden circuits),
* draws exactly one winner from ``softmax(u)``,
* is inhibited, which resets every membrane potential to baseline.

With learning on, the winner's afferent weights follow the exponential
STDP rule in :func:`stdp_update`, with "recent" presynaptic activity meaning a
spike within ``stdp_window_ms`` (current step included).  Weights are kept in
float32 so that the 9-significant-digit text format round-trips exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .decoding import ResponseMatrix
from .errors import ChannelMismatch, EmptyStimuli, InvalidConfig, NetworkError, UntrainedNetwork
from .spike_codec import SpikeTrain, encode_poisson

FORMAT_VERSION = 1


@dataclass
class NetworkConfig:
    image_dims: tuple[int, int] = (176, 128)  # (width, height)
    tile_dims: tuple[int, int] = (11, 8)
    hidden_per_tile: int = 32
    output_neurons: int = 100
    num_classes: int = 2
    learning_rate: float = 0.01
    w_min: float = -5.0
    w_max: float = 5.0
    init_low: float | None = None
    init_high: float | None = None
    top_down_enabled: bool = False
    top_down_gain: float = 1.0
    stdp_window_ms: float = 10.0
    baseline: float = 0.0
    presentation_ms: float = 150.0
    dt_ms: float = 1.0
    rate_hz: float = 200.0
    background_rate_hz: float = 0.0
    complement_channels: bool = False
    psp_mode: str = "trace"

    def __post_init__(self):
        self.image_dims = tuple(int(v) for v in self.image_dims)
        self.tile_dims = tuple(int(v) for v in self.tile_dims)

    @classmethod
    def preset(cls, name: str, **overrides) -> NetworkConfig:
        """``default`` (16x16 tiles of 11x8), ``literal16`` (4x4 tiles of 44x32)
        or ``reduced`` (44x32 image, 2x2 tiles, 20 outputs)."""
        presets = {
            "default": {},
            "literal16": {"tile_dims": (44, 32)},
            "reduced": {"image_dims": (44, 32), "tile_dims": (22, 16), "output_neurons": 20},
        }
        if name not in presets:
            raise InvalidConfig(f"unknown topology preset {name!r}; choose from {sorted(presets)}")
        return cls(**{**presets[name], **overrides})

    def validate(self) -> None:
        (w, h), (tw, th) = self.image_dims, self.tile_dims
        if min(w, h, tw, th) <= 0 or w % tw or h % th:
            raise InvalidConfig(f"image {w}x{h} is not divisible into {tw}x{th} tiles")
        if self.output_neurons < self.num_classes:
            raise InvalidConfig(f"need at least {self.num_classes} output neurons")
        if self.hidden_per_tile < 1:
            raise InvalidConfig("hidden_per_tile must be positive")
        if not self.w_min < self.w_max:
            raise InvalidConfig("w_min must be below w_max")
        lo, hi = self.init_range()
        if not self.w_min <= lo <= hi <= self.w_max:
            raise InvalidConfig("initial weight range must lie within the weight bounds")
        if self.learning_rate <= 0:
            raise InvalidConfig("learning_rate must be positive")

    def init_range(self) -> tuple[float, float]:
        lo = self.w_min if self.init_low is None else self.init_low
        hi = self.w_max if self.init_high is None else self.init_high
        return lo, hi

    @property
    def n_tiles(self) -> int:
        return (self.image_dims[0] // self.tile_dims[0]) * (self.image_dims[1] // self.tile_dims[1])

    @property
    def channels_per_tile(self) -> int:
        return self.tile_dims[0] * self.tile_dims[1] * (2 if self.complement_channels else 1)

    @property
    def n_channels(self) -> int:
        return self.image_dims[0] * self.image_dims[1] * (2 if self.complement_channels else 1)

    @property
    def n_hidden(self) -> int:
        return self.n_tiles * self.hidden_per_tile

    @property
    def window_steps(self) -> int:
        return max(1, int(round(self.stdp_window_ms / self.dt_ms)))

    def tile_index(self) -> np.ndarray:
        """(n_tiles, channels_per_tile) indices into the row-major channel vector."""
        (w, h), (tw, th) = self.image_dims, self.tile_dims
        pix = np.arange(w * h).reshape(h, w)
        tiles = [
            pix[ty:ty + th, tx:tx + tw].ravel()
            for ty in range(0, h, th)
            for tx in range(0, w, tw)
        ]
        idx = np.array(tiles)
        if self.complement_channels:
            idx = np.concatenate([idx, idx + w * h], axis=1)
        return idx


@dataclass
class NetworkState:
    config: NetworkConfig
    hidden_w: np.ndarray  # (n_tiles, hidden_per_tile, channels_per_tile)
    output_w: np.ndarray  # (output_neurons, n_hidden)
    topdown_w: np.ndarray | None = None  # (n_hidden, output_neurons)
    trained_epochs: int = 0

    def copy(self) -> NetworkState:
        return NetworkState(
            self.config,
            self.hidden_w.copy(),
            self.output_w.copy(),
            None if self.topdown_w is None else self.topdown_w.copy(),
            self.trained_epochs,
        )

    def check(self) -> None:
        cfg = self.config
        expect = {
            "hidden_w": (cfg.n_tiles, cfg.hidden_per_tile, cfg.channels_per_tile),
            "output_w": (cfg.output_neurons, cfg.n_hidden),
        }
        if cfg.top_down_enabled:
            expect["topdown_w"] = (cfg.n_hidden, cfg.output_neurons)
        for name, shape in expect.items():
            m = getattr(self, name)
            if m is None or m.shape != shape:
                raise NetworkError(f"{name} has shape {None if m is None else m.shape}, expected {shape}")
            if not np.all(np.isfinite(m)) or m.min() < cfg.w_min or m.max() > cfg.w_max:
                raise NetworkError(f"{name} holds weights outside [{cfg.w_min}, {cfg.w_max}]")


@dataclass
class PresentationResult:
    output_counts: np.ndarray  # (output_neurons,)
    hidden_counts: np.ndarray  # (n_tiles, hidden_per_tile)
    hidden_cycles: np.ndarray  # (n_tiles,)
    output_cycles: int
    output_raster: np.ndarray | None = None  # (timesteps, output_neurons) when recorded


def init_network(cfg: NetworkConfig, rng: np.random.Generator) -> NetworkState:
    cfg.validate()
    lo, hi = cfg.init_range()

    def draw(*shape):
        return rng.uniform(lo, hi, size=shape).astype(np.float32)

    hidden = draw(cfg.n_tiles, cfg.hidden_per_tile, cfg.channels_per_tile)
    output = draw(cfg.output_neurons, cfg.n_hidden)
    topdown = draw(cfg.n_hidden, cfg.output_neurons) if cfg.top_down_enabled else None
    return NetworkState(cfg, hidden, output, topdown, 0)


def stdp_update(weights, presyn_recent, eta: float, bounds: tuple[float, float] = (-5.0, 5.0)) -> np.ndarray:
    """``w + eta * (exp(-w) * pre - 1)`` clamped to ``bounds``.

    Potentiation pulls ``exp(w)`` towards the probability that the presynaptic
    channel was recently active when this neuron fired; inactive channels are
    depressed by ``eta``.  The fixed point is ``w = ln(q)``.
    """
    w = np.asarray(weights)
    if w.dtype.kind != "f":
        w = w.astype(float)
    out = w + eta * (np.exp(-w) * np.asarray(presyn_recent, dtype=w.dtype) - 1.0)
    return np.clip(out, bounds[0], bounds[1]).astype(w.dtype, copy=False)


def sample_winners(u: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One softmax-distributed winner per row of ``u`` (Gumbel-max)."""
    g = -np.log(-np.log(rng.random(u.shape)))
    return np.argmax(u + g, axis=-1)


def present(
    state: NetworkState,
    train: SpikeTrain,
    learn: bool,
    rng: np.random.Generator,
    record: bool = False,
) -> PresentationResult:
    cfg = state.config
    if train.channels != cfg.n_channels:
        raise ChannelMismatch(f"spike train has {train.channels} channels, network expects {cfg.n_channels}")
    H, N, K = cfg.hidden_per_tile, cfg.output_neurons, cfg.n_tiles
    eta, bounds, win = cfg.learning_rate, (cfg.w_min, cfg.w_max), cfg.window_steps
    x_all = train.events[:, cfg.tile_index()]  # (T, K, C)
    T = x_all.shape[0]
    never = -(10**9)
    last_in = np.full(x_all.shape[1:], never)
    last_h = np.full(cfg.n_hidden, never)
    last_o = np.full(N, never)
    hidden_counts = np.zeros((K, H), dtype=np.int64)
    hidden_cycles = np.zeros(K, dtype=np.int64)
    out_counts = np.zeros(N, dtype=np.int64)
    out_cycles = 0
    raster = np.zeros((T, N), dtype=np.uint8) if record else None
    u_hidden = np.full((K, H), cfg.baseline)
    Wh, Wo, Wtd = state.hidden_w, state.output_w, state.topdown_w
    td = cfg.top_down_enabled and Wtd is not None
    tile_base = np.arange(K) * H

    for t in range(T):
        x = x_all[t]
        last_in[x] = t
        active = np.flatnonzero(x.any(axis=1))
        if active.size == 0:
            continue
        if cfg.psp_mode == "trace":
            xa = (t - last_in[active] < win).astype(np.float32)
        else:
            xa = x[active].astype(np.float32)
        u_hidden[active] += np.matmul(Wh[active], xa[:, :, None])[:, :, 0]
        if td:
            recent_o = (t - last_o < win).astype(np.float32)
            u_hidden[active] += cfg.top_down_gain * (Wtd @ recent_o).reshape(K, H)[active]
        winners = sample_winners(u_hidden[active], rng)
        u_hidden[active] = cfg.baseline
        hidden_counts[active, winners] += 1
        hidden_cycles[active] += 1
        fired = tile_base[active] + winners
        last_h[fired] = t
        if learn:
            pre = (t - last_in[active] < win)
            Wh[active, winners] = stdp_update(Wh[active, winners], pre, eta, bounds)
            if td:
                Wtd[fired] = stdp_update(Wtd[fired], recent_o, eta, bounds)

        if cfg.psp_mode == "trace":
            u_out = Wo @ (t - last_h < win).astype(np.float32) + cfg.baseline
        else:
            u_out = Wo[:, fired].sum(axis=1, dtype=np.float64) + cfg.baseline
        o = int(sample_winners(u_out, rng))
        out_counts[o] += 1
        out_cycles += 1
        last_o[o] = t
        if record:
            raster[t, o] = 1
        if learn:
            Wo[o] = stdp_update(Wo[o], t - last_h < win, eta, bounds)

    return PresentationResult(out_counts, hidden_counts, hidden_cycles, out_cycles, raster)


Stimulus = np.ndarray


def _encode(cfg: NetworkConfig, image, rng: np.random.Generator) -> SpikeTrain:
    return encode_poisson(
        image,
        cfg.rate_hz,
        cfg.presentation_ms,
        cfg.dt_ms,
        cfg.background_rate_hz,
        rng,
        complement=cfg.complement_channels,
    )


def train_epochs(
    state: NetworkState,
    stimuli: Sequence[Stimulus],
    epochs: int,
    rng: np.random.Generator,
    on_presentation: Callable[[int, PresentationResult], None] | None = None,
) -> NetworkState:
    """Present every stimulus once per epoch in shuffled order, learning on.

    Stimuli are binary images; each presentation draws a fresh spike train.
    ``on_presentation(stimulus_index, result)`` lets a caller train a readout
    alongside the network.
    """
    if len(stimuli) == 0:
        raise EmptyStimuli("no stimuli to train on")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    for _ in range(epochs):
        for i in rng.permutation(len(stimuli)):
            res = present(state, _encode(state.config, stimuli[i], rng), True, rng)
            if on_presentation is not None:
                on_presentation(int(i), res)
        state.trained_epochs += 1
    return state


def collect_responses(
    state: NetworkState,
    stimuli: Sequence[Stimulus],
    labels,
    rng: np.random.Generator,
    allow_untrained: bool = False,
) -> ResponseMatrix:
    """Inference-mode spike counts, one row per stimulus in input order."""
    if state.trained_epochs < 1 and not allow_untrained:
        raise UntrainedNetwork(
            "collect responses only after at least one training epoch (pass allow_untrained to override)"
        )
    counts = np.zeros((len(stimuli), state.config.output_neurons), dtype=np.int64)
    for i, img in enumerate(stimuli):
        counts[i] = present(state, _encode(state.config, img, rng), False, rng).output_counts
    return ResponseMatrix(counts, np.asarray(labels, dtype=int))


def save_network(state: NetworkState, path) -> None:
    """Versioned text format: config block, then named row-major matrices."""
    lines = [f"spikedx-network {FORMAT_VERSION}", "[config]"]
    for k, v in asdict(state.config).items():
        lines.append(f"{k} = {json.dumps(v)}")
    lines.append("[state]")
    lines.append(f"trained_epochs = {state.trained_epochs}")
    for name in ("hidden_w", "output_w", "topdown_w"):
        m = getattr(state, name)
        if m is None:
            continue
        lines.append(f"[matrix {name}]")
        lines.append("shape = " + " ".join(str(s) for s in m.shape))
        flat = m.reshape(-1, m.shape[-1])
        lines.extend(" ".join(f"{v:.9g}" for v in row) for row in flat)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_network(path) -> NetworkState:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("spikedx-network "):
        raise NetworkError(f"{path}: not a network file")
    if int(text[0].split()[1]) != FORMAT_VERSION:
        raise NetworkError(f"{path}: unsupported format version {text[0].split()[1]}")
    cfg_kw, trained, mats = {}, 0, {}
    i, section = 1, None
    names = {f.name for f in fields(NetworkConfig)}
    while i < len(text):
        line = text[i]
        if line.startswith("["):
            section = line.strip("[]")
            if section.startswith("matrix "):
                name = section.split()[1]
                shape = tuple(int(s) for s in text[i + 1].split("=")[1].split())
                n_rows = int(np.prod(shape[:-1]))
                rows = text[i + 2:i + 2 + n_rows]
                mats[name] = np.array([r.split() for r in rows], dtype=np.float32).reshape(shape)
                i += 2 + n_rows
                continue
        elif line.strip():
            key, val = (s.strip() for s in line.split("=", 1))
            if section == "config":
                if key not in names:
                    raise NetworkError(f"{path}: unknown config key {key!r}")
                v = json.loads(val)
                cfg_kw[key] = tuple(v) if isinstance(v, list) else v
            elif section == "state" and key == "trained_epochs":
                trained = int(val)
        i += 1
    cfg = NetworkConfig(**cfg_kw)
    state = NetworkState(cfg, mats["hidden_w"], mats["output_w"], mats.get("topdown_w"), trained)
    state.check()
    return state
