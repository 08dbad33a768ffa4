"""Gene-similarity-network images: SOM feature layout plus glyph rendering.

Every selected feature gets a fixed position on a Kohonen grid, learned from
its expression profile across training samples.  A sample is drawn as one
filled square glyph per feature at that position; the glyph's diagonal and
rotation encode the sample's z-scored expression of the feature.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import OmicsDataset
from .errors import DimensionMismatch, EmptyInput, EncodingError, ZeroVarianceFeature

log = logging.getLogger(__name__)

Z_CLAMP = 3.0


@dataclass
class SomGrid:
    width: int
    height: int
    node_weights: np.ndarray
    epochs_trained: int = 0
    initial_qe: float = float("nan")
    final_qe: float = float("nan")

    def __post_init__(self):
        self.node_weights = np.asarray(self.node_weights, dtype=float)
        if self.node_weights.shape[0] != self.width * self.height:
            raise EncodingError("node count must equal width * height")
        if not np.all(np.isfinite(self.node_weights)):
            raise EncodingError("non-finite SOM weights")

    @property
    def dim(self) -> int:
        return self.node_weights.shape[1]

    def node_coords(self) -> np.ndarray:
        idx = np.arange(self.width * self.height)
        return np.column_stack([idx % self.width, idx // self.width])

    def bmu(self, x: np.ndarray) -> np.ndarray:
        """Best-matching node per row of ``x``; distance ties go to the lower index."""
        x = np.atleast_2d(x)
        d2 = ((x[:, None, :] - self.node_weights[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)


def quantization_error(som: SomGrid, x: np.ndarray) -> float:
    """Mean Euclidean distance from each input row to its best-matching node."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = np.linalg.norm(x[:, None, :] - som.node_weights[None, :, :], axis=2)
    return float(d.min(axis=1).mean())


def train_som(
    feature_vectors: np.ndarray,
    grid: tuple[int, int],
    epochs: int,
    lr0: float,
    rng: np.random.Generator,
    lr_floor: float = 0.01,
    radius_floor: float = 0.3,
) -> SomGrid:
    """Online Kohonen training with linearly decaying rate and Gaussian neighbourhood.

    ``lr_floor`` is a fraction of ``lr0``; the neighbourhood radius starts at
    half the larger grid side and shrinks linearly to ``radius_floor``.
    Nodes start uniformly inside the bounding box of the inputs.
    """
    x = np.asarray(feature_vectors, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyInput("train_som needs at least one input row")
    if epochs < 1 or lr0 <= 0:
        raise ValueError("epochs must be >= 1 and lr0 > 0")
    width, height = grid
    n_nodes = width * height
    lo, hi = x.min(axis=0), x.max(axis=0)
    som = SomGrid(width, height, lo + (hi - lo) * rng.random((n_nodes, x.shape[1])))
    som.initial_qe = quantization_error(som, x)

    coords = som.node_coords().astype(float)
    grid_d2 = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
    r0 = max(max(width, height) / 2.0, radius_floor)
    total = epochs * x.shape[0]
    w = som.node_weights
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(x.shape[0]):
            frac = t / total
            lr = lr0 * max(lr_floor, 1.0 - frac)
            sigma = max(radius_floor, r0 * (1.0 - frac))
            b = int(np.argmin(((w - x[i]) ** 2).sum(axis=1)))
            h = np.exp(-grid_d2[b] / (2.0 * sigma * sigma))
            w += (lr * h)[:, None] * (x[i] - w)
            t += 1
    som.epochs_trained = epochs
    som.final_qe = quantization_error(som, x)
    if som.final_qe > som.initial_qe + 1e-12:
        log.warning("SOM quantization error rose during training: %.4g -> %.4g", som.initial_qe, som.final_qe)
    return som


@dataclass
class FeatureLayout:
    coords: np.ndarray  # (n_features, 2) integer grid (x, y)
    grid: tuple[int, int]
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=int).reshape(-1, 2)
        gw, gh = self.grid
        if self.coords.size and (
            self.coords.min() < 0 or self.coords[:, 0].max() >= gw or self.coords[:, 1].max() >= gh
        ):
            raise EncodingError("layout coordinate outside grid")
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(len(self.coords))]


def assign_layout(som: SomGrid, feature_vectors: np.ndarray, feature_names=None) -> FeatureLayout:
    x = np.atleast_2d(np.asarray(feature_vectors, dtype=float))
    if x.shape[1] != som.dim:
        raise DimensionMismatch(f"feature vectors have dimension {x.shape[1]}, SOM expects {som.dim}")
    nodes = som.bmu(x)
    coords = som.node_coords()[nodes]
    return FeatureLayout(coords, (som.width, som.height), list(feature_names or []))


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray


def fit_feature_stats(d: OmicsDataset) -> FeatureStats:
    """Per-feature mean and sample standard deviation (fit on training rows only)."""
    ddof = 1 if d.n_samples > 1 else 0
    return FeatureStats(d.features.mean(axis=0), d.features.std(axis=0, ddof=ddof))


def som_inputs(d: OmicsDataset, stats: FeatureStats) -> np.ndarray:
    """Rows = features, columns = z-scored expression across ``d``'s samples."""
    return ((d.features - stats.mean) / np.where(stats.std > 0, stats.std, 1.0)).T


@dataclass
class GlyphParams:
    sizes: np.ndarray  # (n_samples, n_features) diagonal in pixels
    rotations: np.ndarray  # degrees in [0, 180)


def glyph_params(d: OmicsDataset, size_range: tuple[float, float], training_stats: FeatureStats) -> GlyphParams:
    if np.any(training_stats.std <= 0):
        bad = np.flatnonzero(training_stats.std <= 0)
        raise ZeroVarianceFeature(f"zero training variance for feature(s) {bad.tolist()}")
    lo, hi = size_range
    z = np.clip((d.features - training_stats.mean) / training_stats.std, -Z_CLAMP, Z_CLAMP)
    u = (z + Z_CLAMP) / (2 * Z_CLAMP)
    return GlyphParams(lo + u * (hi - lo), np.mod(u * 180.0, 180.0))


@dataclass
class GsnImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8, 1 = glyph

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width):
            raise DimensionMismatch(f"pixel matrix {self.pixels.shape} != ({self.height}, {self.width})")
        if self.pixels.max(initial=0) > 1:
            raise EncodingError("GSN image must be binary")


def layout_to_pixels(layout: FeatureLayout, image_dims: tuple[int, int], margin: float) -> np.ndarray:
    """Map grid cells to pixel-centre coordinates inside a uniform margin."""
    w, h = image_dims
    gw, gh = layout.grid
    out = np.empty((len(layout.coords), 2))
    for axis, (extent, cells) in enumerate(((w, gw), (h, gh))):
        c = layout.coords[:, axis].astype(float)
        if cells > 1:
            pos = margin + c * (extent - 2 * margin) / (cells - 1)
        else:
            pos = np.full_like(c, extent / 2.0)
        # nearest pixel centre that keeps the centre at least `margin` from both edges
        lo = math.ceil(margin - 0.5)
        hi = max(lo, math.floor(extent - margin - 0.5))
        idx = np.clip(np.floor(pos), lo, hi)
        out[:, axis] = np.clip(idx, 0, extent - 1) + 0.5
    return out


def rasterize_glyphs(centers, sizes, rotations, image_dims: tuple[int, int]) -> np.ndarray:
    """OR-composite of filled rotated squares; returns a (height, width) bool mask.

    A glyph of diagonal ``s`` at rotation 0 is the diamond |dx| + |dy| <= s/2.
    Containment is tested at pixel centres in the square's own frame, with the
    lower edges closed and the upper edges open.  Rotation is reduced modulo 90
    degrees first, so the square's symmetry holds bit-for-bit.
    """
    w, h = image_dims
    img = np.zeros((h, w), dtype=bool)
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    sizes = np.asarray(sizes, dtype=float).ravel()
    rotations = np.asarray(rotations, dtype=float).ravel()
    clipped = 0
    for (cx, cy), s, rot in zip(centers, sizes, rotations):
        if s <= 0:
            continue
        r = s / 2.0
        if cx - r < 0 or cy - r < 0 or cx + r > w or cy + r > h:
            clipped += 1
        x0, x1 = math.floor(cx - r - 0.5), math.ceil(cx + r + 0.5)
        y0, y1 = math.floor(cy - r - 0.5), math.ceil(cy + r + 0.5)
        x0, x1, y0, y1 = max(x0, 0), min(x1, w), max(y0, 0), min(y1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        dx = np.arange(x0, x1) + 0.5 - cx
        dy = np.arange(y0, y1) + 0.5 - cy
        dx, dy = np.meshgrid(dx, dy)
        phi = math.radians(math.fmod(rot, 90.0) % 90.0 + 45.0)
        c, sn = math.cos(phi), math.sin(phi)
        a = c * dx + sn * dy
        b = -sn * dx + c * dy
        half = s / (2.0 * math.sqrt(2.0))
        img[y0:y1, x0:x1] |= (a >= -half) & (a < half) & (b >= -half) & (b < half)
    if clipped:
        log.warning("%d glyph(s) extend past the image edge and were clipped", clipped)
    return img


def render_gsn(
    layout: FeatureLayout,
    sizes,
    rotations,
    image_dims: tuple[int, int] = (176, 128),
    margin: float | None = None,
) -> GsnImage:
    sizes = np.asarray(sizes, dtype=float).ravel()
    rotations = np.asarray(rotations, dtype=float).ravel()
    if not (len(sizes) == len(rotations) == len(layout.coords)):
        raise DimensionMismatch("layout and glyph parameters cover different feature sets")
    if margin is None:
        margin = float(sizes.max()) / 2.0 if sizes.size else 0.0
    centers = layout_to_pixels(layout, image_dims, margin)
    mask = rasterize_glyphs(centers, sizes, rotations, image_dims)
    return GsnImage(image_dims[0], image_dims[1], mask.astype(np.uint8))


@dataclass
class GsnConfig:
    image_dims: tuple[int, int] = (176, 128)
    som_grid: tuple[int, int] = (6, 4)
    som_epochs: int = 5
    som_lr: float = 0.05
    # glyph diagonal range as fractions of the shorter image side
    size_frac: tuple[float, float] = (0.05, 0.25)

    def size_range(self) -> tuple[float, float]:
        short = min(self.image_dims)
        return self.size_frac[0] * short, self.size_frac[1] * short


class GsnEncoder:
    """Fit-on-train / transform-anything wrapper around the GSN steps."""

    def __init__(self, cfg: GsnConfig | None = None):
        self.cfg = cfg or GsnConfig()
        self.stats: FeatureStats | None = None
        self.layout: FeatureLayout | None = None
        self.som: SomGrid | None = None

    def fit(self, train: OmicsDataset, rng: np.random.Generator, layout: FeatureLayout | None = None):
        self.stats = fit_feature_stats(train)
        if layout is None:
            x = som_inputs(train, self.stats)
            self.som = train_som(x, self.cfg.som_grid, self.cfg.som_epochs, self.cfg.som_lr, rng)
            layout = assign_layout(self.som, x, train.feature_names)
        elif len(layout.coords) != train.n_features:
            raise DimensionMismatch("layout does not match the dataset's feature count")
        self.layout = layout
        return self

    def transform(self, d: OmicsDataset) -> np.ndarray:
        """Binary images stacked as (n_samples, height, width) uint8."""
        if self.stats is None or self.layout is None:
            raise EncodingError("encoder used before fit")
        p = glyph_params(d, self.cfg.size_range(), self.stats)
        margin = self.cfg.size_range()[1] / 2.0
        w, h = self.cfg.image_dims
        out = np.zeros((d.n_samples, h, w), dtype=np.uint8)
        for i in range(d.n_samples):
            out[i] = render_gsn(self.layout, p.sizes[i], p.rotations[i], self.cfg.image_dims, margin).pixels
        return out


def write_pbm(img: GsnImage, path) -> None:
    """Plain PBM (P1); ``1`` marks a glyph pixel."""
    lines = ["P1", f"{img.width} {img.height}"]
    for row in img.pixels:
        for k in range(0, len(row), 35):
            lines.append(" ".join(str(int(v)) for v in row[k:k + 35]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_pbm(path) -> GsnImage:
    tokens = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P1":
        raise EncodingError(f"{path}: not a plain PBM file")
    w, h = int(tokens[1]), int(tokens[2])
    bits = "".join(tokens[3:])
    if len(bits) != w * h:
        raise EncodingError(f"{path}: expected {w * h} pixels, found {len(bits)}")
    px = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")
    return GsnImage(w, h, px.reshape(h, w))


def write_layout(layout: FeatureLayout, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature_name", "grid_x", "grid_y"])
        for name, (x, y) in zip(layout.feature_names, layout.coords):
            w.writerow([name, int(x), int(y)])


def read_layout(path, grid: tuple[int, int] | None = None) -> FeatureLayout:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise EncodingError(f"{path}: empty layout file")
    names = [r["feature_name"] for r in rows]
    coords = np.array([[int(r["grid_x"]), int(r["grid_y"])] for r in rows])
    if grid is None:
        grid = (int(coords[:, 0].max()) + 1, int(coords[:, 1].max()) + 1)
    return FeatureLayout(coords, tuple(grid), names)
