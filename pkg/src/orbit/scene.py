"""Procedural Mars-like terrain simulator.

A genome of eight genes in [0, 1] is decoded into a :class:`SceneConfig`, which
is rendered into a grayscale image and a per-pixel class mask. Rendering is a
pure function of ``(config, seed)``: layered value noise drives the height
field and the sand/bedrock layout, a pitch-dependent horizon line splits sky
from ground, and elliptical rock blobs are painted far-to-near.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError

SOIL, BEDROCK, SAND, BIG_ROCK, SMALL_ROCK, SKY = range(6)
CLASS_NAMES = ("soil", "bedrock", "sand", "big_rock", "small_rock", "sky")
NUM_CLASSES = len(CLASS_NAMES)

IMAGE_SIZE = 64
MAX_ROCKS = 48
BIG_ROCK_RADIUS = 3.0
# vertical field of view used by the horizon law: sky fraction = 0.5 + pitch / FOV
VERTICAL_FOV = 1.0
RIDGE_AMPLITUDE_PX = 3.0

_CLASS_INTENSITY = {
    SOIL: 0.50,
    BEDROCK: 0.36,
    SAND: 0.66,
    BIG_ROCK: 0.22,
    SMALL_ROCK: 0.28,
}


@dataclass(frozen=True)
class SceneConfig:
    camera_pitch: float  # radians, positive looks up
    lateral_offset: float  # meters
    terrain_roughness: float
    rock_density: float  # rocks per frame area
    rock_size_scale: float
    sand_coverage: float
    bedrock_exposure: float
    illumination_angle: float  # radians, sun azimuth across the frame

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# (lower, upper) for each SceneConfig field, in genome order
FIELD_RANGES: dict[str, tuple[float, float]] = {
    "camera_pitch": (-0.5, 0.3),
    "lateral_offset": (-20.0, 20.0),
    "terrain_roughness": (0.0, 1.0),
    "rock_density": (0.0, 40.0),
    "rock_size_scale": (0.5, 2.0),
    "sand_coverage": (0.0, 1.0),
    "bedrock_exposure": (0.0, 1.0),
    "illumination_angle": (0.0, math.pi),
}
NUM_GENES = len(FIELD_RANGES)


def _check_genes(genes: Sequence[float], length: int | None = None) -> tuple[float, ...]:
    values = tuple(float(g) for g in genes)
    if length is not None and len(values) != length:
        raise ValidationError(f"expected {length} genes, got {len(values)}")
    for i, g in enumerate(values):
        if not (0.0 <= g <= 1.0):
            raise ValidationError(f"gene {i} = {g} outside [0, 1]")
    return values


@dataclass(frozen=True)
class Genome:
    """Search individual: scene parameters in [0, 1] plus the terrain seed."""

    genes: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "genes", _check_genes(self.genes))
        if not (0 <= int(self.seed) < 2**64):
            raise ValidationError(f"seed {self.seed} is not an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))

    def __len__(self):
        return len(self.genes)

    def to_dict(self) -> dict:
        return {"genes": list(self.genes), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "Genome":
        return cls(tuple(d["genes"]), int(d["seed"]))


def random_genome(rng: np.random.Generator, n_genes: int = NUM_GENES) -> Genome:
    genes = rng.random(n_genes)
    seed = int(rng.integers(0, 2**63 - 1))
    return Genome(tuple(genes.tolist()), seed)


def genome_to_scene(g: Genome | Sequence[float]) -> SceneConfig:
    """Affine map of each gene onto the range of its SceneConfig field."""
    genes = g.genes if isinstance(g, Genome) else g
    genes = _check_genes(genes, NUM_GENES)
    values = {}
    for gene, (name, (lo, hi)) in zip(genes, FIELD_RANGES.items()):
        values[name] = min(max((1.0 - gene) * lo + gene * hi, lo), hi)
    return SceneConfig(**values)


def validate_config(c: SceneConfig) -> None:
    for name, (lo, hi) in FIELD_RANGES.items():
        v = getattr(c, name)
        if not (lo <= v <= hi) or not math.isfinite(v):
            raise ValidationError(f"{name} = {v} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class Rock:
    row: float
    col: float
    radius_x: float
    radius_y: float
    cls: int

    def contains(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return ((cols - self.col) / self.radius_x) ** 2 + ((rows - self.row) / self.radius_y) ** 2 <= 1.0


@dataclass(frozen=True)
class LabeledScene:
    image: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    config: SceneConfig
    seed: int
    rocks: tuple[Rock, ...] = ()

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape


class ValueNoise:
    """Seeded 2-D value noise on a 256x256 wrapping lattice, smoothstep-interpolated."""

    def __init__(self, seed: int):
        self.table = np.random.default_rng(seed).uniform(-1.0, 1.0, (256, 256))

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x0 = np.floor(x)
        y0 = np.floor(y)
        fx = x - x0
        fy = y - y0
        sx = fx * fx * (3 - 2 * fx)
        sy = fy * fy * (3 - 2 * fy)
        xi = x0.astype(np.int64) & 255
        yi = y0.astype(np.int64) & 255
        xj = (xi + 1) & 255
        yj = (yi + 1) & 255
        t = self.table
        top = t[yi, xi] + sx * (t[yi, xj] - t[yi, xi])
        bot = t[yj, xi] + sx * (t[yj, xj] - t[yj, xi])
        return top + sy * (bot - top)

    def fractal(self, x, y, octaves: int, persistence: float = 0.5) -> np.ndarray:
        total = np.zeros(np.broadcast(x, y).shape)
        amp, freq, norm = 1.0, 1.0, 0.0
        for _ in range(octaves):
            total += amp * self(x * freq, y * freq)
            norm += amp
            amp *= persistence
            freq *= 2.0
        return total / norm


def _sub_seed(seed: int, salt: int) -> int:
    return int(np.random.SeedSequence([seed, salt]).generate_state(1, np.uint64)[0])


def horizon_rows(c: SceneConfig, seed: int, width: int, height: int) -> np.ndarray:
    """Per-column horizon position in rows; cells with row centre above it are sky."""
    base = min(max(0.5 + c.camera_pitch / VERTICAL_FOV, 0.0), 1.0) * height
    ridge_noise = ValueNoise(_sub_seed(seed, 1))
    cols = np.arange(width, dtype=np.float64)
    ridge = ridge_noise.fractal((cols + 4.0 * c.lateral_offset) / 9.0, np.full(width, 0.5), 2)
    return np.clip(base + c.terrain_roughness * RIDGE_AMPLITUDE_PX * ridge, 0.0, float(height))


def _quantile_threshold(values: np.ndarray, fraction: float) -> float:
    if values.size == 0 or fraction <= 0.0:
        return math.inf
    if fraction >= 1.0:
        return -math.inf
    return float(np.quantile(values, 1.0 - fraction))


def render_scene(c: SceneConfig, seed: int, size: int = IMAGE_SIZE) -> LabeledScene:
    validate_config(c)
    h = w = size
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    horizon = horizon_rows(c, seed, w, h)
    sky = rows + 0.5 < horizon[None, :]
    ground = ~sky

    # perspective: depth grows towards the horizon, columns spread with depth
    base_row = float(np.mean(horizon))
    span = max(h - base_row, 1.0)
    v = np.clip((rows + 0.5 - base_row) / span, 0.02, 1.0)
    depth = 3.0 / (v + 0.15)
    u = (cols / w - 0.5) * depth + c.lateral_offset / 4.0

    height_noise = ValueNoise(_sub_seed(seed, 2))
    sand_noise = ValueNoise(_sub_seed(seed, 3))
    bed_noise = ValueNoise(_sub_seed(seed, 4))
    octaves = 1 + int(round(3 * c.terrain_roughness))
    height_field = height_noise.fractal(u * 0.8, depth * 0.8, octaves)
    sand_field = sand_noise.fractal(u * 0.5, depth * 0.5, 2)
    bed_field = bed_noise.fractal(u * 0.6, depth * 0.6, 2) + 0.3 * c.terrain_roughness * height_field

    mask = np.full((h, w), SKY, dtype=np.uint8)
    mask[ground] = SOIL
    bed_t = _quantile_threshold(bed_field[ground], c.bedrock_exposure)
    bedrock = ground & (bed_field >= bed_t)
    mask[bedrock] = BEDROCK
    rest = ground & ~bedrock
    sand_t = _quantile_threshold(sand_field[rest], c.sand_coverage)
    mask[rest & (sand_field >= sand_t)] = SAND

    image = np.zeros((h, w), dtype=np.float64)
    for cls, level in _CLASS_INTENSITY.items():
        image[mask == cls] = level
    # sun shading from the height-field slope, seen across the frame
    gy, gx = np.gradient(height_field)
    light_x, light_y = math.cos(c.illumination_angle), 0.5 * math.sin(c.illumination_angle)
    shade = (0.05 + 0.15 * c.terrain_roughness) * (gx * light_x + gy * light_y) * 4.0
    texture = ValueNoise(_sub_seed(seed, 5))(u * 6.0, depth * 6.0)
    image = image + ground * (shade + 0.03 * texture)
    image[sky] = (0.9 - 0.1 * rows / h)[sky]

    rocks = _place_rocks(c, seed, horizon, base_row, h, w)
    for rock in rocks:
        inside = rock.contains(rows, cols) & ground
        if not inside.any():
            continue
        mask[inside] = rock.cls
        nx = np.clip((cols - rock.col) / rock.radius_x, -1.0, 1.0)
        lit = 0.12 * -nx * light_x
        image[inside] = (_CLASS_INTENSITY[rock.cls] + lit)[inside]

    image = np.clip(image, 0.0, 1.0)
    return LabeledScene(image=image, mask=mask, config=c, seed=seed, rocks=tuple(rocks))


def _place_rocks(c: SceneConfig, seed: int, horizon, base_row, h, w) -> list[Rock]:
    ground_frac = float(np.clip(1.0 - np.mean(horizon) / h, 0.0, 1.0))
    count = int(round(c.rock_density * ground_frac))
    rng = np.random.default_rng(_sub_seed(seed, 6))
    # draw the full stream so rock k is the same rock whatever the density
    draws = rng.random((MAX_ROCKS, 4))
    span = max(h - base_row, 1.0)
    rocks = []
    for vd, xd, sd, ad in draws[: min(count, MAX_ROCKS)]:
        row = base_row + vd * span
        near = (row - base_row) / span
        col = ((xd + c.lateral_offset / 40.0) % 1.0) * w
        rx = c.rock_size_scale * (0.6 + 1.6 * sd) * (0.6 + 2.4 * near)
        ry = rx * (0.55 + 0.3 * ad)
        cls = BIG_ROCK if rx >= BIG_ROCK_RADIUS else SMALL_ROCK
        rocks.append(Rock(row, col, max(rx, 0.5), max(ry, 0.5), cls))
    rocks.sort(key=lambda r: r.row)  # far first, near rocks occlude
    return rocks


def sky_proportion(mask: np.ndarray) -> float:
    m = np.asarray(mask)
    if m.size == 0:
        raise ValidationError("empty mask")
    return float(np.count_nonzero(m == SKY)) / m.size


REALISM_TRANSFORMS = ("identity", "style-perturb")


def apply_realism_transform(image: np.ndarray, transform_id: str, seed: int) -> np.ndarray:
    """GAN stand-in. ``style-perturb`` is a seeded tone curve plus a texture overlay."""
    if transform_id == "identity":
        return image
    if transform_id != "style-perturb":
        raise ValidationError(f"unknown realism transform {transform_id!r}")
    rng = np.random.default_rng(_sub_seed(seed, 7))
    gamma = math.exp(rng.uniform(-0.15, 0.15))
    gain = rng.uniform(0.95, 1.05)
    freq = rng.uniform(0.15, 0.35)
    h, w = image.shape
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    overlay = ValueNoise(_sub_seed(seed, 8))(cols * freq, rows * freq)
    out = gain * np.power(np.clip(image, 0.0, 1.0), gamma) + 0.02 * overlay
    return np.clip(out, 0.0, 1.0)


# -- PGM persistence -------------------------------------------------------


def to_pgm_bytes(grid: np.ndarray, *, is_mask: bool = False) -> bytes:
    """Binary P5 PGM, maxval 255. Images are scaled by 255, masks store class ids."""
    g = np.asarray(grid)
    if g.ndim != 2:
        raise ValidationError("PGM needs a 2-D grid")
    if is_mask:
        data = g.astype(np.uint8)
    else:
        data = np.rint(np.clip(g, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes()


def write_pgm(path: str | Path, grid: np.ndarray, *, is_mask: bool = False) -> bytes:
    payload = to_pgm_bytes(grid, is_mask=is_mask)
    Path(path).write_bytes(payload)
    return payload


def read_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValidationError("not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValidationError("16-bit PGM not supported")
    pos += 1
    return np.frombuffer(raw[pos : pos + w * h], dtype=np.uint8).reshape(h, w).copy()
