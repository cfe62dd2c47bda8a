"""The two search objectives: gated accuracy fitness and archive-relative similarity.

Both objectives are minimised. Consistency-style metrics (flip, noise, and the
ground-truth mIoU baseline) are passed through, since a low value points to a
failure. Surprise and uncertainty grow with how interesting an input is, so
they enter the objective negated. Irrelevant inputs (sky-dominated frames) get
the value 2, which is worse than anything a relevant input can score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _core, metrics
from .errors import ValidationError
from .scene import (
    Genome,
    apply_realism_transform,
    genome_to_scene,
    random_genome,
    render_scene,
    sky_proportion,
)

GATE_VALUE = 2.0
VARIANTS = ("flip", "noise", "sa", "mcd", "ground_truth")
GROUND_TRUTH_FREE = ("flip", "noise", "sa", "mcd")
MINIMIZE_RAW = "minimize-raw"
MAXIMIZE_RAW = "maximize-raw"
DIRECTION = {
    "flip": MINIMIZE_RAW,
    "noise": MINIMIZE_RAW,
    "ground_truth": MINIMIZE_RAW,
    "sa": MAXIMIZE_RAW,
    "mcd": MAXIMIZE_RAW,
}


@dataclass(frozen=True)
class FitnessConfig:
    variant: str = "flip"
    sky_threshold: float = 0.7
    noise_variance: float = metrics.NOISE_VARIANCE
    mcd_passes: int = metrics.MCD_PASSES
    similarity_threshold: Optional[float] = None
    relevance_source: Optional[str] = None  # defaults by variant, see __post_init__

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown fitness variant {self.variant!r}")
        if self.relevance_source is None:
            src = "ground_truth" if self.variant == "ground_truth" else "prediction"
            object.__setattr__(self, "relevance_source", src)
        if self.relevance_source not in ("prediction", "ground_truth"):
            raise ValidationError(f"unknown relevance source {self.relevance_source!r}")
        if not 0.0 < self.sky_threshold <= 1.0:
            raise ValidationError("sky threshold must be in (0, 1]")
        if self.noise_variance < 0:
            raise ValidationError("noise variance must be >= 0")
        if self.mcd_passes < 2:
            raise ValidationError("MC dropout needs at least two passes")
        if self.similarity_threshold is not None and not self.similarity_threshold > 0:
            raise ValidationError("similarity threshold must be positive")

    @property
    def direction(self) -> str:
        return DIRECTION[self.variant]

    @property
    def uses_ground_truth(self) -> bool:
        return self.variant == "ground_truth" or self.relevance_source == "ground_truth"

    def with_threshold(self, t: float) -> "FitnessConfig":
        return replace(self, similarity_threshold=float(t))


@dataclass(frozen=True)
class ObjectivePair:
    f_accuracy: float
    f_similarity: float
    raw_metric: float
    gated: bool
    direction: str

    def as_tuple(self) -> tuple[float, float]:
        return (self.f_accuracy, self.f_similarity)


def gate_accuracy(raw_metric: float, relevant: bool, direction: str) -> float:
    if not math.isfinite(raw_metric):
        raise ValidationError("raw metric must be finite")
    if not relevant:
        return GATE_VALUE
    if direction == MINIMIZE_RAW:
        return float(raw_metric)
    if direction == MAXIMIZE_RAW:
        if raw_metric < 0:
            raise ValidationError("maximised metrics must be non-negative")
        return -float(raw_metric)
    raise ValidationError(f"unknown direction {direction!r}")


def relevance(image, prediction, mask_opt, cfg: FitnessConfig) -> bool:
    """False when the sky covers at least ``cfg.sky_threshold`` of the frame."""
    if cfg.relevance_source == "ground_truth":
        if mask_opt is None:
            raise ValidationError("ground-truth relevance needs the simulator mask")
        source = mask_opt
    else:
        source = prediction.labels
    return sky_proportion(source) < cfg.sky_threshold


def _as_matrix(archive) -> np.ndarray:
    if archive is None:
        return np.zeros((0, 0))
    if hasattr(archive, "feature_matrix"):
        return archive.feature_matrix()
    mat = np.asarray(archive, dtype=np.float64)
    if mat.size == 0:
        return np.zeros((0, 0))
    return mat.reshape(len(mat), -1)


def distance_from_closest(candidate_features, archive) -> tuple[float, int]:
    mat = _as_matrix(archive)
    if mat.shape[0] == 0:
        return math.inf, -1
    return _core.nearest(np.asarray(candidate_features, dtype=np.float64).ravel(), mat)


def f_similarity(candidate_features, archive, threshold: float) -> float:
    if not threshold > 0:
        raise ValidationError("similarity threshold must be positive")
    d, _ = distance_from_closest(candidate_features, archive)
    if math.isinf(d):
        return 0.0
    if d < threshold:
        return GATE_VALUE
    return 1.0 / (1.0 + d)


def mean_pairwise_distance(features) -> float:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ValidationError("need at least two feature vectors")
    return float(_core.pairwise_mean_distance(f))


def calibrate_threshold(n_images: int = 1000, seed: int = 0, transform: str = "identity") -> float:
    """Mean pairwise feature distance over ``n_images`` random scenes."""
    if n_images < 2:
        raise ValidationError("calibration needs at least two images")
    rng = np.random.default_rng(seed)
    feats = []
    for _ in range(n_images):
        g = random_genome(rng)
        image = apply_realism_transform(render_scene(genome_to_scene(g), g.seed).image, transform, g.seed)
        feats.append(metrics.extract_features(image))
    return mean_pairwise_distance(np.array(feats))


def training_activations(model, n_images: int = 200, seed: int = 0, transform: str = "identity") -> np.ndarray:
    """Activation corpus standing in for the model's training set."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x75A]))
    acts = []
    for _ in range(n_images):
        g = random_genome(rng)
        image = apply_realism_transform(render_scene(genome_to_scene(g), g.seed).image, transform, g.seed)
        acts.append(np.asarray(model.activations(image), dtype=np.float64))
    return np.array(acts)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from integers and strings."""
    words = []
    for p in parts:
        if isinstance(p, str):
            words.extend(p.encode("utf-8"))
        else:
            words.append(int(p) & 0xFFFFFFFFFFFFFFFF)
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0] >> 1)


@dataclass
class Evaluation:
    genome: Genome
    objectives: ObjectivePair
    image: np.ndarray = field(repr=False)
    features: np.ndarray = field(repr=False)


class FitnessPipeline:
    """render -> realism transform -> variant metric -> gate, plus similarity.

    For ground-truth-free variants the simulator mask is dropped right after
    rendering and never reaches the metric or relevance code.
    """

    def __init__(self, cfg: FitnessConfig, model, transform: str = "identity", train_acts=None):
        if cfg.similarity_threshold is None:
            raise ValidationError("similarity threshold not set; calibrate it first")
        if cfg.variant == "sa" and train_acts is None:
            raise ValidationError("the surprise-adequacy variant needs training activations")
        self.cfg = cfg
        self.model = model
        self.transform = transform
        self.train_acts = None if train_acts is None else np.asarray(train_acts, dtype=np.float64)

    @property
    def uses_ground_truth(self) -> bool:
        return self.cfg.uses_ground_truth

    def render(self, genome: Genome):
        scene = render_scene(genome_to_scene(genome), genome.seed)
        image = apply_realism_transform(scene.image, self.transform, genome.seed)
        mask = scene.mask if self.uses_ground_truth else None
        return image, mask

    def raw_metric(self, image, prediction, mask, run_seed: int) -> float:
        v = self.cfg.variant
        model = self.model
        if v == "ground_truth":
            return metrics.miou(prediction.labels, mask, model.num_classes)
        if mask is not None and self.cfg.relevance_source != "ground_truth":
            raise AssertionError("ground truth leaked into a ground-truth-free variant")
        if v == "flip":
            return metrics.flip_consistency(model, image)
        if v == "noise":
            return metrics.noise_consistency_seg(
                model, image, self.cfg.noise_variance, derive_seed(run_seed, "noise")
            )
        if v == "sa":
            return metrics.dsa(model.activations(image), self.train_acts)
        return metrics.mcd_uncertainty(model, image, self.cfg.mcd_passes, derive_seed(run_seed, "mcd"))

    def evaluate(self, genome: Genome, archive=None, run_seed: int = 0) -> Evaluation:
        image, mask = self.render(genome)
        prediction = self.model.predict(image)
        raw = self.raw_metric(image, prediction, mask, run_seed)
        relevant = relevance(image, prediction, mask, self.cfg)
        f_acc = gate_accuracy(raw, relevant, self.cfg.direction)
        feats = metrics.extract_features(image)
        f_sim = f_similarity(feats, archive, self.cfg.similarity_threshold)
        pair = ObjectivePair(f_acc, f_sim, float(raw), not relevant, self.cfg.direction)
        return Evaluation(genome, pair, image, feats)


def evaluate(genome: Genome, cfg: FitnessConfig, model, archive=None, run_seed: int = 0,
             transform: str = "identity", train_acts=None) -> ObjectivePair:
    return FitnessPipeline(cfg, model, transform, train_acts).evaluate(genome, archive, run_seed).objectives


__all__ = [
    "GATE_VALUE",
    "VARIANTS",
    "GROUND_TRUTH_FREE",
    "FitnessConfig",
    "ObjectivePair",
    "Evaluation",
    "FitnessPipeline",
    "gate_accuracy",
    "relevance",
    "f_similarity",
    "distance_from_closest",
    "mean_pairwise_distance",
    "calibrate_threshold",
    "training_activations",
    "derive_seed",
    "evaluate",
]
