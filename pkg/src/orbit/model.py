"""Model-under-test abstraction and the built-in reference segmentation model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol, runtime_checkable

import numpy as np

from . import _core
from .errors import ValidationError
from .scene import IMAGE_SIZE, NUM_CLASSES


@dataclass(frozen=True)
class Prediction:
    labels: np.ndarray = field(repr=False)
    scores: Optional[np.ndarray] = field(default=None, repr=False)  # (C, H, W)

    @property
    def shape(self):
        return self.labels.shape


@runtime_checkable
class SegmentationModel(Protocol):
    num_classes: int
    image_shape: tuple[int, int]

    def predict(self, image: np.ndarray) -> Prediction: ...

    def predict_with_dropout(self, image: np.ndarray, pass_seed: int) -> Prediction: ...

    def activations(self, image: np.ndarray) -> np.ndarray: ...


def check_image(image: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64)
    if x.shape != tuple(shape):
        raise ValidationError(f"image shape {x.shape} does not match model input {tuple(shape)}")
    return x


def labels_from_scores(scores: np.ndarray) -> np.ndarray:
    # np.argmax keeps the first maximum, i.e. the lowest class index on ties
    return np.argmax(scores, axis=0).astype(np.uint8)


# Class prototypes on the smoothed-intensity axis, in class-index order
# (soil, bedrock, sand, big rock, small rock, sky).
_PROTOTYPES = (0.50, 0.36, 0.66, 0.22, 0.28, 0.86)
_SMOOTH = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 16.0
_DX = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 8.0
_DY = _DX.T.copy()
_DXX = np.array([[1.0, -2.0, 1.0], [2.0, -4.0, 2.0], [1.0, -2.0, 1.0]]) / 8.0

MODES = ("default", "flip_robust", "planted_defect")
DEFECT_DARK_LEVEL = 0.30
# (threshold, gain) of the context gate, for the rock logits and then the terrain logits
DEFECT_ROCK_GATE = (0.006, 400.0)
DEFECT_TERRAIN_GATE = (0.010, 600.0)


class ReferenceModel:
    """One 3x3 convolution (16 channels) -> ReLU -> dropout -> per-pixel linear classifier.

    Weights are a fixed template perturbed by a seeded generator, so two models
    built with the same ``seed`` and ``mode`` agree on every output. The
    template makes the network an approximate nearest-intensity classifier:
    channels 0-6 are hinge features ``relu(smooth(x) - knot)`` whose linear
    combination gives tent-shaped class logits, channels 8-11 respond to edges
    and feed the rock classes, channels 12-15 are seeded random filters.

    ``mode="flip_robust"`` makes every kernel left/right symmetric, so the
    prediction commutes exactly with a horizontal flip. ``mode="planted_defect"``
    starts from the flip-robust weights and plants a position bias in the rock
    logits: big rocks are favoured on the right, small rocks on the left. The
    bias is scaled by an image-level context gate (the mean of a dark-pixel
    channel, like an image-pooling branch) that stays at zero in sparse scenes;
    at higher rock coverage a second gate spreads the bias to the terrain
    classes. Sparse scenes are therefore exactly flip-consistent, while
    rock-dense ones get less consistent as rock coverage grows.
    """

    hidden_channels = 16

    def __init__(
        self,
        seed: int = 0,
        mode: str = "default",
        dropout_rate: float = 0.5,
        image_shape: tuple[int, int] = (IMAGE_SIZE, IMAGE_SIZE),
        gain: float = 30.0,
    ):
        if mode not in MODES:
            raise ValidationError(f"unknown model mode {mode!r}")
        if not 0.0 <= dropout_rate < 1.0:
            raise ValidationError("dropout rate must be in [0, 1)")
        self.seed = int(seed)
        self.mode = mode
        self.dropout_rate = float(dropout_rate)
        self.image_shape = tuple(image_shape)
        self.num_classes = NUM_CLASSES
        self._build(gain)

    def _build(self, gain: float) -> None:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x0B17]))
        k = self.hidden_channels
        c = self.num_classes
        # the planted defect sits on the flip-robust base so that it is the only asymmetry
        symmetric = self.mode in ("flip_robust", "planted_defect")

        kernels = np.zeros((k, 3, 3))
        bias = np.zeros(k)
        knots = (0.0,) + tuple(sorted(set(_PROTOTYPES)))  # 7 knots
        for i, t in enumerate(knots):
            kernels[i] = _SMOOTH
            bias[i] = -t
        kernels[7] = _SMOOTH  # spare hinge near saturation
        bias[7] = -0.95
        if symmetric:
            # |d/dx| proxies built from the symmetric second derivative
            kernels[8], bias[8] = _DXX, -0.02
            kernels[9], bias[9] = -_DXX, -0.02
        else:
            kernels[8], bias[8] = _DX, -0.02
            kernels[9], bias[9] = -_DX, -0.02
        kernels[10], bias[10] = _DY, -0.02
        kernels[11], bias[11] = -_DY, -0.02
        kernels[12:] = rng.normal(0.0, 0.25, (4, 3, 3))
        bias[12:] = rng.normal(0.0, 0.05, 4)
        kernels += rng.normal(0.0, 0.01, kernels.shape)
        if symmetric:
            kernels = 0.5 * (kernels + kernels[:, :, ::-1])
            kernels[:, :, 2] = kernels[:, :, 0]
        if self.mode == "planted_defect":
            # symmetric dark-pixel detector whose image mean drives the context gate
            kernels[7], bias[7] = -_SMOOTH, DEFECT_DARK_LEVEL

        weights = np.zeros((c, k))
        cls_bias = np.zeros(c)
        # -gain * |s - mu| = gain * (s - mu) - 2 * gain * relu(s - mu), with s = relu(s - 0)
        for cls, mu in enumerate(_PROTOTYPES):
            weights[cls, 0] += gain
            weights[cls, knots.index(mu)] += -2.0 * gain
            cls_bias[cls] = -gain * mu
        edge = 3.0
        for cls in (3, 4):
            weights[cls, 8] += edge
            weights[cls, 9] += edge
            weights[cls, 10] += edge
            weights[cls, 11] += edge
        weights[:, 12:] += rng.normal(0.0, 0.5, (c, 4))
        weights += rng.normal(0.0, 0.05, weights.shape)
        if self.mode == "planted_defect":
            weights[:, 7] = 0.0

        self.kernels = kernels
        self.bias = bias
        self.weights = weights
        self.cls_bias = cls_bias

    # -- forward pieces ---------------------------------------------------

    def hidden(self, image: np.ndarray) -> np.ndarray:
        x = check_image(image, self.image_shape)
        return np.maximum(_core.conv3x3(x, self.kernels, self.bias), 0.0)

    def context_gates(self, hidden: np.ndarray) -> tuple[float, float]:
        """Image-level gates of the planted defect: zero until dark pixels are common."""
        if self.mode != "planted_defect":
            return 0.0, 0.0
        context = float(hidden[7].mean())
        return tuple(gain * max(context - t, 0.0) for t, gain in (DEFECT_ROCK_GATE, DEFECT_TERRAIN_GATE))

    def _scores(self, hidden: np.ndarray) -> np.ndarray:
        c = self.num_classes
        weights = self.weights
        logits = np.empty((c,) + hidden.shape[1:])
        # explicit channel loop keeps the per-pixel summation order fixed
        for cls in range(c):
            acc = np.full(hidden.shape[1:], self.cls_bias[cls])
            for ch in range(hidden.shape[0]):
                acc = acc + weights[cls, ch] * hidden[ch]
            logits[cls] = acc
        rock_gate, terrain_gate = self.context_gates(hidden)
        if rock_gate > 0.0:
            w = hidden.shape[2]
            x = (np.arange(w) + 0.5) / w - 0.5
            logits[3] = logits[3] + rock_gate * x
            logits[4] = logits[4] - rock_gate * x
            logits[0] = logits[0] + terrain_gate * x
            logits[1] = logits[1] - terrain_gate * x
            logits[2] = logits[2] + terrain_gate * x
        peak = logits[0].copy()
        for cls in range(1, c):
            peak = np.maximum(peak, logits[cls])
        e = np.exp(logits - peak)
        total = e[0].copy()
        for cls in range(1, c):
            total = total + e[cls]
        return e / total

    def _predict_hidden(self, hidden: np.ndarray) -> Prediction:
        scores = self._scores(hidden)
        return Prediction(labels=labels_from_scores(scores), scores=scores)

    # -- public API -------------------------------------------------------

    def predict(self, image: np.ndarray) -> Prediction:
        return self._predict_hidden(self.hidden(image))

    def predict_with_dropout(self, image: np.ndarray, pass_seed: int) -> Prediction:
        h = self.hidden(image)
        if self.dropout_rate > 0.0:
            rng = np.random.default_rng(int(pass_seed))
            keep = rng.random(h.shape) >= self.dropout_rate
            h = np.where(keep, h / (1.0 - self.dropout_rate), 0.0)
        return self._predict_hidden(h)

    def activations(self, image: np.ndarray) -> np.ndarray:
        """Hidden layer after global mean pooling, one value per channel."""
        return self.hidden(image).mean(axis=(1, 2))


class ConstantModel:
    """Predicts the same class everywhere; handy as an equivariant baseline."""

    def __init__(self, label: int = 0, num_classes: int = NUM_CLASSES,
                 image_shape: tuple[int, int] = (IMAGE_SIZE, IMAGE_SIZE)):
        self.label = label
        self.num_classes = num_classes
        self.image_shape = tuple(image_shape)

    def predict(self, image):
        check_image(image, self.image_shape)
        return Prediction(labels=np.full(self.image_shape, self.label, dtype=np.uint8))

    def predict_with_dropout(self, image, pass_seed):
        return self.predict(image)

    def activations(self, image):
        return np.array([np.asarray(image, dtype=np.float64).mean()])
