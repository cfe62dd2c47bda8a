"""Per-image measurements used by the fitness functions and the reports."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import _core
from .errors import ValidationError

NOISE_VARIANCE = 0.1
MCD_PASSES = 5
FEATURE_GRID = 8


def hflip_grid(grid: np.ndarray) -> np.ndarray:
    """Reverse column order; for label grids this is the prediction transpose."""
    g = np.asarray(grid)
    if g.ndim < 2:
        raise ValidationError("hflip needs a grid with at least two dimensions")
    return np.ascontiguousarray(g[..., ::-1])


def gaussian_noise(shape, variance: float, seed: int) -> np.ndarray:
    if not variance >= 0.0:
        raise ValidationError(f"noise variance must be >= 0, got {variance}")
    rng = np.random.default_rng(int(seed))
    return rng.normal(0.0, math.sqrt(variance), size=shape)


def add_gaussian_noise(image: np.ndarray, variance: float, seed: int) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64)
    if variance == 0.0:
        return x.copy()
    return np.clip(x + gaussian_noise(x.shape, variance, seed), 0.0, 1.0)


def confusion_counts(predicted: np.ndarray, reference: np.ndarray, num_classes: int):
    """Per-class ``(tp, fp, fn)`` pixel counts."""
    p = np.asarray(predicted)
    r = np.asarray(reference)
    if p.shape != r.shape:
        raise ValidationError(f"mask shapes differ: {p.shape} vs {r.shape}")
    if p.size and (p.max() >= num_classes or r.max() >= num_classes or p.min() < 0 or r.min() < 0):
        raise ValidationError(f"labels must lie in [0, {num_classes})")
    cm = _core.confusion_matrix(p, r, num_classes)
    tp = np.diag(cm)
    return tp, cm.sum(axis=0) - tp, cm.sum(axis=1) - tp


def per_class_iou(predicted, reference, num_classes: int) -> dict[int, float]:
    tp, fp, fn = confusion_counts(predicted, reference, num_classes)
    denom = tp + fp + fn
    return {c: tp[c] / denom[c] for c in range(num_classes) if denom[c] > 0}


def miou(predicted: np.ndarray, reference: np.ndarray, num_classes: int) -> float:
    """Mean IoU over the classes present in either mask."""
    ious = per_class_iou(predicted, reference, num_classes)
    if not ious:
        raise ValidationError("masks are empty")
    return float(sum(ious.values()) / len(ious))


def flip_consistency(model, image: np.ndarray) -> float:
    expected = hflip_grid(model.predict(image).labels)
    flipped = model.predict(hflip_grid(image)).labels
    return miou(expected, flipped, model.num_classes)


def noise_consistency_seg(model, image: np.ndarray, variance: float = NOISE_VARIANCE, seed: int = 0) -> float:
    clean = model.predict(image).labels
    noisy = model.predict(add_gaussian_noise(image, variance, seed)).labels
    return miou(clean, noisy, model.num_classes)


def noise_consistency_reg(y: float, y_noise: float) -> float:
    if not (math.isfinite(y) and math.isfinite(y_noise)):
        raise ValidationError("regression outputs must be finite")
    return 1.0 / (abs(y - y_noise) + 1.0)


def dsa(act: np.ndarray, train_acts: np.ndarray) -> float:
    """Distance from ``act`` to the nearest training activation vector."""
    a = np.asarray(act, dtype=np.float64).ravel()
    corpus = np.asarray(train_acts, dtype=np.float64)
    if corpus.ndim != 2 or corpus.shape[0] == 0:
        raise ValidationError("training activation corpus is empty")
    if corpus.shape[1] != a.size:
        raise ValidationError(f"activation length {a.size} != corpus width {corpus.shape[1]}")
    return _core.nearest(a, corpus)[0]


def pixel_values(prediction, num_classes: int) -> np.ndarray:
    """Scalar per pixel for MC dropout: predicted-class score, else normalised label."""
    labels = np.asarray(prediction.labels)
    if prediction.scores is not None:
        idx = labels.astype(np.int64)[None]
        return np.take_along_axis(prediction.scores, idx, axis=0)[0]
    return labels.astype(np.float64) / (num_classes - 1)


def mean_pixel_variance(passes: Sequence[np.ndarray]) -> float:
    """Population variance across passes per pixel, averaged over pixels.

    Evaluated as ``sum_t (M x_t - S)^2 / M^3`` which is non-negative by
    construction and exact for small-integer inputs.
    """
    stack = np.asarray(passes, dtype=np.float64)
    m = stack.shape[0]
    if m < 2:
        raise ValidationError("MC dropout needs at least two passes")
    total = stack.sum(axis=0)
    var = ((m * stack - total) ** 2).sum(axis=0) / m**3
    return float(var.mean())


def mcd_uncertainty(model, image: np.ndarray, passes: int = MCD_PASSES, base_seed: int = 0) -> float:
    if passes < 2:
        raise ValidationError("MC dropout needs at least two passes")
    values = [
        pixel_values(model.predict_with_dropout(image, base_seed + t), model.num_classes)
        for t in range(passes)
    ]
    return mean_pixel_variance(values)


def extract_features(image: np.ndarray, grid: int = FEATURE_GRID) -> np.ndarray:
    """Per cell of a ``grid x grid`` partition: mean, std, mean gradient magnitude."""
    x = np.asarray(image, dtype=np.float64)
    h, w = x.shape
    if h % grid or w % grid:
        raise ValidationError(f"image {x.shape} not divisible into a {grid}x{grid} grid")
    gy, gx = np.gradient(x)
    mag = np.hypot(gx, gy)
    ch, cw = h // grid, w // grid
    cells = x.reshape(grid, ch, grid, cw).transpose(0, 2, 1, 3).reshape(grid * grid, -1)
    mags = mag.reshape(grid, ch, grid, cw).transpose(0, 2, 1, 3).reshape(grid * grid, -1)
    mean = cells.mean(axis=1)
    std = np.sqrt(((cells - mean[:, None]) ** 2).mean(axis=1))
    return np.stack([mean, std, mags.mean(axis=1)], axis=1).ravel()


def feature_distance(a: np.ndarray, b: np.ndarray) -> float:
    u = np.asarray(a, dtype=np.float64).ravel()
    v = np.asarray(b, dtype=np.float64).ravel()
    if u.size != v.size:
        raise ValidationError(f"feature lengths differ: {u.size} vs {v.size}")
    return float(np.sqrt(np.sum((u - v) ** 2)))
