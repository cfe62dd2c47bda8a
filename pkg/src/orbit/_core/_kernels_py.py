"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` operation for operation. The convolution keeps the
same per-element evaluation order as the compiled version, so both backends give
bit-identical hidden activations; the reductions (distances) agree to rounding.
"""

import numpy as np


def conv3x3(image, weights, bias):
    """Replicate-padded 3x3 correlation, one output plane per kernel.

    Each row of taps is accumulated as ``centre + (left + right)`` so that a
    kernel with equal left/right taps commutes exactly with a horizontal flip.
    """
    x = np.ascontiguousarray(image, dtype=np.float64)
    w = np.ascontiguousarray(weights, dtype=np.float64)
    b = np.ascontiguousarray(bias, dtype=np.float64)
    h, wd = x.shape
    k = w.shape[0]
    p = np.pad(x, 1, mode="edge")
    out = np.empty((k, h, wd), dtype=np.float64)
    for ch in range(k):
        acc = np.full((h, wd), b[ch])
        for di in range(3):
            rows = p[di : di + h]
            left = rows[:, 0:wd]
            centre = rows[:, 1 : wd + 1]
            right = rows[:, 2 : wd + 2]
            acc = acc + (w[ch, di, 1] * centre + (w[ch, di, 0] * left + w[ch, di, 2] * right))
        out[ch] = acc
    return out


def confusion_matrix(pred, ref, num_classes):
    """Counts ``[ref_class, pred_class]`` over all pixels."""
    p = np.asarray(pred, dtype=np.int64).ravel()
    r = np.asarray(ref, dtype=np.int64).ravel()
    flat = np.bincount(r * num_classes + p, minlength=num_classes * num_classes)
    return flat.reshape(num_classes, num_classes).astype(np.int64)


def nearest(query, corpus):
    """Euclidean distance and index of the first nearest corpus row."""
    q = np.asarray(query, dtype=np.float64)
    c = np.asarray(corpus, dtype=np.float64)
    d2 = ((c - q) ** 2).sum(axis=1)
    idx = int(np.argmin(d2))
    return float(np.sqrt(d2[idx])), idx


def nondominated_ranks(objectives):
    """Front index of every row under Pareto dominance (all objectives minimised)."""
    f = np.asarray(objectives, dtype=np.float64)
    n = f.shape[0]
    ranks = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return ranks
    le = np.all(f[:, None, :] <= f[None, :, :], axis=2)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=2)
    dom = le & lt  # dom[p, q]: p dominates q
    counts = dom.sum(axis=0)
    front = np.flatnonzero(counts == 0)
    r = 0
    while front.size:
        ranks[front] = r
        counts = counts - dom[front].sum(axis=0)
        counts[ranks >= 0] = -1
        front = np.flatnonzero(counts == 0)
        r += 1
    return ranks


def pairwise_mean_distance(points):
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    total = 0.0
    for i in range(n - 1):
        total += float(np.sqrt(((x[i + 1 :] - x[i]) ** 2).sum(axis=1)).sum())
    return total / (n * (n - 1) / 2)
