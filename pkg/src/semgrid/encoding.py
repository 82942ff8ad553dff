"""Class-weighted argmax over per-cell label histograms."""

from __future__ import annotations

from collections.abc import Iterable, Mapping

import numpy as np

from . import taxonomy
from .taxonomy import NUM_BINS, NUM_CLASSES, UNLABELED


def _as_histogram(histogram) -> np.ndarray:
    if isinstance(histogram, Mapping):
        h = np.zeros(NUM_BINS, dtype=np.int64)
        for key, count in histogram.items():
            k = taxonomy.class_index(key) if isinstance(key, str) else int(key)
            h[taxonomy.UNLABELED_BIN if k == UNLABELED else k] += count
        return h
    h = np.asarray(histogram, dtype=np.int64)
    if h.shape[-1] != NUM_BINS:
        raise ValueError(f"histogram needs {NUM_BINS} bins, got {h.shape[-1]}")
    return h


def encode_cell(histogram) -> int:
    """ClassId with the highest ``weight * count``; ties go to the lower id.

    ``histogram`` is either a 13-bin array (unlabeled last) or a mapping from
    ClassId / class name to count. Cells without weighted evidence are
    unlabeled.
    """
    h = _as_histogram(histogram)
    if (h < 0).any():
        raise ValueError("histogram counts must be non-negative")
    scores = h[:NUM_CLASSES] * taxonomy.weights()[:NUM_CLASSES]
    best = int(np.argmax(scores))
    return best if scores[best] > 0 else UNLABELED


def encode_histograms(histograms: np.ndarray) -> np.ndarray:
    """Vectorized :func:`encode_cell` over an ``(..., 13)`` array -> uint8."""
    h = np.asarray(histograms)
    scores = h[..., :NUM_CLASSES].astype(np.int64) * taxonomy.weights()[:NUM_CLASSES]
    best = np.argmax(scores, axis=-1)
    top = np.take_along_axis(scores, best[..., None], axis=-1)[..., 0]
    return np.where(top > 0, best, UNLABELED).astype(np.uint8)


def encode_grid(grid) -> np.ndarray:
    """Semantic grid (uint8, 255 = unlabeled) from a grid or raw histogram array."""
    hist = grid.label_histogram if hasattr(grid, "label_histogram") else grid
    return encode_histograms(hist)


def label_counts(labels: np.ndarray) -> np.ndarray:
    """Cell counts per class, unlabeled last (13 entries)."""
    return np.bincount(taxonomy.to_bins(np.asarray(labels)).reshape(-1), minlength=NUM_BINS)


def label_distribution(grids: Iterable[np.ndarray]) -> dict[str, float]:
    """Fraction of cells per class over a collection of semantic grids."""
    total = np.zeros(NUM_BINS, dtype=np.int64)
    shape = None
    for g in grids:
        g = np.asarray(g)
        if shape is None:
            shape = g.shape
        elif g.shape != shape:
            raise ValueError(f"grid shape {g.shape} differs from {shape}")
        total += label_counts(g)
    if shape is None:
        raise ValueError("label_distribution needs at least one grid")
    frac = total / total.sum()
    names = taxonomy.CLASS_NAMES + ("unlabeled",)
    return {name: float(f) for name, f in zip(names, frac)}
