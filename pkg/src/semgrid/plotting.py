"""Image export of grid layers and report figures."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.image as mimage  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .taxonomy import CLASS_NAMES, NUM_CLASSES  # noqa: E402

# RGB per ClassId, close to the SemanticKITTI colors of the merged classes.
PALETTE = np.array(
    [
        (100, 150, 245),  # vehicle
        (255, 30, 30),  # person
        (100, 230, 245),  # two-wheel
        (255, 40, 200),  # rider
        (255, 0, 255),  # road
        (75, 0, 75),  # sidewalk
        (175, 0, 75),  # other-ground
        (255, 200, 0),  # building
        (255, 120, 50),  # object
        (0, 175, 0),  # vegetation
        (135, 60, 0),  # trunk
        (150, 240, 80),  # terrain
    ],
    dtype=np.uint8,
)
UNLABELED_COLOR = (0, 0, 0)


def render_float(layer: np.ndarray) -> np.ndarray:
    """Min-max normalized grayscale; NaN cells are black, constant layers mid-gray."""
    layer = np.asarray(layer, dtype=np.float64)
    finite = np.isfinite(layer)
    gray = np.zeros(layer.shape)
    if finite.any():
        lo, hi = layer[finite].min(), layer[finite].max()
        gray[finite] = 0.5 if hi == lo else (layer[finite] - lo) / (hi - lo)
    g = np.round(gray * 255).astype(np.uint8)
    return np.repeat(g[..., None], 3, axis=-1)


def render_labels(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    rgb = np.zeros(labels.shape + (3,), dtype=np.uint8)
    rgb[:] = UNLABELED_COLOR
    known = labels < NUM_CLASSES
    rgb[known] = PALETTE[labels[known]]
    return rgb


def render_layer(layer: np.ndarray, is_label: bool = False) -> np.ndarray:
    if is_label:
        return render_labels(layer)
    if layer.dtype.kind in "ui":
        return render_float(layer.astype(np.float64))
    return render_float(layer)


def save_image(path: str | Path, rgb: np.ndarray) -> None:
    """Write an RGB array as a PNG with one pixel per cell."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mimage.imsave(path, rgb)


def _legend_names():
    return list(CLASS_NAMES) + ["unlabeled"]


def plot_distribution(distributions: dict[str, dict[str, float]], path: str | Path) -> None:
    """Grouped bar chart of label fractions (log scale), one group per input."""
    names = _legend_names()
    fig, ax = plt.subplots(figsize=(9, 4))
    n = max(len(distributions), 1)
    width = 0.8 / n
    x = np.arange(len(names))
    for k, (title, dist) in enumerate(distributions.items()):
        values = [max(dist.get(c, 0.0) * 100, 1e-4) for c in names]
        ax.bar(x + (k - (n - 1) / 2) * width, values, width, label=title)
    ax.set_yscale("log")
    ax.set_ylabel("share of cells [%]")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=45, ha="right")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_iou(res: dict, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(8, 3.5))
    values = [res["iou"][c] for c in CLASS_NAMES]
    colors = PALETTE / 255.0
    ax.bar(np.arange(NUM_CLASSES), values, color=colors, edgecolor="k", linewidth=0.5)
    ax.axhline(res["miou"], color="k", linestyle="--", linewidth=1, label=f"mIoU {res['miou']:.3f}")
    ax.set_ylim(0, 1)
    ax.set_ylabel("IoU")
    ax.set_xticks(np.arange(NUM_CLASSES))
    ax.set_xticklabels(CLASS_NAMES, rotation=45, ha="right")
    ax.legend(frameon=False, loc="upper right")
    if res.get("mode"):
        ax.set_title(f"{res['mode'].capitalize()} Eval")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

