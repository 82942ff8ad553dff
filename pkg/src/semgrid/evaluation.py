"""Confusion matrices, IoU/mIoU and report rendering for semantic grids."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .taxonomy import CLASS_NAMES, NUM_CLASSES, UNLABELED

SPARSE = "sparse"
DENSE = "dense"
MODES = (SPARSE, DENSE)


class EvaluationError(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    """Cell counts indexed ``[gt_class, predicted_class]``.

    ``missed[k]`` counts cells of ground-truth class ``k`` predicted as
    unlabeled; they are false negatives of ``k`` and no class's false positive.
    """

    matrix: np.ndarray = field(default_factory=lambda: np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64))
    missed: np.ndarray = field(default_factory=lambda: np.zeros(NUM_CLASSES, dtype=np.int64))
    ignored: int = 0

    @property
    def counted(self) -> int:
        return int(self.matrix.sum() + self.missed.sum())

    @property
    def evaluated(self) -> int:
        return self.counted + self.ignored

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.matrix + other.matrix, self.missed + other.missed, self.ignored + other.ignored)

    def __iadd__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        self.matrix += other.matrix
        self.missed += other.missed
        self.ignored += other.ignored
        return self

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ConfusionMatrix)
            and np.array_equal(self.matrix, other.matrix)
            and np.array_equal(self.missed, other.missed)
            and self.ignored == other.ignored
        )

    def tp_fp_fn(self):
        tp = np.diag(self.matrix)
        fp = self.matrix.sum(axis=0) - tp
        fn = self.matrix.sum(axis=1) - tp + self.missed
        return tp, fp, fn


def accumulate(pred, gt, mode: str = SPARSE, observability=None, into: ConfusionMatrix | None = None) -> ConfusionMatrix:
    """Add one prediction/ground-truth pair to a confusion matrix.

    Cells whose ground truth is unlabeled are ignored; in dense mode cells
    with zero observability are ignored too.
    """
    if mode not in MODES:
        raise EvaluationError(f"unknown evaluation mode {mode!r}")
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise EvaluationError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
    keep = gt != UNLABELED
    if mode == DENSE:
        if observability is None:
            raise EvaluationError("dense evaluation needs an observability layer")
        observability = np.asarray(observability)
        if observability.shape != gt.shape:
            raise EvaluationError(f"observability shape {observability.shape} != {gt.shape}")
        keep &= observability > 0
    g = gt[keep].astype(np.int64)
    p = pred[keep].astype(np.int64)
    bad = (g >= NUM_CLASSES) | ((p >= NUM_CLASSES) & (p != UNLABELED)) | (p < 0)
    if bad.any():
        raise EvaluationError("label values must be class ids 0..11 or 255")
    cm = ConfusionMatrix() if into is None else into
    hit = p != UNLABELED
    cm.matrix += np.bincount(g[hit] * NUM_CLASSES + p[hit], minlength=NUM_CLASSES * NUM_CLASSES).reshape(
        NUM_CLASSES, NUM_CLASSES
    )
    cm.missed += np.bincount(g[~hit], minlength=NUM_CLASSES)
    cm.ignored += int(keep.size - keep.sum())
    return cm


def iou(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class IoU (0 where a class never occurs) and their mean over 12 classes."""
    tp, fp, fn = cm.tp_fp_fn()
    denom = tp + fp + fn
    per_class = np.divide(tp, denom, out=np.zeros(NUM_CLASSES), where=denom > 0)
    return per_class, float(per_class.sum() / NUM_CLASSES)


def results(cm: ConfusionMatrix, mode: str | None = None) -> dict:
    per_class, miou = iou(cm)
    out = {
        "miou": miou,
        "iou": {name: float(v) for name, v in zip(CLASS_NAMES, per_class)},
        "ignored": cm.ignored,
        "counted": cm.counted,
    }
    if mode is not None:
        out["mode"] = mode
    return out


def to_json(res: dict) -> str:
    return json.dumps(res, indent=2)


def format_table(res: dict, precision: int = 3) -> str:
    """Plain-text table: mIoU first, then classes in label-set order."""
    names = ["mIoU", *CLASS_NAMES]
    values = [res["miou"], *(res["iou"][n] for n in CLASS_NAMES)]
    width = max(len(n) for n in names)
    title = f"{res['mode'].capitalize()} Eval" if res.get("mode") else "Eval"
    lines = [title, "-" * (width + precision + 5)]
    lines += [f"{n:<{width}}  {v:.{precision}f}" for n, v in zip(names, values)]
    lines.append(f"{'ignored':<{width}}  {res['ignored']}")
    return "\n".join(lines)


def parse_table(text: str) -> dict[str, float]:
    """Inverse of :func:`format_table` for the metric rows."""
    out = {}
    for line in text.splitlines()[2:]:
        name, _, value = line.rpartition("  ")
        name = name.strip()
        if name and name != "ignored":
            out[name] = float(value)
    return out
