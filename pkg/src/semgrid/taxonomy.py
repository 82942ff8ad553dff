"""Label reduction from raw SemanticKITTI ids to the 12-class grid label set.

Raw ids first go through the dataset's standard 28 -> 19 learning map and are
then merged into the reduced classes below. Moving-object ids (252-259)
reduce through their static counterparts and additionally carry a moving
flag.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CLASS_NAMES = (
    "vehicle",
    "person",
    "two-wheel",
    "rider",
    "road",
    "sidewalk",
    "other-ground",
    "building",
    "object",
    "vegetation",
    "trunk",
    "terrain",
)
NUM_CLASSES = len(CLASS_NAMES)
UNLABELED = 255
# Histogram bin of unlabeled points: one past the last real class.
UNLABELED_BIN = NUM_CLASSES
NUM_BINS = NUM_CLASSES + 1
CLASS_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}

# Standard SemanticKITTI learning map: raw id -> name of the 19-class
# training label (None = ignored / unlabeled).
LEARNING_MAP = {
    0: None,  # unlabeled
    1: None,  # outlier
    10: "car",
    11: "bicycle",
    13: "other-vehicle",  # bus
    15: "motorcycle",
    16: "other-vehicle",  # on-rails
    18: "truck",
    20: "other-vehicle",
    30: "person",
    31: "bicyclist",
    32: "motorcyclist",
    40: "road",
    44: "parking",
    48: "sidewalk",
    49: "other-ground",
    50: "building",
    51: "fence",
    52: None,  # other-structure
    60: "road",  # lane-marking
    70: "vegetation",
    71: "trunk",
    72: "terrain",
    80: "pole",
    81: "traffic-sign",
    99: None,  # other-object
    252: "car",
    253: "bicyclist",
    254: "person",
    255: "motorcyclist",
    256: "other-vehicle",
    257: "other-vehicle",
    258: "truck",
    259: "other-vehicle",
}

# 19 training labels -> reduced class.
MERGE_MAP = {
    "car": "vehicle",
    "truck": "vehicle",
    "other-vehicle": "vehicle",
    "person": "person",
    "bicycle": "two-wheel",
    "motorcycle": "two-wheel",
    "bicyclist": "rider",
    "motorcyclist": "rider",
    "road": "road",
    "sidewalk": "sidewalk",
    "parking": "other-ground",
    "other-ground": "other-ground",
    "building": "building",
    "fence": "object",
    "pole": "object",
    "traffic-sign": "object",
    "vegetation": "vegetation",
    "trunk": "trunk",
    "terrain": "terrain",
}

MOVING_IDS = frozenset(range(252, 260))
# Moving raw id -> static raw id of the same object type.
STATIC_COUNTERPART = {252: 10, 253: 31, 254: 30, 255: 32, 256: 16, 257: 13, 258: 18, 259: 20}

TRAIN_SEQUENCES = ("00", "01", "02", "03", "04", "05", "06", "07", "09", "10")
EVAL_SEQUENCES = ("08",)

_WEIGHTS = np.ones(NUM_BINS, dtype=np.int64)
_WEIGHTS[[CLASS_INDEX[c] for c in ("vehicle", "person", "rider", "two-wheel")]] = 5
_WEIGHTS[UNLABELED_BIN] = 0
_WEIGHTS.flags.writeable = False


def _default_lookup() -> np.ndarray:
    table = np.full(1 << 16, UNLABELED, dtype=np.uint8)
    for raw, learning in LEARNING_MAP.items():
        if learning is not None:
            table[raw] = CLASS_INDEX[MERGE_MAP[learning]]
    return table


_LOOKUP = _default_lookup()
_LOOKUP.flags.writeable = False
_MOVING = np.zeros(1 << 16, dtype=bool)
_MOVING[list(MOVING_IDS)] = True
_MOVING.flags.writeable = False


def class_index(name: str) -> int:
    if name == "unlabeled":
        return UNLABELED
    try:
        return CLASS_INDEX[name]
    except KeyError:
        raise ValueError(f"unknown class name {name!r}") from None


def class_name(class_id: int) -> str:
    if class_id == UNLABELED:
        return "unlabeled"
    return CLASS_NAMES[class_id]


def reduce_label(raw_semantic: int) -> tuple[int, bool]:
    """Reduced ClassId and moving flag of one raw semantic id."""
    raw = int(raw_semantic) & 0xFFFF
    return int(_LOOKUP[raw]), bool(_MOVING[raw])


def is_moving(raw_semantic) -> np.ndarray:
    return _MOVING[np.asarray(raw_semantic, dtype=np.uint16)]


def reduce_labels(raw_semantic, table: np.ndarray | None = None) -> np.ndarray:
    """Vectorized reduction; returns uint8 ClassIds (255 = unlabeled)."""
    lut = _LOOKUP if table is None else table
    return lut[np.asarray(raw_semantic, dtype=np.uint16)]


def class_weight(class_id: int) -> int:
    if class_id == UNLABELED:
        return 0
    if not 0 <= class_id < NUM_CLASSES:
        raise ValueError(f"invalid class id {class_id}")
    return int(_WEIGHTS[class_id])


def weights() -> np.ndarray:
    """Weights indexed by histogram bin (unlabeled bin last)."""
    return _WEIGHTS


def to_bins(class_ids: np.ndarray) -> np.ndarray:
    """ClassId array -> histogram bin array (255 goes to the unlabeled bin)."""
    ids = np.asarray(class_ids)
    return np.where(ids == UNLABELED, UNLABELED_BIN, ids).astype(np.intp)


def split(sequence: str | int) -> str:
    """'train', 'eval' or 'excluded' for a sequence id."""
    seq = f"{int(sequence):02d}"
    if seq in TRAIN_SEQUENCES:
        return "train"
    if seq in EVAL_SEQUENCES:
        return "eval"
    return "excluded"


def load_override(path: str | Path) -> np.ndarray:
    """Lookup table with the default mapping patched by a YAML/JSON file.

    The file holds a flat mapping of raw semantic id to reduced class name,
    e.g. ``{52: building, 99: object}``; ``unlabeled`` is accepted as a name.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        mapping = json.loads(text)
    else:
        import yaml

        mapping = yaml.safe_load(text)
    if not isinstance(mapping, dict):
        raise ValueError(f"{path}: expected a mapping of raw id to class name")
    table = _LOOKUP.copy()
    for raw, name in mapping.items():
        raw = int(raw)
        if not 0 <= raw < (1 << 16):
            raise ValueError(f"{path}: raw id {raw} outside 16-bit range")
        table[raw] = class_index(str(name))
    table.flags.writeable = False
    return table
