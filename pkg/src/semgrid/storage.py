"""Binary grid file format (``.sgrd``).

Layout, all little-endian::

    magic        4s   b"SGRD"
    version      u16
    width        u32
    height       u32
    cell_size    f32  meters
    flags        u8   bit 0: dense ground truth
    layer_count  u8
    layer_count x (name 16s zero-padded ASCII, dtype u8: 0=f32 1=u8 2=u32)
    payloads     row-major, row 0 first, in header order

Undefined float cells hold a quiet NaN. Label layers use 255 for unlabeled.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SGRD"
VERSION = 1
FLAG_DENSE = 0x01

_HEADER = struct.Struct("<4sHIIfBB")
_LAYER = struct.Struct("<16sB")
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1"), 2: np.dtype("<u4")}
_CODES = {dt: code for code, dt in DTYPES.items()}

# In-memory layer names -> 16-byte on-disk names.
FILE_NAMES = {
    "intensity": "intensity",
    "min_detected_height": "min_det_height",
    "max_detected_height": "max_det_height",
    "observability": "observability",
    "min_observed_height": "min_obs_height",
    "detections": "detections",
    "label": "label",
}
LABEL_LAYER = "label"


class GridFileError(ValueError):
    pass


@dataclass
class GridFile:
    width: int
    height: int
    cell_size: float
    layers: dict[str, np.ndarray] = field(default_factory=dict)
    flags: int = 0
    version: int = VERSION

    @property
    def dense(self) -> bool:
        return bool(self.flags & FLAG_DENSE)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.layers[FILE_NAMES.get(name, name)]
        except KeyError:
            raise KeyError(f"grid file has no layer {name!r}; layers: {list(self.layers)}") from None

    def __contains__(self, name: str) -> bool:
        return FILE_NAMES.get(name, name) in self.layers


def _layer_dtype(a: np.ndarray) -> np.dtype:
    for dt in DTYPES.values():
        if a.dtype == dt or a.dtype == dt.newbyteorder("="):
            return dt
    raise GridFileError(f"unsupported layer dtype {a.dtype}; use float32, uint8 or uint32")


def encode(grid: GridFile) -> bytes:
    if len(grid.layers) > 255:
        raise GridFileError("at most 255 layers")
    parts = [_HEADER.pack(MAGIC, grid.version, grid.width, grid.height, grid.cell_size, grid.flags, len(grid.layers))]
    payloads = []
    for name, data in grid.layers.items():
        raw = name.encode("ascii")
        if len(raw) > 16:
            raise GridFileError(f"layer name {name!r} longer than 16 bytes")
        if data.shape != (grid.height, grid.width):
            raise GridFileError(f"layer {name!r} has shape {data.shape}, expected {(grid.height, grid.width)}")
        dt = _layer_dtype(data)
        parts.append(_LAYER.pack(raw, _CODES[dt]))
        payloads.append(np.ascontiguousarray(data, dtype=dt).tobytes())
    return b"".join(parts + payloads)


def _parse_header(buf: bytes):
    if len(buf) < _HEADER.size:
        raise GridFileError("truncated header")
    magic, version, width, height, cell_size, flags, count = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise GridFileError(f"bad magic {magic!r}")
    layers = []
    offset = _HEADER.size
    if len(buf) < offset + count * _LAYER.size:
        raise GridFileError("truncated layer table")
    for _ in range(count):
        raw, code = _LAYER.unpack_from(buf, offset)
        offset += _LAYER.size
        if code not in DTYPES:
            raise GridFileError(f"unknown dtype code {code}")
        layers.append((raw.rstrip(b"\0").decode("ascii"), DTYPES[code]))
    return version, width, height, cell_size, flags, layers, offset


def decode(buf: bytes) -> GridFile:
    version, width, height, cell_size, flags, table, offset = _parse_header(buf)
    n = width * height
    need = offset + sum(n * dt.itemsize for _, dt in table)
    if len(buf) != need:
        raise GridFileError(f"payload size {len(buf) - offset} does not match header ({need - offset})")
    layers = {}
    for name, dt in table:
        layers[name] = np.frombuffer(buf, dtype=dt, count=n, offset=offset).reshape(height, width).copy()
        offset += n * dt.itemsize
    return GridFile(width, height, cell_size, layers, flags, version)


def write_grid_file(path: str | os.PathLike, grid: GridFile) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode(grid)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def read_grid_file(path: str | os.PathLike) -> GridFile:
    path = Path(path)
    try:
        return decode(path.read_bytes())
    except GridFileError as exc:
        raise GridFileError(f"{path}: {exc}") from None


def read_layer(path: str | os.PathLike, name: str) -> np.ndarray:
    """Memory-map a single layer without reading the others."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(_HEADER.size + 255 * _LAYER.size)
    version, width, height, cell_size, flags, table, offset = _parse_header(head)
    name = FILE_NAMES.get(name, name)
    for layer, dt in table:
        if layer == name:
            return np.memmap(path, dtype=dt, mode="r", offset=offset, shape=(height, width))
        offset += width * height * dt.itemsize
    raise KeyError(f"{path}: no layer {name!r}")


def from_grid(grid, labels: np.ndarray | None = None, dense: bool = False, layers=None) -> GridFile:
    """GridFile holding the named layers of a MultiLayerGrid plus a label layer."""
    from .grid import INPUT_LAYERS

    spec = grid.spec
    out = GridFile(spec.width, spec.height, spec.cell_size, flags=FLAG_DENSE if dense else 0)
    for name in INPUT_LAYERS if layers is None else layers:
        data = getattr(grid, name)
        dt = np.float32 if data.dtype.kind == "f" else np.uint32
        out.layers[FILE_NAMES[name]] = np.asarray(data, dtype=dt)
    if labels is not None:
        out.layers[LABEL_LAYER] = np.asarray(labels, dtype=np.uint8)
    return out
