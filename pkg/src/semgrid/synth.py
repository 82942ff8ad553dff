"""Synthetic street scenes and brute-force reference implementations.

The references here deliberately avoid the production code paths: the ray
traversal walks cartesian cells one by one (Amanatides & Woo stepping) and
the encoder scans weighted scores in plain Python. They are test oracles and
favour obviousness over speed.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import GridSpec
from .kitti_io import PointCloud

# Raw SemanticKITTI ids used for synthetic objects.
RAW = {
    "road": 40,
    "sidewalk": 48,
    "terrain": 72,
    "building": 50,
    "car": 10,
    "moving-car": 252,
    "person": 30,
    "moving-person": 254,
    "pole": 80,
    "vegetation": 70,
    "trunk": 71,
}

_INTENSITY = {40: 0.15, 48: 0.3, 72: 0.45, 50: 0.35, 10: 0.6, 252: 0.6, 30: 0.25, 254: 0.25, 80: 0.5, 70: 0.4, 71: 0.3}


@dataclass(frozen=True)
class Box:
    """Axis-aligned box standing on the ground."""

    center: tuple[float, float]
    extent: tuple[float, float, float]  # length along x, width along y, height
    raw_label: int = RAW["car"]

    def __post_init__(self):
        if min(self.extent) <= 0:
            raise ValueError(f"degenerate box extent {self.extent}")


@dataclass(frozen=True)
class Pole:
    position: tuple[float, float]
    radius: float = 0.15
    height: float = 5.0
    raw_label: int = RAW["pole"]

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise ValueError("pole radius and height must be positive")


DEFAULT_RINGS = (3.5, 4.5, 5.5, 7.0, 8.5, 10.0, 12.0, 14.5, 17.5, 21.0, 25.0, 30.0, 36.0, 43.0)
DEFAULT_ELEVATIONS = (-1.5, -1.0, 0.0, 1.0, 2.0)


@dataclass(frozen=True)
class SceneParams:
    """Sensor and scene description.

    Downward beams are placed so that they hit the flat ground at
    ``ring_radii``; ``elevations_deg`` adds beams at fixed elevations (near or
    above the horizon) that only return from far ground or obstacles.
    ``road_half_width`` splits ground labels into road / sidewalk / terrain.
    """

    seed: int = 0
    sensor_height: float = 1.73
    ring_radii: tuple[float, ...] = DEFAULT_RINGS
    elevations_deg: tuple[float, ...] = DEFAULT_ELEVATIONS
    azimuth_count: int = 2048
    azimuth_offset: float | None = None  # fraction of one azimuth step; None = from seed
    boxes: tuple[Box, ...] = ()
    poles: tuple[Pole, ...] = ()
    ground_label: int | None = None  # fixed raw label for all ground, else by lateral band
    road_half_width: float = 6.0
    sidewalk_width: float = 3.0
    max_return_range: float = 150.0
    intensity_noise: float = 0.05

    def __post_init__(self):
        if self.azimuth_count < 1:
            raise ValueError("azimuth_count must be >= 1")
        if any(r <= 0 for r in self.ring_radii):
            raise ValueError("ring radii must be positive")

    @property
    def ground_z(self) -> float:
        return -self.sensor_height

    def elevations(self) -> np.ndarray:
        rings = [-math.atan2(self.sensor_height, r) for r in self.ring_radii]
        return np.array(rings + [math.radians(e) for e in self.elevations_deg])


def scene_rng(seed: int) -> np.random.Generator:
    """Counter-based generator keyed on the seed."""
    return np.random.Generator(np.random.Philox(key=seed))


def random_street(seed: int, **overrides) -> SceneParams:
    """Street canyon along x: building rows with gaps, parked and moving cars, poles."""
    rng = scene_rng(seed)
    boxes = []
    half_road = float(rng.uniform(4.5, 7.0))
    sidewalk = float(rng.uniform(2.0, 4.0))
    for side in (-1.0, 1.0):
        front = half_road + sidewalk + float(rng.uniform(0.0, 2.0))
        x = -58.0 + float(rng.uniform(0.0, 6.0))
        while x < 58.0:
            length = float(rng.uniform(8.0, 22.0))
            depth = float(rng.uniform(6.0, 12.0))
            boxes.append(Box((x + length / 2, side * (front + depth / 2)), (length, depth, float(rng.uniform(6.0, 15.0))), RAW["building"]))
            x += length + float(rng.uniform(2.0, 8.0))
    for _ in range(int(rng.integers(3, 9))):
        # Side lanes only: the sensor drives along y = 0.
        side = 1.0 if rng.random() < 0.5 else -1.0
        lateral = side * float(rng.uniform(2.0, half_road - 1.0))
        along = float(rng.uniform(-45.0, 45.0))
        label = RAW["moving-car"] if rng.random() < 0.4 else RAW["car"]
        boxes.append(Box((along, lateral), (float(rng.uniform(3.8, 5.0)), float(rng.uniform(1.7, 2.0)), float(rng.uniform(1.4, 1.9))), label))
    for _ in range(int(rng.integers(0, 4))):
        side = 1.0 if rng.random() < 0.5 else -1.0
        pos = (float(rng.uniform(-40, 40)), side * (half_road + float(rng.uniform(0.5, sidewalk - 0.3))))
        label = RAW["moving-person"] if rng.random() < 0.5 else RAW["person"]
        boxes.append(Box(pos, (0.6, 0.6, 1.75), label))
    poles = []
    for _ in range(int(rng.integers(2, 8))):
        side = 1.0 if rng.random() < 0.5 else -1.0
        pos = (float(rng.uniform(-45, 45)), side * (half_road + float(rng.uniform(0.3, sidewalk - 0.2))))
        kind = "pole" if rng.random() < 0.6 else "trunk"
        poles.append(Pole(pos, float(rng.uniform(0.08, 0.25)), float(rng.uniform(3.0, 8.0)), RAW[kind]))
    params = SceneParams(
        seed=seed,
        boxes=tuple(boxes),
        poles=tuple(poles),
        road_half_width=half_road,
        sidewalk_width=sidewalk,
    )
    return replace(params, **overrides)


@dataclass
class Scene:
    cloud: PointCloud
    hit_object: np.ndarray  # per point: -1 ground, else index into boxes + poles
    params: SceneParams

    def cell_truth(self, spec: GridSpec = GridSpec()) -> dict[tuple[int, int], Counter]:
        """Raw-label counts per occupied cell, by plain per-point floor division."""
        truth: dict[tuple[int, int], Counter] = {}
        for (x, y, _), raw in zip(self.cloud.xyz.tolist(), self.cloud.semantic.tolist()):
            col = math.floor(x / spec.cell_size + spec.width / 2)
            row = math.floor(spec.height / 2 - y / spec.cell_size)
            if 0 <= col < spec.width and 0 <= row < spec.height:
                truth.setdefault((col, row), Counter())[raw] += 1
        return truth


def _box_hits(o_dir: np.ndarray, box: Box, ground_z: float) -> np.ndarray:
    """Entry distance of unit rays from the origin into an AABB (inf = miss)."""
    cx, cy = box.center
    lx, ly, h = box.extent
    lo = np.array([cx - lx / 2, cy - ly / 2, ground_z])
    hi = np.array([cx + lx / 2, cy + ly / 2, ground_z + h])
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = lo / o_dir
        t2 = hi / o_dir
    tmin = np.nanmax(np.minimum(t1, t2), axis=1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=1)
    hit = (tmax >= tmin) & (tmax > 0)
    return np.where(hit, np.maximum(tmin, 0.0), np.inf)


def _pole_hits(o_dir: np.ndarray, pole: Pole, ground_z: float) -> np.ndarray:
    px, py = pole.position
    dx, dy, dz = o_dir[:, 0], o_dir[:, 1], o_dir[:, 2]
    a = dx * dx + dy * dy
    b = -2.0 * (dx * px + dy * py)
    c = px * px + py * py - pole.radius**2
    disc = b * b - 4 * a * c
    with np.errstate(invalid="ignore", divide="ignore"):
        t = (-b - np.sqrt(disc)) / (2 * a)
    z = t * dz
    ok = (disc >= 0) & (t > 0) & (z >= ground_z) & (z <= ground_z + pole.height)
    return np.where(ok, t, np.inf)


def generate_scene(params: SceneParams) -> Scene:
    """Cast every beam at every azimuth and keep the first hit."""
    rng = scene_rng(params.seed)
    offset = params.azimuth_offset
    if offset is None:
        offset = float(rng.uniform(0.05, 0.95))
    step = 2 * math.pi / params.azimuth_count
    az = -math.pi + (np.arange(params.azimuth_count) + offset) * step
    el = params.elevations()
    az_g, el_g = np.meshgrid(az, el, indexing="ij")
    az_g, el_g = az_g.reshape(-1), el_g.reshape(-1)
    dirs = np.stack([np.cos(el_g) * np.cos(az_g), np.cos(el_g) * np.sin(az_g), np.sin(el_g)], axis=1)

    gz = params.ground_z
    with np.errstate(divide="ignore"):
        t_ground = np.where(dirs[:, 2] < 0, gz / dirs[:, 2], np.inf)
    best_t = t_ground
    best_obj = np.full(len(dirs), -1)
    objects = list(params.boxes) + list(params.poles)
    for k, obj in enumerate(objects):
        t = _box_hits(dirs, obj, gz) if isinstance(obj, Box) else _pole_hits(dirs, obj, gz)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_obj = np.where(closer, k, best_obj)
    keep = best_t <= params.max_return_range
    pts = dirs[keep] * best_t[keep, None]
    obj = best_obj[keep]
    labels = np.empty(len(pts), dtype=np.uint16)
    ground = obj < 0
    if params.ground_label is not None:
        labels[ground] = params.ground_label
    else:
        lateral = np.abs(pts[ground, 1])
        labels[ground] = np.select(
            [lateral < params.road_half_width, lateral < params.road_half_width + params.sidewalk_width],
            [RAW["road"], RAW["sidewalk"]],
            RAW["terrain"],
        )
    obj_labels = np.array([o.raw_label for o in objects], dtype=np.uint16)
    labels[~ground] = obj_labels[obj[~ground]]
    base = np.array([_INTENSITY.get(int(v), 0.3) for v in labels])
    intensity = np.clip(base + rng.uniform(-params.intensity_noise, params.intensity_noise, len(pts)), 0.0, 1.0)
    cloud = PointCloud.from_arrays(pts, intensity, labels)
    return Scene(cloud, obj, params)


def _shifted(box, dx: float):
    if isinstance(box, Box):
        return replace(box, center=(box.center[0] - dx, box.center[1]))
    return replace(box, position=(box.position[0] - dx, box.position[1]))


def street_sequence(seed: int, n_scans: int = 5, spacing: float = 1.0, speed: float = 3.0, **overrides):
    """Sensor driving along +x through one street; moving objects advance too.

    Returns:
        ``(scenes, poses)``; scan ``k`` is taken at world x = ``k * spacing``
        and every object with a moving label has moved ``k * speed`` meters
        along x by then.
    """
    from .kitti_io import Pose
    from .taxonomy import MOVING_IDS

    world = random_street(seed, **overrides)
    scenes, poses = [], []
    for k in range(n_scans):
        origin = k * spacing
        boxes = tuple(
            _shifted(b, origin - (k * speed if b.raw_label in MOVING_IDS else 0.0)) for b in world.boxes
        )
        poles = tuple(_shifted(p, origin) for p in world.poles)
        params = replace(world, seed=seed * 100_003 + k, boxes=boxes, poles=poles)
        scenes.append(generate_scene(params))
        poses.append(Pose.from_translation((origin, 0.0, 0.0)))
    return scenes, poses


# --- reference ray traversal -------------------------------------------------


def dda_reference_cast(cloud: PointCloud, spec: GridSpec = GridSpec(), min_range: float = 1.0, z_offset: float = 0.0):
    """Observability and lowest beam height by explicit cell traversal.

    Each ray visits the cells after the sensor cell up to, but excluding,
    the cell of its endpoint. A visited cell records the lowest beam height over
    the ray segment inside it. Rays whose endpoint lies outside the grid are
    followed until they leave it.

    Returns:
        ``(observability, min_observed_height)`` of shape ``(height, width)``;
        heights are NaN where nothing was traversed.
    """
    W, H, cs = spec.width, spec.height, spec.cell_size
    pts = np.asarray(cloud.xyz, dtype=np.float64)
    r = np.hypot(pts[:, 0], pts[:, 1])
    pts = pts[r > min_range]
    # Continuous cell coordinates: u along columns, v along rows.
    u0, v0 = W / 2.0, H / 2.0
    du = pts[:, 0] / cs
    dv = -pts[:, 1] / cs
    dz = pts[:, 2]
    n = len(pts)
    col = np.full(n, math.floor(u0), dtype=np.int64)
    row = np.full(n, math.floor(v0), dtype=np.int64)
    end_col = np.floor(u0 + du).astype(np.int64)
    end_row = np.floor(v0 + dv).astype(np.int64)
    step_c = np.where(du > 0, 1, -1)
    step_r = np.where(dv > 0, 1, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        next_c = np.where(du > 0, col + 1 - u0, u0 - col)
        next_r = np.where(dv > 0, row + 1 - v0, v0 - row)
        t_max_c = np.where(du != 0, next_c / np.abs(du), np.inf)
        t_max_r = np.where(dv != 0, next_r / np.abs(dv), np.inf)
        t_delta_c = np.where(du != 0, 1.0 / np.abs(du), np.inf)
        t_delta_r = np.where(dv != 0, 1.0 / np.abs(dv), np.inf)

    obs = np.zeros(W * H, dtype=np.int64)
    low = np.full(W * H, np.inf)
    t_prev = np.zeros(n)  # ray parameter where the current cell was entered
    active = np.arange(n)
    first = True
    while active.size:
        at_origin = first  # the ray starts in the sensor cell, it does not cross it
        first = False
        c, rr = col[active], row[active]
        inside = (c >= 0) & (c < W) & (rr >= 0) & (rr < H)
        arrived = (c == end_col[active]) & (rr == end_row[active])
        moving_on = inside & ~arrived
        record = np.zeros_like(moving_on) if at_origin else moving_on
        if record.any():
            a = active[record]
            t_exit = np.minimum(np.minimum(t_max_c[a], t_max_r[a]), 1.0)
            # Linear beam from the sensor at height 0: lowest point in the cell
            # is at entry (rising beam) or exit (falling beam).
            heights = np.minimum(dz[a] * t_exit, dz[a] * t_prev[a])
            flat = row[a] * W + col[a]
            np.add.at(obs, flat, 1)
            np.minimum.at(low, flat, heights)
        # Stop at the endpoint cell or once the ray has left the grid.
        active = active[moving_on]
        if not active.size:
            break
        go_c = t_max_c[active] < t_max_r[active]
        ac, ar = active[go_c], active[~go_c]
        t_prev[ac] = t_max_c[ac]
        t_prev[ar] = t_max_r[ar]
        col[ac] += step_c[ac]
        t_max_c[ac] += t_delta_c[ac]
        row[ar] += step_r[ar]
        t_max_r[ar] += t_delta_r[ar]
        # Past the endpoint on both axes (numerical guard).
        done = t_prev[active] > 1.0
        active = active[~done]
    low = np.where(obs > 0, low + z_offset, np.nan)
    return obs.reshape(H, W), low.reshape(H, W)


def axis_ray_cloud(ranges=(3.0, 7.35, 12.0, 25.5, 40.0, 54.0), heights=(-1.7, -0.4, 0.6)) -> PointCloud:
    """Endpoints on the four half-axes, one per (range, height) pair."""
    pts = [
        (dx * r, dy * r, z)
        for r in ranges
        for z in heights
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
    ]
    return PointCloud.from_arrays(np.array(pts, dtype=np.float32))


# --- reference encoder -------------------------------------------------------

_BRUTE_CLASSES = [
    ("vehicle", 5),
    ("person", 5),
    ("two-wheel", 5),
    ("rider", 5),
    ("road", 1),
    ("sidewalk", 1),
    ("other-ground", 1),
    ("building", 1),
    ("object", 1),
    ("vegetation", 1),
    ("trunk", 1),
    ("terrain", 1),
    ("unlabeled", 0),
]


def brute_force_encode(histogram) -> int:
    """Literal weighted argmax over the 13 bins; 255 when no score is positive."""
    if isinstance(histogram, dict):
        names = [name for name, _ in _BRUTE_CLASSES]
        counts = [0] * len(_BRUTE_CLASSES)
        for key, value in histogram.items():
            if isinstance(key, str):
                counts[names.index(key)] += value
            elif key == 255:
                counts[12] += value
            else:
                counts[key] += value
    else:
        counts = [int(v) for v in histogram]
    best, best_score = 255, 0
    for k, (_, w) in enumerate(_BRUTE_CLASSES):
        score = w * counts[k]
        if score > best_score:
            best, best_score = (k if k < 12 else 255), score
    return best


# --- comparison helpers ------------------------------------------------------


def _dilate(mask: np.ndarray) -> np.ndarray:
    padded = np.pad(mask, 1)
    out = np.zeros_like(mask)
    h, w = mask.shape
    for i in range(3):
        for j in range(3):
            out |= padded[i : i + h, j : j + w]
    return out


def _neighbourhood_range(values: np.ndarray, valid: np.ndarray):
    """Min and max of the valid values in each 3x3 neighbourhood."""
    h, w = values.shape
    v = np.pad(np.where(valid, values, np.nan).astype(np.float64), 1, constant_values=np.nan)
    lo = np.full((h, w), np.inf)
    hi = np.full((h, w), -np.inf)
    for i in range(3):
        for j in range(3):
            window = v[i : i + h, j : j + w]
            lo = np.fmin(lo, window)
            hi = np.fmax(hi, window)
    return lo, hi


def _distance_to_range(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.maximum(np.maximum(lo - x, x - hi), 0.0)


@dataclass
class OracleComparison:
    agreement: float  # fraction of cells observed by either path that agree
    union_cells: int
    height_cells: int  # cells observed by both paths
    max_height_error: float
    mean_height_error: float  # plain per-cell difference, no positional slack
    exact_observed: int = field(default=0)  # union cells with identical counts

    def passed(self, min_agreement: float = 0.95, max_height_error: float = 0.15) -> bool:
        return self.agreement >= min_agreement and self.max_height_error <= max_height_error


def compare_observability(polar_obs, polar_low, dda_obs, dda_low) -> OracleComparison:
    """Compare two observability / min-height layer pairs with one cell of slack.

    A cell observed by one path agrees if the other path observes it or one
    of its eight neighbours. For cells both paths observe, the height error
    is the distance from one path's value to the span of the other path's
    values over the 3x3 neighbourhood, taking the better of both directions.
    """
    p_obs = np.asarray(polar_obs)
    d_obs = np.asarray(dda_obs)
    p_low = np.asarray(polar_low, dtype=np.float64)
    d_low = np.asarray(dda_low, dtype=np.float64)
    p = p_obs > 0
    d = d_obs > 0
    union = p | d
    agree = (p & _dilate(d)) | (d & _dilate(p))
    both = p & d
    d_lo, d_hi = _neighbourhood_range(d_low, d)
    p_lo, p_hi = _neighbourhood_range(p_low, p)
    err = np.minimum(_distance_to_range(p_low, d_lo, d_hi), _distance_to_range(d_low, p_lo, p_hi))[both]
    plain = np.abs(p_low - d_low)[both]
    n_union = int(union.sum())
    return OracleComparison(
        agreement=float(agree.sum() / n_union) if n_union else 1.0,
        union_cells=n_union,
        height_cells=int(both.sum()),
        max_height_error=float(err.max()) if err.size else 0.0,
        mean_height_error=float(plain.mean()) if plain.size else 0.0,
        exact_observed=int((p_obs[union] == d_obs[union]).sum()),
    )
