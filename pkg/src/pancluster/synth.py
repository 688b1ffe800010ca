"""Seeded generator of small LiDAR-like scenes with panoptic ground truth.

Scenes use a micro-taxonomy: road and vegetation are stuff; car, person,
bicycle, bicyclist, motorcycle and motorcyclist are things. Objects are
oriented boxes filled with points plus clipped Gaussian jitter, standing on a
flat road. ``generate(config, index)`` is a pure function of the config seed
and the index.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import ClassTaxonomy, PanopticLabel, RiderRule, Scene

UNLABELED, ROAD, VEGETATION = 0, 1, 2
CAR, PERSON, BICYCLE, BICYCLIST, MOTORCYCLE, MOTORCYCLIST = 3, 4, 5, 6, 7, 8

CLASS_NAMES = {
    UNLABELED: "unlabeled", ROAD: "road", VEGETATION: "vegetation", CAR: "car",
    PERSON: "person", BICYCLE: "bicycle", BICYCLIST: "bicyclist",
    MOTORCYCLE: "motorcycle", MOTORCYCLIST: "motorcyclist",
}


def micro_taxonomy(**overrides) -> ClassTaxonomy:
    things = (CAR, PERSON, BICYCLE, BICYCLIST, MOTORCYCLE, MOTORCYCLIST)
    kwargs = dict(
        num_classes=9,
        stuff_ids={ROAD, VEGETATION},
        thing_ids=set(things),
        ignore_id=UNLABELED,
        class_names=dict(CLASS_NAMES),
        max_extent={CAR: 6.0, PERSON: 2.0, BICYCLE: 2.5, BICYCLIST: 2.5,
                    MOTORCYCLE: 3.0, MOTORCYCLIST: 3.0},
        merge_eps={CAR: 2.0, PERSON: 0.5, BICYCLE: 1.0, BICYCLIST: 1.0,
                   MOTORCYCLE: 1.0, MOTORCYCLIST: 1.0},
        rider_rules=(RiderRule(BICYCLIST, BICYCLE, MOTORCYCLE, MOTORCYCLIST, 2.0),),
    )
    kwargs.update(overrides)
    return ClassTaxonomy(**kwargs)


@dataclass(frozen=True)
class ObjectSpec:
    """Box half-extents (m), point-count range and remission of one class."""

    half_extent: tuple[float, float, float]
    points: tuple[int, int]
    remission: float


DEFAULT_OBJECTS = {
    CAR: ObjectSpec((2.0, 0.9, 0.75), (60, 100), 0.9),
    PERSON: ObjectSpec((0.3, 0.25, 0.85), (25, 45), 0.3),
    BICYCLE: ObjectSpec((0.85, 0.2, 0.5), (25, 45), 0.5),
    BICYCLIST: ObjectSpec((0.35, 0.3, 0.85), (25, 45), 0.4),
    MOTORCYCLE: ObjectSpec((1.0, 0.35, 0.6), (30, 50), 0.6),
    MOTORCYCLIST: ObjectSpec((0.4, 0.35, 0.85), (25, 45), 0.2),
}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    num_points: tuple[int, int] = (300, 500)
    num_objects: tuple[int, int] = (2, 5)
    class_mix: dict = field(default_factory=lambda: {CAR: 1.0, PERSON: 1.0, BICYCLE: 1.0,
                                                     MOTORCYCLE: 1.0})
    objects: dict = field(default_factory=lambda: dict(DEFAULT_OBJECTS))
    scene_radius: float = 50.0
    layout: str = "uniform"
    placement_radius: float = 20.0
    min_separation: float = 6.0
    slot_grid: tuple[int, int] = (4, 4)
    slot_spacing: float = 8.0
    slot_jitter: float = 0.5
    background_blobs: tuple[int, int] = (0, 2)
    blob_points: tuple[int, int] = (20, 40)
    road_remission: float = 0.05
    vegetation_remission: float = 0.75
    remission_sigma: float = 0.02
    noise_sigma: float = 0.03
    occlusion: float = 0.0
    max_retries: int = 200

    def __post_init__(self):
        if self.scene_radius <= 0:
            raise ValueError("scene_radius must be positive")
        if self.num_objects[0] < 0 or self.num_objects[0] > self.num_objects[1]:
            raise ValueError("num_objects must be a valid (min, max) range")
        if self.layout not in ("uniform", "slots"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if not 0 <= self.occlusion < 1:
            raise ValueError("occlusion must lie in [0, 1)")
        if self.num_objects[1] and not self.class_mix:
            raise ValueError("class_mix is empty")


class PlacementError(RuntimeError):
    pass


def _slot_anchors(config: SynthConfig) -> np.ndarray:
    nx, ny = config.slot_grid
    xs = (np.arange(nx) - (nx - 1) / 2) * config.slot_spacing
    ys = (np.arange(ny) - (ny - 1) / 2) * config.slot_spacing
    return np.array([(x, y) for x in xs for y in ys])


def _place(config: SynthConfig, rng: np.random.Generator, count: int) -> np.ndarray:
    if count == 0:
        return np.zeros((0, 2))
    if config.layout == "slots":
        anchors = _slot_anchors(config)
        if count > len(anchors):
            raise PlacementError(f"{count} objects do not fit {len(anchors)} slots")
        chosen = anchors[rng.choice(len(anchors), size=count, replace=False)]
        return chosen + rng.normal(scale=config.slot_jitter, size=chosen.shape)
    centers = []
    for _ in range(config.max_retries):
        r = config.placement_radius * np.sqrt(rng.random())
        a = rng.uniform(0, 2 * np.pi)
        c = np.array([r * np.cos(a), r * np.sin(a)])
        if all(np.linalg.norm(c - o) >= config.min_separation for o in centers):
            centers.append(c)
            if len(centers) == count:
                return np.array(centers)
    raise PlacementError(f"could not place {count} objects after {config.max_retries} tries")


def _clipped_noise(rng, sigma, size):
    noise = rng.normal(scale=sigma, size=size)
    norms = np.linalg.norm(noise, axis=1, keepdims=True)
    limit = 3 * sigma
    scale = np.where(norms > limit, limit / np.maximum(norms, 1e-300), 1.0)
    return noise * scale


def _object_points(spec: ObjectSpec, center_xy, rng, config: SynthConfig) -> np.ndarray:
    n = int(rng.integers(spec.points[0], spec.points[1] + 1))
    h = np.array(spec.half_extent)
    local = rng.uniform(-1, 1, size=(n, 3)) * h
    yaw = rng.uniform(0, np.pi)
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    center = np.array([center_xy[0], center_xy[1], h[2]])
    xyz = local @ rot.T + center + _clipped_noise(rng, config.noise_sigma, (n, 3))
    if config.occlusion > 0:
        # drop points on the side facing away from the sensor
        radial = center[:2] / max(np.linalg.norm(center[:2]), 1e-9)
        away = (xyz[:, :2] - center[:2]) @ radial > 0
        drop = away & (rng.random(n) < config.occlusion)
        if np.sum(~drop) >= 2:
            xyz = xyz[~drop]
    rem = np.clip(spec.remission + rng.normal(scale=config.remission_sigma, size=len(xyz)), 0, 1)
    return np.hstack([xyz, rem[:, None]])


def generate(config: SynthConfig, index: int) -> Scene:
    rng = np.random.default_rng([config.seed, index])
    n_obj = int(rng.integers(config.num_objects[0], config.num_objects[1] + 1))
    classes = sorted(config.class_mix)
    probs = np.array([config.class_mix[c] for c in classes], dtype=float)
    obj_classes = rng.choice(classes, size=n_obj, p=probs / probs.sum()) if n_obj else []
    centers = _place(config, rng, n_obj)

    chunks, sem, inst = [], [], []
    for k, (cls, xy) in enumerate(zip(obj_classes, centers)):
        pts = _object_points(config.objects[int(cls)], xy, rng, config)
        chunks.append(pts)
        sem.append(np.full(len(pts), int(cls)))
        inst.append(np.full(len(pts), k + 1))

    for _ in range(int(rng.integers(config.background_blobs[0], config.background_blobs[1] + 1))):
        m = int(rng.integers(config.blob_points[0], config.blob_points[1] + 1))
        r = rng.uniform(0.6, 0.9) * config.scene_radius
        a = rng.uniform(0, 2 * np.pi)
        center = np.array([r * np.cos(a), r * np.sin(a), 1.5])
        xyz = center + rng.normal(scale=1.0, size=(m, 3))
        xyz[:, 2] = np.abs(xyz[:, 2])
        rem = np.clip(config.vegetation_remission
                      + rng.normal(scale=config.remission_sigma, size=m), 0, 1)
        chunks.append(np.hstack([xyz, rem[:, None]]))
        sem.append(np.full(m, VEGETATION))
        inst.append(np.zeros(m, dtype=int))

    used = sum(len(c) for c in chunks)
    total = int(rng.integers(config.num_points[0], config.num_points[1] + 1))
    n_road = max(total - used, 16)
    r = config.scene_radius * np.sqrt(rng.random(n_road))
    a = rng.uniform(0, 2 * np.pi, n_road)
    road = np.column_stack([r * np.cos(a), r * np.sin(a),
                            rng.normal(scale=config.noise_sigma, size=n_road)])
    rem = np.clip(config.road_remission + rng.normal(scale=config.remission_sigma, size=n_road), 0, 1)
    chunks.append(np.hstack([road, rem[:, None]]))
    sem.append(np.full(n_road, ROAD))
    inst.append(np.zeros(n_road, dtype=int))

    return Scene(np.vstack(chunks), np.concatenate(sem), np.concatenate(inst),
                 taxonomy=micro_taxonomy())


def scene_stream(config: SynthConfig, start: int = 0):
    """Endless deterministic stream ``generate(config, start), start+1, ...``."""
    index = start
    while True:
        yield generate(config, index)
        index += 1


def _axis_cut(xyz: np.ndarray, parts: int) -> np.ndarray:
    """Split points into ``parts`` equal-count slabs along their widest axis."""
    centered = xyz - xyz.mean(axis=0)
    axis = np.argmax(np.ptp(centered, axis=0)) if len(xyz) else 0
    order = np.argsort(centered[:, axis], kind="stable")
    piece = np.empty(len(xyz), dtype=np.int64)
    piece[order] = np.arange(len(xyz)) * parts // max(len(xyz), 1)
    return piece


def make_fragmented(scene: Scene, parts: int) -> PanopticLabel:
    """Ground truth with every instance cut into ``parts`` spatial pieces."""
    if parts < 1:
        raise ValueError("parts must be >= 1")
    inst = scene.inst_gt.copy()
    if parts > 1:
        next_id = 1
        out = np.zeros_like(inst)
        for iid in scene.instance_ids:
            idx = np.flatnonzero(scene.inst_gt == iid)
            piece = _axis_cut(scene.points[idx, :3], parts)
            out[idx] = next_id + piece
            next_id += parts
        inst = out
    return PanopticLabel(scene.sem_gt, inst, scene.taxonomy)


def make_merged(scene: Scene) -> PanopticLabel:
    """Ground truth where same-class instances are paired up under one id.

    Within each class, instances are taken in ascending id order and merged
    two at a time; an odd one out keeps its own id.
    """
    inst = scene.inst_gt.copy()
    for cls in np.unique(scene.sem_gt[scene.inst_gt > 0]):
        ids = np.unique(scene.inst_gt[(scene.inst_gt > 0) & (scene.sem_gt == cls)])
        for a, b in zip(ids[0::2], ids[1::2]):
            inst[scene.inst_gt == b] = a
    return PanopticLabel(scene.sem_gt, inst, scene.taxonomy)


def with_seed(config: SynthConfig, seed: int) -> SynthConfig:
    return replace(config, seed=seed)


def toy_config(seed: int = 0, **overrides) -> SynthConfig:
    """Scenes for the toy training runs: objects on a 3x3 grid of slots
    inside a 14 m disc, so a small per-point network can key instances on
    position."""
    kwargs = dict(seed=seed, layout="slots", slot_grid=(3, 3), scene_radius=14.0)
    kwargs.update(overrides)
    return SynthConfig(**kwargs)
