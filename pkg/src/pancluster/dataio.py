"""Binary codecs for point clouds, labels, panoptic predictions and scenes.

* ``.bin`` point files: consecutive little-endian float32 ``x, y, z, remission``.
* ``.label`` files: one little-endian uint32 per point, semantic id in the
  lower 16 bits and instance id in the upper 16 bits. Panoptic predictions
  use the same layout.
* ``.scn`` scene files (this package's container), all little-endian::

      offset  size  field
      0       4     magic b"PSCN"
      4       2     uint16 format version (1)
      6       2     uint16 reserved, 0
      8       8     uint64 point count n
      16      32n   float64 x, y, z, remission per point
      16+32n  4n    uint32 packed labels (same layout as .label)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import PanopticLabel, Scene

SCENE_MAGIC = b"PSCN"
SCENE_VERSION = 1
_SCENE_HEADER = struct.Struct("<4sHHQ")


class FormatError(ValueError):
    pass


def read_velodyne_bin(path) -> np.ndarray:
    """Return an ``(n, 4)`` float32 array of ``x, y, z, remission``."""
    data = Path(path).read_bytes()
    if len(data) % 16:
        whole = len(data) - len(data) % 16
        raise FormatError(f"{path}: truncated point record at byte offset {whole}")
    return np.frombuffer(data, dtype="<f4").reshape(-1, 4).astype(np.float32)


def write_velodyne_bin(path, points) -> None:
    pts = np.asarray(points, dtype="<f4")
    if pts.ndim != 2 or pts.shape[1] != 4:
        raise ValueError("points must have shape (n, 4)")
    Path(path).write_bytes(np.ascontiguousarray(pts).tobytes())


def pack_labels(sem, inst) -> np.ndarray:
    sem = np.asarray(sem, dtype=np.int64)
    inst = np.asarray(inst, dtype=np.int64)
    if np.any((sem < 0) | (sem >= 1 << 16)):
        raise ValueError("semantic id outside 0..65535")
    if np.any((inst < 0) | (inst >= 1 << 16)):
        raise ValueError("instance id outside 0..65535")
    return (sem | (inst << 16)).astype("<u4")


def unpack_labels(words) -> tuple[np.ndarray, np.ndarray]:
    words = np.asarray(words, dtype=np.uint32)
    return (words & 0xFFFF).astype(np.int64), (words >> 16).astype(np.int64)


def read_labels(path, num_points: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) % 4:
        raise FormatError(f"{path}: truncated label word at byte offset {len(data) - len(data) % 4}")
    words = np.frombuffer(data, dtype="<u4")
    if num_points is not None and len(words) != num_points:
        raise FormatError(f"{path}: {len(words)} labels for {num_points} points")
    return unpack_labels(words)


def write_labels(path, sem, inst) -> None:
    Path(path).write_bytes(pack_labels(sem, inst).tobytes())


def write_panoptic(path, label: PanopticLabel) -> None:
    write_labels(path, label.sem, label.inst)


def read_panoptic(path, num_points: int | None = None) -> PanopticLabel:
    sem, inst = read_labels(path, num_points)
    return PanopticLabel(sem, inst)


def remap_labels(sem, mapping: dict, default: int = 0) -> np.ndarray:
    """Map raw dataset class ids to training ids; unknown ids go to ``default``."""
    sem = np.asarray(sem, dtype=np.int64)
    if len(sem) == 0:
        return sem.copy()
    lut = np.full(max(int(sem.max()), max(mapping, default=0)) + 1, default, dtype=np.int64)
    for raw, train in mapping.items():
        lut[int(raw)] = int(train)
    return lut[sem]


def read_kitti_scan(bin_path, label_path, learning_map: dict | None = None, taxonomy=None) -> Scene:
    points = read_velodyne_bin(bin_path)
    sem, inst = read_labels(label_path, len(points))
    if learning_map is not None:
        sem = remap_labels(sem, learning_map)
    if taxonomy is not None:
        inst = np.where(taxonomy.thing_mask(sem), inst, 0)
    return Scene(points.astype(np.float64), sem, inst, taxonomy)


def write_scene(path, scene: Scene) -> None:
    n = len(scene)
    with open(path, "wb") as f:
        f.write(_SCENE_HEADER.pack(SCENE_MAGIC, SCENE_VERSION, 0, n))
        f.write(np.ascontiguousarray(scene.points, dtype="<f8").tobytes())
        f.write(pack_labels(scene.sem_gt, scene.inst_gt).tobytes())


def read_scene(path, taxonomy=None) -> Scene:
    data = Path(path).read_bytes()
    if len(data) < _SCENE_HEADER.size:
        raise FormatError(f"{path}: truncated header at byte offset {len(data)}")
    magic, version, _, n = _SCENE_HEADER.unpack_from(data)
    if magic != SCENE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != SCENE_VERSION:
        raise FormatError(f"{path}: unsupported scene version {version}")
    expected = _SCENE_HEADER.size + 36 * n
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    off = _SCENE_HEADER.size
    pts = np.frombuffer(data, dtype="<f8", count=4 * n, offset=off).reshape(n, 4)
    words = np.frombuffer(data, dtype="<u4", count=n, offset=off + 32 * n)
    sem, inst = unpack_labels(words)
    return Scene(pts.astype(np.float64), sem, inst, taxonomy)
