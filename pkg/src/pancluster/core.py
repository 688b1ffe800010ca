"""Domain types shared across the package.

Point clouds are stored as ``(n, 4)`` float64 arrays with columns
``x, y, z, remission``. Labels are integer arrays aligned with the points.
Instance id 0 always means "no instance".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when a domain object is built from inconsistent data."""


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def as_points(points) -> np.ndarray:
    """Coerce to a read-only ``(n, 4)`` float64 array.

    ``(n, 3)`` input gets a zero remission column.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1 and pts.size == 0:
        pts = pts.reshape(0, 4)
    if pts.ndim != 2 or pts.shape[1] not in (3, 4):
        raise ValidationError(f"points must have shape (n, 3) or (n, 4), got {pts.shape}")
    if pts.shape[1] == 3:
        pts = np.hstack([pts, np.zeros((len(pts), 1))])
    if not np.all(np.isfinite(pts[:, :3])):
        raise ValidationError("point coordinates must be finite")
    rem = pts[:, 3]
    if np.any(~np.isfinite(rem)) or np.any((rem < 0) | (rem > 1)):
        raise ValidationError("remission must lie in [0, 1]")
    return _frozen(pts, np.float64)


@dataclass(frozen=True)
class RiderRule:
    """Relabel ``rider`` instances that lack a nearby ``required`` vehicle but
    have a ``fallback_vehicle`` within ``radius`` meters to ``fallback_rider``."""

    rider: int
    required: int
    fallback_vehicle: int
    fallback_rider: int
    radius: float


@dataclass(frozen=True)
class ClassTaxonomy:
    num_classes: int
    stuff_ids: frozenset
    thing_ids: frozenset
    ignore_id: int = 0
    class_names: Mapping[int, str] = field(default_factory=dict)
    max_extent: Mapping[int, float] = field(default_factory=dict)
    merge_eps: Mapping[int, float] = field(default_factory=dict)
    rider_rules: Sequence[RiderRule] = ()

    def __post_init__(self):
        object.__setattr__(self, "stuff_ids", frozenset(int(c) for c in self.stuff_ids))
        object.__setattr__(self, "thing_ids", frozenset(int(c) for c in self.thing_ids))
        object.__setattr__(self, "rider_rules", tuple(self.rider_rules))
        stuff, thing, ign = self.stuff_ids, self.thing_ids, self.ignore_id
        if stuff & thing or ign in stuff or ign in thing:
            raise ValidationError("stuff, thing and ignore ids must be disjoint")
        if stuff | thing | {ign} != set(range(self.num_classes)):
            raise ValidationError("stuff, thing and ignore ids must cover 0..num_classes-1")
        for name, table in (("max_extent", self.max_extent), ("merge_eps", self.merge_eps)):
            for c in thing:
                if c not in table:
                    raise ValidationError(f"{name} missing thing class {c}")
            if any(v <= 0 for v in table.values()):
                raise ValidationError(f"{name} values must be positive")
        for rule in self.rider_rules:
            if rule.radius <= 0:
                raise ValidationError("rider rule radius must be positive")

    def thing_mask(self, sem: np.ndarray) -> np.ndarray:
        return np.isin(sem, sorted(self.thing_ids))

    def name(self, class_id: int) -> str:
        return self.class_names.get(class_id, str(class_id))


@dataclass(frozen=True)
class Scene:
    points: np.ndarray
    sem_gt: np.ndarray
    inst_gt: np.ndarray
    taxonomy: ClassTaxonomy | None = None

    def __post_init__(self):
        pts = as_points(self.points)
        sem = _frozen(self.sem_gt, np.int64)
        inst = _frozen(self.inst_gt, np.int64)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "sem_gt", sem)
        object.__setattr__(self, "inst_gt", inst)
        if not (len(pts) == len(sem) == len(inst)):
            raise ValidationError(
                f"length mismatch: {len(pts)} points, {len(sem)} sem, {len(inst)} inst"
            )
        if np.any(inst < 0):
            raise ValidationError("instance ids must be non-negative")
        _check_instances(sem, inst, self.taxonomy)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def instance_ids(self) -> np.ndarray:
        ids = np.unique(self.inst_gt)
        return ids[ids > 0]


@dataclass(frozen=True)
class Prediction:
    sem_prob: np.ndarray
    inst_prob: np.ndarray

    def __post_init__(self):
        sem = _frozen(self.sem_prob, np.float64)
        inst = _frozen(self.inst_prob, np.float64)
        object.__setattr__(self, "sem_prob", sem)
        object.__setattr__(self, "inst_prob", inst)
        if sem.ndim != 2 or inst.ndim != 2 or len(sem) != len(inst):
            raise ValidationError("sem_prob and inst_prob must be (n, C) and (n, N)")
        for name, p in (("sem_prob", sem), ("inst_prob", inst)):
            if np.any(p < 0) or not np.all(np.isfinite(p)):
                raise ValidationError(f"{name} must be finite and non-negative")
            if len(p) and np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-6:
                raise ValidationError(f"{name} rows must sum to 1")

    def __len__(self) -> int:
        return len(self.sem_prob)


@dataclass(frozen=True)
class PanopticLabel:
    sem: np.ndarray
    inst: np.ndarray
    taxonomy: ClassTaxonomy | None = None

    def __post_init__(self):
        sem = _frozen(self.sem, np.int64)
        inst = _frozen(self.inst, np.int64)
        object.__setattr__(self, "sem", sem)
        object.__setattr__(self, "inst", inst)
        if len(sem) != len(inst):
            raise ValidationError("sem and inst lengths differ")
        if np.any(inst < 0):
            raise ValidationError("instance ids must be non-negative")
        _check_instances(sem, inst, self.taxonomy)

    def __len__(self) -> int:
        return len(self.sem)


def _check_instances(sem, inst, taxonomy):
    pos = inst > 0
    if not np.any(pos):
        return
    if taxonomy is not None and not np.all(taxonomy.thing_mask(sem[pos])):
        raise ValidationError("positive instance ids are only allowed on thing classes")
    ids, first = np.unique(inst[pos], return_inverse=True)
    lo = np.full(len(ids), np.iinfo(np.int64).max)
    hi = np.full(len(ids), np.iinfo(np.int64).min)
    np.minimum.at(lo, first, sem[pos])
    np.maximum.at(hi, first, sem[pos])
    if np.any(lo != hi):
        bad = ids[lo != hi][0]
        raise ValidationError(f"instance {bad} spans several semantic classes")


def hard_labels(pred: Prediction) -> tuple[np.ndarray, np.ndarray]:
    """Per-point argmax of both heads (ties go to the lowest index)."""
    return np.argmax(pred.sem_prob, axis=1), np.argmax(pred.inst_prob, axis=1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(prob: np.ndarray, grad_prob: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of the row-wise softmax."""
    return prob * (grad_prob - np.sum(prob * grad_prob, axis=-1, keepdims=True))
