"""Heuristic clean-up of panoptic predictions.

``post_splitter`` breaks up instances that are too large for their class,
``post_merger`` joins same-class instances whose centres are close, and
``post_cyclists`` relabels bicyclists found next to a motorcycle but no
bicycle. ``post_all`` applies the three in that order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import ClassTaxonomy, PanopticLabel


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


def _grid_neighbors(xyz: np.ndarray, eps: float) -> list:
    """For every point, the ascending indices of points within ``eps`` (self included)."""
    n = len(xyz)
    cells = np.floor(xyz / eps).astype(np.int64)
    buckets: dict = {}
    for i, key in enumerate(map(tuple, cells)):
        buckets.setdefault(key, []).append(i)
    offsets = [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)]
    eps2 = eps * eps
    out = []
    for i in range(n):
        cx, cy, cz = cells[i]
        cand = []
        for a, b, c in offsets:
            cand.extend(buckets.get((cx + a, cy + b, cz + c), ()))
        cand = np.array(sorted(cand), dtype=np.int64)
        d2 = np.sum((xyz[cand] - xyz[i]) ** 2, axis=1)
        out.append(cand[d2 <= eps2])
    return out


def dbscan(points, params: DbscanParams) -> np.ndarray:
    """Density-based clustering; returns ids 1..K in discovery order, 0 for noise.

    Points are scanned in index order and each cluster is grown breadth-first
    with neighbours visited in ascending index order, so a border point
    reachable from several clusters joins the one discovered first.
    """
    xyz = np.asarray(points, dtype=np.float64)
    if xyz.ndim == 2 and xyz.shape[1] > 3:
        xyz = xyz[:, :3]
    n = len(xyz)
    labels = np.zeros(n, dtype=np.int64)
    if n == 0:
        return labels
    nbrs = _grid_neighbors(xyz, params.eps)
    core = np.array([len(nb) >= params.min_pts for nb in nbrs])
    cluster = 0
    for i in range(n):
        if labels[i] or not core[i]:
            continue
        cluster += 1
        labels[i] = cluster
        queue = deque([i])
        while queue:
            j = queue.popleft()
            for q in nbrs[j]:
                if labels[q]:
                    continue
                labels[q] = cluster
                if core[q]:
                    queue.append(q)
    return labels


def _xyz(points) -> np.ndarray:
    return np.asarray(points, dtype=np.float64)[:, :3]


def post_splitter(label: PanopticLabel, points, taxonomy: ClassTaxonomy) -> PanopticLabel:
    """Re-cluster thing instances whose bounding-box diagonal exceeds the
    class's ``max_extent``; each DBSCAN cluster and each noise point then
    gets a fresh id."""
    xyz = _xyz(points)
    inst = label.inst.copy()
    next_id = int(inst.max(initial=0)) + 1
    for iid in np.unique(label.inst[label.inst > 0]):
        idx = np.flatnonzero(label.inst == iid)
        cls = int(label.sem[idx[0]])
        if cls not in taxonomy.thing_ids:
            continue
        diag = float(np.linalg.norm(np.ptp(xyz[idx], axis=0)))
        if diag <= taxonomy.max_extent[cls]:
            continue
        sub = dbscan(xyz[idx], DbscanParams(taxonomy.merge_eps[cls], 2))
        if sub.max() == 1 and np.all(sub > 0):
            continue
        for s in range(1, sub.max() + 1):
            inst[idx[sub == s]] = next_id
            next_id += 1
        for j in idx[sub == 0]:
            inst[j] = next_id
            next_id += 1
    return PanopticLabel(label.sem, inst, label.taxonomy)


def post_merger(label: PanopticLabel, points, taxonomy: ClassTaxonomy) -> PanopticLabel:
    """Merge same-class instances whose centroids are density-connected at
    the class's ``merge_eps``; the lowest id of each group survives."""
    xyz = _xyz(points)
    inst = label.inst.copy()
    for cls in sorted(taxonomy.thing_ids):
        ids = np.unique(label.inst[(label.inst > 0) & (label.sem == cls)])
        if len(ids) < 2:
            continue
        centroids = np.array([xyz[label.inst == i].mean(axis=0) for i in ids])
        groups = dbscan(centroids, DbscanParams(taxonomy.merge_eps[cls], 1))
        for g in np.unique(groups):
            members = ids[groups == g]
            for other in members[1:]:
                inst[label.inst == other] = members[0]
    return PanopticLabel(label.sem, inst, label.taxonomy)


def post_cyclists(label: PanopticLabel, points, taxonomy: ClassTaxonomy) -> PanopticLabel:
    xyz = _xyz(points)
    sem = label.sem.copy()
    for rule in taxonomy.rider_rules:
        required = xyz[label.sem == rule.required]
        fallback = xyz[label.sem == rule.fallback_vehicle]
        if len(fallback) == 0:
            continue
        riders = np.unique(label.inst[(label.sem == rule.rider) & (label.inst > 0)])
        for iid in riders:
            m = label.inst == iid
            c = xyz[m].mean(axis=0)
            near_required = len(required) and np.min(np.linalg.norm(required - c, axis=1)) <= rule.radius
            near_fallback = np.min(np.linalg.norm(fallback - c, axis=1)) <= rule.radius
            if near_fallback and not near_required:
                sem[m] = rule.fallback_rider
    return PanopticLabel(sem, label.inst, label.taxonomy)


def post_all(label: PanopticLabel, points, taxonomy: ClassTaxonomy,
             splitter: bool = True, merger: bool = True, cyclists: bool = True) -> PanopticLabel:
    if splitter:
        label = post_splitter(label, points, taxonomy)
    if merger:
        label = post_merger(label, points, taxonomy)
    if cyclists:
        label = post_cyclists(label, points, taxonomy)
    return label
