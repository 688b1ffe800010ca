"""Mask-based fusion of semantic and cluster predictions."""

from __future__ import annotations

import numpy as np

from .core import ClassTaxonomy, PanopticLabel, ValidationError


def fuse(sem, cluster, taxonomy: ClassTaxonomy) -> PanopticLabel:
    """Keep cluster ids (shifted by one) on thing points, zero elsewhere.

    A cluster that covers several thing classes is split by class: the lowest
    class keeps the id and the others receive fresh ids above the current
    maximum, assigned in ascending (id, class) order.
    """
    sem = np.asarray(sem, dtype=np.int64)
    cluster = np.asarray(cluster, dtype=np.int64)
    if len(sem) != len(cluster):
        raise ValidationError(f"length mismatch: {len(sem)} vs {len(cluster)}")
    thing = taxonomy.thing_mask(sem)
    inst = np.where(thing, cluster + 1, 0)
    if np.any(thing):
        next_id = int(inst.max()) + 1
        for iid in np.unique(inst[thing]):
            members = inst == iid
            classes = np.unique(sem[members])
            for cls in classes[1:]:
                inst[members & (sem == cls)] = next_id
                next_id += 1
    return PanopticLabel(sem, inst, taxonomy)
