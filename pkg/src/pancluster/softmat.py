"""Percentage-normalized soft confusion matrix between ground-truth objects
and predicted clusters.

Row ``i`` is a ground-truth thing object, column ``j`` a predicted cluster.
``S[i, j]`` is the mean probability that a point of object ``i`` belongs to
cluster ``j``, so every row sums to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Scene, ValidationError


@dataclass(frozen=True)
class SoftMatrix:
    values: np.ndarray
    gt_ids: np.ndarray
    point_index: tuple
    num_points: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def num_objects(self) -> int:
        return self.values.shape[0]

    @property
    def num_clusters(self) -> int:
        return self.values.shape[1]

    def backward(self, grad_values: np.ndarray) -> np.ndarray:
        """Chain a gradient on ``values`` back to the per-point probabilities.

        Returns an ``(num_points, N)`` array; rows of points outside every
        object are zero.
        """
        out = np.zeros((self.num_points, self.num_clusters))
        for i, idx in enumerate(self.point_index):
            out[idx] = grad_values[i] / len(idx)
        return out

    def with_values(self, values: np.ndarray) -> "SoftMatrix":
        return SoftMatrix(np.asarray(values, dtype=np.float64), self.gt_ids,
                          self.point_index, self.num_points)


def build(scene: Scene, inst_prob: np.ndarray) -> SoftMatrix:
    inst_prob = np.asarray(inst_prob, dtype=np.float64)
    if inst_prob.ndim != 2 or len(inst_prob) != len(scene):
        raise ValidationError(
            f"inst_prob has shape {inst_prob.shape}, scene has {len(scene)} points"
        )
    return build_from_ids(scene.inst_gt, inst_prob)


def build_from_ids(inst_gt: np.ndarray, inst_prob: np.ndarray) -> SoftMatrix:
    """Same as :func:`build` but from a raw instance-id array."""
    inst_gt = np.asarray(inst_gt)
    n, num_clusters = inst_prob.shape
    if len(inst_gt) != n:
        raise ValidationError("inst_gt and inst_prob lengths differ")
    gt_ids = np.unique(inst_gt[inst_gt > 0])
    if len(gt_ids) == 0:
        return SoftMatrix(np.zeros((0, num_clusters)), gt_ids, (), n)
    rows = np.searchsorted(gt_ids, inst_gt)
    member = inst_gt > 0
    sums = np.zeros((len(gt_ids), num_clusters))
    np.add.at(sums, rows[member], inst_prob[member])
    counts = np.bincount(rows[member], minlength=len(gt_ids))
    order = np.argsort(rows[member], kind="stable")
    point_index = tuple(np.split(np.flatnonzero(member)[order], np.cumsum(counts)[:-1]))
    return SoftMatrix(sums / counts[:, None], gt_ids, point_index, n)


def from_values(values) -> SoftMatrix:
    """Wrap a bare ``G x N`` matrix, one stand-in point per row, so that
    ``backward`` maps a gradient on the values to itself."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValidationError("values must be a 2-d matrix")
    G = values.shape[0]
    return SoftMatrix(values, np.arange(1, G + 1), tuple(np.array([i]) for i in range(G)), G)


def column_argmax(S) -> np.ndarray:
    """Row index of the maximum of each column, or -1 for an all-zero column.

    Ties go to the lowest row. A column with no mass names no cluster, so it
    has no maximum.
    """
    values = S.values if isinstance(S, SoftMatrix) else np.asarray(S, dtype=np.float64)
    if values.shape[0] == 0:
        return np.full(values.shape[1], -1, dtype=np.int64)
    rows = np.argmax(values, axis=0)
    rows[values.max(axis=0) <= 0] = -1
    return rows


def column_maxima(S) -> set[tuple[int, int]]:
    """Column-maximum cells as ``(row, col)`` pairs."""
    rows = column_argmax(S)
    return {(int(r), j) for j, r in enumerate(rows) if r >= 0}


def fragment_cells(S) -> set[tuple[int, int]]:
    """Fragment cells: column maxima that share a row with a larger one.

    Within a row the largest column maximum is exempt; ties exempt the lowest
    column.
    """
    values = S.values if isinstance(S, SoftMatrix) else np.asarray(S, dtype=np.float64)
    rows = column_argmax(values)
    frags = set()
    for i in np.unique(rows[rows >= 0]):
        cols = np.flatnonzero(rows == i)
        keep = cols[np.argmax(values[i, cols])]
        frags.update((int(i), int(j)) for j in cols if j != keep)
    return frags
