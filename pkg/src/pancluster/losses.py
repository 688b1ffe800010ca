"""Training objectives with analytic gradients.

Every loss returns a :class:`LossResult` whose ``grad`` is taken with respect
to the probability array(s) it consumed. The instance losses select cells by
argmax; that selection is recomputed on each forward pass and held fixed
during the backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from .core import ClassTaxonomy, Prediction, Scene, softmax, softmax_backward
from .softmat import SoftMatrix, build, column_argmax

LOG_EPS = 1e-12
FRAG_EPS = 1e-6


@dataclass(frozen=True)
class LossWeights:
    w_imp: float = 0.2
    w_frag: float = 0.05
    w_sem: float = 0.7
    small_instance_factor: float = 3.0
    small_instance_threshold: int = 100

    def __post_init__(self):
        for name in ("w_imp", "w_frag", "w_sem", "small_instance_factor", "small_instance_threshold"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class LossResult:
    value: float
    grad: np.ndarray | tuple
    parts: dict = field(default_factory=dict)


def _column_max_mask(values: np.ndarray) -> np.ndarray:
    mask = np.zeros(values.shape, dtype=bool)
    rows = column_argmax(values)
    cols = np.flatnonzero(rows >= 0)
    mask[rows[cols], cols] = True
    return mask


def _fragment_mask(values: np.ndarray) -> np.ndarray:
    mask = _column_max_mask(values)
    masked = np.where(mask, values, -np.inf)
    keep = np.argmax(masked, axis=1)
    has_max = mask.any(axis=1)
    mask[np.flatnonzero(has_max), keep[has_max]] = False
    return mask


def impurity_loss(S: SoftMatrix, reference: SoftMatrix | None = None) -> LossResult:
    """Share of cluster mass that lies outside each cluster's dominant object.

    ``reference`` fixes which cells count as column maxima; by default they
    are taken from ``S`` itself.
    """
    G, N = S.shape
    if G == 0:
        return LossResult(0.0, np.zeros((S.num_points, N)))
    ref = S if reference is None else reference
    impure = ~_column_max_mask(ref.values)
    value = float(S.values[impure].sum() / S.values.sum())
    return LossResult(value, S.backward(impure / G))


def fragmentation_loss(S: SoftMatrix, reference: SoftMatrix | None = None) -> LossResult:
    """Number of fragment cells divided by the number of clusters.

    Each fragment counts as ``S_ij / S_ij`` with the denominator held
    constant, which gives it a gradient of ``1 / (N * S_ij)``. Pass
    ``reference`` to evaluate that surrogate away from the point where the
    denominators were frozen.
    """
    G, N = S.shape
    if G == 0:
        return LossResult(0.0, np.zeros((S.num_points, N)))
    ref = S if reference is None else reference
    frag = _fragment_mask(ref.values)
    denom = ref.values[frag]
    live = denom >= FRAG_EPS
    if reference is None:
        value = float(frag.sum()) / N
    else:
        value = float(np.sum(S.values[frag][live] / denom[live]) + np.sum(~live)) / N
    dS = np.zeros((G, N))
    rows, cols = np.nonzero(frag)
    dS[rows[live], cols[live]] = 1.0 / (N * denom[live])
    return LossResult(value, S.backward(dS))


def inverse_log_frequency(counts, c: float = 1.02, ignore_id: int | None = 0) -> np.ndarray:
    """Class weights ``1 / ln(c + frequency)``; the ignore class gets weight 0."""
    counts = np.asarray(counts, dtype=np.float64)
    if ignore_id is not None:
        counts = counts.copy()
        counts[ignore_id] = 0
    total = counts.sum()
    freq = counts / total if total > 0 else np.zeros_like(counts)
    w = 1.0 / np.log(c + freq)
    if ignore_id is not None:
        w[ignore_id] = 0.0
    return w


def small_instance_weights(inst_gt: np.ndarray, factor: float = 3.0, threshold: int = 100) -> np.ndarray:
    """Per-point weights: ``factor`` on points of instances with fewer than
    ``threshold`` points, 1 elsewhere."""
    inst_gt = np.asarray(inst_gt)
    w = np.ones(len(inst_gt))
    pos = inst_gt > 0
    if np.any(pos):
        ids, inv, counts = np.unique(inst_gt[pos], return_inverse=True, return_counts=True)
        w[pos] = np.where(counts[inv] < threshold, factor, 1.0)
    return w


def weighted_cross_entropy(sem_prob, sem_gt, class_weights=None, point_weights=None,
                           ignore_id: int | None = 0) -> LossResult:
    sem_prob = np.asarray(sem_prob, dtype=np.float64)
    sem_gt = np.asarray(sem_gt)
    grad = np.zeros_like(sem_prob)
    valid = np.ones(len(sem_gt), dtype=bool) if ignore_id is None else sem_gt != ignore_id
    idx = np.flatnonzero(valid)
    if len(idx) == 0:
        return LossResult(0.0, grad)
    labels = sem_gt[idx]
    w = np.ones(len(idx))
    if class_weights is not None:
        w = w * np.asarray(class_weights, dtype=np.float64)[labels]
    if point_weights is not None:
        w = w * np.asarray(point_weights, dtype=np.float64)[idx]
    p = sem_prob[idx, labels]
    clamped = p < LOG_EPS
    m = len(idx)
    value = float(np.sum(-w * np.log(np.maximum(p, LOG_EPS))) / m)
    grad[idx, labels] = np.where(clamped, 0.0, -w / (m * np.where(clamped, 1.0, p)))
    return LossResult(value, grad)


def lovasz_grad(gt_sorted: np.ndarray) -> np.ndarray:
    """Gradient of the Jaccard loss extension w.r.t. errors sorted descending."""
    gts = gt_sorted.sum()
    intersection = gts - np.cumsum(gt_sorted)
    union = gts + np.cumsum(1.0 - gt_sorted)
    jaccard = 1.0 - intersection / union
    jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def lovasz_permutations(sem_prob, sem_gt, ignore_id: int | None = 0) -> tuple:
    """Sort orders used by :func:`lovasz_softmax`; handy as a tie detector."""
    sem_prob = np.asarray(sem_prob, dtype=np.float64)
    sem_gt = np.asarray(sem_gt)
    valid = np.ones(len(sem_gt), dtype=bool) if ignore_id is None else sem_gt != ignore_id
    probs, labels = sem_prob[valid], sem_gt[valid]
    out = []
    for c in np.unique(labels):
        fg = (labels == c).astype(np.float64)
        err = np.abs(fg - probs[:, c])
        out.append(tuple(np.argsort(-err, kind="stable")))
    return tuple(out)


def lovasz_class_losses(sem_prob, sem_gt, ignore_id: int | None = 0) -> dict:
    """Per-class Lovász-softmax values for every class present in ``sem_gt``."""
    res = lovasz_softmax(sem_prob, sem_gt, ignore_id)
    return res.parts


def lovasz_softmax(sem_prob, sem_gt, ignore_id: int | None = 0) -> LossResult:
    sem_prob = np.asarray(sem_prob, dtype=np.float64)
    sem_gt = np.asarray(sem_gt)
    grad = np.zeros_like(sem_prob)
    valid = np.ones(len(sem_gt), dtype=bool) if ignore_id is None else sem_gt != ignore_id
    idx = np.flatnonzero(valid)
    if len(idx) == 0:
        return LossResult(0.0, grad)
    probs, labels = sem_prob[idx], sem_gt[idx]
    classes = np.unique(labels)
    per_class = {}
    for c in classes:
        fg = (labels == c).astype(np.float64)
        err = np.abs(fg - probs[:, c])
        perm = np.argsort(-err, kind="stable")
        g = lovasz_grad(fg[perm])
        per_class[int(c)] = float(err[perm] @ g)
        d_err = np.empty_like(err)
        d_err[perm] = g
        grad[idx, c] = d_err * np.where(fg > 0, -1.0, 1.0)
    k = len(classes)
    return LossResult(sum(per_class.values()) / k, grad / k, per_class)


def total_loss(scene: Scene, pred: Prediction, weights: LossWeights = LossWeights(),
               taxonomy: ClassTaxonomy | None = None, class_weights=None,
               reference: Prediction | None = None) -> LossResult:
    """Weighted sum of the semantic and instance objectives.

    ``grad`` is a ``(grad_sem_prob, grad_inst_prob)`` pair and ``parts``
    holds the unweighted component values.
    """
    ref_inst = None if reference is None else reference.inst_prob
    return combined_loss(scene, pred.sem_prob, pred.inst_prob, weights, taxonomy,
                         class_weights, ref_inst)


def combined_loss(scene, sem_prob, inst_prob, weights=LossWeights(), taxonomy=None,
                  class_weights=None, ref_inst_prob=None, point_weights=None) -> LossResult:
    ignore_id = 0 if taxonomy is None else taxonomy.ignore_id
    if point_weights is None:
        point_weights = small_instance_weights(
            scene.inst_gt, weights.small_instance_factor, weights.small_instance_threshold)
    wce = weighted_cross_entropy(sem_prob, scene.sem_gt, class_weights, point_weights, ignore_id)
    lov = lovasz_softmax(sem_prob, scene.sem_gt, ignore_id)
    S = build(scene, inst_prob)
    ref = None if ref_inst_prob is None else build(scene, ref_inst_prob)
    imp = impurity_loss(S, ref)
    frag = fragmentation_loss(S, ref)
    value = (weights.w_sem * (wce.value + lov.value)
             + weights.w_imp * imp.value + weights.w_frag * frag.value)
    g_sem = weights.w_sem * (wce.grad + lov.grad)
    g_inst = weights.w_imp * imp.grad + weights.w_frag * frag.grad
    parts = {"wce": wce.value, "lovasz": lov.value,
             "impurity": imp.value, "fragmentation": frag.value}
    return LossResult(float(value), (g_sem, g_inst), parts)


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_index: tuple | None
    n_checked: int
    n_excluded: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def relative_error(a, b, floor: float = 1e-4):
    """``|a - b| / max(|a|, |b|, floor)``.

    Central differences at ``h = 1e-5`` carry roundoff near
    ``eps * |loss| / h``, about 1e-10, so relative error on gradients much
    smaller than ``floor`` would only measure that noise.
    """
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def finite_difference_check(loss_fn: Callable[..., LossResult], logits, h: float = 1e-5,
                            tolerance: float = 1e-4,
                            selection: Callable[..., Hashable] | None = None,
                            tie_margin: float | None = None,
                            floor: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients against central differences on logits.

    ``logits`` is one array or a sequence of arrays; each is pushed through a
    row-wise softmax before ``loss_fn(*probs)`` is called, so probes stay on
    the simplex. If ``selection`` is given, a coordinate is skipped when
    moving it by ``tie_margin`` (default ``10 * h``) in either direction
    changes ``selection(*probs)``, i.e. it sits next to an argmax tie.
    """
    if not 0 < h <= 1e-2:
        raise ValueError("h must lie in (0, 1e-2]")
    single = isinstance(logits, np.ndarray)
    arrays = [np.array(logits, dtype=np.float64)] if single else [np.array(z, dtype=np.float64) for z in logits]
    margin = 10 * h if tie_margin is None else tie_margin

    def probs_of(zs):
        return [softmax(z) for z in zs]

    base_probs = probs_of(arrays)
    res = loss_fn(*base_probs)
    grads = [res.grad] if single else list(res.grad)
    analytic = [softmax_backward(p, g) for p, g in zip(base_probs, grads)]
    base_key = selection(*base_probs) if selection is not None else None

    def evaluate(k, idx, delta):
        zs = [z.copy() for z in arrays]
        zs[k][idx] += delta
        return zs

    worst, worst_idx, n_checked, n_excluded = 0.0, None, 0, 0
    for k, z in enumerate(arrays):
        for idx in np.ndindex(z.shape):
            if selection is not None:
                near_tie = any(selection(*probs_of(evaluate(k, idx, s * margin))) != base_key
                               for s in (1.0, -1.0))
                if near_tie:
                    n_excluded += 1
                    continue
            fp = loss_fn(*probs_of(evaluate(k, idx, h))).value
            fm = loss_fn(*probs_of(evaluate(k, idx, -h))).value
            numeric = (fp - fm) / (2 * h)
            err = float(relative_error(analytic[k][idx], numeric, floor))
            n_checked += 1
            if err > worst:
                worst, worst_idx = err, (k, *idx)
    return GradCheckReport(worst, worst_idx, n_checked, n_excluded, tolerance)
