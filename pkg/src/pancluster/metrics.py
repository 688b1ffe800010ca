"""Panoptic quality (PQ, SQ, RQ, PQ-dagger) and mean IoU.

Statistics are gathered per scene into :class:`PanopticStats`, which add up
associatively, and turned into a :class:`PanopticReport` at the end.
Points whose ground-truth class is the ignore class are dropped from both
sides before anything is counted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import ClassTaxonomy, PanopticLabel, Scene, ValidationError


@dataclass
class PanopticStats:
    num_classes: int
    tp: np.ndarray = None
    fp: np.ndarray = None
    fn: np.ndarray = None
    iou_sum: np.ndarray = None
    sem_inter: np.ndarray = None
    sem_union: np.ndarray = None

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "sem_inter", "sem_union"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.num_classes, dtype=np.int64))
        if self.iou_sum is None:
            self.iou_sum = np.zeros(self.num_classes)

    def __add__(self, other: "PanopticStats") -> "PanopticStats":
        return PanopticStats(self.num_classes, self.tp + other.tp, self.fp + other.fp,
                             self.fn + other.fn, self.iou_sum + other.iou_sum,
                             self.sem_inter + other.sem_inter, self.sem_union + other.sem_union)


@dataclass
class ClassScore:
    pq: float
    sq: float
    rq: float
    iou: float
    tp: int
    fp: int
    fn: int


@dataclass
class PanopticReport:
    per_class: dict
    pq: float
    sq: float
    rq: float
    pq_dagger: float
    pq_th: float
    sq_th: float
    rq_th: float
    pq_st: float
    sq_st: float
    rq_st: float
    miou: float
    class_names: dict = field(default_factory=dict)

    AGGREGATES = ("pq", "pq_dagger", "sq", "rq", "pq_th", "sq_th", "rq_th",
                  "pq_st", "sq_st", "rq_st", "miou")

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.AGGREGATES}
        out["per_class"] = {
            self.class_names.get(c, str(c)): vars(s) for c, s in sorted(self.per_class.items())
        }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    def format_table(self) -> str:
        lines = [f"{k:<10} {getattr(self, k):.3f}" for k in self.AGGREGATES]
        lines.append("")
        lines.append(f"{'class':<14}{'PQ':>7}{'SQ':>7}{'RQ':>7}{'IoU':>7}{'TP':>5}{'FP':>5}{'FN':>5}")
        for c, s in sorted(self.per_class.items()):
            name = self.class_names.get(c, str(c))
            lines.append(f"{name:<14}{s.pq:>7.3f}{s.sq:>7.3f}{s.rq:>7.3f}{s.iou:>7.3f}"
                         f"{s.tp:>5d}{s.fp:>5d}{s.fn:>5d}")
        return "\n".join(lines)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(type(o))


def _segments(sem, inst, cls, thing):
    """Segment keys per point for one class; -1 marks points in no segment."""
    in_cls = sem == cls
    if not thing:
        return np.where(in_cls, 0, -1)
    return np.where(in_cls & (inst > 0), inst, -1)


def match_segments(gt_seg: np.ndarray, pred_seg: np.ndarray):
    """Match segments with IoU > 0.5.

    Returns ``(matches, n_gt, n_pred)`` where ``matches`` lists
    ``(gt_id, pred_id, iou)``.
    """
    gt_ids, gt_sizes = np.unique(gt_seg[gt_seg >= 0], return_counts=True)
    pr_ids, pr_sizes = np.unique(pred_seg[pred_seg >= 0], return_counts=True)
    both = (gt_seg >= 0) & (pred_seg >= 0)
    if np.any(both):
        pairs, inter = np.unique(np.stack([gt_seg[both], pred_seg[both]]), axis=1,
                                 return_counts=True)
    else:
        pairs, inter = np.zeros((2, 0), dtype=np.int64), np.zeros(0, dtype=np.int64)
    gt_size = dict(zip(gt_ids.tolist(), gt_sizes.tolist()))
    pr_size = dict(zip(pr_ids.tolist(), pr_sizes.tolist()))
    matches = []
    for (g, p), n in zip(pairs.T.tolist(), inter.tolist()):
        iou = n / (gt_size[g] + pr_size[p] - n)
        if iou > 0.5:
            matches.append((g, p, iou))
    used_g = [m[0] for m in matches]
    used_p = [m[1] for m in matches]
    assert len(set(used_g)) == len(used_g) and len(set(used_p)) == len(used_p), \
        "IoU > 0.5 matching must be one-to-one"
    return matches, len(gt_ids), len(pr_ids)


def scene_stats(pred: PanopticLabel, gt: Scene, taxonomy: ClassTaxonomy) -> PanopticStats:
    if len(pred) != len(gt):
        raise ValidationError(f"prediction has {len(pred)} points, ground truth {len(gt)}")
    keep = gt.sem_gt != taxonomy.ignore_id
    ps, pi = pred.sem[keep], pred.inst[keep]
    gs, gi = gt.sem_gt[keep], gt.inst_gt[keep]
    stats = PanopticStats(taxonomy.num_classes)
    for c in range(taxonomy.num_classes):
        if c == taxonomy.ignore_id:
            continue
        g_in, p_in = gs == c, ps == c
        stats.sem_inter[c] = np.sum(g_in & p_in)
        stats.sem_union[c] = np.sum(g_in | p_in)
        if stats.sem_union[c] == 0:
            continue
        thing = c in taxonomy.thing_ids
        matches, n_gt, n_pred = match_segments(_segments(gs, gi, c, thing),
                                               _segments(ps, pi, c, thing))
        stats.tp[c] = len(matches)
        stats.fn[c] = n_gt - len(matches)
        stats.fp[c] = n_pred - len(matches)
        stats.iou_sum[c] = sum(m[2] for m in matches)
    return stats


def _mean(values):
    return float(np.mean(values)) if len(values) else 0.0


def report(stats: PanopticStats, taxonomy: ClassTaxonomy) -> PanopticReport:
    per_class = {}
    for c in range(taxonomy.num_classes):
        tp, fp, fn = int(stats.tp[c]), int(stats.fp[c]), int(stats.fn[c])
        if c == taxonomy.ignore_id or tp + fp + fn == 0:
            continue
        sq = stats.iou_sum[c] / tp if tp else 0.0
        rq = tp / (tp + 0.5 * fp + 0.5 * fn)
        iou = stats.sem_inter[c] / stats.sem_union[c] if stats.sem_union[c] else 0.0
        per_class[c] = ClassScore(float(sq * rq), float(sq), float(rq), float(iou), tp, fp, fn)

    def agg(attr, ids):
        return _mean([getattr(per_class[c], attr) for c in sorted(ids) if c in per_class])

    things = taxonomy.thing_ids
    stuff = taxonomy.stuff_ids
    dagger = [s.pq if c in things else s.iou for c, s in sorted(per_class.items())]
    valid = [c for c in range(taxonomy.num_classes)
             if c != taxonomy.ignore_id and stats.sem_union[c] > 0]
    miou = _mean([stats.sem_inter[c] / stats.sem_union[c] for c in valid])
    return PanopticReport(
        per_class=per_class,
        pq=agg("pq", per_class), sq=agg("sq", per_class), rq=agg("rq", per_class),
        pq_dagger=_mean(dagger),
        pq_th=agg("pq", things), sq_th=agg("sq", things), rq_th=agg("rq", things),
        pq_st=agg("pq", stuff), sq_st=agg("sq", stuff), rq_st=agg("rq", stuff),
        miou=miou, class_names=dict(taxonomy.class_names),
    )


def evaluate(pred: PanopticLabel, gt: Scene, taxonomy: ClassTaxonomy) -> PanopticReport:
    return report(scene_stats(pred, gt, taxonomy), taxonomy)


def evaluate_many(pairs, taxonomy: ClassTaxonomy) -> PanopticReport:
    """Evaluate ``(prediction, scene)`` pairs with statistics pooled over scenes."""
    total = PanopticStats(taxonomy.num_classes)
    for pred, gt in pairs:
        total = total + scene_stats(pred, gt, taxonomy)
    return report(total, taxonomy)
