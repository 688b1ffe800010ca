"""Slow, literal re-implementations used as references by the tests.

Nothing here imports the package's algorithms; each function works from the
definitions with plain Python loops.
"""

from __future__ import annotations

import math
from itertools import product


# clustering losses ---------------------------------------------------------

def column_maxima(S):
    G, N = len(S), len(S[0]) if S else 0
    cells = set()
    for j in range(N):
        col = [S[i][j] for i in range(G)]
        top = max(col)
        if top <= 0:
            continue
        cells.add((col.index(top), j))
    return cells


def fragments(S):
    M = column_maxima(S)
    out = set()
    for i in range(len(S)):
        cols = sorted(j for r, j in M if r == i)
        if len(cols) < 2:
            continue
        top = max(S[i][j] for j in cols)
        exempt = min(j for j in cols if S[i][j] == top)
        out |= {(i, j) for j in cols if j != exempt}
    return out


def impurity(S):
    if not S:
        return 0.0
    M = column_maxima(S)
    total = sum(sum(row) for row in S)
    outside = sum(S[i][j] for i in range(len(S)) for j in range(len(S[0])) if (i, j) not in M)
    return outside / total


def fragmentation(S):
    if not S:
        return 0.0
    return len(fragments(S)) / len(S[0])


# panoptic quality ------------------------------------------------------------

def _segments(sem, inst, cls, thing):
    segs = {}
    for p, (s, i) in enumerate(zip(sem, inst)):
        if s != cls:
            continue
        if thing and i <= 0:
            continue
        segs.setdefault(i if thing else 0, set()).add(p)
    return segs


def _best_matching(pairs):
    """Exhaustively search matchings over ``pairs`` (g, p, iou) for the most
    pairs, then the largest IoU sum."""
    best = (0, 0.0, ())

    def rec(k, used_g, used_p, chosen):
        nonlocal best
        if k == len(pairs):
            key = (len(chosen), sum(c[2] for c in chosen))
            if key > best[:2]:
                best = (key[0], key[1], tuple(chosen))
            return
        rec(k + 1, used_g, used_p, chosen)
        g, p, iou = pairs[k]
        if g not in used_g and p not in used_p:
            rec(k + 1, used_g | {g}, used_p | {p}, chosen + [pairs[k]])

    rec(0, frozenset(), frozenset(), [])
    return best[2]


def panoptic(pred_sem, pred_inst, gt_sem, gt_inst, num_classes, things, ignore_id):
    """Per-class (tp, fp, fn, iou_sum, inter, union) plus the aggregates."""
    keep = [p for p in range(len(gt_sem)) if gt_sem[p] != ignore_id]
    ps = [int(pred_sem[p]) for p in keep]
    pi = [int(pred_inst[p]) for p in keep]
    gs = [int(gt_sem[p]) for p in keep]
    gi = [int(gt_inst[p]) for p in keep]
    per = {}
    for c in range(num_classes):
        if c == ignore_id:
            continue
        inter = sum(1 for a, b in zip(ps, gs) if a == c and b == c)
        union = sum(1 for a, b in zip(ps, gs) if a == c or b == c)
        gseg = _segments(gs, gi, c, c in things)
        pseg = _segments(ps, pi, c, c in things)
        pairs = []
        for g, p in product(sorted(gseg), sorted(pseg)):
            iou = len(gseg[g] & pseg[p]) / len(gseg[g] | pseg[p])
            if iou > 0.5:
                pairs.append((g, p, iou))
        match = _best_matching(pairs)
        tp = len(match)
        per[c] = dict(tp=tp, fp=len(pseg) - tp, fn=len(gseg) - tp,
                      iou_sum=sum(m[2] for m in match), inter=inter, union=union)
    return per


def aggregate(per, things, stuff):
    scores = {}
    for c, d in per.items():
        tp, fp, fn = d["tp"], d["fp"], d["fn"]
        if tp + fp + fn == 0:
            continue
        sq = d["iou_sum"] / tp if tp else 0.0
        rq = tp / (tp + fp / 2 + fn / 2)
        iou = d["inter"] / d["union"] if d["union"] else 0.0
        scores[c] = dict(pq=sq * rq, sq=sq, rq=rq, iou=iou)

    def mean(vals):
        vals = list(vals)
        return sum(vals) / len(vals) if vals else 0.0

    out = {k: mean(s[k] for s in scores.values()) for k in ("pq", "sq", "rq")}
    for suffix, ids in (("th", things), ("st", stuff)):
        for k in ("pq", "sq", "rq"):
            out[f"{k}_{suffix}"] = mean(s[k] for c, s in scores.items() if c in ids)
    out["pq_dagger"] = mean(s["pq"] if c in things else s["iou"] for c, s in scores.items())
    out["miou"] = mean(d["inter"] / d["union"] for d in per.values() if d["union"])
    return scores, out


# DBSCAN ------------------------------------------------------------------

def dbscan(points, eps, min_pts):
    """Density-connected components by brute force.

    Components are numbered in order of their lowest-index core point; a
    border point goes to the lowest-numbered component with a core point
    within ``eps``.
    """
    n = len(points)
    near = [[q for q in range(n) if math.dist(points[p], points[q]) <= eps] for p in range(n)]
    core = [len(near[p]) >= min_pts for p in range(n)]
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for p in range(n):
        if core[p]:
            for q in near[p]:
                if core[q]:
                    parent[find(q)] = find(p)
    rank = {}
    for p in range(n):
        if core[p] and find(p) not in rank:
            rank[find(p)] = len(rank) + 1
    labels = [0] * n
    for p in range(n):
        if core[p]:
            labels[p] = rank[find(p)]
        else:
            owners = [rank[find(q)] for q in near[p] if core[q]]
            labels[p] = min(owners) if owners else 0
    return labels


def random_panoptic_case(rng, num_classes=5, things=(3, 4), ignore_id=0, max_segments=6):
    """Ground truth and a perturbed prediction on a small random scene.

    Thing instance ids are ``10 * class + k`` so every id has one class.
    """
    n = int(rng.integers(10, 80))
    gt_sem = rng.integers(0, num_classes, size=n)
    gt_k = rng.integers(0, max_segments, size=n)
    is_thing = [c in things for c in gt_sem]
    gt_inst = [10 * c + k + 1 if t else 0 for c, k, t in zip(gt_sem, gt_k, is_thing)]
    pr_sem = gt_sem.copy()
    flip = rng.random(n) < rng.uniform(0, 0.4)
    pr_sem[flip] = rng.integers(1, num_classes, size=flip.sum())
    pr_k = gt_k.copy()
    move = rng.random(n) < rng.uniform(0, 0.4)
    pr_k[move] = rng.integers(0, max_segments, size=move.sum())
    pr_inst = [10 * c + k + 1 if c in things else 0 for c, k in zip(pr_sem, pr_k)]
    return (list(map(int, gt_sem)), gt_inst, list(map(int, pr_sem)), pr_inst)
