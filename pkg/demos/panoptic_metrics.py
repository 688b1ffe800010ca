"""
Panoptic quality by hand and by the library
===========================================

A single car class: one prediction overlaps a ground-truth car with IoU 0.8,
one ground-truth car is missed and one predicted car is spurious. Panoptic
quality is the mean IoU of matched segments times the F1-style recognition
score.
"""

import numpy as np

from pancluster.core import PanopticLabel, Scene
from pancluster.metrics import evaluate
from pancluster.synth import CAR, ROAD, micro_taxonomy

tax = micro_taxonomy()

# gt: car 1 has 5 points, car 2 has 2 points, plus two road points
gt = Scene(np.zeros((9, 4)),
           [CAR] * 7 + [ROAD] * 2,
           [1] * 5 + [2] * 2 + [0] * 2, tax)
# prediction: 4 of car 1's points, car 2 called road, two road points called a car
pred = PanopticLabel([CAR] * 4 + [ROAD] * 3 + [CAR] * 2,
                     [7] * 4 + [0] * 3 + [8] * 2, tax)

iou = 4 / 5
tp, fp, fn = 1, 1, 1
sq = iou / tp
rq = tp / (tp + fp / 2 + fn / 2)
print(f"by hand:     SQ {sq:.3f}  RQ {rq:.3f}  PQ {sq * rq:.3f}")

car = evaluate(pred, gt, tax).per_class[CAR]
print(f"evaluate():  SQ {car.sq:.3f}  RQ {car.rq:.3f}  PQ {car.pq:.3f}")

# an IoU of exactly one half does not count as a match
half = PanopticLabel([CAR] * 2 + [ROAD] * 7, [3] * 2 + [0] * 7, tax)
gt_small = Scene(np.zeros((9, 4)), [CAR] * 4 + [ROAD] * 5, [1] * 4 + [0] * 5, tax)
print("IoU 0.5 pair matched?", evaluate(half, gt_small, tax).per_class[CAR].tp == 1)

print()
print(evaluate(pred, gt, tax).format_table())
