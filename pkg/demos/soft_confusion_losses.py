"""
Clustering losses on a soft confusion matrix
============================================

Two ground-truth objects and three predicted clusters. We build the soft
confusion matrix from per-point cluster probabilities, look at which cells are
column maxima, and score the matrix with the impurity and fragmentation
losses. Then we look at the two failure modes each loss is built for:
objects sharing a cluster, and one object spread over several clusters.
"""

import numpy as np

from pancluster.core import Scene
from pancluster.losses import fragmentation_loss, impurity_loss
from pancluster.softmat import build, column_maxima, fragment_cells

np.set_printoptions(precision=3, suppress=True)

# five points: three on object 1, two on object 2
inst = np.array([1, 1, 1, 2, 2])
scene = Scene(np.zeros((5, 4)), np.full(5, 3), inst)

prob = np.array([
    [0.8, 0.1, 0.1],
    [0.7, 0.2, 0.1],
    [0.6, 0.3, 0.1],
    [0.1, 0.6, 0.3],
    [0.1, 0.6, 0.3],
])
S = build(scene, prob)
print("soft confusion matrix (rows = objects, columns = clusters)")
print(S.values)
print("column maxima:", sorted(column_maxima(S)))

imp = impurity_loss(S)
frag = fragmentation_loss(S)
print(f"impurity      {imp.value:.4f}")
print(f"fragmentation {frag.value:.4f}  fragments: {sorted(fragment_cells(S))}")

# the gradient lands on the points, one row per point
print("impurity gradient per point")
print(imp.grad)


def show(title, p):
    S = build(scene, p)
    print()
    print(title)
    print(S.values)
    print(f"impurity {impurity_loss(S).value:.4f}   fragmentation {fragmentation_loss(S).value:.4f}")


# both objects fall into cluster 0: half the mass is impure, and with
# identical rows every column tie goes to object 1, which then owns three
# column maxima
merged = np.tile([0.9, 0.05, 0.05], (5, 1))
show("two objects in one cluster", merged)

# object 1 is spread over clusters 0 and 2: pure, but fragmented
split = prob.copy()
split[:3] = [[0.5, 0.0, 0.5], [0.9, 0.0, 0.1], [0.1, 0.0, 0.9]]
split[3:] = [[0.0, 1.0, 0.0]] * 2
show("one object over two clusters", split)
