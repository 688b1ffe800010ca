"""
Training a small per-point network to cluster objects
=====================================================

The toy model sees each point's position and remission plus the mean of its
nearest neighbours. A semantic head predicts classes; an instance head
predicts one of 16 cluster ids. No instance ids are ever given to the
network as targets: the clustering losses only look at how the predicted
clusters partition each ground-truth object.

The default 3000 iterations take well under a minute; ``--iterations 300``
gives a quick, half-trained look.
"""

import argparse
import time

import numpy as np

from pancluster import metrics, synth
from pancluster.core import hard_labels
from pancluster.losses import fragmentation_loss, impurity_loss
from pancluster.softmat import build
from pancluster.toytrain import TrainConfig, forward, infer, train

parser = argparse.ArgumentParser()
parser.add_argument("--iterations", type=int, default=3000)
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()

tax = synth.micro_taxonomy()
pool = [synth.generate(synth.toy_config(seed=1), i) for i in range(128)]
held_out = [synth.generate(synth.toy_config(seed=999), i) for i in range(50)]
print(f"{len(pool)} training scenes, {len(held_out)} held-out scenes, "
      f"{np.mean([len(s) for s in pool]):.0f} points and "
      f"{np.mean([len(s.instance_ids) for s in pool]):.1f} objects per scene on average")

# the schedule is scaled with the iteration budget
n = args.iterations
config = TrainConfig(seed=args.seed, iterations=n, sem_warmup=n // 3, sem_ramp=n // 3,
                     frag_warmup=2 * n // 3)


def report(step, value, parts):
    if (step + 1) % max(n // 10, 1) == 0:
        print(f"  step {step + 1:5d}  total {value:.4f}  impurity {parts['impurity']:.4f}  "
              f"fragmentation {parts['fragmentation']:.4f}  wce {parts['wce']:.4f}")


t0 = time.perf_counter()
model = train(config, pool, tax, callback=report).model
print(f"trained in {time.perf_counter() - t0:.0f}s")

# score hard cluster assignments on unseen scenes
imp, frag = [], []
for s in held_out:
    cluster = hard_labels(forward(model, s))[1]
    S = build(s, np.eye(model.num_clusters)[cluster])
    imp.append(impurity_loss(S).value)
    frag.append(fragmentation_loss(S).value)
print(f"held-out impurity {np.mean(imp):.4f}, fragmentation {np.mean(frag):.4f}")

rep = metrics.evaluate_many([(infer(model, s, tax), s) for s in held_out], tax)
print(rep.format_table())
