"""Randomized finite-difference checks of every training loss.

Each trial draws a small random scene with random logits and runs
:func:`pancluster.losses.finite_difference_check` on it. Losses that select
cells by argmax (impurity) or sort errors (Lovasz) skip coordinates next to
a change of that selection. Fragmentation is a count, so it is checked
through its surrogate with the selection and denominators frozen at the
unperturbed point, which is the function its gradient belongs to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Scene, softmax
from .losses import (
    GradCheckReport,
    LossWeights,
    combined_loss,
    finite_difference_check,
    fragmentation_loss,
    impurity_loss,
    lovasz_permutations,
    lovasz_softmax,
    small_instance_weights,
    weighted_cross_entropy,
)
from .softmat import build, column_argmax

LOSS_NAMES = ("impurity", "fragmentation", "wce", "lovasz", "total")
NUM_CLASSES = 4


@dataclass(frozen=True)
class Problem:
    scene: Scene
    sem_logits: np.ndarray
    inst_logits: np.ndarray
    class_weights: np.ndarray
    point_weights: np.ndarray


def random_problem(rng: np.random.Generator) -> Problem:
    """A 8-24 point scene with up to 4 objects, 4 classes (0 ignored) and
    2-6 clusters."""
    n = int(rng.integers(8, 25))
    n_obj = int(rng.integers(1, 5))
    n_clusters = int(rng.integers(2, 7))
    inst = rng.integers(0, n_obj + 1, size=n)
    obj_class = rng.integers(2, NUM_CLASSES, size=n_obj + 1)
    sem = np.where(inst > 0, obj_class[inst], rng.integers(0, 2, size=n))
    points = np.column_stack([rng.normal(size=(n, 3)), rng.random(n)])
    scene = Scene(points, sem, inst)
    class_weights = np.concatenate([[0.0], rng.uniform(0.5, 2.0, NUM_CLASSES - 1)])
    return Problem(scene,
                   rng.normal(scale=2.0, size=(n, NUM_CLASSES)),
                   rng.normal(scale=2.0, size=(n, n_clusters)),
                   class_weights,
                   small_instance_weights(inst, 3.0, 5))


def _argmax_key(S) -> tuple:
    return tuple(column_argmax(S))


def check_problem(name: str, problem: Problem, h: float = 1e-5,
                  tolerance: float = 1e-4) -> GradCheckReport:
    scene, cw, pw = problem.scene, problem.class_weights, problem.point_weights
    inst_gt, sem_gt = scene.inst_gt, scene.sem_gt
    if name == "impurity":
        return finite_difference_check(
            lambda p: impurity_loss(build(scene, p)), problem.inst_logits, h, tolerance,
            selection=lambda p: _argmax_key(build(scene, p)))
    if name == "fragmentation":
        ref = build(scene, softmax(problem.inst_logits))
        return finite_difference_check(
            lambda p: fragmentation_loss(build(scene, p), ref), problem.inst_logits, h, tolerance)
    if name == "wce":
        return finite_difference_check(
            lambda p: weighted_cross_entropy(p, sem_gt, cw, pw), problem.sem_logits, h, tolerance)
    if name == "lovasz":
        return finite_difference_check(
            lambda p: lovasz_softmax(p, sem_gt), problem.sem_logits, h, tolerance,
            selection=lambda p: lovasz_permutations(p, sem_gt))
    if name == "total":
        ref = softmax(problem.inst_logits)
        weights = LossWeights()
        return finite_difference_check(
            lambda ps, pi: combined_loss(scene, ps, pi, weights, None, cw, ref, pw),
            (problem.sem_logits, problem.inst_logits), h, tolerance,
            selection=lambda ps, pi: (lovasz_permutations(ps, sem_gt),
                                      _argmax_key(build(scene, pi))))
    raise ValueError(f"unknown loss {name!r}; choose from {', '.join(LOSS_NAMES)}")


def run_trials(name: str, trials: int = 100, seed: int = 0, h: float = 1e-5,
               tolerance: float = 1e-4) -> list[GradCheckReport]:
    """One report per trial; trial ``t`` uses ``default_rng([seed, t])``."""
    if name not in LOSS_NAMES:
        raise ValueError(f"unknown loss {name!r}; choose from {', '.join(LOSS_NAMES)}")
    return [check_problem(name, random_problem(np.random.default_rng([seed, t])), h, tolerance)
            for t in range(trials)]
