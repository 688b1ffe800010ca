"""Learned instance clustering for LiDAR panoptic segmentation.

The clustering losses live in :mod:`pancluster.losses` and operate on the
soft confusion matrix from :mod:`pancluster.softmat`. The remaining modules
cover fusion, post-processing, evaluation, synthetic scenes, file formats and
a small trainable model that ties them together.
"""

from .core import (
    ClassTaxonomy,
    PanopticLabel,
    Prediction,
    RiderRule,
    Scene,
    ValidationError,
    hard_labels,
)
from .fusion import fuse
from .losses import (
    LossResult,
    LossWeights,
    finite_difference_check,
    fragmentation_loss,
    impurity_loss,
    lovasz_softmax,
    total_loss,
    weighted_cross_entropy,
)
from .metrics import PanopticReport, evaluate, evaluate_many
from .postproc import dbscan, post_all, post_cyclists, post_merger, post_splitter
from .softmat import SoftMatrix, build

__version__ = "0.1.0"

__all__ = [
    "ClassTaxonomy", "PanopticLabel", "Prediction", "RiderRule", "Scene", "ValidationError",
    "hard_labels", "fuse", "LossResult", "LossWeights", "finite_difference_check",
    "fragmentation_loss", "impurity_loss", "lovasz_softmax", "total_loss",
    "weighted_cross_entropy", "PanopticReport", "evaluate", "evaluate_many", "dbscan",
    "post_all", "post_cyclists", "post_merger", "post_splitter", "SoftMatrix", "build",
]
