"""A tiny two-headed per-point network trained with the clustering losses.

The trunk sees each point's features next to the mean features of its k
nearest neighbours. The semantic head predicts class logits; the instance
head reads the trunk output concatenated with the semantic probabilities
(no gradient flows back through that skip) and predicts ``N`` cluster
logits. Backpropagation is written out by hand.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Iterator

import numpy as np

from .core import ClassTaxonomy, PanopticLabel, Prediction, Scene, hard_labels, softmax, softmax_backward
from .dataio import FormatError
from .fusion import fuse
from .losses import LossWeights, combined_loss, inverse_log_frequency, small_instance_weights
from .synth import SynthConfig, generate, micro_taxonomy

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"PCKP"
CHECKPOINT_VERSION = 1

LAYERS = ("trunk1", "trunk2", "sem1", "sem2", "inst1", "inst2")


class TrainingDiverged(RuntimeError):
    pass


def knn_mean(values: np.ndarray, xyz: np.ndarray, k: int) -> np.ndarray:
    """Mean of ``values`` over each point's ``k`` nearest neighbours (self included).

    Distance ties go to the lower point index.
    """
    n = len(xyz)
    if n == 0:
        return values.copy()
    k = min(k, n)
    d2 = np.sum((xyz[:, None, :] - xyz[None, :, :]) ** 2, axis=-1)
    nbr = np.argpartition(d2, k - 1, axis=1)[:, :k]
    kth = np.take_along_axis(d2, nbr, axis=1).max(axis=1, keepdims=True)
    # rows with a distance tie at the k-th place fall back to an index-ordered pick
    for i in np.flatnonzero(np.sum(d2 <= kth, axis=1) > k):
        pool = np.flatnonzero(d2[i] <= kth[i])
        nbr[i] = pool[np.lexsort((pool, d2[i, pool]))[:k]]
    return values[nbr].mean(axis=1)


def point_features(scene: Scene, k: int = 8, coord_scale: float = 0.3,
                   remission_scale: float = 3.0) -> np.ndarray:
    """Per-point input: scaled ``x, y, z, remission`` and their k-NN means."""
    f = scene.points.copy()
    f[:, :3] *= coord_scale
    f[:, 3] *= remission_scale
    return np.hstack([f, knn_mean(f, scene.points[:, :3], k)])


@dataclass
class ToyModel:
    params: dict
    num_classes: int
    num_clusters: int
    k: int = 8
    coord_scale: float = 0.3
    remission_scale: float = 3.0

    @property
    def trunk_width(self) -> int:
        return self.params["trunk2.W"].shape[1]

    def copy(self) -> "ToyModel":
        return ToyModel({k: v.copy() for k, v in self.params.items()}, self.num_classes,
                        self.num_clusters, self.k, self.coord_scale, self.remission_scale)

    def features(self, scene: Scene) -> np.ndarray:
        return point_features(scene, self.k, self.coord_scale, self.remission_scale)


def init_model(num_classes: int, num_clusters: int, seed: int = 0, hidden: int = 64,
               head_hidden: int = 64, k: int = 8, coord_scale: float = 0.3,
               remission_scale: float = 3.0) -> ToyModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    in_dim = 8
    shapes = {
        "trunk1": (in_dim, hidden),
        "trunk2": (hidden, hidden),
        "sem1": (hidden, head_hidden),
        "sem2": (head_hidden, num_classes),
        "inst1": (hidden + num_classes, head_hidden),
        "inst2": (head_hidden, num_clusters),
    }
    params = {}
    for name in LAYERS:
        fan_in, fan_out = shapes[name]
        a = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"{name}.W"] = rng.uniform(-a, a, size=(fan_in, fan_out))
        params[f"{name}.b"] = np.zeros(fan_out)
    return ToyModel(params, num_classes, num_clusters, k, coord_scale, remission_scale)


def _forward(model: ToyModel, x: np.ndarray):
    p = model.params
    h1 = np.tanh(x @ p["trunk1.W"] + p["trunk1.b"])
    h2 = np.tanh(h1 @ p["trunk2.W"] + p["trunk2.b"])
    s1 = np.tanh(h2 @ p["sem1.W"] + p["sem1.b"])
    sem_prob = softmax(s1 @ p["sem2.W"] + p["sem2.b"])
    u = np.hstack([h2, sem_prob])
    i1 = np.tanh(u @ p["inst1.W"] + p["inst1.b"])
    inst_prob = softmax(i1 @ p["inst2.W"] + p["inst2.b"])
    cache = dict(x=x, h1=h1, h2=h2, s1=s1, u=u, i1=i1, sem_prob=sem_prob, inst_prob=inst_prob)
    return sem_prob, inst_prob, cache


def _backward(model: ToyModel, cache: dict, g_sem_prob: np.ndarray, g_inst_prob: np.ndarray) -> dict:
    p = model.params
    grads = {}
    d_inst_logits = softmax_backward(cache["inst_prob"], g_inst_prob)
    grads["inst2.W"] = cache["i1"].T @ d_inst_logits
    grads["inst2.b"] = d_inst_logits.sum(axis=0)
    d_i1 = (d_inst_logits @ p["inst2.W"].T) * (1 - cache["i1"] ** 2)
    grads["inst1.W"] = cache["u"].T @ d_i1
    grads["inst1.b"] = d_i1.sum(axis=0)
    # the semantic-probability half of the skip input is treated as data
    d_h2 = (d_i1 @ p["inst1.W"].T)[:, :model.trunk_width]

    d_sem_logits = softmax_backward(cache["sem_prob"], g_sem_prob)
    grads["sem2.W"] = cache["s1"].T @ d_sem_logits
    grads["sem2.b"] = d_sem_logits.sum(axis=0)
    d_s1 = (d_sem_logits @ p["sem2.W"].T) * (1 - cache["s1"] ** 2)
    grads["sem1.W"] = cache["h2"].T @ d_s1
    grads["sem1.b"] = d_s1.sum(axis=0)
    d_h2 = d_h2 + d_s1 @ p["sem1.W"].T

    d_z2 = d_h2 * (1 - cache["h2"] ** 2)
    grads["trunk2.W"] = cache["h1"].T @ d_z2
    grads["trunk2.b"] = d_z2.sum(axis=0)
    d_z1 = (d_z2 @ p["trunk2.W"].T) * (1 - cache["h1"] ** 2)
    grads["trunk1.W"] = cache["x"].T @ d_z1
    grads["trunk1.b"] = d_z1.sum(axis=0)
    return grads


def forward(model: ToyModel, scene: Scene, features: np.ndarray | None = None) -> Prediction:
    if features is None:
        features = model.features(scene)
    sem_prob, inst_prob, _ = _forward(model, features)
    return Prediction(sem_prob, inst_prob)


def infer(model: ToyModel, scene: Scene, taxonomy: ClassTaxonomy) -> PanopticLabel:
    sem, cluster = hard_labels(forward(model, scene))
    return fuse(sem, cluster, taxonomy)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    learning_rate: float = 0.05
    iterations: int = 3000
    batch_size: int = 4
    optimizer: str = "momentum"
    momentum: float = 0.9
    grad_clip: float | None = 5.0
    num_clusters: int = 16
    hidden: int = 64
    head_hidden: int = 64
    k: int = 8
    coord_scale: float = 0.3
    remission_scale: float = 3.0
    weights: LossWeights = field(default_factory=LossWeights)
    # schedule: instance losses alone, then the semantic weight ramps in
    # linearly, and fragmentation switches on last
    sem_warmup: int = 1000
    sem_ramp: int = 1000
    frag_warmup: int = 2000
    class_weight_scenes: int = 64
    normalize_class_weights: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if min(self.sem_warmup, self.sem_ramp, self.frag_warmup) < 0:
            raise ValueError("schedule lengths must be non-negative")
        if self.optimizer not in ("sgd", "momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainResult:
    model: ToyModel
    losses: list
    parts: list


class _Prepared:
    """A scene with its feature matrix and per-point loss weights cached."""

    __slots__ = ("scene", "features", "point_weights")

    def __init__(self, scene: Scene, model: ToyModel, weights: LossWeights):
        self.scene = scene
        self.features = model.features(scene)
        self.point_weights = small_instance_weights(
            scene.inst_gt, weights.small_instance_factor, weights.small_instance_threshold)


def loss_and_grads(model: ToyModel, batch: list, weights: LossWeights, taxonomy: ClassTaxonomy,
                   class_weights=None):
    """Mean total loss over ``batch`` and its gradient w.r.t. every parameter."""
    total = 0.0
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    parts = {}
    for item in batch:
        if isinstance(item, Scene):
            item = _Prepared(item, model, weights)
        sem_prob, inst_prob, cache = _forward(model, item.features)
        res = combined_loss(item.scene, sem_prob, inst_prob, weights, taxonomy,
                            class_weights, point_weights=item.point_weights)
        g = _backward(model, cache, *res.grad)
        for k in grads:
            grads[k] += g[k]
        total += res.value
        for k, v in res.parts.items():
            parts[k] = parts.get(k, 0.0) + v / len(batch)
    for k in grads:
        grads[k] /= len(batch)
    return total / len(batch), grads, parts


def class_frequency_weights(scenes: Iterable[Scene], taxonomy: ClassTaxonomy,
                            normalize: bool = False) -> np.ndarray:
    """Inverse log-frequency weights; ``normalize`` rescales them so the
    average weight per labelled point is 1."""
    counts = np.zeros(taxonomy.num_classes)
    for s in scenes:
        counts += np.bincount(s.sem_gt, minlength=taxonomy.num_classes)[:taxonomy.num_classes]
    w = inverse_log_frequency(counts, ignore_id=taxonomy.ignore_id)
    if normalize:
        mean = float(np.dot(w, counts) / max(np.dot(w > 0, counts), 1))
        if mean > 0:
            w = w / mean
    return w


def synthetic_stream(synth: SynthConfig, start: int = 0) -> Iterator[Scene]:
    index = start
    while True:
        yield generate(synth, index)
        index += 1


def train(config: TrainConfig, scenes, taxonomy: ClassTaxonomy | None = None,
          model: ToyModel | None = None, callback=None) -> TrainResult:
    """Train on ``scenes``: a finite sequence (cycled in order) or an iterator.

    Bitwise reproducible for a fixed config and scene source.
    """
    taxonomy = taxonomy or micro_taxonomy()
    if model is None:
        model = init_model(taxonomy.num_classes, config.num_clusters, config.seed,
                           config.hidden, config.head_hidden, config.k, config.coord_scale,
                           config.remission_scale)
    if isinstance(scenes, (list, tuple)):
        pool = list(scenes)
        if not pool:
            raise ValueError("empty scene list")
        cw_scenes = pool[:config.class_weight_scenes]
        cache: dict = {}

        def draw(i):
            j = i % len(pool)
            if j not in cache:
                cache[j] = _Prepared(pool[j], model, config.weights)
            return cache[j]
    else:
        it = iter(scenes)
        cw_scenes = [next(it) for _ in range(config.class_weight_scenes)]
        buffered = iter(cw_scenes)

        def draw(i):
            s = next(buffered, None)
            return _Prepared(s if s is not None else next(it), model, config.weights)

    class_weights = class_frequency_weights(cw_scenes, taxonomy, config.normalize_class_weights)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    losses, parts_log = [], []
    counter = 0
    for step in range(config.iterations):
        batch = [draw(counter + b) for b in range(config.batch_size)]
        counter += config.batch_size
        weights = config.weights
        if step < config.frag_warmup:
            # unused clusters die under the fragment push before objects have separated
            weights = replace(weights, w_frag=0.0)
        if step < config.sem_warmup + config.sem_ramp:
            # with class information available early, the instance head settles on one cluster per class
            ramp = max(0, step - config.sem_warmup + 1) / (config.sem_ramp + 1)
            weights = replace(weights, w_sem=weights.w_sem * ramp)
        value, grads, parts = loss_and_grads(model, batch, weights, taxonomy, class_weights)
        if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingDiverged(f"non-finite loss at iteration {step}: {value}")
        if config.grad_clip is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > config.grad_clip:
                for k in grads:
                    grads[k] *= config.grad_clip / norm
        for k in model.params:
            if config.optimizer == "momentum":
                velocity[k] = config.momentum * velocity[k] - config.learning_rate * grads[k]
                model.params[k] += velocity[k]
            else:
                model.params[k] -= config.learning_rate * grads[k]
        losses.append(value)
        parts_log.append(parts)
        if callback is not None:
            callback(step, value, parts)
    return TrainResult(model, losses, parts_log)


def save_checkpoint(path, model: ToyModel) -> None:
    """Write ``model`` as: magic ``PCKP``, u32 version, u32 header length,
    UTF-8 JSON header, then every layer as little-endian float64 in header
    order."""
    layers = [{"name": k, "shape": list(v.shape)} for k, v in sorted(model.params.items())]
    header = json.dumps({
        "num_classes": model.num_classes, "num_clusters": model.num_clusters,
        "k": model.k, "coord_scale": model.coord_scale,
        "remission_scale": model.remission_scale, "layers": layers,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        f.write(header)
        for layer in layers:
            f.write(np.ascontiguousarray(model.params[layer["name"]], dtype="<f8").tobytes())


def load_checkpoint(path) -> ToyModel:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[12:12 + hlen].decode("utf-8"))
    offset = 12 + hlen
    params = {}
    for layer in header["layers"]:
        shape = tuple(layer["shape"])
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(data):
            raise FormatError(f"{path}: truncated at byte offset {len(data)}, expected {end} bytes")
        params[layer["name"]] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
    return ToyModel(params, header["num_classes"], header["num_clusters"], header["k"],
                    header["coord_scale"], header["remission_scale"])


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
