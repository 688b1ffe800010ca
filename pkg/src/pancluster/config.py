"""Experiment configuration files.

One YAML file carries everything the command-line tools need. Every section
is optional and falls back to the toy experiment defaults::

    taxonomy:            # class layout; default is the synthetic micro-taxonomy
      num_classes: 9
      ignore_id: 0
      names: {0: unlabeled, 1: road, 2: vegetation, 3: car, ...}
      stuff: [road, vegetation]
      things: [car, person, bicycle, bicyclist, motorcycle, motorcyclist]
    postproc:            # per thing class, by name or id
      max_extent: {car: 6.0, person: 2.0}
      merge_eps: {car: 2.0, person: 0.5}
      rider_rules:
        - {rider: bicyclist, required: bicycle, fallback_vehicle: motorcycle,
           fallback_rider: motorcyclist, radius: 2.0}
    synth:               # any SynthConfig field; class keys by name or id
      seed: 1
      layout: slots
      class_mix: {car: 1, person: 1}
      objects: {car: {remission: 0.8}}
    loss:                # any LossWeights field
      w_imp: 0.2
    train:               # any TrainConfig field, plus the pool size
      scenes: 128
      iterations: 3000
    learning_map: {10: 3, 30: 4}   # raw dataset id -> class id, for .bin/.label input

Class references in ``postproc``, ``synth`` and ``taxonomy`` accept either
the class name or its integer id. Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .core import ClassTaxonomy, RiderRule, ValidationError
from .losses import LossWeights
from .synth import DEFAULT_OBJECTS, ObjectSpec, SynthConfig, micro_taxonomy, toy_config
from .toytrain import TrainConfig


@dataclass(frozen=True)
class ExperimentConfig:
    taxonomy: ClassTaxonomy = field(default_factory=micro_taxonomy)
    synth: SynthConfig = field(default_factory=lambda: toy_config(seed=1))
    train: TrainConfig = field(default_factory=TrainConfig)
    train_scenes: int = 128
    learning_map: dict | None = None


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def _class_id(ref, taxonomy_names: dict) -> int:
    if isinstance(ref, bool):
        raise ValidationError(f"bad class reference {ref!r}")
    if isinstance(ref, int):
        return ref
    if isinstance(ref, str):
        if ref.lstrip("-").isdigit():
            return int(ref)
        for cid, name in taxonomy_names.items():
            if name == ref:
                return int(cid)
    raise ValidationError(f"unknown class {ref!r}")


def _check_keys(section: str, data: dict, allowed) -> None:
    if not isinstance(data, dict):
        raise ValidationError(f"section {section!r} must be a mapping")
    extra = sorted(set(data) - set(allowed), key=str)
    if extra:
        raise ValidationError(f"unknown keys in {section!r}: {', '.join(map(str, extra))}")


def _taxonomy(data: dict, post: dict) -> ClassTaxonomy:
    base = micro_taxonomy()
    _check_keys("taxonomy", data, ("num_classes", "ignore_id", "names", "stuff", "things"))
    _check_keys("postproc", post, ("max_extent", "merge_eps", "rider_rules"))
    names = {int(k): str(v) for k, v in data.get("names", base.class_names).items()}
    num_classes = int(data.get("num_classes", base.num_classes if not data else len(names)))
    stuff = {_class_id(c, names) for c in data.get("stuff", base.stuff_ids)}
    things = {_class_id(c, names) for c in data.get("things", base.thing_ids)}

    # a custom taxonomy starts from empty thresholds, the default one from its own
    custom = bool(data)

    def table(key, default):
        out = {} if custom else dict(default)
        out.update({_class_id(k, names): float(v) for k, v in (post.get(key) or {}).items()})
        return out

    rules = () if custom else base.rider_rules
    if "rider_rules" in post:
        rules = []
        for r in post["rider_rules"] or ():
            keys = ("rider", "required", "fallback_vehicle", "fallback_rider", "radius")
            _check_keys("rider_rules", r, keys)
            missing = [k for k in keys if k not in r]
            if missing:
                raise ValidationError(f"rider rule missing {', '.join(missing)}")
            rules.append(RiderRule(_class_id(r["rider"], names), _class_id(r["required"], names),
                                   _class_id(r["fallback_vehicle"], names),
                                   _class_id(r["fallback_rider"], names), float(r["radius"])))
    return ClassTaxonomy(
        num_classes=num_classes, stuff_ids=stuff, thing_ids=things,
        ignore_id=int(data.get("ignore_id", base.ignore_id)), class_names=names,
        max_extent=table("max_extent", base.max_extent),
        merge_eps=table("merge_eps", base.merge_eps), rider_rules=tuple(rules))


_TUPLE_FIELDS = {"num_points", "num_objects", "slot_grid", "background_blobs", "blob_points"}


def _synth(data: dict, taxonomy: ClassTaxonomy) -> SynthConfig:
    base = toy_config(seed=1)
    _check_keys("synth", data, [f.name for f in fields(SynthConfig)])
    kwargs = {}
    for key, value in data.items():
        if key in _TUPLE_FIELDS:
            value = tuple(value)
        elif key == "class_mix":
            value = {_class_id(k, taxonomy.class_names): float(v) for k, v in value.items()}
        elif key == "objects":
            objects = dict(DEFAULT_OBJECTS)
            for k, spec in value.items():
                cid = _class_id(k, taxonomy.class_names)
                _check_keys(f"synth.objects.{k}", spec, ("half_extent", "points", "remission"))
                current = asdict(objects.get(cid, ObjectSpec((0.5, 0.5, 0.5), (20, 40), 0.5)))
                current.update(spec)
                objects[cid] = ObjectSpec(tuple(current["half_extent"]), tuple(current["points"]),
                                          float(current["remission"]))
            value = objects
        kwargs[key] = value
    try:
        return replace(base, **kwargs)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"synth: {e}") from e


def _train(data: dict, loss: dict) -> tuple[TrainConfig, int]:
    allowed = [f.name for f in fields(TrainConfig) if f.name != "weights"] + ["scenes"]
    _check_keys("train", data, allowed)
    _check_keys("loss", loss, [f.name for f in fields(LossWeights)])
    data = dict(data)
    scenes = int(data.pop("scenes", 128))
    try:
        weights = LossWeights(**loss)
        return TrainConfig(weights=weights, **data), scenes
    except (TypeError, ValueError) as e:
        raise ValidationError(f"train: {e}") from e


def parse_config(data: dict | None) -> ExperimentConfig:
    data = data or {}
    _check_keys("config", data, ("taxonomy", "postproc", "synth", "loss", "train", "learning_map"))
    taxonomy = _taxonomy(data.get("taxonomy") or {}, data.get("postproc") or {})
    synth = _synth(data.get("synth") or {}, taxonomy)
    train, scenes = _train(data.get("train") or {}, data.get("loss") or {})
    if scenes < 1:
        raise ValidationError("train.scenes must be >= 1")
    lmap = data.get("learning_map")
    if lmap is not None:
        lmap = {int(k): int(v) for k, v in lmap.items()}
    return ExperimentConfig(taxonomy, synth, train, scenes, lmap)


def load_config(path) -> ExperimentConfig:
    """Read an experiment file; ``None`` gives the defaults."""
    if path is None:
        return default_config()
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ValidationError(f"{path}: {e}") from e
    return parse_config(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain-data view of ``cfg`` that :func:`parse_config` reads back."""
    tax = cfg.taxonomy
    synth = asdict(cfg.synth)
    synth["objects"] = {int(c): asdict(s) for c, s in cfg.synth.objects.items()}
    synth["class_mix"] = {int(c): float(v) for c, v in cfg.synth.class_mix.items()}
    train = asdict(cfg.train)
    loss = train.pop("weights")
    train["scenes"] = cfg.train_scenes
    out = {
        "taxonomy": {
            "num_classes": tax.num_classes, "ignore_id": tax.ignore_id,
            "names": {int(k): v for k, v in sorted(tax.class_names.items())},
            "stuff": sorted(tax.stuff_ids), "things": sorted(tax.thing_ids),
        },
        "postproc": {
            "max_extent": {int(k): float(v) for k, v in sorted(tax.max_extent.items())},
            "merge_eps": {int(k): float(v) for k, v in sorted(tax.merge_eps.items())},
            "rider_rules": [asdict(r) for r in tax.rider_rules],
        },
        "synth": _plain(synth), "loss": loss, "train": train,
    }
    if cfg.learning_map is not None:
        out["learning_map"] = dict(sorted(cfg.learning_map.items()))
    return out


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj
