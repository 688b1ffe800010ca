"""Command-line entry point: ``pancluster <subcommand>``.

Subcommands::

    generate   write synthetic scenes (.scn) and a manifest
    train      fit the toy model, write a checkpoint and a loss-curve CSV
    infer      predict panoptic labels (.label) for a directory of scenes, or
               post-process existing labels with --from-labels
    evaluate   score predictions against ground truth, print and save a report
    gradcheck  randomized finite-difference check of one loss

Exit codes: 0 success, 1 validation failure (bad config or data, diverged
training, failed gradient check), 2 I/O error (missing or malformed files).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import yaml

from . import dataio, gradcheck, metrics, postproc, synth, toytrain
from .config import ExperimentConfig, config_to_dict, load_config
from .core import ValidationError

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def _map(fn, items, jobs: int) -> list:
    """Ordered map, in worker processes when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _scene_files(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d}: not a directory")
    return sorted(d.glob("*.scn"))


# generate ----------------------------------------------------------------

def _generate_one(args):
    cfg, index, out = args
    scene = synth.generate(cfg, index)
    path = out / f"scene_{index:06d}.scn"
    dataio.write_scene(path, scene)
    return {"index": index, "file": path.name, "points": len(scene),
            "objects": int(len(scene.instance_ids))}


def cmd_generate(ns, cfg: ExperimentConfig) -> int:
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    synth_cfg = cfg.synth if ns.seed is None else synth.with_seed(cfg.synth, ns.seed)
    rows = _map(_generate_one, [(synth_cfg, ns.start + i, out) for i in range(ns.count)], ns.jobs)
    manifest = {"seed": synth_cfg.seed, "start": ns.start, "count": ns.count, "scenes": rows}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "config.yaml").write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=True))
    print(f"seed {synth_cfg.seed}")
    for r in rows:
        print(f"{r['index']:6d}  {r['file']}  points={r['points']}  objects={r['objects']}")
    return EXIT_OK


# train -------------------------------------------------------------------

def cmd_train(ns, cfg: ExperimentConfig) -> int:
    if ns.scenes:
        files = _scene_files(ns.scenes)
        if not files:
            raise ValidationError(f"{ns.scenes}: no .scn files")
        scenes = [dataio.read_scene(f) for f in files]
    else:
        scenes = [synth.generate(cfg.synth, i) for i in range(cfg.train_scenes)]
    train_cfg = cfg.train
    if ns.iterations is not None:
        train_cfg = replace(train_cfg, iterations=ns.iterations)
    curve = Path(ns.curve) if ns.curve else Path(str(ns.out) + ".csv")
    try:
        result = toytrain.train(train_cfg, scenes, cfg.taxonomy)
    except toytrain.TrainingDiverged as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return EXIT_INVALID
    toytrain.save_checkpoint(ns.out, result.model)
    names = ("wce", "lovasz", "impurity", "fragmentation")
    with open(curve, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("iteration", "total") + names)
        for i, (v, parts) in enumerate(zip(result.losses, result.parts)):
            w.writerow([i, repr(float(v))] + [repr(float(parts[k])) for k in names])
    if result.losses:
        print(f"final loss {result.losses[-1]:.6f} after {len(result.losses)} iterations")
    print(f"checkpoint {ns.out}\nloss curve {curve}")
    return EXIT_OK


# infer -------------------------------------------------------------------

def _infer_one(args):
    ckpt, labels_dir, path, out, cfg, flags = args
    scene = dataio.read_scene(path)
    if ckpt is not None:
        label = toytrain.infer(toytrain.load_checkpoint(ckpt), scene, cfg.taxonomy)
    else:
        label = dataio.read_panoptic(Path(labels_dir) / (path.stem + ".label"), len(scene))
    if any(flags):
        label = postproc.post_all(label, scene.points, cfg.taxonomy, *flags)
    target = out / (path.stem + ".label")
    dataio.write_panoptic(target, label)
    return target.name


def cmd_infer(ns, cfg: ExperimentConfig) -> int:
    out = Path(ns.out)
    files = _scene_files(ns.scenes)
    if ns.checkpoint is not None:
        toytrain.load_checkpoint(ns.checkpoint)  # fail early on a bad file
    elif Path(ns.from_labels).resolve() == out.resolve():
        raise ValidationError("--from-labels and --out must differ")
    out.mkdir(parents=True, exist_ok=True)
    # fixed order splitter -> merger -> cyclists, whatever the flag order
    flags = (ns.post_splitter or ns.post_all, ns.post_merger or ns.post_all,
             ns.post_cyclists or ns.post_all)
    jobs = [(ns.checkpoint, ns.from_labels, f, out, cfg, flags) for f in files]
    names = _map(_infer_one, jobs, ns.jobs)
    applied = [n for n, on in zip(("splitter", "merger", "cyclists"), flags) if on]
    print(f"wrote {len(names)} predictions to {out}"
          + (f" (post: {', '.join(applied)})" if applied else ""))
    return EXIT_OK


# evaluate ----------------------------------------------------------------

def _load_gt(gt_dir: Path, stem: str, cfg: ExperimentConfig):
    scn = gt_dir / f"{stem}.scn"
    if scn.exists():
        return dataio.read_scene(scn)
    bin_path, label_path = gt_dir / f"{stem}.bin", gt_dir / f"{stem}.label"
    if bin_path.exists() and label_path.exists():
        return dataio.read_kitti_scan(bin_path, label_path, cfg.learning_map, cfg.taxonomy)
    raise FileNotFoundError(f"no ground truth for {stem} in {gt_dir}")


def _stats_one(args):
    pred_path, gt_dir, cfg = args
    gt = _load_gt(gt_dir, pred_path.stem, cfg)
    pred = dataio.read_panoptic(pred_path, len(gt))
    return metrics.scene_stats(pred, gt, cfg.taxonomy)


def cmd_evaluate(ns, cfg: ExperimentConfig) -> int:
    pred_dir, gt_dir = Path(ns.pred), Path(ns.gt)
    if not pred_dir.is_dir():
        raise FileNotFoundError(f"{pred_dir}: not a directory")
    files = sorted(pred_dir.glob("*.label"))
    if not files:
        raise ValidationError(f"{pred_dir}: no .label predictions")
    stats = _map(_stats_one, [(f, gt_dir, cfg) for f in files], ns.jobs)
    total = metrics.PanopticStats(cfg.taxonomy.num_classes)
    for s in stats:
        total = total + s
    rep = metrics.report(total, cfg.taxonomy)
    report_path = Path(ns.report) if ns.report else pred_dir / "report.json"
    report_path.write_text(rep.to_json() + "\n")
    print(f"scenes     {len(files)}")
    print(rep.format_table())
    return EXIT_OK


# gradcheck ---------------------------------------------------------------

def cmd_gradcheck(ns, cfg: ExperimentConfig) -> int:
    reports = gradcheck.run_trials(ns.loss, ns.trials, ns.seed, ns.h, ns.tolerance)
    worst = max(reports, key=lambda r: r.max_rel_error)
    failed = sum(not r.passed for r in reports)
    checked = sum(r.n_checked for r in reports)
    excluded = sum(r.n_excluded for r in reports)
    print(f"{ns.loss}: {len(reports)} trials, {checked} coordinates checked, "
          f"{excluded} skipped near ties")
    print(f"worst relative error {worst.max_rel_error:.3e} (tolerance {ns.tolerance:g})")
    print("PASS" if failed == 0 else f"FAIL ({failed} trials over tolerance)")
    return EXIT_OK if failed == 0 else EXIT_INVALID


# wiring ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pancluster", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, jobs=True):
        sp.add_argument("--config", help="experiment YAML file (defaults if omitted)")
        if jobs:
            sp.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")

    g = sub.add_parser("generate", help="write synthetic scenes")
    common(g)
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--start", type=int, default=0, help="first scene index")
    g.add_argument("--seed", type=int, help="override synth.seed")
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="train the toy model")
    common(t, jobs=False)
    t.add_argument("--scenes", help="directory of .scn files (default: synthesize from config)")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--curve", help="loss-curve CSV path (default: <out>.csv)")
    t.add_argument("--iterations", type=int, help="override train.iterations")
    t.set_defaults(fn=cmd_train)

    i = sub.add_parser("infer", help="predict panoptic labels")
    common(i)
    src = i.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", help="model checkpoint to run")
    src.add_argument("--from-labels", help="post-process existing .label files from this directory")
    i.add_argument("--scenes", required=True, help="directory of .scn files")
    i.add_argument("--out", required=True, help="output directory for .label files")
    i.add_argument("--post-splitter", action="store_true")
    i.add_argument("--post-merger", action="store_true")
    i.add_argument("--post-cyclists", action="store_true")
    i.add_argument("--post-all", action="store_true")
    i.set_defaults(fn=cmd_infer)

    e = sub.add_parser("evaluate", help="score predictions")
    common(e)
    e.add_argument("--pred", required=True, help="directory of predicted .label files")
    e.add_argument("--gt", required=True, help="directory of .scn (or .bin + .label) ground truth")
    e.add_argument("--report", help="JSON report path (default: <pred>/report.json)")
    e.set_defaults(fn=cmd_evaluate)

    c = sub.add_parser("gradcheck", help="finite-difference check of a loss")
    common(c, jobs=False)
    c.add_argument("loss", choices=gradcheck.LOSS_NAMES)
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--h", type=float, default=1e-5)
    c.add_argument("--tolerance", type=float, default=1e-4)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(ns.config)
        return ns.fn(ns, cfg)
    except dataio.FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
