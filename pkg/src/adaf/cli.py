"""Command-line entry point: synth | train | eval | analyze | gradcheck | compare."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .analysis import (compare_runs, distance_matrix, export_filters,
                       routing_profiles, write_compare_csv, write_profiles)
from .checkpoint import load_checkpoint
from .config import (build_model, load_run_config, model_from_checkpoint,
                     write_resolved_config)
from .data import DatasetManifest, LoadedDataset, SynthSpec, generate_synthetic
from .errors import AdafError, ValidationError
from .gradcheck import run_suite
from .training import TrainConfig, evaluate, load_training_state, train


def _apply_thread_cap():
    cap = os.environ.get("ADAF_THREADS")
    if not cap:
        return
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(int(cap))
    except Exception:
        pass  # best effort; numpy may already have pinned its pools


def cmd_synth(args):
    spec = SynthSpec.from_json(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    manifests = generate_synthetic(spec, args.out)
    print(f"wrote {sum(len(m.entries) for m in manifests.values())} clips "
          f"across splits {sorted(manifests)} to {args.out}")
    return 0


def _load_manifests(cfg):
    if cfg.synth is not None:
        spec = (SynthSpec.from_json(cfg.synth) if isinstance(cfg.synth, str)
                else SynthSpec(**cfg.synth))
        data_dir = os.path.join(cfg.out_dir, "data")
        manifests = generate_synthetic(spec, data_dir)
    else:
        manifests = {}
        for split in ("train", "valid", "test"):
            path = os.path.join(cfg.manifest_dir, f"manifest-{split}.json")
            if os.path.exists(path):
                manifests[split] = DatasetManifest.load(path)
    if "train" not in manifests or "valid" not in manifests:
        raise ValidationError("data: need train and valid manifests")
    return manifests


def cmd_train(args):
    cfg = load_run_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.train.seed = args.seed
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifests = _load_manifests(cfg)
    classes = manifests["train"].classes
    cfg.backbone = dataclasses.replace(cfg.backbone, n_classes=len(classes))
    write_resolved_config(cfg, cfg.out_dir)

    train_ds = LoadedDataset(manifests["train"], cfg.frontend.patch_len)
    valid_ds = LoadedDataset(manifests["valid"], cfg.frontend.patch_len)
    model = build_model(cfg, len(classes))
    snapshot = cfg.to_dict()
    snapshot["classes"] = classes

    start_epoch, opt, rng = 0, None, None
    if args.checkpoint:
        start_epoch, opt, rng = load_training_state(args.checkpoint, model, cfg.train)
    ckpt, reports = train(model, train_ds, valid_ds, cfg.train, cfg.out_dir,
                          config_snapshot=snapshot, start_epoch=start_epoch,
                          opt=opt, rng=rng)
    final = reports[-1]
    print(f"final checkpoint {ckpt}; map={final.map:.4f} "
          f"top{final.k}={final.top_k_patch:.4f} acc={final.clip_accuracy:.4f}")
    return 0


def _dataset_for(args, patch_len):
    manifest = DatasetManifest.load(args.manifest)
    return manifest, LoadedDataset(manifest, patch_len)


def cmd_eval(args):
    tensors, snapshot = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(tensors, snapshot)
    manifest, ds = _dataset_for(args, model.fe_cfg.patch_len)
    tcfg = TrainConfig(**{k: (tuple(v) if isinstance(v, list) else v)
                          for k, v in snapshot.get("train", {}).items()})
    report = evaluate(model, ds, tcfg)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    stem = os.path.join(out, f"eval-{manifest.split}")
    report.save_json(stem + ".json")
    report.save_per_class_csv(stem + "-per-class-ap.csv", manifest.classes)
    print(f"map={report.map:.4f} top{report.k}={report.top_k_patch:.4f} "
          f"acc={report.clip_accuracy:.4f} -> {stem}.json")
    return 0


def cmd_analyze(args):
    tensors, snapshot = load_checkpoint(args.checkpoint)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    stem = os.path.join(
        out, os.path.splitext(os.path.basename(args.checkpoint))[0])
    if args.which == "filters":
        paths = export_filters(tensors, args.bank, stem)
        print(f"wrote {paths[0]} and {paths[1]}")
        return 0
    if not args.manifest:
        raise ValidationError("analyze: --manifest is required for routing/distance")
    model = model_from_checkpoint(tensors, snapshot)
    manifest, ds = _dataset_for(args, model.fe_cfg.patch_len)
    profiles = routing_profiles(model, ds)
    if args.which == "routing":
        paths = write_profiles(profiles, distance_matrix(profiles), stem,
                               manifest.split)
    else:  # distance
        dm = distance_matrix(profiles)
        paths = write_profiles(profiles, dm, stem, manifest.split)
    print(f"wrote {paths[0]} and {paths[1]}")
    return 0


def cmd_gradcheck(args):
    rows = run_suite(seeds=range(args.seeds))
    width = max(len(r[0]) for r in rows)
    failed = 0
    for name, err, ok in rows:
        print(f"{name:<{width}}  {err:10.3e}  {'pass' if ok else 'FAIL'}")
        failed += not ok
    return 1 if failed else 0


def cmd_compare(args):
    header, rows = compare_runs(args.logs, metric=args.metric)
    write_compare_csv(header, rows, args.out)
    print(f"wrote {args.out} ({len(rows)} epochs x {len(header) - 1} runs)")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="adaf",
        description="Content-adaptive audio front end: data synthesis, "
                    "training, evaluation, and analysis.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    s.add_argument("--spec", required=True, help="synth spec JSON")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=None, help="override spec seed")
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("train", help="train a model from a run config")
    s.add_argument("--config", required=True, help="run config JSON")
    s.add_argument("--out", default=None, help="override output directory")
    s.add_argument("--seed", type=int, default=None, help="override train seed")
    s.add_argument("--checkpoint", default=None, help="resume from checkpoint")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", default=None,
                   help="informational; the manifest names its split")
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("analyze", help="routing / filter / distance analysis")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", default=None)
    s.add_argument("--which", required=True,
                   choices=("routing", "filters", "distance"))
    s.add_argument("--bank", type=int, default=0, help="bank index for filters")
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_analyze)

    s = sub.add_parser("gradcheck", help="finite-difference check all primitives")
    s.add_argument("--seeds", type=int, default=3, help="random seeds per check")
    s.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("compare", help="join metric curves from several runs")
    s.add_argument("logs", nargs="+", help="metrics.ndjson paths")
    s.add_argument("--out", required=True, help="output CSV path")
    s.add_argument("--metric", default="top_k_patch",
                   choices=("top_k_patch", "map", "clip_accuracy",
                            "train_loss", "valid_loss"))
    s.set_defaults(fn=cmd_compare)
    return p


def main(argv=None):
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except AdafError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: FileNotFoundError: {exc.filename}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: JSONDecodeError: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
