#!/usr/bin/env python3
"""Run the full desk-scale experiment: train the bank-of-filterbanks model
with max and avg pooling on the bundled 4-family synthetic set, join the
metric curves, and export routing profiles and learned filters.

Usage:
    python scripts/desk_experiment.py --out runs/desk
"""

import argparse
import os
import sys

from adaf.cli import main as adaf

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def run(out):
    runs = {}
    for pooling in ("max", "avg"):
        run_dir = os.path.join(out, pooling)
        rc = adaf(["train", "--config",
                   os.path.join(CONFIGS, f"desk-run-{pooling}.json"),
                   "--out", run_dir])
        if rc != 0:
            return rc
        runs[pooling] = run_dir

    rc = adaf(["compare",
               os.path.join(runs["max"], "metrics.ndjson"),
               os.path.join(runs["avg"], "metrics.ndjson"),
               "--out", os.path.join(out, "pooling-top1.csv"),
               "--metric", "top_k_patch"])
    if rc != 0:
        return rc

    ckpt = os.path.join(runs["max"], "checkpoint-0050.adaf")
    manifest = os.path.join(runs["max"], "data", "manifest-valid.json")
    for which in ("routing", "filters"):
        rc = adaf(["analyze", "--checkpoint", ckpt, "--which", which,
                   "--manifest", manifest,
                   "--out", os.path.join(out, "analysis")])
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/desk")
    sys.exit(run(p.parse_args().out))
