#!/usr/bin/env python3
"""Check whether routing profiles cluster by superfamily.

Trains short runs over several seeds on the bundled 2-tonal + 2-noise
synthetic set and reports mean inter- vs intra-superfamily distances
between per-class routing profiles.

Usage:
    python scripts/routing_clusters.py --out runs/clusters --seeds 5
"""

import argparse
import os

import numpy as np

from adaf.analysis import distance_matrix, routing_profiles
from adaf.backbone import BackboneConfig
from adaf.data import LoadedDataset, SynthSpec, generate_synthetic
from adaf.frontends import FrontEndConfig
from adaf.model import AudioClassifier
from adaf.training import TrainConfig, train

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def run(out, seeds):
    spec = SynthSpec.from_json(os.path.join(CONFIGS, "cluster-synth.json"))
    manifests = generate_synthetic(spec, os.path.join(out, "data"))
    train_ds = LoadedDataset(manifests["train"])
    valid_ds = LoadedDataset(manifests["valid"])

    fe = FrontEndConfig(kind="bank-of-filterbanks", n_filterbanks=2,
                        pooling="max", embed_dim=32, conv_filters=32,
                        kernel_len=64, router_widths=(128, 128, 128))
    bb = BackboneConfig(layers=2, model_dim=32, heads=4, ff_dim=128,
                        n_classes=4, max_seq_len=20)

    wins = 0
    for seed in range(seeds):
        cfg = TrainConfig(epochs=6, batch_size=16, seed=seed,
                          checkpoint_every=0, top_k=1)
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([seed, 0xA0])))
        model = AudioClassifier(fe, bb, rng)
        train(model, train_ds, valid_ds, cfg, os.path.join(out, f"seed{seed}"))
        dm = distance_matrix(routing_profiles(model, valid_ds))
        v = dm.values
        intra = (v[0, 1] + v[2, 3]) / 2
        inter = np.mean([v[i, j] for i in (0, 1) for j in (2, 3)])
        wins += inter > intra
        print(f"seed {seed}: inter {inter:.4f}  intra {intra:.4f}  "
              f"{'clustered' if inter > intra else 'mixed'}")
    print(f"{wins}/{seeds} seeds cluster by superfamily")
    return 0


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/clusters")
    p.add_argument("--seeds", type=int, default=5)
    raise SystemExit(run(**vars(p.parse_args())))
