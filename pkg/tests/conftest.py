import json

import pytest

from adaf.backbone import BackboneConfig
from adaf.data import Family, SynthSpec, generate_synthetic, LoadedDataset
from adaf.frontends import FrontEndConfig
from adaf.training import TrainConfig


def tiny_fe_cfg(kind="bank-of-filterbanks", **kw):
    base = dict(kind=kind, n_filterbanks=1 if kind == "baseline" else 2,
                pooling="max", embed_dim=8, hidden=12, conv_filters=8,
                kernel_len=9, router_widths=(8, 8, 8), patch_len=400)
    base.update(kw)
    return FrontEndConfig(**base)


def tiny_bb_cfg(**kw):
    base = dict(layers=1, model_dim=8, heads=2, ff_dim=16, n_classes=2,
                max_seq_len=8)
    base.update(kw)
    return BackboneConfig(**base)


def tiny_train_cfg(**kw):
    base = dict(epochs=2, batch_size=4, seed=0, checkpoint_every=1, top_k=1)
    base.update(kw)
    return TrainConfig(**base)


def tiny_synth_spec(seed=7, clips=5, seconds=0.2, families=None):
    if families is None:
        families = [Family("tone", "pure-tone"), Family("noise", "noise-burst")]
    return SynthSpec(families=families, clips_per_family=clips,
                     clip_seconds=seconds, seed=seed,
                     split_fractions=(0.6, 0.2, 0.2))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A small 2-family synthetic dataset, loaded once per session."""
    root = tmp_path_factory.mktemp("tinyds")
    manifests = generate_synthetic(tiny_synth_spec(clips=10), str(root))
    return {split: LoadedDataset(m) for split, m in manifests.items()}


def tiny_run_config(out_dir, data_dir=None, synth=None, **train_kw):
    cfg = {
        "data": ({"manifest_dir": data_dir} if data_dir else {"synth": synth}),
        "frontend": {"kind": "bank-of-filterbanks", "n_filterbanks": 2,
                     "pooling": "max", "embed_dim": 8, "conv_filters": 8,
                     "kernel_len": 9, "router_widths": [8, 8, 8],
                     "patch_len": 400},
        "backbone": {"layers": 1, "model_dim": 8, "heads": 2, "ff_dim": 16,
                     "max_seq_len": 8},
        "train": {"epochs": 2, "batch_size": 4, "checkpoint_every": 1,
                  "top_k": 1, **train_kw},
        "out_dir": out_dir,
    }
    return cfg


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f)
    return str(path)
