"""Run configuration: one JSON file describing data, model, and training."""

from __future__ import annotations

import dataclasses
import json
import os

import numpy as np

from .backbone import BackboneConfig
from .errors import ValidationError
from .frontends import FrontEndConfig
from .model import AudioClassifier
from .training import TrainConfig


@dataclasses.dataclass
class RunConfig:
    frontend: FrontEndConfig
    backbone: BackboneConfig
    train: TrainConfig
    manifest_dir: str | None = None
    synth: object = None          # path to a synth spec JSON, or inline dict
    out_dir: str = "run"

    def validate(self):
        if (self.manifest_dir is None) == (self.synth is None):
            raise ValidationError(
                "data: exactly one of manifest_dir / synth must be given")
        self.frontend.validate()
        self.backbone.validate()
        self.train.validate()
        return self

    def to_dict(self):
        return {
            "data": ({"manifest_dir": self.manifest_dir}
                     if self.manifest_dir is not None else {"synth": self.synth}),
            "frontend": _asdict(self.frontend),
            "backbone": _asdict(self.backbone),
            "train": _asdict(self.train),
            "out_dir": self.out_dir,
        }


def _asdict(dc):
    out = dataclasses.asdict(dc)
    for k, v in out.items():
        if isinstance(v, tuple):
            out[k] = list(v)
    return out


def _from_dict(cls, obj, section):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(obj) - set(fields)
    if unknown:
        raise ValidationError(f"{section}: unknown field {sorted(unknown)[0]!r}")
    kwargs = {}
    for k, v in obj.items():
        if isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"{section}: {exc}") from exc


def parse_run_config(obj, base_dir="."):
    data = obj.get("data", {})
    unknown = set(data) - {"manifest_dir", "synth"}
    if unknown:
        raise ValidationError(f"data: unknown field {sorted(unknown)[0]!r}")
    manifest_dir = data.get("manifest_dir")
    if manifest_dir is not None:
        manifest_dir = os.path.join(base_dir, manifest_dir)
    synth = data.get("synth")
    if isinstance(synth, str):
        synth = os.path.join(base_dir, synth)
    cfg = RunConfig(
        frontend=_from_dict(FrontEndConfig, obj.get("frontend", {}), "frontend"),
        backbone=_from_dict(BackboneConfig, obj.get("backbone", {}), "backbone"),
        train=_from_dict(TrainConfig, obj.get("train", {}), "train"),
        manifest_dir=manifest_dir,
        synth=synth,
        out_dir=os.path.join(base_dir, obj.get("out_dir", "run")),
    )
    top_unknown = set(obj) - {"data", "frontend", "backbone", "train", "out_dir"}
    if top_unknown:
        raise ValidationError(f"config: unknown field {sorted(top_unknown)[0]!r}")
    return cfg.validate()


def load_run_config(path):
    with open(path) as f:
        obj = json.load(f)
    return parse_run_config(obj, base_dir=os.path.dirname(os.path.abspath(path)))


def write_resolved_config(cfg: RunConfig, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved-config.json"), "w") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def init_rng(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xA0])))


def build_model(cfg: RunConfig, n_classes, dtype=np.float32):
    bb = dataclasses.replace(cfg.backbone, n_classes=n_classes)
    return AudioClassifier(cfg.frontend, bb, init_rng(cfg.train.seed), dtype=dtype)


def model_from_checkpoint(tensors, snapshot, dtype=np.float32):
    """Rebuild a model from a checkpoint's config trailer and tensors."""
    fe = _from_dict(FrontEndConfig, snapshot["frontend"], "frontend")
    bb = _from_dict(BackboneConfig, snapshot["backbone"], "backbone")
    tr = _from_dict(TrainConfig, snapshot.get("train", {}), "train")
    model = AudioClassifier(fe, bb, init_rng(tr.seed), dtype=dtype)
    for k, p in model.params().items():
        if k not in tensors:
            raise ValidationError(f"checkpoint missing tensor {k!r}")
        p.data = tensors[k].astype(dtype).reshape(p.data.shape)
    return model
