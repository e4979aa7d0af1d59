"""Dataset manifests, synthetic clip generation, and deterministic batching."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .audio import (DEFAULT_PATCH_LEN, TARGET_RATE, decode_wav, encode_wav,
                    patchify, resample)
from .errors import ValidationError

SPLITS = ("train", "valid", "test")
GENERATOR_KINDS = ("pure-tone", "am-tone", "chirp", "noise-burst", "harmonic-stack")

# per-kind default parameter ranges; fundamentals disjoint by construction
DEFAULT_PARAMS = {
    "pure-tone": {"f0": (200.0, 300.0), "amp": (0.3, 0.8)},
    "am-tone": {"f0": (400.0, 600.0), "am_rate": (2.0, 8.0),
                "depth": (0.5, 0.9), "amp": (0.3, 0.8)},
    "chirp": {"f0": (800.0, 1200.0), "span": (200.0, 600.0), "amp": (0.3, 0.8)},
    "noise-burst": {"burst_rate": (2.0, 6.0), "duty": (0.2, 0.6), "amp": (0.2, 0.6)},
    "harmonic-stack": {"f0": (100.0, 160.0), "n_harmonics": (4, 8),
                       "decay": (0.5, 0.9), "amp": (0.3, 0.7)},
}


@dataclass
class Family:
    name: str
    kind: str
    params: dict = field(default_factory=dict)

    def ranges(self):
        merged = dict(DEFAULT_PARAMS[self.kind])
        merged.update({k: tuple(v) for k, v in self.params.items()})
        return merged


@dataclass
class SynthSpec:
    families: list
    clips_per_family: int
    clip_seconds: float = 1.0
    seed: int = 0
    split_fractions: tuple = (0.8, 0.1, 0.1)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            obj = json.load(f)
        try:
            fams = [Family(f["name"], f["kind"], f.get("params", {}))
                    for f in obj["families"]]
            spec = cls(families=fams,
                       clips_per_family=int(obj["clips_per_family"]),
                       clip_seconds=float(obj.get("clip_seconds", 1.0)),
                       seed=int(obj.get("seed", 0)),
                       split_fractions=tuple(obj.get("split_fractions", (0.8, 0.1, 0.1))))
        except KeyError as exc:
            raise ValidationError(f"synth spec: missing field {exc.args[0]!r}") from exc
        return spec.validate()

    def validate(self, patch_length=DEFAULT_PATCH_LEN):
        if not self.families:
            raise ValidationError("synth spec: families must be nonempty")
        for f in self.families:
            if f.kind not in GENERATOR_KINDS:
                raise ValidationError(f"synth spec: unknown generator kind {f.kind!r}")
        if self.clips_per_family < 1:
            raise ValidationError("synth spec: clips_per_family must be >= 1")
        if self.clip_seconds * TARGET_RATE < patch_length:
            raise ValidationError("synth spec: clip_seconds too short for one patch")
        if len(self.split_fractions) != 3 or abs(sum(self.split_fractions) - 1) > 1e-9:
            raise ValidationError("synth spec: split_fractions must be 3 values summing to 1")
        return self


@dataclass
class DatasetManifest:
    classes: list
    entries: list            # list of (path, [class names])
    split: str
    root: str = ""           # directory entry paths are relative to

    def validate(self):
        if self.split not in SPLITS:
            raise ValidationError(f"manifest: unknown split {self.split!r}")
        known = set(self.classes)
        for path, labels in self.entries:
            bad = [l for l in labels if l not in known]
            if bad:
                raise ValidationError(f"manifest: entry {path!r} has unknown labels {bad}")
            if not labels:
                raise ValidationError(f"manifest: entry {path!r} has no labels")
        return self

    def label_vector(self, labels):
        vec = np.zeros(len(self.classes), dtype=np.float32)
        for l in labels:
            vec[self.classes.index(l)] = 1.0
        return vec

    @classmethod
    def load(cls, path):
        with open(path) as f:
            obj = json.load(f)
        return cls(classes=list(obj["classes"]),
                   entries=[(e["path"], list(e["labels"])) for e in obj["entries"]],
                   split=obj["split"],
                   root=os.path.dirname(os.path.abspath(path))).validate()

    def save(self, path):
        obj = {"classes": list(self.classes),
               "entries": [{"path": p, "labels": list(ls)} for p, ls in self.entries],
               "split": self.split}
        with open(path, "w") as f:
            json.dump(obj, f, indent=2, sort_keys=True)
            f.write("\n")


# -- synthetic clip generators ----------------------------------------------

def _draw(rng, lo, hi):
    return lo + (hi - lo) * rng.random()


def _synth_clip(kind, ranges, rng, n_samples, rate=TARGET_RATE):
    t = np.arange(n_samples) / rate
    amp = _draw(rng, *ranges["amp"]) if "amp" in ranges else 0.5
    if kind == "pure-tone":
        f0 = _draw(rng, *ranges["f0"])
        x = np.sin(2 * np.pi * f0 * t + 2 * np.pi * rng.random())
    elif kind == "am-tone":
        f0 = _draw(rng, *ranges["f0"])
        fm = _draw(rng, *ranges["am_rate"])
        depth = _draw(rng, *ranges["depth"])
        x = np.sin(2 * np.pi * f0 * t + 2 * np.pi * rng.random())
        x *= (1.0 - depth) + depth * 0.5 * (1 + np.sin(2 * np.pi * fm * t))
    elif kind == "chirp":
        f0 = _draw(rng, *ranges["f0"])
        span = _draw(rng, *ranges["span"])
        dur = n_samples / rate
        x = np.sin(2 * np.pi * (f0 * t + 0.5 * (span / dur) * t * t))
    elif kind == "noise-burst":
        rate_b = _draw(rng, *ranges["burst_rate"])
        duty = _draw(rng, *ranges["duty"])
        env = (np.mod(rate_b * t + rng.random(), 1.0) < duty).astype(np.float64)
        x = rng.standard_normal(n_samples) * env
        x /= max(1e-9, np.abs(x).max())
    elif kind == "harmonic-stack":
        f0 = _draw(rng, *ranges["f0"])
        lo, hi = ranges["n_harmonics"]
        n_h = int(rng.integers(int(lo), int(hi) + 1))
        decay = _draw(rng, *ranges["decay"])
        x = np.zeros(n_samples)
        for k in range(1, n_h + 1):
            x += decay ** (k - 1) * np.sin(2 * np.pi * k * f0 * t
                                           + 2 * np.pi * rng.random())
        x /= max(1e-9, np.abs(x).max())
    else:
        raise ValidationError(f"unknown generator kind {kind!r}")
    return np.clip(amp * x, -1.0, 1.0)


def generate_synthetic(spec: SynthSpec, out_dir):
    """Write labeled WAV clips and one manifest per split.

    Pure function of the spec: identical spec (including seed) gives
    byte-identical files. Each clip carries exactly its family's label.
    Returns {split: DatasetManifest}.
    """
    spec.validate()
    wav_dir = os.path.join(out_dir, "wavs")
    os.makedirs(wav_dir, exist_ok=True)
    n_samples = int(round(spec.clip_seconds * TARGET_RATE))
    classes = [f.name for f in spec.families]

    n = spec.clips_per_family
    n_train = int(round(spec.split_fractions[0] * n))
    n_valid = int(round(spec.split_fractions[1] * n))
    bounds = {"train": range(0, n_train),
              "valid": range(n_train, min(n, n_train + n_valid)),
              "test": range(min(n, n_train + n_valid), n)}

    entries = {s: [] for s in SPLITS}
    for fi, fam in enumerate(spec.families):
        ranges = fam.ranges()
        for ci in range(n):
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence([spec.seed, fi, ci])))
            x = _synth_clip(fam.kind, ranges, rng, n_samples)
            fname = f"{fam.name}_{ci:04d}.wav"
            encode_wav(os.path.join(wav_dir, fname), x, TARGET_RATE)
            rel = os.path.join("wavs", fname)
            for split, rng_idx in bounds.items():
                if ci in rng_idx:
                    entries[split].append((rel, [fam.name]))

    manifests = {}
    for split in SPLITS:
        if not entries[split]:
            continue
        m = DatasetManifest(classes=classes, entries=entries[split],
                            split=split, root=os.path.abspath(out_dir))
        m.save(os.path.join(out_dir, f"manifest-{split}.json"))
        manifests[split] = m
    return manifests


# -- batching ----------------------------------------------------------------

class LoadedDataset:
    """Manifest decoded into memory: patch sequences plus label matrix."""

    def __init__(self, manifest: DatasetManifest, patch_length=DEFAULT_PATCH_LEN):
        if not manifest.entries:
            raise ValidationError("manifest: no entries to load")
        self.manifest = manifest
        self.patch_length = patch_length
        seqs, labels, ids = [], [], []
        for rel, labs in manifest.entries:
            clip = decode_wav(os.path.join(manifest.root, rel))
            if clip.sample_rate != TARGET_RATE:
                clip = resample(clip, TARGET_RATE)
            ps = patchify(clip, patch_length)
            seqs.append(ps.patches)
            labels.append(manifest.label_vector(labs))
            ids.append(rel)
        t0 = seqs[0].shape[0]
        if any(s.shape[0] != t0 for s in seqs):
            raise ValidationError(
                "manifest: clips yield unequal patch counts; batches need uniform length")
        self.patches = np.stack(seqs)                  # N x T x P
        self.labels = np.stack(labels)                 # N x C
        self.clip_ids = ids

    def __len__(self):
        return len(self.clip_ids)

    def batches(self, batch_size, epoch_seed):
        """Shuffled batches covering every clip exactly once per epoch."""
        if batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        order = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(epoch_seed))).permutation(len(self))
        for start in range(0, len(self), batch_size):
            idx = order[start:start + batch_size]
            yield self.patches[idx], self.labels[idx], idx


def batch_iter(manifest, batch_size, epoch_seed, patch_length=DEFAULT_PATCH_LEN):
    """One-shot batch stream over a manifest (loads clips each call)."""
    ds = manifest if isinstance(manifest, LoadedDataset) else LoadedDataset(
        manifest, patch_length)
    for patches, labels, _ in ds.batches(batch_size, epoch_seed):
        yield patches, labels
