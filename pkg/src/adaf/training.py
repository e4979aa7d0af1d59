"""Optimization loop: Adam updates, LR schedule, checkpointing, metric logs."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .checkpoint import (load_checkpoint, rng_state_from_array,
                         rng_state_to_array, save_checkpoint)
from .errors import AdafError, ContractError, ValidationError
from .metrics import evaluate_scores

LR_SCHEDULES = ("cosine", "linear", "exponential")


@dataclass
class TrainConfig:
    epochs: int = 50
    lr_start: float = 2e-4
    lr_end: float = 1e-6
    lr_schedule: str = "cosine"
    batch_size: int = 32
    seed: int = 0
    huber_delta: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_every: int = 10
    top_k: int = 5
    sigmoid_before_loss: bool = False

    def validate(self):
        if self.epochs < 1:
            raise ValidationError("train.epochs: must be >= 1")
        if not (self.lr_start >= self.lr_end > 0):
            raise ValidationError("train.lr: need lr_start >= lr_end > 0")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ValidationError(f"train.lr_schedule: unknown {self.lr_schedule!r}")
        if self.batch_size < 1:
            raise ValidationError("train.batch_size: must be >= 1")
        if self.huber_delta <= 0:
            raise ValidationError("train.huber_delta: must be > 0")
        return self


class TrainDivergedError(AdafError):
    def __init__(self, epoch, batch, max_abs_grad):
        self.epoch, self.batch, self.max_abs_grad = epoch, batch, max_abs_grad
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch}, "
            f"max |grad| {max_abs_grad:.3e}")


def lr_at(epoch, cfg: TrainConfig):
    """Learning rate for `epoch`; endpoints hit lr_start / lr_end exactly."""
    if not 0 <= epoch < cfg.epochs:
        raise ContractError(f"epoch {epoch} outside [0, {cfg.epochs})")
    if cfg.epochs == 1:
        return cfg.lr_start
    frac = epoch / (cfg.epochs - 1)
    if cfg.lr_schedule == "cosine":
        return cfg.lr_end + 0.5 * (cfg.lr_start - cfg.lr_end) * (
            1.0 + np.cos(np.pi * frac))
    if cfg.lr_schedule == "linear":
        return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac
    return cfg.lr_start * (cfg.lr_end / cfg.lr_start) ** frac


class Adam:
    """Standard bias-corrected Adam over a named parameter dict."""

    def __init__(self, params, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr):
        c = self.cfg
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - c.beta1 ** t
        bc2 = 1.0 - c.beta2 ** t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[k]
            v = self.v[k]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            p.data -= (lr / bc1) * m / (np.sqrt(v / bc2) + c.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_tensors(self):
        out = {}
        for k in self.params:
            out[f"opt.m.{k}"] = self.m[k]
            out[f"opt.v.{k}"] = self.v[k]
        out["opt.step"] = np.array([self.step_count], dtype=np.float32)
        return out

    def load_state_tensors(self, tensors):
        for k in self.params:
            self.m[k] = tensors[f"opt.m.{k}"].astype(np.float32)
            self.v[k] = tensors[f"opt.v.{k}"].astype(np.float32)
        self.step_count = int(tensors["opt.step"][0])


def _forward_loss(model, patches, labels, cfg, train=True, rng=None):
    out = model.forward(patches, train=train, rng=rng)
    pred = out.clip_logits
    if cfg.sigmoid_before_loss:
        pred = T.sigmoid(pred)
    loss = T.huber_loss(pred, labels, delta=cfg.huber_delta)
    return loss, out


def evaluate(model, dataset, cfg: TrainConfig):
    """Run the model over a dataset in manifest order; build a MetricsReport.

    Clip-level scores are the mean of per-token logits over the clip's
    patches; patch-level metrics use the per-token logits directly.
    """
    clip_scores, token_all, losses = [], [], []
    n = len(dataset)
    bs = cfg.batch_size
    for start in range(0, n, bs):
        patches = dataset.patches[start:start + bs]
        labels = dataset.labels[start:start + bs]
        loss, out = _forward_loss(model, patches, labels, cfg, train=False)
        losses.append(float(loss.data) * len(patches))
        clip_scores.append(out.token_logits.data.mean(axis=1))
        token_all.append(out.token_logits.data)
    clip_scores = np.concatenate(clip_scores)
    tokens = np.concatenate(token_all)                       # N x T x C
    n_tok = tokens.shape[0] * tokens.shape[1]
    patch_logits = tokens.reshape(n_tok, -1)
    patch_labels = np.repeat(dataset.labels, tokens.shape[1], axis=0)
    report = evaluate_scores(clip_scores, dataset.labels, patch_logits,
                             patch_labels, k=min(cfg.top_k, tokens.shape[-1]),
                             loss=sum(losses) / n)
    return report


def train(model, train_ds, valid_ds, cfg: TrainConfig, out_dir,
          config_snapshot=None, start_epoch=0, opt=None, rng=None,
          log_name="metrics.ndjson"):
    """Run the optimization loop; returns (final checkpoint path, reports).

    Deterministic given cfg.seed: batch order depends only on (seed, epoch),
    so resuming from a checkpoint reproduces the uninterrupted run.
    """
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, log_name)
    if start_epoch == 0 and os.path.exists(log_path):
        os.remove(log_path)
    params = model.params()
    if opt is None:
        opt = Adam(params, cfg)
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([cfg.seed, 0xD0])))
    snapshot = config_snapshot or {}
    reports = []
    ckpt_path = None
    for epoch in range(start_epoch, cfg.epochs):
        lr = lr_at(epoch, cfg)
        epoch_losses = []
        for bi, (patches, labels, _) in enumerate(
                train_ds.batches(cfg.batch_size, [cfg.seed, epoch])):
            opt.zero_grad()
            loss, _ = _forward_loss(model, patches, labels, cfg,
                                    train=True, rng=rng)
            if not np.isfinite(loss.data):
                raise TrainDivergedError(epoch, bi, _max_abs_grad(params))
            T.backward(loss)
            opt.step(lr)
            epoch_losses.append(float(loss.data))
        report = evaluate(model, valid_ds, cfg)
        reports.append(report)
        line = {"epoch": epoch, "lr": float(lr),
                "train_loss": float(np.mean(epoch_losses)),
                "valid_loss": report.loss, "map": report.map,
                "top_k_patch": report.top_k_patch,
                "clip_accuracy": report.clip_accuracy}
        with open(log_path, "a") as f:
            f.write(json.dumps(line, sort_keys=True) + "\n")
        last = epoch == cfg.epochs - 1
        if last or (cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0):
            ckpt_path = os.path.join(out_dir, f"checkpoint-{epoch + 1:04d}.adaf")
            save_training_checkpoint(ckpt_path, model, opt, rng, epoch + 1, snapshot)
    return ckpt_path, reports


def _max_abs_grad(params):
    mx = 0.0
    for p in params.values():
        if p.grad is not None:
            mx = max(mx, float(np.abs(p.grad).max()))
    return mx


def save_training_checkpoint(path, model, opt, rng, next_epoch, snapshot):
    tensors = {k: p.data for k, p in model.params().items()}
    tensors.update(opt.state_tensors())
    tensors["rng.pcg64"] = rng_state_to_array(rng)
    tensors["epoch"] = np.array([next_epoch], dtype=np.float32)
    save_checkpoint(path, tensors, snapshot)


def load_training_state(path, model, cfg: TrainConfig):
    """Restore parameters, optimizer, and RNG; returns (next_epoch, opt, rng)."""
    tensors, _ = load_checkpoint(path)
    params = model.params()
    for k, p in params.items():
        if k not in tensors:
            raise ValidationError(f"checkpoint missing tensor {k!r}")
        p.data = tensors[k].astype(p.data.dtype).reshape(p.data.shape)
    opt = Adam(params, cfg)
    opt.load_state_tensors(tensors)
    rng = rng_state_from_array(tensors["rng.pcg64"])
    return int(tensors["epoch"][0]), opt, rng
