"""Front ends mapping waveform patches to embeddings, plus the sparse router.

Three interchangeable designs:
  * baseline  -- one linear encoder per patch (400 -> hidden -> embed)
  * moe       -- N_F parallel linear encoders ("experts")
  * bank-of-filterbanks -- N_F convolutional filterbanks, pooled over time

The router scores each patch over the N_F routes and sparsifies with a
double softmax: weights = softmax(alpha * softmax(logits)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError, ValidationError

FRONTEND_KINDS = ("baseline", "moe", "bank-of-filterbanks")
POOLING_MODES = ("max", "avg")


@dataclass
class FrontEndConfig:
    kind: str = "bank-of-filterbanks"
    n_filterbanks: int = 2
    pooling: str = "max"
    alpha: float = 100.0
    embed_dim: int = 64
    hidden: int = 2048
    conv_filters: int = 64
    kernel_len: int = 320
    router_widths: tuple[int, ...] = (2048, 2048, 2048)
    patch_len: int = 400

    def validate(self):
        if self.kind not in FRONTEND_KINDS:
            raise ValidationError(f"frontend.kind: unknown kind {self.kind!r}")
        if self.pooling not in POOLING_MODES:
            raise ValidationError(f"frontend.pooling: unknown mode {self.pooling!r}")
        if self.n_filterbanks < 1:
            raise ValidationError("frontend.n_filterbanks: must be >= 1")
        if self.kind == "baseline" and self.n_filterbanks != 1:
            raise ValidationError(
                "frontend.n_filterbanks: baseline front end requires n_filterbanks=1")
        if self.alpha <= 0:
            raise ValidationError("frontend.alpha: must be > 0")
        pad = self.kernel_len - 1
        if self.kind == "bank-of-filterbanks" and self.kernel_len > self.patch_len + pad:
            raise ValidationError("frontend.kernel_len: kernel exceeds padded patch")
        return self


@dataclass
class RouterOutput:
    """Sparse route weights per patch; weights and logits are graph tensors."""
    weights: T.Tensor        # B x T x N_F, rows sum to 1
    logits: T.Tensor         # B x T x N_F, pre-sparsifier scores
    route_index: np.ndarray  # B x T int argmax


def _uniform_init(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return T.Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype),
                    requires_grad=True)


def _zeros(shape, dtype):
    return T.Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def _flatten_patches(patches):
    if patches.data.ndim != 3:
        raise ShapeError(f"expected patches (B, T, P), got {patches.data.shape}")
    B, Tn, P = patches.data.shape
    return T.reshape(patches, (B * Tn, P)), B, Tn, P


class BaselineFrontEnd:
    """Per-patch linear encoder: P -> hidden -> relu -> embed."""

    def __init__(self, cfg: FrontEndConfig, rng, dtype=np.float32, prefix="frontend"):
        self.cfg = cfg
        self.w1 = _uniform_init(rng, (cfg.patch_len, cfg.hidden), cfg.patch_len, dtype)
        self.b1 = _zeros((cfg.hidden,), dtype)
        self.w2 = _uniform_init(rng, (cfg.hidden, cfg.embed_dim), cfg.hidden, dtype)
        self.b2 = _zeros((cfg.embed_dim,), dtype)
        self.prefix = prefix

    def params(self):
        return {f"{self.prefix}.w1": self.w1, f"{self.prefix}.b1": self.b1,
                f"{self.prefix}.w2": self.w2, f"{self.prefix}.b2": self.b2}

    def forward(self, patches):
        flat, B, Tn, _ = _flatten_patches(patches)
        h = T.relu(T.linear(flat, self.w1, self.b1))
        out = T.linear(h, self.w2, self.b2)
        return T.reshape(out, (B, Tn, self.cfg.embed_dim))


class MoEFrontEnd:
    """N_F dense experts; returns stacked per-expert embeddings."""

    def __init__(self, cfg: FrontEndConfig, rng, dtype=np.float32, prefix="frontend"):
        self.cfg = cfg
        self.experts = [
            BaselineFrontEnd(cfg, rng, dtype, prefix=f"{prefix}.expert{i}")
            for i in range(cfg.n_filterbanks)
        ]

    def params(self):
        out = {}
        for e in self.experts:
            out.update(e.params())
        return out

    def forward(self, patches):
        return T.stack([e.forward(patches) for e in self.experts], axis=2)


class BankFrontEnd:
    """N_F convolutional filterbanks; conv -> temporal pool -> relu per bank."""

    def __init__(self, cfg: FrontEndConfig, rng, dtype=np.float32, prefix="frontend"):
        if cfg.conv_filters != cfg.embed_dim:
            raise ValidationError(
                "frontend.conv_filters: must equal embed_dim (one value per filter)")
        self.cfg = cfg
        self.conv_w = [
            _uniform_init(rng, (cfg.conv_filters, cfg.kernel_len), cfg.kernel_len, dtype)
            for _ in range(cfg.n_filterbanks)
        ]
        self.conv_b = [_zeros((cfg.conv_filters,), dtype)
                       for _ in range(cfg.n_filterbanks)]
        self.prefix = prefix

    def params(self):
        out = {}
        for i, (w, b) in enumerate(zip(self.conv_w, self.conv_b)):
            out[f"{self.prefix}.bank{i}.conv_w"] = w
            out[f"{self.prefix}.bank{i}.conv_b"] = b
        return out

    def forward(self, patches, return_prepool=False):
        flat, B, Tn, P = _flatten_patches(patches)
        x = T.reshape(flat, (B * Tn, 1, P))
        pool = T.max_over_last if self.cfg.pooling == "max" else T.mean_over_last
        per_bank = []
        prepool_shapes = []
        for w, b in zip(self.conv_w, self.conv_b):
            act = T.conv1d_same(x, w, b)          # (B*T, F, P)
            prepool_shapes.append(act.data.shape[1:])
            emb = T.relu(pool(act))               # (B*T, F)
            per_bank.append(T.reshape(emb, (B, Tn, self.cfg.embed_dim)))
        stacked = T.stack(per_bank, axis=2)       # B x T x N_F x E
        if return_prepool:
            return stacked, prepool_shapes
        return stacked


class SparseRouter:
    """3 hidden layers -> N_F bottleneck -> double-softmax sparsifier."""

    def __init__(self, cfg: FrontEndConfig, rng, dtype=np.float32, prefix="router"):
        self.cfg = cfg
        widths = [cfg.patch_len, *cfg.router_widths]
        self.ws, self.bs = [], []
        for i in range(len(widths) - 1):
            self.ws.append(_uniform_init(rng, (widths[i], widths[i + 1]),
                                         widths[i], dtype))
            self.bs.append(_zeros((widths[i + 1],), dtype))
        self.w_out = _uniform_init(rng, (widths[-1], cfg.n_filterbanks),
                                   widths[-1], dtype)
        self.b_out = _zeros((cfg.n_filterbanks,), dtype)
        self.prefix = prefix

    def params(self):
        out = {}
        for i, (w, b) in enumerate(zip(self.ws, self.bs)):
            out[f"{self.prefix}.w{i}"] = w
            out[f"{self.prefix}.b{i}"] = b
        out[f"{self.prefix}.w_out"] = self.w_out
        out[f"{self.prefix}.b_out"] = self.b_out
        return out

    def forward(self, patches) -> RouterOutput:
        flat, B, Tn, _ = _flatten_patches(patches)
        h = flat
        for w, b in zip(self.ws, self.bs):
            h = T.relu(T.linear(h, w, b))
        logits = T.reshape(T.linear(h, self.w_out, self.b_out),
                           (B, Tn, self.cfg.n_filterbanks))
        weights = sparsify(logits, self.cfg.alpha)
        return RouterOutput(weights=weights, logits=logits,
                            route_index=weights.data.argmax(axis=-1))


def sparsify(logits, alpha):
    """Double softmax: softmax(alpha * softmax(logits)) over the last axis."""
    return T.softmax_last(T.scale(T.softmax_last(logits), alpha))


def combine(per_route, router: RouterOutput):
    """Weighted sum over routes: (B,T,N_F,E) x (B,T,N_F) -> (B,T,E)."""
    B, Tn, nf, E = per_route.data.shape
    if router.weights.data.shape != (B, Tn, nf):
        raise ShapeError(
            f"combine shapes per_route{per_route.data.shape} "
            f"weights{router.weights.data.shape}")
    w = T.reshape(router.weights, (B, Tn, nf, 1))
    return T.sum_over(T.mul(per_route, w), axis=2)


def build_frontend(cfg: FrontEndConfig, rng, dtype=np.float32):
    cfg.validate()
    if cfg.kind == "baseline":
        return BaselineFrontEnd(cfg, rng, dtype)
    if cfg.kind == "moe":
        return MoEFrontEnd(cfg, rng, dtype)
    return BankFrontEnd(cfg, rng, dtype)
