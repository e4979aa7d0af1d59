"""Transformer encoder over patch embeddings and the classification head.

Pre-norm blocks with learned positional encodings. The head mean-pools
tokens for clip-level logits; per-token logits reuse the same linear map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError, ValidationError
from .frontends import _uniform_init, _zeros


@dataclass
class BackboneConfig:
    layers: int = 2
    model_dim: int = 64
    heads: int = 4
    ff_dim: int = 256
    n_classes: int = 4
    max_seq_len: int = 40
    dropout: float = 0.0

    def validate(self):
        if self.model_dim % self.heads != 0:
            raise ValidationError("backbone.heads: model_dim must be divisible by heads")
        if self.n_classes < 2:
            raise ValidationError("backbone.n_classes: must be >= 2")
        if self.layers < 0:
            raise ValidationError("backbone.layers: must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("backbone.dropout: must be in [0, 1)")
        return self


class TransformerBackbone:
    def __init__(self, cfg: BackboneConfig, rng, embed_dim=None, dtype=np.float32,
                 prefix="backbone"):
        cfg.validate()
        self.cfg = cfg
        self.prefix = prefix
        d = cfg.model_dim
        embed_dim = d if embed_dim is None else embed_dim
        self.in_proj = None
        if embed_dim != d:
            self.in_proj = (_uniform_init(rng, (embed_dim, d), embed_dim, dtype),
                            _zeros((d,), dtype))
        self.pos = _uniform_init(rng, (cfg.max_seq_len, d), d, dtype)
        self.blocks = []
        for _ in range(cfg.layers):
            blk = {
                "ln1_g": T.Tensor(np.ones(d, dtype=dtype), requires_grad=True),
                "ln1_b": _zeros((d,), dtype),
                "wq": _uniform_init(rng, (d, d), d, dtype),
                "bq": _zeros((d,), dtype),
                "wk": _uniform_init(rng, (d, d), d, dtype),
                "bk": _zeros((d,), dtype),
                "wv": _uniform_init(rng, (d, d), d, dtype),
                "bv": _zeros((d,), dtype),
                "wo": _uniform_init(rng, (d, d), d, dtype),
                "bo": _zeros((d,), dtype),
                "ln2_g": T.Tensor(np.ones(d, dtype=dtype), requires_grad=True),
                "ln2_b": _zeros((d,), dtype),
                "w_ff1": _uniform_init(rng, (d, cfg.ff_dim), d, dtype),
                "b_ff1": _zeros((cfg.ff_dim,), dtype),
                "w_ff2": _uniform_init(rng, (cfg.ff_dim, d), cfg.ff_dim, dtype),
                "b_ff2": _zeros((d,), dtype),
            }
            self.blocks.append(blk)
        self.head_w = _uniform_init(rng, (d, cfg.n_classes), d, dtype)
        self.head_b = _zeros((cfg.n_classes,), dtype)

    def params(self):
        out = {f"{self.prefix}.pos": self.pos}
        if self.in_proj is not None:
            out[f"{self.prefix}.in_proj_w"] = self.in_proj[0]
            out[f"{self.prefix}.in_proj_b"] = self.in_proj[1]
        for i, blk in enumerate(self.blocks):
            for name, p in blk.items():
                out[f"{self.prefix}.layer{i}.{name}"] = p
        out[f"{self.prefix}.head_w"] = self.head_w
        out[f"{self.prefix}.head_b"] = self.head_b
        return out

    def _attention(self, x, blk, B, Tn):
        d = self.cfg.model_dim
        h = self.cfg.heads
        dh = d // h

        def split_heads(t):
            return T.transpose(T.reshape(t, (B, Tn, h, dh)), (0, 2, 1, 3))

        q = split_heads(T.linear(x, blk["wq"], blk["bq"]))
        k = split_heads(T.linear(x, blk["wk"], blk["bk"]))
        v = split_heads(T.linear(x, blk["wv"], blk["bv"]))
        att = T.scaled_dot_attention(q, k, v)              # B x H x T x dh
        att = T.reshape(T.transpose(att, (0, 2, 1, 3)), (B, Tn, d))
        return T.linear(att, blk["wo"], blk["bo"])

    def encode(self, embeddings, train=False, rng=None):
        """(B, T, E) -> (B, T, d): positions plus `layers` pre-norm blocks."""
        B, Tn, E = embeddings.data.shape
        if Tn > self.cfg.max_seq_len:
            raise ShapeError(
                f"sequence length {Tn} exceeds max_seq_len {self.cfg.max_seq_len}")
        x = embeddings
        if self.in_proj is not None:
            x = T.linear(x, *self.in_proj)
        x = T.add(x, T.getitem(self.pos, slice(0, Tn)))
        p = self.cfg.dropout
        for blk in self.blocks:
            a = self._attention(T.layer_norm(x, blk["ln1_g"], blk["ln1_b"]), blk, B, Tn)
            x = T.add(x, T.dropout(a, p, train, rng))
            f = T.linear(T.relu(T.linear(T.layer_norm(x, blk["ln2_g"], blk["ln2_b"]),
                                         blk["w_ff1"], blk["b_ff1"])),
                         blk["w_ff2"], blk["b_ff2"])
            x = T.add(x, T.dropout(f, p, train, rng))
        return x

    def classify(self, encoded):
        """Mean-pool tokens then project to class logits: (B, T, d) -> (B, C)."""
        pooled = T.mean_over(encoded, axis=1)
        return T.linear(pooled, self.head_w, self.head_b)

    def token_logits(self, encoded):
        """Per-token logits via the same head: (B, T, d) -> (B, T, C)."""
        return T.linear(encoded, self.head_w, self.head_b)
