"""Full classifier: front end (+ router for routed kinds) + transformer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .backbone import BackboneConfig, TransformerBackbone
from .frontends import (FrontEndConfig, SparseRouter, build_frontend, combine)


@dataclass
class ModelOutput:
    clip_logits: T.Tensor          # B x C
    token_logits: T.Tensor         # B x T x C
    router: object                 # RouterOutput or None for baseline


class AudioClassifier:
    def __init__(self, fe_cfg: FrontEndConfig, bb_cfg: BackboneConfig, rng,
                 dtype=np.float32):
        self.fe_cfg = fe_cfg
        self.bb_cfg = bb_cfg
        self.frontend = build_frontend(fe_cfg, rng, dtype)
        self.routed = fe_cfg.kind != "baseline"
        self.router = SparseRouter(fe_cfg, rng, dtype) if self.routed else None
        self.backbone = TransformerBackbone(bb_cfg, rng, embed_dim=fe_cfg.embed_dim,
                                            dtype=dtype)

    def params(self):
        out = dict(self.frontend.params())
        if self.router is not None:
            out.update(self.router.params())
        out.update(self.backbone.params())
        return out

    def forward(self, patches, train=False, rng=None) -> ModelOutput:
        if not isinstance(patches, T.Tensor):
            patches = T.Tensor(patches)
        router = None
        if self.routed:
            per_route = self.frontend.forward(patches)
            router = self.router.forward(patches)
            emb = combine(per_route, router)
        else:
            emb = self.frontend.forward(patches)
        enc = self.backbone.encode(emb, train=train, rng=rng)
        return ModelOutput(clip_logits=self.backbone.classify(enc),
                           token_logits=self.backbone.token_logits(enc),
                           router=router)
