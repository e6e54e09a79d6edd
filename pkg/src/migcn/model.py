"""Parameter container and the batched forward pass wiring every stage together."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .encoder import BiGruEncoderParams, encode_sentence, encode_video, init_bigru
from .errors import ConfigError
from .graph import build_clip_adjacency, build_cross_modal, build_word_adjacency, row_normalize
from .localize import (CandidateSet, WindowConfig, WindowHead, assemble_window, init_heads,
                       score_and_offset, sentence_embedding)
from .numerics import Param, Tensor
from .refine import RefineParams, init_refine, inter_refine_gated, inter_refine_naive, intra_refine

VARIANTS = ("gated", "naive", "no-gcn", "no-inter", "no-temp", "no-seman", "no-syntac")


@dataclass
class ModelConfig:
    d: int = 256
    windows: WindowConfig = WindowConfig()
    theta: float = 0.7
    variant: str = "gated"
    dropout_p: float = 0.5
    slope: float = nx.LEAKY_SLOPE
    gate_bias: bool = False
    normalize_intra: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.d <= 0 or self.d % 2:
            raise ConfigError(f"node dimension must be a positive even number, got {self.d}")
        if not -1.0 < self.theta < 1.0:
            raise ConfigError(f"theta must lie in (-1, 1), got {self.theta}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout probability must lie in [0, 1), got {self.dropout_p}")


@dataclass
class ModelParams:
    video: BiGruEncoderParams
    query: BiGruEncoderParams
    refine: RefineParams
    w_s: Param
    heads: list[WindowHead]

    def params(self) -> list[Param]:
        out = self.video.params() + self.query.params() + self.refine.params() + [self.w_s]
        for head in self.heads:
            out += head.params()
        return out

    def named(self) -> dict[str, Param]:
        return {p.name: p for p in self.params()}


def init_params(rng: np.random.Generator, clip_dim: int, embed_dim: int, max_query_len: int,
                cfg: ModelConfig) -> ModelParams:
    video = init_bigru(rng, "video", clip_dim, cfg.d)
    query = init_bigru(rng, "query", embed_dim, cfg.d)
    refine = init_refine(rng, cfg.d, cfg.gate_bias)
    k = 1.0 / np.sqrt(max_query_len)
    w_s = Param("sentence.w_s", rng.uniform(-k, k, size=(1, max_query_len)))
    heads = init_heads(rng, cfg.windows, cfg.d)
    return ModelParams(video, query, refine, w_s, heads)


def static_adjacency(features: np.ndarray, edges: list, mask: np.ndarray,
                     cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Clip-clip and word-word matrices for one example under the variant's edge families."""
    a_vv = build_clip_adjacency(features, cfg.theta,
                                temporal=cfg.variant != "no-temp", semantic=cfg.variant != "no-seman")
    a_ss = build_word_adjacency(edges, mask, syntactic=cfg.variant != "no-syntac")
    if cfg.normalize_intra:
        a_vv, a_ss = row_normalize(a_vv), row_normalize(a_ss)
    return a_vv, a_ss


@dataclass
class ForwardOutput:
    scores: Tensor
    offset_s: Tensor
    offset_e: Tensor
    x_v: Tensor
    x_s: Tensor


def forward(params: ModelParams, features, embeddings, mask, a_vv, a_ss, cands: CandidateSet,
            cfg: ModelConfig, training: bool = False, rng: np.random.Generator | None = None) -> ForwardOutput:
    """Scores and offsets for every candidate, shape (..., C).

    Inputs carry an optional leading batch axis; all examples share T and L_max.
    """
    drop = cfg.dropout_p if training else 0.0
    v0 = nx.dropout(encode_video(features, params.video, cfg.slope), drop, rng, training)
    s0 = nx.dropout(encode_sentence(embeddings, mask, params.query, cfg.slope), drop, rng, training)

    if cfg.variant == "no-gcn":
        x_v, x_s = v0, s0
    else:
        v_t, s_t = intra_refine(v0, s0, a_vv, a_ss, params.refine, cfg.slope)
        if cfg.variant == "no-inter":
            x_v, x_s = v_t, s_t
        else:
            a_sv, a_vs = build_cross_modal(v0, s0, mask)
            inter = inter_refine_naive if cfg.variant == "naive" else inter_refine_gated
            x_v, x_s = inter(v_t, s_t, a_sv, a_vs, mask, params.refine, cfg.slope)

    s_emb = sentence_embedding(x_s, params.w_s, cfg.slope)
    scores, off_s, off_e = [], [], []
    for head, starts in zip(params.heads, cands.starts):
        if len(starts) == 0:
            continue
        rep = nx.dropout(assemble_window(x_v, s_emb, starts, head.omega), drop, rng, training)
        r, ds, de = score_and_offset(rep, head)
        scores.append(r)
        off_s.append(ds)
        off_e.append(de)
    return ForwardOutput(nx.concat(scores, -1), nx.concat(off_s, -1), nx.concat(off_e, -1), x_v, x_s)
