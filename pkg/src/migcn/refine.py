"""Graph-convolution refinement of clip and word nodes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import Param, Tensor


@dataclass
class RefineParams:
    w_vv: Param
    w_ss: Param
    w_sv: Param
    w_vs: Param
    w_gate_v: Param
    w_gate_s: Param
    b_gate_v: Param | None = None
    b_gate_s: Param | None = None

    def params(self) -> list[Param]:
        out = [self.w_vv, self.w_ss, self.w_sv, self.w_vs, self.w_gate_v, self.w_gate_s]
        return out + [p for p in (self.b_gate_v, self.b_gate_s) if p is not None]


def init_refine(rng: np.random.Generator, d: int, gate_bias: bool = False) -> RefineParams:
    def u(name, fan_in, shape):
        k = 1.0 / np.sqrt(fan_in)
        return Param(name, rng.uniform(-k, k, size=shape))

    p = RefineParams(u("refine.w_vv", d, (d, d)), u("refine.w_ss", d, (d, d)),
                     u("refine.w_sv", d, (d, d)), u("refine.w_vs", d, (d, d)),
                     u("refine.w_gate_v", 2 * d, (2 * d, d)), u("refine.w_gate_s", 2 * d, (2 * d, d)))
    if gate_bias:
        p.b_gate_v = Param("refine.b_gate_v", np.zeros((1, d)))
        p.b_gate_s = Param("refine.b_gate_s", np.zeros((1, d)))
    return p


def graph_conv(adj, x, w, slope: float = nx.LEAKY_SLOPE) -> Tensor:
    """leaky_relu(A @ X @ W)."""
    return nx.leaky_relu(nx.matmul(nx.matmul(adj, x), w), slope)


def intra_refine(v, s, a_vv, a_ss, p: RefineParams, slope: float = nx.LEAKY_SLOPE) -> tuple[Tensor, Tensor]:
    """Propagate along clip-clip and word-word edges.

    Masked word rows stay zero because their rows of ``a_ss`` are zero.
    """
    return graph_conv(a_vv, v, p.w_vv, slope), graph_conv(a_ss, s, p.w_ss, slope)


def _gate(own, incoming, w_gate, b_gate, slope):
    logits = nx.concat([own, incoming], axis=-1) @ w_gate
    if b_gate is not None:
        logits = logits + b_gate
    z = nx.sigmoid(logits)
    return nx.leaky_relu(z * own + (1.0 - z) * incoming, slope)


def inter_refine_gated(v_t, s_t, a_sv, a_vs, word_mask, p: RefineParams,
                       slope: float = nx.LEAKY_SLOPE) -> tuple[Tensor, Tensor]:
    """Gated cross-modal update.

    Each node mixes its own representation with the aggregate from the other
    modality through an elementwise sigmoid retain ratio.
    """
    h_s = a_sv @ s_t @ p.w_sv
    h_v = a_vs @ v_t @ p.w_vs
    x_v = _gate(v_t, h_s, p.w_gate_v, p.b_gate_v, slope)
    x_s = _gate(s_t, h_v, p.w_gate_s, p.b_gate_s, slope)
    return x_v, x_s * np.asarray(word_mask, dtype=float)[..., None]


def inter_refine_naive(v_t, s_t, a_sv, a_vs, word_mask, p: RefineParams,
                       slope: float = nx.LEAKY_SLOPE) -> tuple[Tensor, Tensor]:
    """Ungated cross-modal update: each modality is replaced by the other's aggregate."""
    x_v = graph_conv(a_sv, s_t, p.w_sv, slope)
    x_s = graph_conv(a_vs, v_t, p.w_vs, slope)
    return x_v, x_s * np.asarray(word_mask, dtype=float)[..., None]
