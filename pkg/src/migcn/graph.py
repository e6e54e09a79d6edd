"""Multi-modal interaction graph: clip-clip, word-word and clip-word adjacency."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import InputError
from .numerics import Tensor


@dataclass
class MultiModalGraph:
    a_vv: np.ndarray
    a_ss: np.ndarray
    a_sv: Tensor
    a_vs: Tensor
    word_mask: np.ndarray


def cosine(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def cosine_matrix(x: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity of rows; rows with zero norm score 0 against everything."""
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    unit = np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)
    return unit @ np.swapaxes(unit, -1, -2)


def build_clip_adjacency(raw_features, theta: float = 0.7, temporal: bool = True,
                         semantic: bool = True) -> np.ndarray:
    """Clip adjacency from the pre-encoder features.

    Neighbouring clips get weight 1, pairs whose cosine exceeds ``theta`` get
    the cosine, a pair that is both keeps the larger weight, and every clip
    has a unit self-loop.  Works on (T, D) or batched (..., T, D) input.
    """
    raw = np.asarray(raw_features, dtype=float)
    n = raw.shape[-2]
    adj = np.zeros(raw.shape[:-2] + (n, n))
    if semantic:
        cos = cosine_matrix(raw)
        # float products are not bitwise symmetric; averaging is
        cos = 0.5 * (cos + np.swapaxes(cos, -1, -2))
        adj = np.where(cos > theta, cos, 0.0)
    if temporal and n > 1:
        idx = np.arange(n - 1)
        adj[..., idx, idx + 1] = np.maximum(adj[..., idx, idx + 1], 1.0)
        adj[..., idx + 1, idx] = np.maximum(adj[..., idx + 1, idx], 1.0)
    diag = np.arange(n)
    adj[..., diag, diag] = 1.0
    return adj


def build_word_adjacency(edges, mask, syntactic: bool = True) -> np.ndarray:
    """Word adjacency: symmetric unit weights on dependency edges plus self-loops.

    ``edges`` are 1-based index pairs already restricted to unmasked words.
    """
    mask = np.asarray(mask, dtype=float)
    adj = np.diag(mask)
    if syntactic:
        for i, j in edges:
            if mask[i - 1] and mask[j - 1]:
                adj[i - 1, j - 1] = adj[j - 1, i - 1] = 1.0
    return adj


def row_normalize(adj: np.ndarray) -> np.ndarray:
    deg = adj.sum(axis=-1, keepdims=True)
    return np.divide(adj, deg, out=np.zeros_like(adj), where=deg > 0)


def build_cross_modal(v_init, s_init, word_mask) -> tuple[Tensor, Tensor]:
    """Dynamic clip-word weights from dot products of initial node representations.

    Returns ``(a_sv, a_vs)``: ``a_sv`` (T x L) softmaxes each clip's row over the
    unmasked words, ``a_vs`` (L x T) softmaxes each word's row over all clips
    and zeroes the masked words.  Differentiable in both inputs.
    """
    word_mask = np.asarray(word_mask, dtype=float)
    if not (word_mask.sum(axis=-1) > 0).all():
        raise InputError("cross-modal edges need at least one unmasked word")
    scores = nx.matmul(v_init, nx.transpose(s_init))
    a_sv = nx.softmax_rows(scores, word_mask[..., None, :] > 0)
    a_vs = nx.softmax_rows(nx.transpose(scores)) * word_mask[..., :, None]
    return a_sv, a_vs


def build_graph(raw_features, v_init, s_init, edges, word_mask, theta: float = 0.7,
                temporal: bool = True, semantic: bool = True, syntactic: bool = True) -> MultiModalGraph:
    """Assemble all four adjacency matrices for one example."""
    a_vv = build_clip_adjacency(raw_features, theta, temporal, semantic)
    a_ss = build_word_adjacency(edges, word_mask, syntactic)
    a_sv, a_vs = build_cross_modal(v_init, s_init, word_mask)
    return MultiModalGraph(a_vv, a_ss, a_sv, a_vs, np.asarray(word_mask, dtype=float))


def write_adjacency_csv(path, adj) -> None:
    """Debug dump: one CSV row per node."""
    np.savetxt(path, np.asarray(getattr(adj, "value", adj)), delimiter=",", fmt="%.10g")
