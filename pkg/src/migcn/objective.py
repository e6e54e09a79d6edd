"""Temporal IoU and the alignment / ranking / regression training objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import ContractError
from .localize import CandidateSet, clip_span
from .numerics import Tensor

LOG_FLOOR = 1e-12


@dataclass
class LossBreakdown:
    """Per-example loss terms (scalar tensors, or shape (B,) for a batch)."""

    aln: Tensor
    rank: Tensor
    reg: Tensor
    total: Tensor
    best: np.ndarray


def temporal_iou(a_start: float, a_end: float, b_start: float, b_end: float) -> float:
    """Intersection over union of two closed real intervals."""
    if a_start > a_end or b_start > b_end:
        raise ContractError(f"intervals must be ordered, got [{a_start}, {a_end}] and [{b_start}, {b_end}]")
    inter = max(0.0, min(a_end, b_end) - max(a_start, b_start))
    union = (a_end - a_start) + (b_end - b_start) - inter
    if union <= 0.0:
        return 1.0 if (a_start, a_end) == (b_start, b_end) else 0.0
    return inter / union


def interval_iou(a_start, a_end, b_start, b_end) -> np.ndarray:
    """Vectorised :func:`temporal_iou` (broadcasting, no ordering checks)."""
    a_start, a_end, b_start, b_end = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (a_start, a_end, b_start, b_end)))
    inter = np.clip(np.minimum(a_end, b_end) - np.maximum(a_start, b_start), 0.0, None)
    union = (a_end - a_start) + (b_end - b_start) - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def candidate_ious(cands: CandidateSet, gt_s, gt_e) -> np.ndarray:
    """IoU of every candidate with the ground truth (clip-unit bounds), shape (..., C)."""
    cs, ce = clip_span(cands.t_s, cands.t_e)
    gs, ge = clip_span(np.asarray(gt_s, dtype=float)[..., None], np.asarray(gt_e, dtype=float)[..., None])
    return interval_iou(cs, ce, gs, ge)


def alignment_loss(scores, ious, lam: float = 0.3) -> Tensor:
    """Binary cross-entropy of sigmoid scores against IoU targets zeroed below ``lam``."""
    if not 0.0 <= lam < 1.0:
        raise ContractError(f"lambda must lie in [0, 1), got {lam}")
    target = np.where(np.asarray(ious) < lam, 0.0, ious)
    scores = nx.as_tensor(scores)
    log_p = nx.log(nx.clamp(nx.sigmoid(scores), lo=LOG_FLOOR))
    log_q = nx.log(nx.clamp(nx.sigmoid(-scores), lo=LOG_FLOOR))
    per_cand = -(target * log_p + (1.0 - target) * log_q)
    return nx.mean(per_cand, axis=-1)


def _pick(x: Tensor, idx: np.ndarray) -> Tensor:
    if x.ndim == 1:
        return x[int(idx)]
    return x[np.arange(x.shape[0]), idx]


def best_candidate(ious) -> np.ndarray:
    """Index of the highest-IoU candidate; ties go to the first in order."""
    return np.argmax(np.asarray(ious), axis=-1)


def ranking_loss(scores, ious) -> tuple[Tensor, np.ndarray]:
    """Softmax cross-entropy singling out the best-IoU candidate."""
    scores = nx.as_tensor(scores)
    best = best_candidate(ious)
    return nx.logsumexp(scores, axis=-1) - _pick(scores, best), best


def regression_loss(rect_s, rect_e, gt_s, gt_e) -> Tensor:
    return nx.smooth_l1(nx.sub(gt_s, rect_s)) + nx.smooth_l1(nx.sub(gt_e, rect_e))


def total_loss(scores, offset_s, offset_e, cands: CandidateSet, gt_s, gt_e,
               alpha: float = 0.1, beta: float = 0.001, lam: float = 0.3) -> LossBreakdown:
    """Combine the three terms for ground truth ``(gt_s, gt_e)`` in clip units.

    ``scores`` and offsets have shape (..., C) in the candidate order of ``cands``.
    """
    if alpha < 0 or beta < 0:
        raise ContractError(f"loss weights must be non-negative, got alpha={alpha}, beta={beta}")
    ious = candidate_ious(cands, gt_s, gt_e)
    aln = alignment_loss(scores, ious, lam)
    rank, best = ranking_loss(scores, ious)
    rect_s = cands.t_s[best] + _pick(nx.as_tensor(offset_s), best)
    rect_e = cands.t_e[best] + _pick(nx.as_tensor(offset_e), best)
    reg = regression_loss(rect_s, rect_e, gt_s, gt_e)
    total = aln + alpha * rank + beta * reg
    return LossBreakdown(aln, rank, reg, total, best)
