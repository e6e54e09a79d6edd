"""Scikit-learn style estimator for temporal sentence localisation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import numerics as nx
from .errors import InputError, TrainingError
from .localize import (CandidateMoment, WindowConfig, candidate_set, clip_bounds_to_seconds,
                       predict_top1, seconds_to_clip_bounds)
from .model import ModelConfig, ModelParams, forward, init_params, static_adjacency
from .objective import LossBreakdown, interval_iou, total_loss
from .validation import SampleArrays, check_samples, check_targets

logger = logging.getLogger(__name__)


@dataclass
class TraceEntry:
    epoch: int
    step: int
    aln: float
    rank: float
    reg: float
    total: float


class MIGCNLocalizer(BaseEstimator):
    """Multi-modal interaction graph network for locating a sentence in a video.

    ``X`` is a sequence of :class:`~migcn.validation.GroundingSample`; ``y`` is an
    (n, 2) array of ground-truth ``(tau_s, tau_e)`` in seconds.  ``predict``
    returns the top-ranked moment per sample in the same units.

    Parameters
    ----------
    d : int
        Node dimension (GRU hidden size is ``d // 2``).
    window_sizes, stride : sliding-window configuration in clips.
    theta : float
        Cosine threshold for semantic clip-clip edges.
    lam : float
        IoU below which an alignment target is zeroed.
    alpha, beta : float
        Weights of the ranking and regression terms.
    learning_rate, weight_decay : Adam settings.
    dropout_p : float
        Dropout on encoder outputs and candidate representations while training.
    batch_size, epochs : int
    variant : str
        ``gated`` (full model), ``naive``, ``no-gcn``, ``no-inter``, ``no-temp``,
        ``no-seman`` or ``no-syntac``.
    gate_bias : bool
        Add a bias to the gate transforms.
    normalize_intra : bool
        Row-normalise the clip-clip and word-word matrices.
    random_state : int or None
        Seeds initialisation, shuffling and dropout.
    """

    def __init__(self, d=256, window_sizes=(6, 12, 18, 24, 30, 36), stride=3, theta=0.7, lam=0.3,
                 alpha=0.1, beta=0.001, learning_rate=1e-3, weight_decay=1e-5, dropout_p=0.5,
                 batch_size=128, epochs=10, variant="gated", gate_bias=False, normalize_intra=False,
                 random_state=0, verbose=0):
        self.d = d
        self.window_sizes = window_sizes
        self.stride = stride
        self.theta = theta
        self.lam = lam
        self.alpha = alpha
        self.beta = beta
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.dropout_p = dropout_p
        self.batch_size = batch_size
        self.epochs = epochs
        self.variant = variant
        self.gate_bias = gate_bias
        self.normalize_intra = normalize_intra
        self.random_state = random_state
        self.verbose = verbose

    def model_config(self) -> ModelConfig:
        return ModelConfig(d=int(self.d), windows=WindowConfig(tuple(self.window_sizes), int(self.stride)),
                           theta=float(self.theta), variant=self.variant, dropout_p=float(self.dropout_p),
                           gate_bias=bool(self.gate_bias), normalize_intra=bool(self.normalize_intra))

    # ------------------------------------------------------------- set-up

    def initialize(self, n_clips: int, clip_dim: int, embed_dim: int, max_query_len: int,
                   rng: np.random.Generator | None = None) -> "MIGCNLocalizer":
        """Create fresh parameters for the given input dimensions."""
        cfg = self.model_config()
        rng = np.random.default_rng(self.random_state) if rng is None else rng
        self.n_clips_ = n_clips
        self.clip_dim_ = clip_dim
        self.embed_dim_ = embed_dim
        self.max_query_len_ = max_query_len
        self.candidates_ = candidate_set(n_clips, cfg.windows)
        self.params_ = init_params(rng, clip_dim, embed_dim, max_query_len, cfg)
        self.loss_trace_ = []
        self.n_steps_ = 0
        return self

    def prepare(self, X) -> tuple[SampleArrays, np.ndarray, np.ndarray]:
        arrays = check_samples(X)
        _, T, dv = arrays.features.shape
        _, L, de = arrays.embeddings.shape
        if hasattr(self, "params_") and (T, dv, L, de) != (self.n_clips_, self.clip_dim_,
                                                          self.max_query_len_, self.embed_dim_):
            raise InputError(f"inputs have (T, D_v, L_max, E) = {(T, dv, L, de)}, model expects "
                             f"{(self.n_clips_, self.clip_dim_, self.max_query_len_, self.embed_dim_)}")
        cfg = self.model_config()
        pairs = [static_adjacency(f, e, m, cfg)
                 for f, e, m in zip(arrays.features, arrays.edges, arrays.mask)]
        a_vv = np.stack([p[0] for p in pairs])
        a_ss = np.stack([p[1] for p in pairs])
        return arrays, a_vv, a_ss

    def _forward(self, arrays, a_vv, a_ss, idx, training=False, rng=None):
        return forward(self.params_, arrays.features[idx], arrays.embeddings[idx], arrays.mask[idx],
                       a_vv[idx], a_ss[idx], self.candidates_, self.model_config(), training, rng)

    def batch_loss(self, arrays, a_vv, a_ss, gt, idx, training=False, rng=None) -> LossBreakdown:
        out = self._forward(arrays, a_vv, a_ss, idx, training, rng)
        return total_loss(out.scores, out.offset_s, out.offset_e, self.candidates_,
                          gt[0][idx], gt[1][idx], self.alpha, self.beta, self.lam)

    def clip_targets(self, arrays, y):
        y = check_targets(y, arrays.duration)
        return seconds_to_clip_bounds(y[:, 0], y[:, 1], arrays.duration, self.n_clips_)

    # ------------------------------------------------------------ training

    def fit(self, X, y):
        arrays = check_samples(X)
        n, T, dv = arrays.features.shape
        rng = np.random.default_rng(self.random_state)
        self.initialize(T, dv, arrays.embeddings.shape[2], arrays.embeddings.shape[1], rng)
        arrays, a_vv, a_ss = self.prepare(X)
        gt = self.clip_targets(arrays, y)
        params = self.params_.params()
        batch = max(1, int(self.batch_size))
        for epoch in range(int(self.epochs)):
            order = rng.permutation(n)
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                parts = self.batch_loss(arrays, a_vv, a_ss, gt, idx, training=True, rng=rng)
                totals = parts.total.value
                if not np.isfinite(totals).all():
                    k = int(np.flatnonzero(~np.isfinite(totals))[0])
                    vid, qid = arrays.ids[idx[k]]
                    raise TrainingError(f"non-finite loss at epoch {epoch} on video {vid!r} query {qid!r}")
                loss = nx.mean(parts.total)
                nx.backward(loss, params)
                nx.adam_step(params, self.learning_rate, self.weight_decay)
                self.n_steps_ += 1
                self.loss_trace_.append(TraceEntry(epoch, self.n_steps_, float(parts.aln.value.mean()),
                                                   float(parts.rank.value.mean()),
                                                   float(parts.reg.value.mean()), float(loss.value)))
            if self.verbose:
                logger.info("epoch %d total %.6f", epoch, self.loss_trace_[-1].total)
        return self

    def objective(self, X, y) -> tuple[nx.Tensor, LossBreakdown]:
        """Batch-mean training objective without dropout, recorded on the tape."""
        check_is_fitted(self, "params_")
        arrays, a_vv, a_ss = self.prepare(X)
        gt = self.clip_targets(arrays, y)
        parts = self.batch_loss(arrays, a_vv, a_ss, gt, np.arange(len(arrays)))
        return nx.mean(parts.total), parts

    # ---------------------------------------------------------- inference

    def predict_candidates(self, X) -> list[list[CandidateMoment]]:
        """Every candidate per sample with score, offsets and rectified bounds filled in."""
        check_is_fitted(self, "params_")
        arrays, a_vv, a_ss = self.prepare(X)
        template = self.candidates_.moments()
        result = []
        with nx.no_grad():
            for start in range(0, len(arrays), max(1, int(self.batch_size))):
                idx = np.arange(start, min(start + int(self.batch_size), len(arrays)))
                out = self._forward(arrays, a_vv, a_ss, idx)
                for row in range(len(idx)):
                    moments = []
                    for k, c in enumerate(template):
                        m = CandidateMoment(**vars(c))
                        m.score = float(out.scores.value[row, k])
                        m.offset_s = float(out.offset_s.value[row, k])
                        m.offset_e = float(out.offset_e.value[row, k])
                        m.rectified_s = m.t_s + m.offset_s
                        m.rectified_e = m.t_e + m.offset_e
                        moments.append(m)
                    result.append(moments)
        return result

    def predict(self, X) -> np.ndarray:
        """Top-1 moment per sample, (n, 2) seconds."""
        arrays = check_samples(X)
        out = np.empty((len(arrays), 2))
        for i, moments in enumerate(self.predict_candidates(X)):
            out[i, :2] = predict_top1(moments, arrays.duration[i], self.n_clips_)[:2]
        return out

    def score(self, X, y, iou: float = 0.5) -> float:
        """Fraction of samples whose top-1 prediction has IoU strictly above ``iou``."""
        pred = self.predict(X)
        y = np.asarray(y, dtype=float)
        return float(np.mean(interval_iou(pred[:, 0], pred[:, 1], y[:, 0], y[:, 1]) > iou))


def candidate_seconds(moments: list[CandidateMoment], duration: float, n_clips: int) -> np.ndarray:
    """Raw window bounds of each candidate in seconds, shape (C, 2)."""
    s, e = clip_bounds_to_seconds(np.array([m.t_s for m in moments], dtype=float),
                                  np.array([m.t_e for m in moments], dtype=float), duration, n_clips)
    return np.stack([s, e], axis=1)
