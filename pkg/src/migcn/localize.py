"""Sliding-window candidate moments, context-extended representations and multi-scale heads.

Clip positions are 1-based.  A start bound ``u_s`` in clip units denotes the
left edge of clip ``u_s``; an end bound ``u_e`` denotes the right edge of clip
``u_e``.  With ``T`` clips over ``duration`` seconds, clip ``t`` covers seconds
``[(t-1)*duration/T, t*duration/T)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .errors import ConfigError, DimensionError, InputError
from .numerics import Param, Tensor


@dataclass(frozen=True)
class WindowConfig:
    sizes: tuple[int, ...] = (6, 12, 18, 24, 30, 36)
    stride: int = 3

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ConfigError(f"window sizes must be positive, got {sizes}")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError(f"window sizes must be strictly increasing, got {sizes}")
        if int(self.stride) < 1:
            raise ConfigError(f"window stride must be >= 1, got {self.stride}")


@dataclass
class CandidateMoment:
    window_index: int
    omega: int
    t_s: int
    t_e: int
    extended_start: float = 0.0
    extended_end: float = 0.0
    score: float = 0.0
    offset_s: float = 0.0
    offset_e: float = 0.0
    rectified_s: float = 0.0
    rectified_e: float = 0.0

    @property
    def center(self) -> float:
        return 0.5 * (self.t_s + self.t_e)


@dataclass
class WindowHead:
    """Scoring/offset weights shared by every candidate of one window size."""

    omega: int
    w_r: Param
    w_s: Param
    w_e: Param
    b_r: Param
    b_s: Param
    b_e: Param

    def params(self) -> list[Param]:
        return [self.w_r, self.w_s, self.w_e, self.b_r, self.b_s, self.b_e]


@dataclass
class CandidateSet:
    """All candidates of one video length as flat arrays, ordered by (window, start)."""

    n_clips: int
    windows: WindowConfig
    starts: list[np.ndarray]
    window_index: np.ndarray = field(init=False)
    t_s: np.ndarray = field(init=False)
    t_e: np.ndarray = field(init=False)

    def __post_init__(self):
        self.window_index = np.concatenate([np.full(len(s), m) for m, s in enumerate(self.starts)])
        self.t_s = np.concatenate(self.starts).astype(float)
        omegas = np.array(self.windows.sizes, dtype=float)[self.window_index]
        self.t_e = self.t_s + omegas - 1

    def __len__(self) -> int:
        return len(self.t_s)

    def moments(self) -> list[CandidateMoment]:
        out = []
        for m, starts in enumerate(self.starts):
            omega = self.windows.sizes[m]
            for s in starts:
                c = CandidateMoment(m, omega, int(s), int(s) + omega - 1)
                c.extended_start, c.extended_end = extend_context(c.t_s, c.t_e, omega)
                out.append(c)
        return out


def init_heads(rng: np.random.Generator, windows: WindowConfig, d: int) -> list[WindowHead]:
    heads = []
    for omega in windows.sizes:
        shape = (2 * omega, 2 * d)
        k = 1.0 / math.sqrt(shape[0] * shape[1])

        def u(name):
            return Param(f"head{omega}.{name}", rng.uniform(-k, k, size=shape))

        heads.append(WindowHead(omega, u("w_r"), u("w_s"), u("w_e"),
                                Param(f"head{omega}.b_r", np.zeros((1, 1))),
                                Param(f"head{omega}.b_s", np.zeros((1, 1))),
                                Param(f"head{omega}.b_e", np.zeros((1, 1)))))
    return heads


# ------------------------------------------------------------------ candidates


def window_starts(n_clips: int, omega: int, stride: int) -> np.ndarray:
    """1-based starts 1, 1+stride, ... whose window ends inside the video."""
    if omega > n_clips:
        return np.zeros(0, dtype=int)
    return np.arange(1, n_clips - omega + 2, stride)


def candidate_set(n_clips: int, windows: WindowConfig) -> CandidateSet:
    starts = [window_starts(n_clips, omega, windows.stride) for omega in windows.sizes]
    if sum(len(s) for s in starts) == 0:
        raise InputError(f"no window of {windows.sizes} fits a video of {n_clips} clips")
    return CandidateSet(n_clips, windows, starts)


def generate_candidates(n_clips: int, windows: WindowConfig) -> list[CandidateMoment]:
    return candidate_set(n_clips, windows).moments()


def extend_context(t_s: float, t_e: float, omega: int) -> tuple[float, float]:
    return t_s - omega / 2, t_e + omega / 2


# ------------------------------------------------------------- representation


def sentence_embedding(x_s, w_s, slope: float = nx.LEAKY_SLOPE) -> Tensor:
    """Weighted sum of word rows, shape (..., 1, d)."""
    return nx.leaky_relu(nx.matmul(w_s, x_s), slope)


def _window_rows(n_clips: int, starts: np.ndarray, omega: int):
    first = np.ceil(np.asarray(starts, dtype=float) - omega / 2).astype(int)
    pos = first[:, None] + np.arange(2 * omega)[None, :]
    valid = (pos >= 1) & (pos <= n_clips)
    return np.clip(pos - 1, 0, n_clips - 1), valid.astype(float)


def assemble_window(x_v, s_emb, starts, omega: int) -> Tensor:
    """Context-extended representations for all candidates of one window size.

    Returns shape (..., C, 2*omega, 2d).  Row ``k`` of candidate ``c`` is
    ``[clip ‖ sentence]`` for clip ``ceil(t_s - omega/2) + k``; positions outside
    the video are all-zero rows.
    """
    x_v, s_emb = nx.as_tensor(x_v), nx.as_tensor(s_emb)
    n_clips, d = x_v.shape[-2], x_v.shape[-1]
    rows, valid = _window_rows(n_clips, starts, omega)
    clips = x_v[..., rows, :] * valid[..., None]
    sent = nx.reshape(s_emb, s_emb.shape[:-2] + (1, 1, d)) * valid[..., None]
    return nx.concat([clips, sent], axis=-1)


def assemble_representation(x_v, s_emb, candidate: CandidateMoment) -> Tensor:
    """Single-candidate form of :func:`assemble_window`, shape (2*omega, 2d)."""
    rep = assemble_window(x_v, s_emb, np.array([candidate.t_s]), candidate.omega)
    return rep[..., 0, :, :]


def score_and_offset(rep, head: WindowHead) -> tuple[Tensor, Tensor, Tensor]:
    """Elementwise product with each head matrix, summed over all entries, plus bias."""
    rep = nx.as_tensor(rep)
    if rep.shape[-2:] != head.w_r.shape:
        raise DimensionError(f"representation {rep.shape[-2:]} does not match head {head.w_r.shape}")
    out = []
    for w, b in ((head.w_r, head.b_r), (head.w_s, head.b_s), (head.w_e, head.b_e)):
        out.append(nx.tsum(rep * w, axis=(-2, -1)) + nx.reshape(b, ()))
    return tuple(out)


def rectify(t_s, t_e, offset_s, offset_e):
    return t_s + offset_s, t_e + offset_e


# ------------------------------------------------------------------ seconds


def seconds_to_clip_bounds(tau_s, tau_e, duration, n_clips):
    """Ground-truth seconds to (start, end) clip bounds."""
    scale = n_clips / np.asarray(duration, dtype=float)
    return np.asarray(tau_s) * scale + 1.0, np.asarray(tau_e) * scale


def clip_bounds_to_seconds(u_s, u_e, duration, n_clips):
    scale = np.asarray(duration, dtype=float) / n_clips
    return (np.asarray(u_s) - 1.0) * scale, np.asarray(u_e) * scale


def clip_span(u_s, u_e):
    """Clip bounds to a continuous span on the clip-edge axis (length = clip count)."""
    return np.asarray(u_s) - 1.0, np.asarray(u_e)


def predict_top1(candidates: list[CandidateMoment], duration: float, n_clips: int) -> tuple[float, float, float]:
    """Highest-scoring candidate as ``(tau_s, tau_e, sigmoid score)`` in seconds.

    Ties go to the earliest candidate in (window, start) order.  A rectified
    interval that collapses after clamping falls back to the raw window.
    """
    if not candidates:
        raise InputError("no candidates to choose from")
    best = candidates[int(np.argmax([c.score for c in candidates]))]
    s, e = clip_bounds_to_seconds(best.rectified_s, best.rectified_e, duration, n_clips)
    s, e = float(np.clip(s, 0.0, duration)), float(np.clip(e, 0.0, duration))
    if e <= s:
        s, e = (float(v) for v in clip_bounds_to_seconds(best.t_s, best.t_e, duration, n_clips))
    return s, e, float(nx.sigmoid(np.array(best.score)).value)


def write_score_map(path, candidates: list[CandidateMoment], ious=None) -> None:
    """CSV with one row per candidate (plus an ``iou`` column when given)."""
    header = ["window_size", "t_start", "t_end", "center", "sigmoid_score", "offset_s", "offset_e"]
    if ious is not None:
        header.append("iou")
    scores = nx.sigmoid(np.array([c.score for c in candidates], dtype=float)).value
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, c in enumerate(candidates):
            row = [c.omega, c.t_s, c.t_e, c.center, repr(float(scores[k])),
                   repr(float(c.offset_s)), repr(float(c.offset_e))]
            if ious is not None:
                row.append(repr(float(ious[k])))
            writer.writerow(row)
