"""Bidirectional GRU node initialisation for clips and words."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import ConfigError, DimensionError, InputError
from .numerics import Param, Tensor


@dataclass
class GruCellParams:
    """Gate weights act on row vectors: ``[x | h] @ w`` with ``w`` of shape (input+hidden, hidden)."""

    input_dim: int
    hidden_dim: int
    w_z: Param
    w_r: Param
    w_h: Param
    b_z: Param
    b_r: Param
    b_h: Param

    def params(self) -> list[Param]:
        return [self.w_z, self.w_r, self.w_h, self.b_z, self.b_r, self.b_h]


@dataclass
class BiGruEncoderParams:
    forward_cell: GruCellParams
    backward_cell: GruCellParams
    w_proj: Param
    b_proj: Param

    def params(self) -> list[Param]:
        return self.forward_cell.params() + self.backward_cell.params() + [self.w_proj, self.b_proj]


def init_gru_cell(rng: np.random.Generator, name: str, input_dim: int, hidden_dim: int) -> GruCellParams:
    k = 1.0 / np.sqrt(hidden_dim)

    def u(suffix, shape):
        return Param(f"{name}.{suffix}", rng.uniform(-k, k, size=shape))

    n_in = input_dim + hidden_dim
    return GruCellParams(input_dim, hidden_dim,
                         u("w_z", (n_in, hidden_dim)), u("w_r", (n_in, hidden_dim)), u("w_h", (n_in, hidden_dim)),
                         u("b_z", (1, hidden_dim)), u("b_r", (1, hidden_dim)), u("b_h", (1, hidden_dim)))


def init_bigru(rng: np.random.Generator, name: str, input_dim: int, node_dim: int) -> BiGruEncoderParams:
    if node_dim % 2:
        raise ConfigError(f"node dimension must be even (GRU hidden = d/2), got {node_dim}")
    hidden = node_dim // 2
    fwd = init_gru_cell(rng, f"{name}.fwd", input_dim, hidden)
    bwd = init_gru_cell(rng, f"{name}.bwd", input_dim, hidden)
    k = 1.0 / np.sqrt(2 * hidden)
    return BiGruEncoderParams(fwd, bwd,
                              Param(f"{name}.w_proj", rng.uniform(-k, k, size=(2 * hidden, node_dim))),
                              Param(f"{name}.b_proj", rng.uniform(-k, k, size=(1, node_dim))))


def gru_cell(x, h_prev, p: GruCellParams) -> Tensor:
    """One GRU step: update gate z, reset gate r, candidate state, blend."""
    x, h_prev = nx.as_tensor(x), nx.as_tensor(h_prev)
    if x.shape[-1] != p.input_dim or h_prev.shape[-1] != p.hidden_dim:
        raise DimensionError(f"gru_cell expects input width {p.input_dim} and hidden width "
                             f"{p.hidden_dim}, got {x.shape} and {h_prev.shape}")
    xh = nx.concat([x, h_prev], axis=-1)
    z = nx.sigmoid(xh @ p.w_z + p.b_z)
    r = nx.sigmoid(xh @ p.w_r + p.b_r)
    cand = nx.tanh(nx.concat([x, r * h_prev], axis=-1) @ p.w_h + p.b_h)
    return (1.0 - z) * h_prev + z * cand


def run_gru(seq, p: GruCellParams, mask=None, reverse: bool = False) -> Tensor:
    """Unroll a GRU over axis -2 of ``seq`` from a zero state.

    With a ``mask`` (shape ``seq.shape[:-1]``) masked steps carry the state
    through unchanged, so the reverse pass effectively starts at the last
    valid position.  Returns hidden states stacked in input order.
    """
    seq = nx.as_tensor(seq)
    if seq.shape[-1] != p.input_dim:
        raise DimensionError(f"sequence width {seq.shape[-1]} != GRU input width {p.input_dim}")
    n_in, length = p.input_dim, seq.shape[-2]
    # input projections for all steps at once
    xz = seq @ p.w_z[:n_in] + p.b_z
    xr = seq @ p.w_r[:n_in] + p.b_r
    xc = seq @ p.w_h[:n_in] + p.b_h
    uz, ur, uc = p.w_z[n_in:], p.w_r[n_in:], p.w_h[n_in:]

    h = nx.Tensor(np.zeros(seq.shape[:-2] + (p.hidden_dim,)))
    states = [None] * length
    steps = range(length - 1, -1, -1) if reverse else range(length)
    for t in steps:
        z = nx.sigmoid(xz[..., t, :] + h @ uz)
        r = nx.sigmoid(xr[..., t, :] + h @ ur)
        cand = nx.tanh(xc[..., t, :] + (r * h) @ uc)
        h_new = h + z * (cand - h)
        if mask is not None:
            m = np.asarray(mask)[..., t, None]
            h_new = h + m * (h_new - h)
        h = h_new
        states[t] = h
    return nx.stack(states, axis=-2)


def _bigru(seq, p: BiGruEncoderParams, mask=None, slope: float = nx.LEAKY_SLOPE) -> Tensor:
    seq = nx.as_tensor(seq)
    if seq.ndim == 2:
        # GRU states need a row axis even for a single sequence
        mask = None if mask is None else np.asarray(mask)[None]
        out = _bigru(nx.reshape(seq, (1,) + seq.shape), p, mask, slope)
        return nx.reshape(out, out.shape[1:])
    fwd = run_gru(seq, p.forward_cell, mask)
    bwd = run_gru(seq, p.backward_cell, mask, reverse=True)
    return nx.leaky_relu(nx.concat([fwd, bwd], axis=-1) @ p.w_proj + p.b_proj, slope)


def encode_video(features, p: BiGruEncoderParams, slope: float = nx.LEAKY_SLOPE) -> Tensor:
    """Clip node initialisation, shape (..., T, d)."""
    features = nx.as_tensor(features)
    if features.ndim < 2 or features.shape[-2] == 0:
        raise InputError("video must contain at least one clip")
    return _bigru(features, p, slope=slope)


def encode_sentence(embeddings, mask, p: BiGruEncoderParams, slope: float = nx.LEAKY_SLOPE) -> Tensor:
    """Word node initialisation, shape (..., L_max, d); masked rows are zero."""
    mask = np.asarray(mask, dtype=np.float64)
    if not (mask.sum(axis=-1) > 0).all():
        raise InputError("query has no unmasked tokens")
    out = _bigru(embeddings, p, mask, slope)
    return out * mask[..., None]
