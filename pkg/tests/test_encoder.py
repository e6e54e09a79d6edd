import numpy as np
import pytest

from migcn import numerics as nx
from migcn.encoder import (encode_sentence, encode_video, gru_cell, init_bigru, init_gru_cell, run_gru)
from migcn.errors import ConfigError, DimensionError, InputError
from migcn.harness import relative_error


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def scalar_gru_step(x, h, p):
    """Step-by-step loop evaluation with explicit indices."""
    n_in, n_h = len(x), len(h)
    w = {k: getattr(p, k).value for k in ("w_z", "w_r", "w_h", "b_z", "b_r", "b_h")}
    z, r = np.zeros(n_h), np.zeros(n_h)
    for j in range(n_h):
        az = w["b_z"][0, j] + sum(x[i] * w["w_z"][i, j] for i in range(n_in)) \
            + sum(h[i] * w["w_z"][n_in + i, j] for i in range(n_h))
        ar = w["b_r"][0, j] + sum(x[i] * w["w_r"][i, j] for i in range(n_in)) \
            + sum(h[i] * w["w_r"][n_in + i, j] for i in range(n_h))
        z[j], r[j] = sigmoid(az), sigmoid(ar)
    out = np.zeros(n_h)
    for j in range(n_h):
        ac = w["b_h"][0, j] + sum(x[i] * w["w_h"][i, j] for i in range(n_in)) \
            + sum(r[i] * h[i] * w["w_h"][n_in + i, j] for i in range(n_h))
        out[j] = (1 - z[j]) * h[j] + z[j] * np.tanh(ac)
    return out


def scalar_bigru(seq, p, mask=None):
    length = len(seq)
    mask = np.ones(length) if mask is None else mask
    n = p.forward_cell.hidden_dim
    fwd, bwd = np.zeros((length, n)), np.zeros((length, n))
    h = np.zeros(n)
    for t in range(length):
        if mask[t]:
            h = scalar_gru_step(seq[t], h, p.forward_cell)
        fwd[t] = h
    h = np.zeros(n)
    for t in reversed(range(length)):
        if mask[t]:
            h = scalar_gru_step(seq[t], h, p.backward_cell)
        bwd[t] = h
    pre = np.concatenate([fwd, bwd], axis=1) @ p.w_proj.value + p.b_proj.value
    return np.where(pre > 0, pre, 0.01 * pre) * mask[:, None]


def test_zero_params_zero_state_gives_zero(rng):
    p = init_gru_cell(rng, "c", 3, 2)
    for q in p.params():
        q.value[:] = 0.0
    out = gru_cell(rng.normal(size=(1, 3)), np.zeros((1, 2)), p)
    np.testing.assert_array_equal(out.value, 0.0)


def test_closed_update_gate_keeps_state(rng):
    p = init_gru_cell(rng, "c", 3, 2)
    p.b_z.value[:] = -50.0
    h = rng.normal(size=(1, 2))
    out = gru_cell(rng.normal(size=(1, 3)), h, p)
    np.testing.assert_allclose(out.value, h, atol=1e-15)


def test_gru_cell_matches_scalar_loops(rng):
    p = init_gru_cell(rng, "c", 3, 3)
    x, h = rng.normal(size=3), rng.normal(size=3)
    out = gru_cell(x[None], h[None], p).value[0]
    np.testing.assert_allclose(out, scalar_gru_step(x, h, p), atol=1e-14)


def test_gru_cell_dimension_error(rng):
    p = init_gru_cell(rng, "c", 3, 2)
    with pytest.raises(DimensionError):
        gru_cell(np.ones((1, 4)), np.zeros((1, 2)), p)


def test_run_gru_agrees_with_repeated_cells(rng):
    p = init_gru_cell(rng, "c", 3, 2)
    seq = rng.normal(size=(5, 3))
    states = run_gru(seq[None], p).value[0]
    h = np.zeros((1, 2))
    for t in range(5):
        h = gru_cell(seq[t:t + 1], h, p).value
        np.testing.assert_allclose(states[t], h[0], atol=1e-14)


def test_encode_video_matches_unrolled_oracle(rng):
    p = init_bigru(rng, "v", 3, 4)
    seq = rng.normal(size=(3, 3))
    np.testing.assert_allclose(encode_video(seq, p).value, scalar_bigru(seq, p), atol=1e-13)


def test_length_one_video_is_single_step_each_way(rng):
    p = init_bigru(rng, "v", 3, 4)
    x = rng.normal(size=(1, 3))
    fwd = run_gru(x[None], p.forward_cell).value[0, 0]
    bwd = run_gru(x[None], p.backward_cell, reverse=True).value[0, 0]
    np.testing.assert_allclose(fwd, gru_cell(x, np.zeros((1, 2)), p.forward_cell).value[0], atol=1e-15)
    np.testing.assert_allclose(bwd, gru_cell(x, np.zeros((1, 2)), p.backward_cell).value[0], atol=1e-15)


def test_reversal_swaps_direction_roles(rng):
    cell = init_gru_cell(rng, "c", 3, 2)
    seq = rng.normal(size=(1, 6, 3))
    forward = run_gru(seq, cell).value
    backward_on_reversed = run_gru(seq[:, ::-1], cell, reverse=True).value
    np.testing.assert_allclose(forward, backward_on_reversed[:, ::-1], atol=1e-15)


def test_encode_video_rejects_empty_and_odd_dim(rng):
    p = init_bigru(rng, "v", 3, 4)
    with pytest.raises(InputError):
        encode_video(np.zeros((0, 3)), p)
    with pytest.raises(ConfigError):
        init_bigru(rng, "v", 3, 5)


def test_encode_sentence_masks_and_matches_oracle(rng):
    p = init_bigru(rng, "s", 3, 4)
    emb = rng.normal(size=(5, 3))
    mask = np.array([1, 1, 0, 0, 0.0])
    emb[2:] = 0.0
    out = encode_sentence(emb, mask, p).value
    assert np.all(out[2:] == 0.0)
    np.testing.assert_allclose(out, scalar_bigru(emb, p, mask), atol=1e-13)
    # unmasked prefix is independent of padding length
    short = encode_sentence(emb[:2], np.ones(2), p).value
    np.testing.assert_allclose(out[:2], short, atol=1e-15)


def test_encode_sentence_all_masked_is_error(rng):
    p = init_bigru(rng, "s", 3, 4)
    with pytest.raises(InputError):
        encode_sentence(np.zeros((3, 3)), np.zeros(3), p)


def test_zero_network_gives_zero_output(rng):
    p = init_bigru(rng, "v", 3, 4)
    for q in p.params():
        q.value[:] = 0.0
    np.testing.assert_array_equal(encode_video(rng.normal(size=(4, 3)), p).value, 0.0)


def test_batched_equals_per_example(rng):
    p = init_bigru(rng, "s", 3, 4)
    emb = rng.normal(size=(3, 5, 3))
    mask = np.array([[1, 1, 1, 1, 1], [1, 1, 0, 0, 0], [1, 0, 0, 0, 0.0]])
    batched = encode_sentence(emb, mask, p).value
    for b in range(3):
        np.testing.assert_allclose(batched[b], encode_sentence(emb[b], mask[b], p).value, atol=1e-15)


def test_two_step_bigru_gradient(rng):
    p = init_bigru(rng, "v", 3, 4)
    seq = rng.normal(size=(2, 3))
    weights = rng.normal(size=(2, 4))
    params = p.params()

    def loss():
        return nx.tsum(encode_video(seq, p) * weights)

    nx.backward(loss(), params)
    worst = 0.0
    for q in params:
        grad = q.grad.copy()
        for idx in np.ndindex(q.shape):
            num = nx.finite_difference(lambda: float(loss().value), q.value, idx, 1e-5)
            worst = max(worst, relative_error(grad[idx], num))
    assert worst < 1e-4
