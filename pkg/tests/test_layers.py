import numpy as np
import pytest

from surt import autodiff as ad
from surt import layers
from surt.params import ParamStore
from surt.verify import fd_gradcheck


@pytest.fixture
def store():
    return ParamStore(seed=11)


def test_recurrent_single_step_matches_cell_equation(store):
    layers.init_gated_recurrent(store, "cell", 3, 4)
    x = np.random.default_rng(0).normal(size=(1, 3)).astype(np.float32)
    out = layers.gated_recurrent(store, "cell", ad.Tensor(x)).data
    wz, uz, bz = (store[f"cell.{n}"].data for n in ("wz", "uz", "bz"))
    wc, uc, bc = (store[f"cell.{n}"].data for n in ("wc", "uc", "bc"))
    h0 = np.zeros((1, 4), dtype=np.float32)
    z = 1 / (1 + np.exp(-(x @ wz + bz + h0 @ uz)))
    c = np.tanh(x @ wc + bc + h0 @ uc)
    want = h0 + z * (c - h0)
    assert np.allclose(out, want, atol=1e-6)


def test_recurrent_zero_weights_pure_bias_response(store):
    layers.init_gated_recurrent(store, "cell", 3, 4)
    for name in ("wz", "uz", "wc", "uc"):
        store[f"cell.{name}"].data[:] = 0.0
    store["cell.bz"].data[:] = 0.7
    store["cell.bc"].data[:] = -0.3
    x = np.random.default_rng(1).normal(size=(6, 3)).astype(np.float32)
    out = layers.gated_recurrent(store, "cell", ad.Tensor(x)).data
    # zero input weights: every step applies the same bias-driven update
    z = 1 / (1 + np.exp(-np.float32(0.7)))
    c = np.tanh(np.float32(-0.3))
    h = np.zeros(4, dtype=np.float32)
    for t in range(6):
        h = h + z * (c - h)
        assert np.allclose(out[t], h, atol=1e-6)


def test_recurrent_causality_bit_identical(store):
    layers.init_gated_recurrent(store, "cell", 3, 4)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(8, 3)).astype(np.float32)
    base = layers.gated_recurrent(store, "cell", ad.Tensor(x)).data
    x2 = x.copy()
    x2[5:] += 10.0
    pert = layers.gated_recurrent(store, "cell", ad.Tensor(x2)).data
    assert np.array_equal(base[:5], pert[:5])
    assert not np.array_equal(base[5:], pert[5:])


def test_recurrent_requires_frames(store):
    layers.init_gated_recurrent(store, "cell", 3, 4)
    with pytest.raises(ValueError, match="at least one frame"):
        layers.gated_recurrent(store, "cell", ad.Tensor(np.zeros((0, 3), dtype=np.float32)))


def test_chunked_attention_degenerate_chunk_equals_full(store):
    layers.init_chunked_attention(store, "att", 4, 4)
    rng = np.random.default_rng(3)
    x = ad.Tensor(rng.normal(size=(6, 4)).astype(np.float32))
    big = layers.chunked_self_attention(store, "att", x, chunk=100).data
    # full attention: same computation with an all-zero mask
    wq, wk, wv, wo = (store[f"att.{n}"].data for n in ("wq", "wk", "wv", "wo"))
    q, k, v = x.data @ wq, x.data @ wk, x.data @ wv
    scores = (q @ k.T) * np.float32(1 / np.sqrt(4))
    e = np.exp(scores - scores.max(-1, keepdims=True))
    attn = e / e.sum(-1, keepdims=True)
    assert np.allclose(big, (attn @ v) @ wo, atol=1e-6)


def test_chunked_attention_chunk1_same_chunk_only_is_value_projection(store):
    layers.init_chunked_attention(store, "att", 4, 4)
    rng = np.random.default_rng(4)
    x = ad.Tensor(rng.normal(size=(5, 4)).astype(np.float32))
    out = layers.chunked_self_attention(store, "att", x, chunk=1, include_past=False).data
    wv, wo = store["att.wv"].data, store["att.wo"].data
    assert np.allclose(out, (x.data @ wv) @ wo, atol=1e-6)


def test_chunked_attention_chunk_causality(store):
    layers.init_chunked_attention(store, "att", 4, 4)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(9, 4)).astype(np.float32)
    base = layers.chunked_self_attention(store, "att", ad.Tensor(x), chunk=3).data
    x2 = x.copy()
    x2[6] += 5.0  # chunk 2; chunks 0 and 1 must be untouched
    pert = layers.chunked_self_attention(store, "att", ad.Tensor(x2), chunk=3).data
    assert np.array_equal(base[:6], pert[:6])


def test_chunked_attention_rejects_bad_chunk():
    with pytest.raises(ValueError, match="chunk"):
        layers.chunk_causal_mask(5, 0)


def test_conv1d_causal_left_context_only(store):
    layers.init_conv1d(store, "c", 3, 2, 2)
    rng = np.random.default_rng(6)
    x = rng.normal(size=(7, 2)).astype(np.float32)
    base = layers.conv1d(store, "c", ad.Tensor(x)).data
    x2 = x.copy()
    x2[4:] += 3.0
    pert = layers.conv1d(store, "c", ad.Tensor(x2)).data
    assert np.array_equal(base[:4], pert[:4])


def test_conv1d_stream_state_matches_batch(store):
    layers.init_conv1d(store, "c", 3, 2, 3)
    rng = np.random.default_rng(7)
    x = rng.normal(size=(10, 2)).astype(np.float32)
    batch = layers.conv1d(store, "c", ad.Tensor(x)).data
    st = layers.Conv1dState(store, "c")
    stream = np.stack([st.step(f) for f in x])
    assert np.allclose(batch, stream, atol=1e-6)


def test_recurrent_stream_state_matches_batch(store):
    layers.init_gated_recurrent(store, "cell", 3, 4)
    rng = np.random.default_rng(8)
    x = rng.normal(size=(10, 3)).astype(np.float32)
    batch = layers.gated_recurrent(store, "cell", ad.Tensor(x)).data
    st = layers.GatedRecurrentState(store, "cell")
    stream = np.stack([st.step(f) for f in x])
    assert np.allclose(batch, stream, atol=1e-6)


@pytest.mark.parametrize("layer", ["recurrent", "attention", "conv"])
def test_layer_gradients_match_finite_differences(layer):
    rng = np.random.default_rng(9)
    with ad.use_dtype(np.float64):
        store = ParamStore(seed=12)
        if layer == "recurrent":
            layers.init_gated_recurrent(store, "l", 3, 4)
            x = ad.Tensor(rng.normal(size=(5, 3)), requires_grad=True)
            fn = lambda: ad.tsum(layers.gated_recurrent(store, "l", x))
        elif layer == "attention":
            layers.init_chunked_attention(store, "l", 4, 4)
            x = ad.Tensor(rng.normal(size=(6, 4)), requires_grad=True)
            fn = lambda: ad.tsum(ad.tanh(layers.chunked_self_attention(store, "l", x, chunk=2)))
        else:
            layers.init_conv1d(store, "l", 3, 3, 2)
            x = ad.Tensor(rng.normal(size=(6, 3)), requires_grad=True)
            fn = lambda: ad.tsum(ad.tanh(layers.conv1d(store, "l", x)))
        params = [x] + [t for _, t in store.items()]
        assert fd_gradcheck(fn, params) < 1e-3
