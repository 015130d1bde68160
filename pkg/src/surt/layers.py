"""Neural layers used by the unmixing and recognition networks.

Functional style: layers take explicit weight tensors (usually owned by a
ParamStore) and input tensors, and return output tensors on the same graph.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y[t] = x[t] @ w + b."""
    if x.data.shape[-1] != w.data.shape[0]:
        raise ValueError(
            f"linear dimension mismatch: x {x.data.shape} vs w {w.data.shape}"
        )
    return ad.add(ad.matmul(x, w), b)


def init_gated_recurrent(store, prefix, din, dh):
    store.add(f"{prefix}.wz", (din, dh))
    store.add(f"{prefix}.uz", (dh, dh))
    store.add_zeros(f"{prefix}.bz", (dh,))
    store.add(f"{prefix}.wc", (din, dh))
    store.add(f"{prefix}.uc", (dh, dh))
    store.add_zeros(f"{prefix}.bc", (dh,))


def gated_recurrent(store, prefix, x: Tensor, state0: Tensor | None = None) -> Tensor:
    """Single gated recurrent cell (update gate + candidate) run over time.

    h_t = h_{t-1} + z_t * (c_t - h_{t-1}), with
    z_t = sigmoid(x_t Wz + h_{t-1} Uz + bz), c_t = tanh(x_t Wc + h_{t-1} Uc + bc).
    Strictly causal: output at step t depends only on x[0..t].
    """
    T = x.data.shape[0]
    if T < 1:
        raise ValueError("gated_recurrent requires at least one frame")
    wz, uz, bz = store[f"{prefix}.wz"], store[f"{prefix}.uz"], store[f"{prefix}.bz"]
    wc, uc, bc = store[f"{prefix}.wc"], store[f"{prefix}.uc"], store[f"{prefix}.bc"]
    # input projections for the whole sequence at once
    xz = linear(x, wz, bz)
    xc = linear(x, wc, bc)
    if state0 is None:
        h = ad.constant(np.zeros((1, wz.data.shape[1]), dtype=x.data.dtype))
    else:
        h = state0
    outs = []
    for t in range(T):
        z = ad.sigmoid(ad.add(ad.rows(xz, t, t + 1), ad.matmul(h, uz)))
        c = ad.tanh(ad.add(ad.rows(xc, t, t + 1), ad.matmul(h, uc)))
        h = ad.add(h, ad.mul(z, ad.sub(c, h)))
        outs.append(h)
    return ad.concat_rows(outs)


def recurrent_encode(store, prefix, x: Tensor) -> Tensor:
    """Causal recurrent encoder: one gated cell pass over the sequence."""
    return gated_recurrent(store, prefix, x)


class GatedRecurrentState:
    """Streaming counterpart of gated_recurrent: one frame at a time."""

    def __init__(self, store, prefix):
        p = store
        self.wz = p[f"{prefix}.wz"].data
        self.uz = p[f"{prefix}.uz"].data
        self.bz = p[f"{prefix}.bz"].data
        self.wc = p[f"{prefix}.wc"].data
        self.uc = p[f"{prefix}.uc"].data
        self.bc = p[f"{prefix}.bc"].data
        self.h = np.zeros((1, self.wz.shape[1]), dtype=self.wz.dtype)

    def step(self, frame):
        x = frame.reshape(1, -1)
        z = 1.0 / (1.0 + np.exp(-((x @ self.wz) + self.bz + self.h @ self.uz)))
        c = np.tanh((x @ self.wc) + self.bc + self.h @ self.uc)
        self.h = self.h + z * (c - self.h)
        return self.h[0]


def init_chunked_attention(store, prefix, d, dk):
    store.add(f"{prefix}.wq", (d, dk))
    store.add(f"{prefix}.wk", (d, dk))
    store.add(f"{prefix}.wv", (d, dk))
    store.add(f"{prefix}.wo", (dk, d))


def chunk_causal_mask(T, chunk, include_past=True, dtype=np.float32):
    """Additive mask: 0 where attention is allowed, -1e9 elsewhere.

    A frame attends to every frame in its own chunk and (optionally) all
    frames of earlier chunks; later chunks are always blocked.
    """
    if chunk < 1:
        raise ValueError(f"chunk must be >= 1, got {chunk}")
    idx = np.arange(T) // chunk
    if include_past:
        allowed = idx[None, :] <= idx[:, None]
    else:
        allowed = idx[None, :] == idx[:, None]
    mask = np.where(allowed, 0.0, -1e9).astype(dtype)
    return mask


def chunked_self_attention(store, prefix, x: Tensor, chunk, include_past=True) -> Tensor:
    """Self-attention restricted to fixed-width frame chunks (chunk-causal)."""
    wq, wk = store[f"{prefix}.wq"], store[f"{prefix}.wk"]
    wv, wo = store[f"{prefix}.wv"], store[f"{prefix}.wo"]
    T = x.data.shape[0]
    dk = wq.data.shape[1]
    q = ad.matmul(x, wq)
    k = ad.matmul(x, wk)
    v = ad.matmul(x, wv)
    scores = ad.mul(ad.matmul(q, ad.transpose(k)), ad.constant(1.0 / np.sqrt(dk)))
    scores = ad.add_const(scores, chunk_causal_mask(T, chunk, include_past, x.data.dtype))
    attn = ad.softmax(scores)
    return ad.matmul(ad.matmul(attn, v), wo)


def init_attention_block(store, prefix, d, dk, dff):
    init_chunked_attention(store, f"{prefix}.attn", d, dk)
    store.add(f"{prefix}.ff1", (d, dff))
    store.add_zeros(f"{prefix}.ff1b", (dff,))
    store.add(f"{prefix}.ff2", (dff, d))
    store.add_zeros(f"{prefix}.ff2b", (d,))


def attention_block(store, prefix, x: Tensor, chunk) -> Tensor:
    """Residual chunk-causal attention followed by a residual feed-forward."""
    y = ad.add(x, chunked_self_attention(store, f"{prefix}.attn", x, chunk))
    h = ad.tanh(linear(y, store[f"{prefix}.ff1"], store[f"{prefix}.ff1b"]))
    return ad.add(y, linear(h, store[f"{prefix}.ff2"], store[f"{prefix}.ff2b"]))


def init_conv1d(store, prefix, kernel, cin, cout):
    store.add(f"{prefix}.w", (kernel, cin, cout))
    store.add_zeros(f"{prefix}.b", (cout,))


def conv1d(store, prefix, x: Tensor) -> Tensor:
    return ad.conv1d_causal(x, store[f"{prefix}.w"], store[f"{prefix}.b"])


class Conv1dState:
    """Streaming causal conv: keeps the last K-1 input frames."""

    def __init__(self, store, prefix):
        self.w = store[f"{prefix}.w"].data
        self.b = store[f"{prefix}.b"].data
        K, cin, _ = self.w.shape
        self.buf = np.zeros((K, cin), dtype=self.w.dtype)

    def step(self, frame):
        self.buf[:-1] = self.buf[1:]
        self.buf[-1] = frame
        out = np.zeros(self.w.shape[2], dtype=self.w.dtype)
        K = self.w.shape[0]
        for k in range(K):
            out += self.buf[k] @ self.w[k]
        return out + self.b


def init_embedding(store, prefix, vocab, dim):
    store.add(f"{prefix}.table", (vocab, dim), scale=0.5)


def embedding(store, prefix, ids) -> Tensor:
    return ad.gather_rows(store[f"{prefix}.table"], ids)
