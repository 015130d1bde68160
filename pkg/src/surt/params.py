"""Named parameter store with Adam state and a versioned binary checkpoint."""
from __future__ import annotations

import struct

import numpy as np

from .autodiff import Tensor, default_dtype

CKPT_MAGIC = b"SURTCKPT"
CKPT_VERSION = 1


class CheckpointError(Exception):
    pass


class ParamStore:
    """Named trainable tensors with stable iteration order (insertion order)
    and per-parameter Adam moment accumulators."""

    def __init__(self, seed=0):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0
        self.rng = np.random.default_rng(seed)

    def add(self, name, shape, scale=None):
        """Register a parameter initialized uniformly in [-a, a], a = 1/sqrt(fan_in)."""
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        if scale is None:
            fan_in = shape[0] if len(shape) > 1 else max(shape[0], 1)
            if len(shape) == 3:  # conv [K, Cin, Cout]
                fan_in = shape[0] * shape[1]
            scale = 1.0 / np.sqrt(fan_in)
        data = self.rng.uniform(-scale, scale, size=shape).astype(default_dtype())
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_zeros(self, name, shape):
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.zeros(shape, dtype=default_dtype()), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params.keys())

    def items(self):
        return self._params.items()

    def num_params(self):
        return sum(int(t.data.size) for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def grad_norm(self):
        total = 0.0
        for t in self._params.values():
            if t.grad is not None:
                total += float(np.sum(t.grad.astype(np.float64) ** 2))
        return float(np.sqrt(total))

    def clip_grads(self, max_norm):
        norm = self.grad_norm()
        if norm > max_norm > 0:
            factor = np.asarray(max_norm / norm, dtype=default_dtype())
            for t in self._params.values():
                if t.grad is not None:
                    t.grad *= factor
        return norm

    def adam_step(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        """Bias-corrected Adam update; raises if backward was not run."""
        missing = [n for n, t in self._params.items() if t.grad is None]
        if missing:
            raise RuntimeError(f"adam_step before backward: no gradient for {missing[:3]}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        for name, p in self._params.items():
            g = p.grad
            if name not in self._m:
                self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)
            m = self._m[name]
            v = self._v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            p.data = p.data - (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)

    # -- checkpoint ----------------------------------------------------

    def save(self, path):
        save_checkpoint(path, {n: t.data for n, t in self._params.items()})

    def load(self, path):
        tensors = load_checkpoint(path)
        for name, arr in tensors.items():
            if name not in self._params:
                raise CheckpointError(f"checkpoint parameter {name!r} not in model")
            p = self._params[name]
            if tuple(arr.shape) != tuple(p.data.shape):
                raise CheckpointError(
                    f"shape mismatch for {name!r}: checkpoint {arr.shape} vs model {p.data.shape}"
                )
            p.data = arr.astype(p.data.dtype)
        missing = set(self._params) - set(tensors)
        if missing:
            raise CheckpointError(f"checkpoint missing parameters: {sorted(missing)[:3]}")


def save_checkpoint(path, tensors):
    """Binary format: magic, version, then per tensor: name (u32 length +
    UTF-8), rank (u32), dims (u32 each), little-endian float32 payload."""
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", CKPT_VERSION))
        for name, arr in tensors.items():
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != CKPT_MAGIC:
        raise CheckpointError(f"bad magic in {path}: {blob[:8]!r}")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    out = {}
    while pos < len(blob):
        (nlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(dims)
        pos += 4 * count
        out[name] = arr.copy()
    return out
