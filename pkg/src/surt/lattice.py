"""Alignment-lattice machinery for the neural transducer.

Contains the joint network, the forward-backward transducer loss with
64-bit log-space accumulation, the end-of-sentence latency penalty, and a
brute-force alignment-enumeration oracle used for verification.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from . import layers

NEG_INF = -np.inf


@dataclass(frozen=True)
class TokenVocab:
    """Output alphabet: symbols plus reserved blank and end-of-sentence ids."""

    num_symbols: int
    blank_id: int = 0

    @property
    def eos_id(self):
        return self.num_symbols + 1

    @property
    def size(self):
        # blank + symbols + eos
        return self.num_symbols + 2

    @property
    def symbol_ids(self):
        return list(range(1, self.num_symbols + 1))

    def validate_reference(self, y, require_eos):
        for tok in y:
            if not (0 <= tok < self.size):
                raise ValueError(f"token id {tok} out of vocab (size {self.size})")
            if tok == self.blank_id:
                raise ValueError("blank must not appear in a reference sequence")
        if require_eos:
            if not y or y[-1] != self.eos_id:
                raise ValueError("reference must end with the eos token")
            if sum(1 for t in y if t == self.eos_id) != 1:
                raise ValueError("eos must appear exactly once, as the final token")
        elif any(t == self.eos_id for t in y):
            raise ValueError("eos not allowed in reference when eos mode is off")


@dataclass(frozen=True)
class PenaltyConfig:
    """Latency-penalty settings: slope per frame and grace period in frames."""

    alpha: float = 0.0
    t_buffer: int = 0
    enabled: bool = True

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.t_buffer < 0:
            raise ValueError(f"t_buffer must be >= 0, got {self.t_buffer}")


def eos_penalty_values(T, t_eos, cfg: PenaltyConfig, dtype=np.float32):
    """Per-frame penalty max(0, alpha*(t - t_buffer - t_eos)), t 1-based."""
    if not (1 <= t_eos <= T):
        raise ValueError(f"t_eos={t_eos} out of range [1, {T}]")
    t = np.arange(1, T + 1, dtype=np.float64)
    pen = np.maximum(0.0, cfg.alpha * (t - cfg.t_buffer - t_eos))
    return pen.astype(dtype)


def apply_latency_penalty(lp: Tensor, t_eos, eos_id, cfg: PenaltyConfig) -> Tensor:
    """Subtract the latency penalty from the eos log-probability at every
    lattice node; other tokens untouched, no renormalization."""
    if not cfg.enabled:
        return lp
    T, U1, V = lp.data.shape
    pen = eos_penalty_values(T, t_eos, cfg, lp.data.dtype)
    delta = np.zeros((T, U1, V), dtype=lp.data.dtype)
    delta[:, :, eos_id] = -pen[:, None]
    return ad.add_const(lp, delta)


def init_joint(store, prefix, d_enc, d_pred, d_joint, vocab_size):
    store.add(f"{prefix}.wf", (d_enc, d_joint))
    store.add_zeros(f"{prefix}.bf", (d_joint,))
    store.add(f"{prefix}.wg", (d_pred, d_joint))
    store.add_zeros(f"{prefix}.bg", (d_joint,))
    store.add(f"{prefix}.wo", (d_joint, vocab_size))
    store.add_zeros(f"{prefix}.bo", (vocab_size,))


def joint(store, prefix, h_f: Tensor, h_g: Tensor) -> Tensor:
    """Additive fusion then tanh then affine + log-softmax.

    h_f: [T, De] encoder states, h_g: [U+1, Dp] prediction states.
    Returns [T, U+1, V] normalized token log-probabilities per node.
    """
    a = layers.linear(h_f, store[f"{prefix}.wf"], store[f"{prefix}.bf"])
    b = layers.linear(h_g, store[f"{prefix}.wg"], store[f"{prefix}.bg"])
    T, J = a.data.shape
    U1 = b.data.shape[0]
    z = ad.tanh(ad.outer_add(a, b))
    flat = ad.reshape(z, (T * U1, J))
    logits = layers.linear(flat, store[f"{prefix}.wo"], store[f"{prefix}.bo"])
    return ad.reshape(ad.log_softmax(logits), (T, U1, logits.data.shape[1]))


def _logaddexp(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def _forward_backward(lp64, y, blank):
    """Alpha/beta recursions over the T x (U+1) lattice, float64 log domain.

    alpha[t,u]: log-prob of reaching node (t,u) having emitted y[:u].
    beta[t,u]: log-prob of completing from (t,u), including its emissions.
    """
    T, U1, _ = lp64.shape
    U = len(y)
    if U + 1 != U1:
        raise ValueError(f"reference length {U} does not match lattice U+1={U1}")
    alpha = np.full((T, U + 1), NEG_INF)
    alpha[0, 0] = 0.0
    for u in range(1, U + 1):
        alpha[0, u] = alpha[0, u - 1] + lp64[0, u - 1, y[u - 1]]
    for t in range(1, T):
        alpha[t, 0] = alpha[t - 1, 0] + lp64[t - 1, 0, blank]
        for u in range(1, U + 1):
            alpha[t, u] = _logaddexp(
                alpha[t - 1, u] + lp64[t - 1, u, blank],
                alpha[t, u - 1] + lp64[t, u - 1, y[u - 1]],
            )
    beta = np.full((T, U + 1), NEG_INF)
    beta[T - 1, U] = lp64[T - 1, U, blank]
    for u in range(U - 1, -1, -1):
        beta[T - 1, u] = lp64[T - 1, u, y[u]] + beta[T - 1, u + 1]
    for t in range(T - 2, -1, -1):
        beta[t, U] = lp64[t, U, blank] + beta[t + 1, U]
        for u in range(U - 1, -1, -1):
            beta[t, u] = _logaddexp(
                lp64[t, u, blank] + beta[t + 1, u],
                lp64[t, u, y[u]] + beta[t, u + 1],
            )
    return alpha, beta


def rnnt_loss_arrays(lp64, y, blank):
    """Loss and gradient w.r.t. the log-prob grid, as plain float64 arrays."""
    T, U1, V = lp64.shape
    alpha, beta = _forward_backward(lp64, y, blank)
    log_p = beta[0, 0]
    grad = np.zeros((T, U1, V))
    U = len(y)
    # blank transitions (t,u) -> (t+1,u), plus the terminal blank at (T-1,U)
    if T > 1:
        occ = np.exp(alpha[:-1, :] + lp64[:-1, :, blank] + beta[1:, :] - log_p)
        for u in range(U + 1):
            grad[:-1, u, blank] -= occ[:, u]
    grad[T - 1, U, blank] -= math.exp(alpha[T - 1, U] + lp64[T - 1, U, blank] - log_p)
    # label transitions (t,u) -> (t,u+1)
    for u in range(U):
        occ = np.exp(alpha[:, u] + lp64[:, u, y[u]] + beta[:, u + 1] - log_p)
        grad[:, u, y[u]] -= occ
    return -log_p, grad


def rnnt_loss(lp: Tensor, y, blank) -> Tensor:
    """Negative log-likelihood over all monotonic alignments (graph op).

    Forward/backward recursions accumulate in 64-bit; the gradient is
    delivered in the lattice tensor's dtype.
    """
    lp64 = lp.data.astype(np.float64)
    loss, grad = rnnt_loss_arrays(lp64, y, blank)
    out = Tensor(np.asarray(loss, dtype=lp.data.dtype), (lp,))

    def bwd(g):
        if lp.requires_grad:
            lp.accumulate_grad((g * grad).astype(lp.data.dtype))

    out._backward = bwd
    return out


MAX_ENUM_SIZE = 16


def enumerate_alignments(lp, y, blank):
    """Brute-force oracle: sum the probability of every monotonic path.

    Returns (log total probability, path count). Refuses instances with
    T + U > 16 to keep enumeration tractable.
    """
    lp64 = np.asarray(lp, dtype=np.float64)
    T, U1, _ = lp64.shape
    U = len(y)
    if U + 1 != U1:
        raise ValueError(f"reference length {U} does not match lattice U+1={U1}")
    if T + U > MAX_ENUM_SIZE:
        raise ValueError(f"instance too large to enumerate: T+U={T + U} > {MAX_ENUM_SIZE}")
    path_logps = []

    def walk(t, u, acc):
        if t == T - 1 and u == U:
            path_logps.append(acc + lp64[t, u, blank])
            return
        if t < T - 1:
            walk(t + 1, u, acc + lp64[t, u, blank])
        if u < U:
            walk(t, u + 1, acc + lp64[t, u, y[u]])

    walk(0, 0, 0.0)
    m = max(path_logps)
    total = m + math.log(sum(math.exp(x - m) for x in path_logps))
    return total, len(path_logps)


def random_normalized_lattice(rng, T, U1, V):
    """Random per-node normalized log-distribution grid (float64)."""
    logits = rng.normal(size=(T, U1, V))
    logits -= logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(logits).sum(axis=-1, keepdims=True))
    return logits - lse


def oracle_check(seed=0, trials=200, max_t=6, max_u=4, max_v=5):
    """DP loss vs enumeration on random lattices; also verifies path counts
    against the closed-form C(T+U-1, U)."""
    rng = np.random.default_rng(seed)
    max_dev = 0.0
    for _ in range(trials):
        T = int(rng.integers(1, max_t + 1))
        U = int(rng.integers(0, max_u + 1))
        V = int(rng.integers(2, max_v + 1))
        lp = random_normalized_lattice(rng, T, U + 1, V)
        y = [int(v) for v in rng.integers(1, V, size=U)]  # 0 reserved as blank
        loss, _ = rnnt_loss_arrays(lp, y, blank=0)
        log_total, n_paths = enumerate_alignments(lp, y, blank=0)
        expected_paths = math.comb(T + U - 1, U)
        if n_paths != expected_paths:
            raise AssertionError(
                f"path count {n_paths} != C({T + U - 1},{U}) = {expected_paths}"
            )
        max_dev = max(max_dev, abs(-log_total - loss))
    return max_dev
