"""Verification harnesses: finite-difference gradient checks and the
alignment-enumeration oracle check.

Gradient checks run the engine in float64 so the difference quotient is
not dominated by float32 forward noise; training itself stays float32.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .lattice import PenaltyConfig, TokenVocab, oracle_check
from .model import SurtModel

__all__ = ["fd_gradcheck", "rnnt_gradcheck", "oracle_check"]


def fd_gradcheck(loss_fn, params, eps=1e-3):
    """Compare analytic gradients of loss_fn() against central finite
    differences for every element of every tensor in `params`.

    loss_fn must rebuild the forward pass from current parameter values.
    Returns the max relative error, |a - f| / max(|a|, |f|, 1e-6).
    """
    loss = loss_fn()
    for p in params:
        p.grad = None
    loss.backward()
    analytic = [np.array(p.grad, copy=True) if p.grad is not None
                else np.zeros_like(p.data) for p in params]
    max_rel = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn().item()
            flat[i] = orig - eps
            down = loss_fn().item()
            flat[i] = orig
            fd = (up - down) / (2.0 * eps)
            denom = max(abs(gflat[i]), abs(fd), 1e-6)
            max_rel = max(max_rel, abs(gflat[i] - fd) / denom)
    return max_rel


def _tiny_model(rng, encoder="rnnt"):
    vocab = TokenVocab(num_symbols=3)
    return SurtModel(vocab, feat_dim=3, unmix_hidden=3, enc_hidden=4,
                     pred_hidden=4, embed_dim=3, joint_dim=3,
                     encoder=encoder, chunk=2 if encoder == "tt" else 0,
                     seed=int(rng.integers(0, 2 ** 31)))


def rnnt_gradcheck(seed=0, models=20, eps=1e-3, encoder="rnnt"):
    """Gradients of the penalized and unpenalized two-channel transducer
    loss w.r.t. all model parameters, on random tiny models."""
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    with ad.use_dtype(np.float64):
        for k in range(models):
            model = _tiny_model(rng, encoder)
            T = int(rng.integers(3, 7))
            x = rng.normal(size=(T, 3))
            u1 = int(rng.integers(1, 3))
            u2 = int(rng.integers(1, 3))
            y1 = [int(v) for v in rng.integers(1, 4, size=u1)] + [model.vocab.eos_id]
            y2 = [int(v) for v in rng.integers(1, 4, size=u2)] + [model.vocab.eos_id]
            t1 = int(rng.integers(1, T + 1))
            t2 = int(rng.integers(1, T + 1))
            penalty = None
            if k % 2 == 1:  # alternate penalized / unpenalized
                penalty = PenaltyConfig(alpha=2.0, t_buffer=1)

            def loss_fn():
                total, _, _ = model.heat_loss(x, y1, y2, t1, t2, penalty)
                return total

            params = [t for _, t in model.store.items()]
            max_rel = max(max_rel, fd_gradcheck(loss_fn, params, eps))
    return max_rel
