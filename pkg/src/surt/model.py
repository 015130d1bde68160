"""Two-channel unmixing front-end plus a shared recognition transducer.

The unmixing module computes a sigmoid mask M over an encoded mixture
Xbar and splits it into H1 = Xbar * M and H2 = Xbar - H1. Both channels
are processed by the *same* recognition network (encoder, prediction
network, joint), so channel identity is carried only by the mask.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers
from .autodiff import Tensor
from .lattice import PenaltyConfig, TokenVocab, apply_latency_penalty, joint, init_joint, rnnt_loss
from .params import ParamStore


@dataclass
class ChannelPair:
    """Unmixed hidden representations. h1 + h2 == xbar bit-exactly."""

    h1: Tensor
    h2: Tensor
    mask: Tensor
    xbar: np.ndarray  # diagnostic: encoded mixture, defined as h1 + h2

    def __post_init__(self):
        assert np.array_equal(self.h1.data + self.h2.data, self.xbar)


@dataclass
class LabelAssignment:
    """Mapping of references to channels for one sample."""

    rule: str  # "heat" | "pit"
    perm: tuple[int, int]  # perm[c] = reference index assigned to channel c


class SurtModel:
    """Unmixing + shared transducer; encoder mode "rnnt" (gated recurrent)
    or "tt" (chunk-causal self-attention)."""

    def __init__(self, vocab: TokenVocab, feat_dim=16, unmix_hidden=16,
                 enc_hidden=32, pred_hidden=32, embed_dim=16, joint_dim=16,
                 encoder="rnnt", chunk=0, tt_layers=1, seed=0):
        if encoder not in ("rnnt", "tt"):
            raise ValueError(f"unknown encoder mode {encoder!r}")
        if encoder == "tt" and chunk < 1:
            raise ValueError("tt mode requires a chunk width >= 1")
        self.vocab = vocab
        self.encoder = encoder
        self.chunk = chunk
        self.tt_layers = tt_layers
        self.feat_dim = feat_dim
        self.unmix_hidden = unmix_hidden
        self.enc_hidden = enc_hidden if encoder == "rnnt" else unmix_hidden
        self.store = ParamStore(seed)
        s = self.store
        # unmixing: two small causal conv stacks (mask and mixture encoders)
        layers.init_conv1d(s, "unmix.mask0", 3, feat_dim, unmix_hidden)
        layers.init_conv1d(s, "unmix.mask1", 3, unmix_hidden, unmix_hidden)
        layers.init_conv1d(s, "unmix.enc0", 3, feat_dim, unmix_hidden)
        layers.init_conv1d(s, "unmix.enc1", 3, unmix_hidden, unmix_hidden)
        # recognition encoder (shared across channels)
        if encoder == "rnnt":
            layers.init_gated_recurrent(s, "enc.rnn", unmix_hidden, enc_hidden)
        else:
            for i in range(tt_layers):
                layers.init_attention_block(s, f"enc.block{i}", unmix_hidden,
                                            unmix_hidden, 2 * unmix_hidden)
        # prediction network
        layers.init_embedding(s, "pred.embed", vocab.size, embed_dim)
        layers.init_gated_recurrent(s, "pred.rnn", embed_dim, pred_hidden)
        # joint network
        init_joint(s, "joint", self.enc_hidden, pred_hidden, joint_dim, vocab.size)

    # -- forward pieces ------------------------------------------------

    def unmix(self, x) -> ChannelPair:
        """Mask-based unmixing of the feature matrix x [T, D]."""
        xt = x if isinstance(x, Tensor) else ad.constant(x)
        s = self.store
        m_logits = layers.conv1d(s, "unmix.mask1", ad.tanh(layers.conv1d(s, "unmix.mask0", xt)))
        mask = ad.sigmoid(m_logits)
        xbar = layers.conv1d(s, "unmix.enc1", ad.tanh(layers.conv1d(s, "unmix.enc0", xt)))
        h1 = ad.mul(xbar, mask)
        h2 = ad.sub(xbar, h1)
        return ChannelPair(h1=h1, h2=h2, mask=mask, xbar=h1.data + h2.data)

    def encode(self, h: Tensor) -> Tensor:
        """Shared recognition encoder over one channel."""
        if self.encoder == "rnnt":
            return layers.recurrent_encode(self.store, "enc.rnn", h)
        out = h
        for i in range(self.tt_layers):
            out = layers.attention_block(self.store, f"enc.block{i}", out, self.chunk)
        return out

    def predict(self, y) -> Tensor:
        """Prediction network over [blank] + y, giving U+1 label states."""
        ids = [self.vocab.blank_id] + list(y)
        emb = layers.embedding(self.store, "pred.embed", ids)
        return layers.gated_recurrent(self.store, "pred.rnn", emb)

    def channel_lattices(self, y1, y2, pair: ChannelPair):
        """Token log-prob grids for both channels from shared parameters."""
        hf1 = self.encode(pair.h1)
        hf2 = self.encode(pair.h2)
        lp1 = joint(self.store, "joint", hf1, self.predict(y1))
        lp2 = joint(self.store, "joint", hf2, self.predict(y2))
        return lp1, lp2

    def encoder_features(self, x):
        """Forward to encoder outputs only; returns (hf1, hf2, pair)."""
        pair = self.unmix(x)
        return self.encode(pair.h1), self.encode(pair.h2), pair

    # -- losses --------------------------------------------------------

    def _channel_loss(self, lp, y, t_eos, penalty: PenaltyConfig | None):
        if penalty is not None and penalty.enabled and penalty.alpha > 0:
            lp = apply_latency_penalty(lp, t_eos, self.vocab.eos_id, penalty)
        return rnnt_loss(lp, y, self.vocab.blank_id)

    def heat_loss(self, x, y1, y2, t_eos1, t_eos2, penalty=None, require_eos=True):
        """Fixed assignment: channel 1 is bound to the first-spoken reference."""
        self.vocab.validate_reference(y1, require_eos)
        self.vocab.validate_reference(y2, require_eos)
        pair = self.unmix(x)
        lp1, lp2 = self.channel_lattices(y1, y2, pair)
        l1 = self._channel_loss(lp1, y1, t_eos1, penalty)
        l2 = self._channel_loss(lp2, y2, t_eos2, penalty)
        return ad.add(l1, l2), (l1, l2), pair

    def pit_loss(self, x, y1, y2, t_eos1, t_eos2, penalty=None, require_eos=True):
        """Minimum over both channel/reference assignments; each candidate
        assignment uses its own endpoint targets for the penalty."""
        self.vocab.validate_reference(y1, require_eos)
        self.vocab.validate_reference(y2, require_eos)
        pair = self.unmix(x)
        lp1, lp2 = self.channel_lattices(y1, y2, pair)
        # swapped assignment needs lattices against the swapped references
        lp1s, lp2s = self.channel_lattices(y2, y1, pair)
        direct = ad.add(self._channel_loss(lp1, y1, t_eos1, penalty),
                        self._channel_loss(lp2, y2, t_eos2, penalty))
        swapped = ad.add(self._channel_loss(lp1s, y2, t_eos2, penalty),
                         self._channel_loss(lp2s, y1, t_eos1, penalty))
        if direct.item() <= swapped.item():
            chosen, assignment = direct, LabelAssignment("pit", (0, 1))
        else:
            chosen, assignment = swapped, LabelAssignment("pit", (1, 0))
        parts = (chosen, assignment)
        return chosen, parts, pair

    def sample_loss(self, sample, rule="heat", penalty=None, require_eos=True):
        """Loss for one MixtureSample-like record (duck-typed fields)."""
        y1, y2 = list(sample.y1), list(sample.y2)
        if not require_eos:
            y1 = [t for t in y1 if t != self.vocab.eos_id]
            y2 = [t for t in y2 if t != self.vocab.eos_id]
        if rule == "heat":
            total, (l1, l2), pair = self.heat_loss(
                sample.x, y1, y2, sample.t_eos1, sample.t_eos2, penalty, require_eos)
            return total, float(l1.item()), float(l2.item())
        if rule == "pit":
            total, _, pair = self.pit_loss(
                sample.x, y1, y2, sample.t_eos1, sample.t_eos2, penalty, require_eos)
            return total, float("nan"), float("nan")
        raise ValueError(f"unknown assignment rule {rule!r}")
