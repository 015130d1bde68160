"""Frame-synchronous greedy decoding with eos-triggered endpoint events.

Two code paths produce the same hypotheses: `greedy_decode` runs the
vectorized encoder over the whole input, while `StreamingDecoder` consumes
one frame at a time with buffered conv/recurrent state (rnnt mode) or
chunk-aligned availability (tt mode).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .layers import Conv1dState, GatedRecurrentState
from .model import SurtModel

MAX_SYMBOLS_PER_FRAME = 8


@dataclass
class ChannelHypothesis:
    tokens: list = field(default_factory=list)
    emission_frames: list = field(default_factory=list)  # 1-based
    t_hat_eos: int | None = None

    @property
    def no_ep(self):
        return self.t_hat_eos is None


class _PredState:
    """Numpy-only prediction-network state for decoding."""

    def __init__(self, model: SurtModel):
        self.table = model.store["pred.embed.table"].data
        self.cell = GatedRecurrentState(model.store, "pred.rnn")
        self.out = self.cell.step(self.table[model.vocab.blank_id])

    def advance(self, token):
        self.out = self.cell.step(self.table[token])


class _ChannelDecoder:
    """Greedy argmax walk over one channel's lattice, frame by frame."""

    def __init__(self, model: SurtModel, max_symbols=MAX_SYMBOLS_PER_FRAME):
        s = model.store
        self.wf, self.bf = s["joint.wf"].data, s["joint.bf"].data
        self.wg, self.bg = s["joint.wg"].data, s["joint.bg"].data
        self.wo, self.bo = s["joint.wo"].data, s["joint.bo"].data
        self.blank = model.vocab.blank_id
        self.eos = model.vocab.eos_id
        self.max_symbols = max_symbols
        self.pred = _PredState(model)
        self.hyp = ChannelHypothesis()
        self.frozen = False

    def consume(self, hf_t, frame):
        """Process one encoder frame (1-based index); emit until blank wins,
        the per-frame cap is hit, or eos freezes the channel."""
        if self.frozen:
            return
        a = hf_t @ self.wf + self.bf
        for _ in range(self.max_symbols):
            z = np.tanh(a + (self.pred.out @ self.wg + self.bg))
            logits = z @ self.wo + self.bo
            v = int(np.argmax(logits))
            if v == self.blank:
                return
            if v == self.eos:
                self.hyp.t_hat_eos = frame
                self.frozen = True
                return
            self.hyp.tokens.append(v)
            self.hyp.emission_frames.append(frame)
            self.pred.advance(v)


def greedy_decode(model: SurtModel, x, max_symbols=MAX_SYMBOLS_PER_FRAME):
    """Batch greedy decode: full encoder forward, then per-frame argmax walk."""
    hf1, hf2, _ = model.encoder_features(np.asarray(x, dtype=np.float32))
    hyps = []
    for hf in (hf1.data, hf2.data):
        dec = _ChannelDecoder(model, max_symbols)
        for t in range(hf.shape[0]):
            dec.consume(hf[t], t + 1)
        hyps.append(dec.hyp)
    return hyps[0], hyps[1]


class _UnmixState:
    """Streaming unmixing: buffered causal convs, one frame in, (h1, h2) out."""

    def __init__(self, model: SurtModel):
        self.mask0 = Conv1dState(model.store, "unmix.mask0")
        self.mask1 = Conv1dState(model.store, "unmix.mask1")
        self.enc0 = Conv1dState(model.store, "unmix.enc0")
        self.enc1 = Conv1dState(model.store, "unmix.enc1")

    def step(self, frame):
        m_logit = self.mask1.step(np.tanh(self.mask0.step(frame)))
        mask = 1.0 / (1.0 + np.exp(-m_logit))
        xbar = self.enc1.step(np.tanh(self.enc0.step(frame)))
        h1 = xbar * mask
        return h1, xbar - h1


class StreamingDecoder:
    """Incremental decoder: feed frames with push(); call finish() at end.

    rnnt mode emits per incoming frame; tt mode emits when a chunk
    completes (and at finish for a partial last chunk), since chunk-causal
    attention looks ahead within the current chunk.
    """

    def __init__(self, model: SurtModel, max_symbols=MAX_SYMBOLS_PER_FRAME):
        self.model = model
        self.mode = model.encoder
        self.decoders = (_ChannelDecoder(model, max_symbols),
                         _ChannelDecoder(model, max_symbols))
        self.frames_seen = 0
        if self.mode == "rnnt":
            self.unmix = _UnmixState(model)
            self.enc = (GatedRecurrentState(model.store, "enc.rnn"),
                        GatedRecurrentState(model.store, "enc.rnn"))
        else:
            self.buffer = []
            self.emitted_upto = 0

    def push(self, frame):
        frame = np.asarray(frame, dtype=np.float32)
        if frame.shape != (self.model.feat_dim,):
            raise ValueError(
                f"frame shape {frame.shape} does not match feat_dim {self.model.feat_dim}"
            )
        self.frames_seen += 1
        if self.mode == "rnnt":
            h1, h2 = self.unmix.step(frame)
            for dec, cell, h in zip(self.decoders, self.enc, (h1, h2)):
                dec.consume(cell.step(h), self.frames_seen)
        else:
            self.buffer.append(frame)
            if len(self.buffer) % self.model.chunk == 0:
                self._flush_chunks()

    def _flush_chunks(self, upto=None):
        """Recompute the encoder over the prefix and decode newly available
        frames. Chunk-causal masking makes prefix outputs for completed
        chunks equal to the full-sequence outputs."""
        upto = len(self.buffer) if upto is None else upto
        if upto <= self.emitted_upto:
            return
        x = np.stack(self.buffer, axis=0)
        hf1, hf2, _ = self.model.encoder_features(x)
        for dec, hf in zip(self.decoders, (hf1.data, hf2.data)):
            for t in range(self.emitted_upto, upto):
                dec.consume(hf[t], t + 1)
        self.emitted_upto = upto

    def finish(self):
        if self.mode == "tt" and self.buffer:
            self._flush_chunks()
        return self.decoders[0].hyp, self.decoders[1].hyp


def streaming_decode(model, x, max_symbols=MAX_SYMBOLS_PER_FRAME):
    dec = StreamingDecoder(model, max_symbols)
    for frame in np.asarray(x, dtype=np.float32):
        dec.push(frame)
    return dec.finish()


def hyp_to_record(sample_id, channel, hyp: ChannelHypothesis) -> dict:
    return {
        "id": sample_id,
        "channel": channel,
        "tokens": list(hyp.tokens),
        "emission_frames": list(hyp.emission_frames),
        "t_hat_eos": hyp.t_hat_eos,
        "no_ep_flag": hyp.no_ep,
    }


def write_decodes(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def read_decodes(path):
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(json.loads(line))
    return out


def decode_dataset(model, samples, max_symbols=MAX_SYMBOLS_PER_FRAME):
    records = []
    for s in samples:
        h1, h2 = greedy_decode(model, s.x, max_symbols)
        records.append(hyp_to_record(s.id, 1, h1))
        records.append(hyp_to_record(s.id, 2, h2))
    return records
