"""Deterministic synthetic two-talker mixture generator.

Each symbol renders as a fixed pseudo-orthogonal prototype vector held for
a random duration; two single-speaker utterances are mixed additively with
a random delay, which makes ground-truth endpoint frames exact by
construction (no forced alignment needed).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .config import DataConfig, ExperimentConfig, config_dict
from .lattice import TokenVocab


@dataclass
class Utterance:
    tokens: list
    frames: np.ndarray  # [L, D] float32
    speaker: int
    lead: int
    last_speech: int  # 0-based index of the last non-silence frame
    durations: list = field(default_factory=list)

    @property
    def length(self):
        return self.frames.shape[0]


@dataclass
class MixtureSample:
    id: str
    x: np.ndarray  # [T, D]
    y1: list  # first-spoken reference, terminal eos included
    y2: list
    t_eos1: int  # 1-based frame of the last speech frame per channel
    t_eos2: int
    delay: int
    overlap_ratio: float
    span1: tuple  # 1-based inclusive speech interval per source
    span2: tuple
    speakers: tuple


def prototype_table(seed, vocab_size, dim):
    """Fixed pseudo-orthogonal prototype per symbol, derived from the seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB10B]))
    raw = rng.normal(size=(max(vocab_size, dim), dim))
    q, _ = np.linalg.qr(raw.T)
    protos = q.T[:vocab_size] * np.sqrt(dim)
    return protos.astype(np.float32)


def heat_order(start1, u1: Utterance, start2, u2: Utterance):
    """True if (start1, u1) should be channel 1 under the first-come rule.

    Ties on start time go to the longer utterance, then to the
    lexicographically smaller token sequence.
    """
    k1 = (start1, -u1.length, u1.tokens)
    k2 = (start2, -u2.length, u2.tokens)
    return k1 <= k2


def render_utterance(tokens, rng, protos, cfg: DataConfig, speaker):
    """Render a token sequence to frames: prototype rows held for random
    durations, optional intra-utterance silence, plus lead/trail silence
    and additive noise."""
    if not tokens:
        raise ValueError("cannot render an empty token sequence")
    D = protos.shape[1]
    rows = [np.zeros((cfg.lead_silence, D), dtype=np.float32)]
    durations = []
    for i, tok in enumerate(tokens):
        if cfg.intra_silence and i > 0 and rng.random() < cfg.intra_silence_prob:
            gap = int(rng.integers(2, cfg.intra_silence_max + 1))
            rows.append(np.zeros((gap, D), dtype=np.float32))
        dur = int(rng.integers(cfg.dur_min, cfg.dur_max + 1))
        durations.append(dur)
        rows.append(np.tile(protos[tok - 1], (dur, 1)))
    last_speech = sum(r.shape[0] for r in rows) - 1
    rows.append(np.zeros((cfg.trail_silence, D), dtype=np.float32))
    frames = np.concatenate(rows, axis=0)
    if cfg.noise_std > 0:
        frames = frames + rng.normal(scale=cfg.noise_std, size=frames.shape).astype(np.float32)
    return Utterance(tokens=list(tokens), frames=frames.astype(np.float32),
                     speaker=speaker, lead=cfg.lead_silence,
                     last_speech=last_speech, durations=durations)


def sample_tokens(rng, cfg: DataConfig):
    """Random token sequence without immediate repeats (keeps the
    nearest-prototype ground-truth decoding unambiguous)."""
    n = int(rng.integers(cfg.tokens_min, cfg.tokens_max + 1))
    tokens = []
    for _ in range(n):
        tok = int(rng.integers(1, cfg.vocab_size + 1))
        while tokens and tok == tokens[-1]:
            tok = int(rng.integers(1, cfg.vocab_size + 1))
        tokens.append(tok)
    return tokens


def mix(u1: Utterance, u2: Utterance, delay, vocab: TokenVocab, sample_id="0",
        min_delay=0) -> MixtureSample:
    """Additively overlay u2 on u1 shifted right by `delay` frames."""
    if u1.speaker == u2.speaker:
        raise ValueError("mixture requires two distinct speakers")
    L1, L2 = u1.length, u2.length
    if not (min_delay <= delay <= L1):
        raise ValueError(f"delay {delay} out of range [{min_delay}, {L1}]")
    T = max(L1, delay + L2)
    D = u1.frames.shape[1]
    x = np.zeros((T, D), dtype=np.float32)
    x[:L1] += u1.frames
    x[delay:delay + L2] += u2.frames
    overlap = max(0, min(L1, delay + L2) - delay)
    t_eos1 = u1.last_speech + 1
    t_eos2 = delay + u2.last_speech + 1
    return MixtureSample(
        id=sample_id,
        x=x,
        y1=list(u1.tokens) + [vocab.eos_id],
        y2=list(u2.tokens) + [vocab.eos_id],
        t_eos1=t_eos1,
        t_eos2=t_eos2,
        delay=delay,
        overlap_ratio=overlap / T,
        span1=(u1.lead + 1, t_eos1),
        span2=(delay + u2.lead + 1, t_eos2),
        speakers=(u1.speaker, u2.speaker),
    )


def _make_sample(seed, split_id, index, cfg: DataConfig, protos, vocab) -> MixtureSample:
    rng = np.random.default_rng(np.random.SeedSequence([seed, split_id, index]))
    spk1 = int(rng.integers(0, 1000))
    spk2 = int(rng.integers(0, 1000))
    while spk2 == spk1:
        spk2 = int(rng.integers(0, 1000))
    u1 = render_utterance(sample_tokens(rng, cfg), rng, protos, cfg, spk1)
    u2 = render_utterance(sample_tokens(rng, cfg), rng, protos, cfg, spk2)
    lo = min(cfg.min_delay, u1.length)
    delay = int(rng.integers(lo, u1.length + 1))
    if not heat_order(0, u1, delay, u2):
        u1, u2 = u2, u1  # only possible when delays can tie at zero
    return mix(u1, u2, delay, vocab, sample_id=f"{split_id}-{index}", min_delay=lo)


def sample_to_record(s: MixtureSample) -> dict:
    return {
        "id": s.id,
        "X": [[float(v) for v in row] for row in s.x],
        "y1": s.y1,
        "y2": s.y2,
        "t_eos1": s.t_eos1,
        "t_eos2": s.t_eos2,
        "delay": s.delay,
        "overlap_ratio": s.overlap_ratio,
        "span1": list(s.span1),
        "span2": list(s.span2),
        "speakers": list(s.speakers),
    }


def record_to_sample(rec: dict) -> MixtureSample:
    return MixtureSample(
        id=rec["id"],
        x=np.asarray(rec["X"], dtype=np.float32),
        y1=list(rec["y1"]),
        y2=list(rec["y2"]),
        t_eos1=int(rec["t_eos1"]),
        t_eos2=int(rec["t_eos2"]),
        delay=int(rec["delay"]),
        overlap_ratio=float(rec["overlap_ratio"]),
        span1=tuple(rec["span1"]),
        span2=tuple(rec["span2"]),
        speakers=tuple(rec["speakers"]),
    )


SPLIT_IDS = {"train": 1, "dev": 2, "eval": 3}


def generate_split(cfg: DataConfig, seed, split, n, protos=None):
    vocab = TokenVocab(cfg.vocab_size)
    if protos is None:
        protos = prototype_table(seed, cfg.vocab_size, cfg.feat_dim)
    split_id = SPLIT_IDS[split]
    return [_make_sample(seed, split_id, i, cfg, protos, vocab) for i in range(n)]


def generate_dataset(exp: ExperimentConfig, seed, out_dir):
    """Write train/dev/eval JSONL files plus a manifest; byte-deterministic
    for a fixed (config, seed)."""
    cfg = exp.data
    os.makedirs(out_dir, exist_ok=True)
    protos = prototype_table(seed, cfg.vocab_size, cfg.feat_dim)
    sizes = {"train": cfg.n_train, "dev": cfg.n_dev, "eval": cfg.n_eval}
    paths = {}
    for split, n in sizes.items():
        samples = generate_split(cfg, seed, split, n, protos)
        path = os.path.join(out_dir, f"{split}.jsonl")
        with open(path, "w", encoding="utf-8") as f:
            for s in samples:
                f.write(json.dumps(sample_to_record(s), sort_keys=True,
                                   separators=(",", ":")) + "\n")
        paths[split] = path
    manifest = {
        "config": config_dict(exp),
        "seed": seed,
        "splits": sizes,
        "prototypes": [[float(v) for v in row] for row in protos],
        "vocab": {"num_symbols": cfg.vocab_size, "blank_id": 0,
                  "eos_id": cfg.vocab_size + 1},
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    paths["manifest"] = manifest_path
    return paths


def load_split(path):
    samples = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                samples.append(record_to_sample(json.loads(line)))
    return samples
