"""Training loop: batched HEAT/PIT loss, Adam updates, loss log, checkpoint."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os

import numpy as np

from . import __version__
from .config import ExperimentConfig, config_dict
from .datagen import load_split
from .lattice import PenaltyConfig, TokenVocab
from .model import SurtModel


class TrainingDiverged(Exception):
    pass


def build_model(cfg: ExperimentConfig, seed=None) -> SurtModel:
    vocab = TokenVocab(cfg.data.vocab_size)
    m = cfg.model
    return SurtModel(
        vocab,
        feat_dim=cfg.data.feat_dim,
        unmix_hidden=m.unmix_hidden,
        enc_hidden=m.enc_hidden,
        pred_hidden=m.pred_hidden,
        embed_dim=m.embed_dim,
        joint_dim=m.joint_dim,
        encoder=m.encoder,
        chunk=m.chunk,
        tt_layers=m.tt_layers,
        seed=cfg.train.seed if seed is None else seed,
    )


def penalty_from_config(cfg: ExperimentConfig) -> PenaltyConfig | None:
    if cfg.loss.alpha > 0:
        return PenaltyConfig(alpha=cfg.loss.alpha, t_buffer=cfg.loss.t_buffer)
    return None


def training_step(model: SurtModel, batch, cfg: ExperimentConfig):
    """One optimizer step on a batch of samples; returns scalar metrics."""
    penalty = penalty_from_config(cfg)
    model.store.zero_grad()
    losses, ch1, ch2 = [], [], []
    scale = 1.0 / len(batch)
    for sample in batch:
        total, l1, l2 = model.sample_loss(
            sample, rule=cfg.loss.rule, penalty=penalty, require_eos=cfg.loss.eos)
        if not math.isfinite(total.item()):
            raise TrainingDiverged(f"non-finite loss on sample {sample.id}")
        losses.append(total.item())
        ch1.append(l1)
        ch2.append(l2)
        (total * scale).backward()
    grad_norm = model.store.clip_grads(cfg.train.grad_clip)
    if cfg.train.lr > 0:
        model.store.adam_step(cfg.train.lr, cfg.train.beta1, cfg.train.beta2,
                              cfg.train.adam_eps)
    mean = float(np.mean(losses))
    return {
        "loss": mean,
        "loss_ch1": float(np.nanmean(ch1)),
        "loss_ch2": float(np.nanmean(ch2)),
        "grad_norm": grad_norm,
    }


class TailAverager:
    """Running mean of the parameters over the tail of training; smooths
    the noise of small-batch updates. Disabled when start is 0."""

    def __init__(self, start):
        self.start = start
        self.mean = None
        self.count = 0

    def update(self, store, step):
        if not self.start or step < self.start:
            return
        self.count += 1
        if self.mean is None:
            self.mean = {k: t.data.astype(np.float64) for k, t in store.items()}
        else:
            for k, t in store.items():
                self.mean[k] += (t.data - self.mean[k]) / self.count

    def apply(self, store):
        if self.mean is None:
            return
        for k, t in store.items():
            t.data[...] = self.mean[k].astype(t.data.dtype)


def _step_config(cfg: ExperimentConfig, step) -> ExperimentConfig:
    """Schedule view of the config at a given step: during the eos warmup
    the endpoint token and latency penalty are held off so the unmixer can
    specialize on plain recognition first; after lr_decay_step the learning
    rate is scaled by lr_decay."""
    out = cfg
    if step < cfg.train.eos_warmup:
        out = dataclasses.replace(
            out, loss=dataclasses.replace(out.loss, eos=False, alpha=0.0))
    if cfg.train.lr_decay_step and step >= cfg.train.lr_decay_step:
        out = dataclasses.replace(
            out, train=dataclasses.replace(out.train,
                                           lr=cfg.train.lr * cfg.train.lr_decay))
    return out


def train(cfg: ExperimentConfig, dataset_dir, out_dir, seed=None, log_every=0):
    """Train from the dataset's train split; writes loss_log.csv, the final
    checkpoint, and a run manifest. Deterministic for fixed (config, seed)."""
    seed = cfg.train.seed if seed is None else seed
    os.makedirs(out_dir, exist_ok=True)
    samples = load_split(os.path.join(dataset_dir, "train.jsonl"))
    model = build_model(cfg, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7124]))
    log_rows = []
    averager = TailAverager(cfg.train.avg_start)
    for step in range(cfg.train.steps):
        idx = rng.choice(len(samples), size=min(cfg.train.batch, len(samples)),
                         replace=False)
        metrics = training_step(model, [samples[i] for i in idx],
                                _step_config(cfg, step))
        averager.update(model.store, step)
        log_rows.append((step, metrics["loss"], metrics["loss_ch1"], metrics["loss_ch2"]))
        if log_every and step % log_every == 0:
            print(f"step {step}: loss={metrics['loss']:.4f}", flush=True)
    averager.apply(model.store)
    ckpt_path = os.path.join(out_dir, "model.ckpt")
    model.store.save(ckpt_path)
    log_path = os.path.join(out_dir, "loss_log.csv")
    with open(log_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["step", "loss", "loss_ch1", "loss_ch2"])
        for row in log_rows:
            w.writerow([row[0], f"{row[1]:.6f}", f"{row[2]:.6f}", f"{row[3]:.6f}"])
    manifest = {
        "config": config_dict(cfg),
        "seed": seed,
        "code_version": __version__,
        "num_params": model.store.num_params(),
        "checkpoint": os.path.basename(ckpt_path),
        "loss_log": os.path.basename(log_path),
        "final_loss": log_rows[-1][1] if log_rows else None,
    }
    manifest_path = os.path.join(out_dir, "run_manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    return {"model": model, "checkpoint": ckpt_path, "loss_log": log_path,
            "manifest": manifest_path}


def load_model(cfg: ExperimentConfig, checkpoint_path) -> SurtModel:
    model = build_model(cfg)
    model.store.load(checkpoint_path)
    return model
