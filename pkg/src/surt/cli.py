"""Command-line surface: data generation, training, decoding, evaluation,
and the verification harnesses."""
from __future__ import annotations

import json
import os
import sys

import click

from .config import ConfigError, load_config
from .datagen import generate_dataset, load_split
from .decoder import decode_dataset, read_decodes, write_decodes
from .metrics import ep_statistics, score_recognition, write_reports
from .train import TrainingDiverged, load_model, train
from .verify import oracle_check, rnnt_gradcheck


def _fail(kind, detail, code=2):
    print(json.dumps({"error": kind, "detail": str(detail)}), file=sys.stderr)
    sys.exit(code)


def _load_cfg(path):
    try:
        return load_config(path)
    except FileNotFoundError:
        _fail("missing_file", path)
    except ConfigError as e:
        _fail("malformed_config", e)


def worker_count():
    """Worker cap from SURT_THREADS (>= 1); generation and evaluation are
    deterministic regardless of the value."""
    try:
        return max(1, int(os.environ.get("SURT_THREADS", "1")))
    except ValueError:
        return 1


@click.group()
def main():
    """Two-talker streaming transducer toolkit."""


@main.command("gen-data")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed-override", type=int, default=None)
def cmd_gen_data(config_path, out_dir, seed_override):
    """Generate train/dev/eval mixture splits and a manifest."""
    cfg = _load_cfg(config_path)
    seed = cfg.train.seed if seed_override is None else seed_override
    paths = generate_dataset(cfg, seed, out_dir)
    click.echo(json.dumps({"status": "ok", "paths": paths}))


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--dataset", "dataset_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed-override", type=int, default=None)
def cmd_train(config_path, dataset_dir, out_dir, seed_override):
    """Train a model; writes checkpoint, loss log, and run manifest."""
    cfg = _load_cfg(config_path)
    if not os.path.exists(os.path.join(dataset_dir, "train.jsonl")):
        _fail("missing_file", os.path.join(dataset_dir, "train.jsonl"))
    try:
        result = train(cfg, dataset_dir, out_dir, seed=seed_override)
    except TrainingDiverged as e:
        _fail("training_diverged", e, code=3)
    click.echo(json.dumps({"status": "ok", "checkpoint": result["checkpoint"],
                           "loss_log": result["loss_log"]}))


@main.command("decode")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def cmd_decode(config_path, checkpoint, dataset_path, out_path):
    """Greedy-decode a dataset split to a JSONL of per-channel hypotheses."""
    cfg = _load_cfg(config_path)
    for p in (checkpoint, dataset_path):
        if not os.path.exists(p):
            _fail("missing_file", p)
    model = load_model(cfg, checkpoint)
    samples = load_split(dataset_path)
    write_decodes(out_path, decode_dataset(model, samples))
    click.echo(json.dumps({"status": "ok", "out": out_path,
                           "records": 2 * len(samples)}))


@main.command("eval")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--decodes", "decodes_path", required=True, type=click.Path())
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
def cmd_eval(config_path, decodes_path, dataset_path, out_dir):
    """Score recognition (HEAT and best-permutation) and endpoint quality."""
    cfg = _load_cfg(config_path)
    for p in (decodes_path, dataset_path):
        if not os.path.exists(p):
            _fail("missing_file", p)
    samples = load_split(dataset_path)
    by_id = {(r["id"], r["channel"]): r for r in read_decodes(decodes_path)}
    eos_id = cfg.data.vocab_size + 1
    wer = [score_recognition(samples, by_id, eos_id, rule)
           for rule in ("heat", "best-perm")]
    ep = ep_statistics(samples, by_id, cfg.eval.thresholds, cfg.data.frame_rate)
    paths = write_reports(out_dir, wer, ep)
    click.echo(json.dumps({"status": "ok", "paths": paths,
                           "ter": {r.rule: r.ter for r in wer}}))


@main.command("gradcheck")
@click.option("--seed", type=int, default=0)
@click.option("--models", type=int, default=20)
def cmd_gradcheck(seed, models):
    """Finite-difference check of transducer-loss gradients."""
    err = rnnt_gradcheck(seed=seed, models=models)
    status = "PASS" if err < 1e-3 else "FAIL"
    click.echo(f"{status} max_rel_err={err:.3e}")
    if status == "FAIL":
        sys.exit(1)


@main.command("oracle-check")
@click.option("--seed", type=int, default=0)
@click.option("--trials", type=int, default=200)
def cmd_oracle_check(seed, trials):
    """DP loss vs brute-force alignment enumeration on random lattices."""
    dev = oracle_check(seed=seed, trials=trials)
    status = "PASS" if dev < 1e-6 else "FAIL"
    click.echo(f"{status} max_dev={dev:.3e}")
    if status == "FAIL":
        sys.exit(1)


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def cmd_serve(host, port):
    """Run the HTTP service wrapping the toolkit."""
    import uvicorn

    from .service import app
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
