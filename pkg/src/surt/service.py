"""HTTP service wrapping the toolkit: dataset generation, training,
decoding, evaluation, and the verification harnesses."""
from __future__ import annotations

import os

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .config import ConfigError, parse_config
from .datagen import generate_dataset, load_split
from .decoder import decode_dataset, read_decodes, write_decodes
from .metrics import edit_distance, ep_statistics, score_recognition, write_reports
from .train import TrainingDiverged, load_model, train
from .verify import oracle_check, rnnt_gradcheck

app = FastAPI(title="surt", version=__version__)


class HealthResponse(BaseModel):
    status: str
    version: str


class GenDataRequest(BaseModel):
    config_text: str
    out_dir: str
    seed_override: int | None = None


class PathsResponse(BaseModel):
    paths: dict[str, str]


class TrainRequest(BaseModel):
    config_text: str
    dataset_dir: str
    out_dir: str
    seed_override: int | None = None


class TrainResponse(BaseModel):
    checkpoint: str
    loss_log: str
    final_loss: float | None


class DecodeRequest(BaseModel):
    config_text: str
    checkpoint: str
    dataset_path: str
    out_path: str


class DecodeResponse(BaseModel):
    out_path: str
    records: int


class EvalRequest(BaseModel):
    config_text: str
    decodes_path: str
    dataset_path: str
    out_dir: str


class EvalResponse(BaseModel):
    paths: dict[str, str]
    ter: dict[str, float]


class GradcheckRequest(BaseModel):
    seed: int = 0
    models: int = Field(default=20, ge=1, le=100)


class CheckResponse(BaseModel):
    passed: bool
    value: float


class OracleCheckRequest(BaseModel):
    seed: int = 0
    trials: int = Field(default=200, ge=1, le=5000)


class EditDistanceRequest(BaseModel):
    ref: list[int]
    hyp: list[int]


class EditDistanceResponse(BaseModel):
    substitutions: int
    deletions: int
    insertions: int


def _parse(config_text):
    try:
        return parse_config(config_text)
    except ConfigError as e:
        raise HTTPException(status_code=422, detail=str(e)) from None


def _require(path):
    if not os.path.exists(path):
        raise HTTPException(status_code=404, detail=f"missing file: {path}")


@app.get("/health", response_model=HealthResponse)
def health():
    return HealthResponse(status="ok", version=__version__)


@app.post("/datasets", response_model=PathsResponse)
def gen_data(req: GenDataRequest):
    cfg = _parse(req.config_text)
    seed = cfg.train.seed if req.seed_override is None else req.seed_override
    return PathsResponse(paths=generate_dataset(cfg, seed, req.out_dir))


@app.post("/train", response_model=TrainResponse)
def train_model(req: TrainRequest):
    cfg = _parse(req.config_text)
    _require(os.path.join(req.dataset_dir, "train.jsonl"))
    try:
        result = train(cfg, req.dataset_dir, req.out_dir, seed=req.seed_override)
    except TrainingDiverged as e:
        raise HTTPException(status_code=500, detail=str(e)) from None
    last = None
    with open(result["loss_log"], "r", encoding="utf-8") as f:
        rows = f.read().strip().splitlines()
    if len(rows) > 1:
        last = float(rows[-1].split(",")[1])
    return TrainResponse(checkpoint=result["checkpoint"],
                         loss_log=result["loss_log"], final_loss=last)


@app.post("/decode", response_model=DecodeResponse)
def decode(req: DecodeRequest):
    cfg = _parse(req.config_text)
    _require(req.checkpoint)
    _require(req.dataset_path)
    model = load_model(cfg, req.checkpoint)
    samples = load_split(req.dataset_path)
    write_decodes(req.out_path, decode_dataset(model, samples))
    return DecodeResponse(out_path=req.out_path, records=2 * len(samples))


@app.post("/evaluate", response_model=EvalResponse)
def evaluate(req: EvalRequest):
    cfg = _parse(req.config_text)
    _require(req.decodes_path)
    _require(req.dataset_path)
    samples = load_split(req.dataset_path)
    by_id = {(r["id"], r["channel"]): r for r in read_decodes(req.decodes_path)}
    eos_id = cfg.data.vocab_size + 1
    wer = [score_recognition(samples, by_id, eos_id, rule)
           for rule in ("heat", "best-perm")]
    ep = ep_statistics(samples, by_id, cfg.eval.thresholds, cfg.data.frame_rate)
    paths = write_reports(req.out_dir, wer, ep)
    return EvalResponse(paths=paths, ter={r.rule: r.ter for r in wer})


@app.post("/verify/gradcheck", response_model=CheckResponse)
def gradcheck(req: GradcheckRequest):
    err = rnnt_gradcheck(seed=req.seed, models=req.models)
    return CheckResponse(passed=err < 1e-3, value=err)


@app.post("/verify/oracle-check", response_model=CheckResponse)
def oracle(req: OracleCheckRequest):
    dev = oracle_check(seed=req.seed, trials=req.trials)
    return CheckResponse(passed=dev < 1e-6, value=dev)


@app.post("/score/edit-distance", response_model=EditDistanceResponse)
def score_edit_distance(req: EditDistanceRequest):
    s, d, i = edit_distance(req.ref, req.hyp)
    return EditDistanceResponse(substitutions=s, deletions=d, insertions=i)
