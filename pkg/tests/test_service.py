import json

import pytest
from fastapi.testclient import TestClient

from surt.service import app

client = TestClient(app)

TINY = """
data.n_train = 8
data.n_dev = 2
data.n_eval = 4
data.tokens_min = 2
data.tokens_max = 3
train.steps = 2
train.batch = 4
"""


def test_health():
    r = client.get("/health")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert body["version"]


def test_full_pipeline_via_service(tmp_path):
    r = client.post("/datasets", json={"config_text": TINY,
                                       "out_dir": str(tmp_path / "data")})
    assert r.status_code == 200, r.text
    paths = r.json()["paths"]
    assert set(paths) >= {"train", "dev", "eval", "manifest"}

    r = client.post("/train", json={"config_text": TINY,
                                    "dataset_dir": str(tmp_path / "data"),
                                    "out_dir": str(tmp_path / "run")})
    assert r.status_code == 200, r.text
    ckpt = r.json()["checkpoint"]
    assert r.json()["final_loss"] is not None

    r = client.post("/decode", json={"config_text": TINY,
                                     "checkpoint": ckpt,
                                     "dataset_path": paths["eval"],
                                     "out_path": str(tmp_path / "dec.jsonl")})
    assert r.status_code == 200, r.text
    assert r.json()["records"] == 8

    r = client.post("/evaluate", json={"config_text": TINY,
                                       "decodes_path": str(tmp_path / "dec.jsonl"),
                                       "dataset_path": paths["eval"],
                                       "out_dir": str(tmp_path / "rep")})
    assert r.status_code == 200, r.text
    assert set(r.json()["ter"]) == {"heat", "best-perm"}
    summary = json.load(open(r.json()["paths"]["summary"]))
    assert "endpoint" in summary


def test_malformed_config_is_422(tmp_path):
    r = client.post("/datasets", json={"config_text": "data.bogus = 1",
                                       "out_dir": str(tmp_path)})
    assert r.status_code == 422
    assert "bogus" in r.json()["detail"]


def test_missing_files_are_404(tmp_path):
    r = client.post("/train", json={"config_text": TINY,
                                    "dataset_dir": str(tmp_path / "none"),
                                    "out_dir": str(tmp_path / "run")})
    assert r.status_code == 404
    r = client.post("/decode", json={"config_text": TINY,
                                     "checkpoint": str(tmp_path / "no.ckpt"),
                                     "dataset_path": str(tmp_path / "no.jsonl"),
                                     "out_path": str(tmp_path / "o.jsonl")})
    assert r.status_code == 404


def test_verify_endpoints():
    r = client.post("/verify/oracle-check", json={"trials": 20})
    assert r.status_code == 200
    assert r.json()["passed"] is True
    r = client.post("/verify/gradcheck", json={"models": 2})
    assert r.status_code == 200
    assert r.json()["passed"] is True
    # bounds enforced by the request model
    r = client.post("/verify/gradcheck", json={"models": 0})
    assert r.status_code == 422


def test_edit_distance_endpoint():
    r = client.post("/score/edit-distance", json={"ref": [1, 2, 3], "hyp": [1, 3]})
    assert r.status_code == 200
    assert r.json() == {"substitutions": 0, "deletions": 1, "insertions": 0}
