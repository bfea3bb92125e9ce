"""Wire-protocol tests against the deterministic stub encoder: everything here
runs without model weights."""

import base64
import io
import json
import sys
import threading
from pathlib import Path

import numpy as np
import pytest
import uvicorn
from fastapi.testclient import TestClient

from boxdeform import shapes
from boxdeform.objective import (
    HttpScorer,
    ScoreRequest,
    ScoreResponse,
    SubprocessScorer,
    score_with_retry,
)
from boxdeform.render import Camera, render
from clip_scorer.app import ServiceConfig, canonical_json, create_app
from clip_scorer.cli import serve_stdio
from clip_scorer.encoder import StubEncoder

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture()
def client():
    return TestClient(create_app(StubEncoder()))


def _fixture_request_bytes() -> bytes:
    return (FIXTURES / "score_request.json").read_bytes()


def _fixture_response_bytes() -> bytes:
    return (FIXTURES / "score_response.json").read_bytes()


def _request_images():
    m = shapes.two_cube_stack()
    return [
        render(m, Camera(45.0, 20.0, size=64), (255, 255, 255)).to_png(),
        render(m, Camera(135.0, 35.0, size=64), (0, 0, 0)).to_png(),
    ]


# --- recorded-fixture round trip (byte compatibility with the primary client) --


def test_primary_client_reproduces_recorded_request():
    request = ScoreRequest("a chair", _request_images())
    assert request.to_wire() == _fixture_request_bytes()


def test_service_reproduces_recorded_response(client):
    resp = client.post(
        "/score",
        content=_fixture_request_bytes(),
        headers={"Content-Type": "application/json"},
    )
    assert resp.status_code == 200
    assert resp.content == _fixture_response_bytes()


def test_primary_client_parses_recorded_response():
    parsed = ScoreResponse.from_wire(_fixture_response_bytes())
    expected = json.loads(_fixture_response_bytes())["similarities"]
    assert parsed.similarities == expected
    assert len(parsed.similarities) == 2


# --- endpoint behavior ----------------------------------------------------------


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok", "model": "stub"}


def test_response_length_matches_image_count(client):
    request = ScoreRequest("prompt", _request_images() * 3)  # 6 images
    resp = client.post("/score", content=request.to_wire())
    assert resp.status_code == 200
    assert len(resp.json()["similarities"]) == 6


def test_similarities_bounded(client):
    request = ScoreRequest("anything", _request_images())
    sims = client.post("/score", content=request.to_wire()).json()["similarities"]
    assert all(-1.0 <= s <= 1.0 for s in sims)


def test_identical_images_score_identically(client):
    img = _request_images()[0]
    request = ScoreRequest("p", [img, img])
    sims = client.post("/score", content=request.to_wire()).json()["similarities"]
    assert abs(sims[0] - sims[1]) < 1e-6


def test_batching_chunks_do_not_change_results():
    images = _request_images() * 3
    request = ScoreRequest("p", images).to_wire()
    small = TestClient(create_app(StubEncoder(max_batch_size=2)))
    large = TestClient(create_app(StubEncoder(max_batch_size=64)))
    a = small.post("/score", content=request).json()["similarities"]
    b = large.post("/score", content=request).json()["similarities"]
    assert a == b


@pytest.mark.parametrize(
    "body",
    [
        b"not json",
        b"[]",
        b'{"images": ["QQ=="]}',
        b'{"prompt": "", "images": ["QQ=="]}',
        b'{"prompt": "p", "images": []}',
        b'{"prompt": "p", "images": ["@@@not-base64@@@"]}',
        b'{"prompt": "p", "images": ["QQ=="]}',  # valid base64, not an image
        b'{"prompt": "p", "images": [5]}',
    ],
)
def test_malformed_requests_get_400(client, body):
    resp = client.post("/score", content=body)
    assert resp.status_code == 400
    assert "error" in resp.json()


def test_encoder_failure_gets_500():
    class Exploding(StubEncoder):
        def embed_images(self, images):
            raise RuntimeError("cuda exploded")

    client = TestClient(create_app(Exploding()))
    request = ScoreRequest("p", _request_images())
    resp = client.post("/score", content=request.to_wire())
    assert resp.status_code == 500
    assert "scoring failed" in resp.json()["error"]


def test_service_config_validation():
    with pytest.raises(ValueError):
        ServiceConfig(max_batch_size=0)


def test_canonical_json_is_sorted_and_compact():
    assert canonical_json({"b": 1, "a": [1.5]}) == b'{"a":[1.5],"b":1}'


# --- stdio transport --------------------------------------------------------------


def test_stdio_loop_round_trip():
    request = ScoreRequest("p", _request_images())
    stdin = io.StringIO(request.to_wire().decode("utf-8") + "\n")
    stdout = io.StringIO()
    serve_stdio(StubEncoder(), stdin=stdin, stdout=stdout)
    line = stdout.getvalue().strip()
    parsed = ScoreResponse.from_wire(line.encode("utf-8"))
    assert len(parsed.similarities) == 2


def test_stdio_reports_errors_in_band():
    stdin = io.StringIO("not json\n")
    stdout = io.StringIO()
    serve_stdio(StubEncoder(), stdin=stdin, stdout=stdout)
    assert "error" in json.loads(stdout.getvalue())


def test_primary_subprocess_scorer_against_real_service():
    scorer = SubprocessScorer(
        [sys.executable, "-m", "clip_scorer.cli", "--stdio", "--stub-encoder"]
    )
    try:
        request = ScoreRequest("a chair", _request_images())
        resp = score_with_retry(scorer, request)
        assert len(resp.similarities) == 2
        expected = json.loads(_fixture_response_bytes())["similarities"]
        assert resp.similarities == pytest.approx(expected, abs=1e-12)
    finally:
        scorer.close()


# --- live HTTP server with the primary client --------------------------------------


@pytest.fixture()
def live_server():
    app = create_app(StubEncoder())
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        pass
    host, port = server.servers[0].sockets[0].getsockname()[:2]
    yield f"http://{host}:{port}"
    server.should_exit = True
    thread.join(timeout=10)


def test_primary_http_scorer_against_real_service(live_server):
    scorer = HttpScorer(live_server)
    request = ScoreRequest("a chair", _request_images())
    resp = score_with_retry(scorer, request)
    expected = json.loads(_fixture_response_bytes())["similarities"]
    assert resp.similarities == pytest.approx(expected, abs=1e-12)
