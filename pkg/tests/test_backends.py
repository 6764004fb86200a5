"""Backend wire contracts, retry policy, rate limiting, and mocks."""

from __future__ import annotations

import base64
import json
import re
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from homesynth.backends import (
    HashEmbedBackend,
    HttpEmbedBackend,
    HttpTextBackend,
    HttpVisionBackend,
    MockTextBackend,
    MockVisionBackend,
    ScriptedTextBackend,
    TokenBucket,
    retry_transport,
)
from homesynth.errors import BackendError, TransportError
from homesynth.genjson import validate_feature


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw)
        except ValueError:
            body = raw
        self.server.requests.append(
            {"path": self.path, "headers": dict(self.headers), "body": body}
        )
        if self.server.script:
            status, payload = self.server.script.pop(0)
        else:
            status, payload = 200, {"text": "ok"}
        data = (payload if isinstance(payload, str) else json.dumps(payload)).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):  # keep pytest output clean
        pass


class _StubServer(HTTPServer):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.requests: list[dict] = []
        self.script: list[tuple[int, object]] = []


@pytest.fixture
def stub():
    server = _StubServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    server.endpoint = f"http://127.0.0.1:{server.server_address[1]}"
    yield server
    server.shutdown()
    server.server_close()


class FakeClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


class TestTokenBucket:
    def test_burst_up_to_capacity_then_wait(self):
        clock = FakeClock()
        sleeps: list[float] = []

        def sleep(seconds: float) -> None:
            sleeps.append(seconds)
            clock.advance(seconds)

        bucket = TokenBucket(rate_per_sec=2.0, capacity=1.0, clock=clock, sleep=sleep)
        bucket.acquire()
        assert sleeps == []
        bucket.acquire()  # refill at 2 tokens/s: one token takes 0.5 s
        assert sleeps == [pytest.approx(0.5)]

    def test_refill_caps_at_capacity(self):
        clock = FakeClock()
        sleeps: list[float] = []

        def sleep(seconds: float) -> None:
            sleeps.append(seconds)
            clock.advance(seconds)

        bucket = TokenBucket(rate_per_sec=1.0, capacity=2.0, clock=clock, sleep=sleep)
        clock.advance(100.0)  # long idle must not bank more than 2 tokens
        bucket.acquire()
        bucket.acquire()
        assert sleeps == []
        bucket.acquire()
        assert sleeps == [pytest.approx(1.0)]

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(ValueError):
            TokenBucket(rate_per_sec=0.0)


class TestRetryTransport:
    def test_success_is_not_retried(self):
        calls = []
        out = retry_transport(lambda: calls.append(1) or "ok", max_retries=3, base_delay=0.0)
        assert out == "ok"
        assert len(calls) == 1

    def test_max_retries_counts_total_attempts(self):
        calls = []

        def fn():
            calls.append(1)
            raise TransportError("down")

        with pytest.raises(BackendError) as err:
            retry_transport(fn, max_retries=3, base_delay=0.0)
        assert len(calls) == 3
        assert "3 attempts" in str(err.value)
        assert isinstance(err.value.__cause__, TransportError)

    def test_backoff_doubles(self):
        delays: list[float] = []
        calls = []

        def fn():
            calls.append(1)
            if len(calls) < 3:
                raise TransportError("down")
            return "ok"

        assert retry_transport(fn, max_retries=3, base_delay=0.1, sleep=delays.append) == "ok"
        assert delays == [pytest.approx(0.1), pytest.approx(0.2)]

    def test_non_transport_errors_propagate_unretried(self):
        calls = []

        def fn():
            calls.append(1)
            raise BackendError("bad request")

        with pytest.raises(BackendError, match="bad request"):
            retry_transport(fn, max_retries=3, base_delay=0.0)
        assert len(calls) == 1

    def test_zero_retries_rejected(self):
        with pytest.raises(ValueError):
            retry_transport(lambda: "ok", max_retries=0, base_delay=0.0)


class TestHttpVision:
    def test_wire_format_and_bearer(self, stub):
        stub.script = [(200, {"text": "a tidy ranch house"})]
        backend = HttpVisionBackend(endpoint=stub.endpoint, api_key="sekrit")
        image = b"\x89PNG fake bytes \x00\x01"
        out = backend.describe(image, "Describe the roof.")
        assert out == "a tidy ranch house"
        (req,) = stub.requests
        assert req["path"] == "/describe"
        assert req["headers"]["Authorization"] == "Bearer sekrit"
        assert set(req["body"]) == {"image", "prompt"}
        assert "\n" not in req["body"]["image"]
        assert base64.b64decode(req["body"]["image"]) == image
        assert req["body"]["prompt"] == "Describe the roof."

    def test_prompt_template_wraps(self, stub):
        stub.script = [(200, {"text": "t"})]
        backend = HttpVisionBackend(
            endpoint=stub.endpoint,
            prompt_template="USER: <image>\n{PROMPT} ASSISTANT:",
        )
        backend.describe(b"img", "Hi")
        assert stub.requests[0]["body"]["prompt"] == "USER: <image>\nHi ASSISTANT:"

    def test_template_without_slot_rejected(self, stub):
        with pytest.raises(BackendError):
            HttpVisionBackend(endpoint=stub.endpoint, prompt_template="no slot")

    def test_transient_status_raises_transport_error(self, stub):
        # the vision client itself does not retry; the describe loop does
        stub.script = [(500, {"error": "boom"})]
        backend = HttpVisionBackend(endpoint=stub.endpoint, max_retries=3)
        with pytest.raises(TransportError):
            backend.describe(b"img", "p")
        assert len(stub.requests) == 1

    def test_client_error_raises_backend_error(self, stub):
        stub.script = [(400, {"error": "bad"})]
        backend = HttpVisionBackend(endpoint=stub.endpoint)
        with pytest.raises(BackendError):
            backend.describe(b"img", "p")

    def test_missing_text_field_raises(self, stub):
        stub.script = [(200, {"caption": "hi"})]
        backend = HttpVisionBackend(endpoint=stub.endpoint)
        with pytest.raises(BackendError):
            backend.describe(b"img", "p")

    def test_env_endpoint_and_key(self, stub, monkeypatch):
        monkeypatch.setenv("VISION_ENDPOINT", stub.endpoint)
        monkeypatch.setenv("VISION_API_KEY", "envkey")
        stub.script = [(200, {"text": "t"})]
        HttpVisionBackend().describe(b"img", "p")
        assert stub.requests[0]["headers"]["Authorization"] == "Bearer envkey"

    def test_unconfigured_endpoint_rejected(self, monkeypatch):
        monkeypatch.delenv("VISION_ENDPOINT", raising=False)
        with pytest.raises(BackendError):
            HttpVisionBackend()


class TestHttpText:
    def test_wire_format(self, stub):
        stub.script = [(200, {"text": "story"})]
        backend = HttpTextBackend(endpoint=stub.endpoint, api_key="k2")
        out = backend.generate("Write JSON.", temperature=0.7, max_tokens=99)
        assert out == "story"
        (req,) = stub.requests
        assert req["path"] == "/generate"
        assert req["body"] == {"prompt": "Write JSON.", "temperature": 0.7, "max_tokens": 99}
        assert req["headers"]["Authorization"] == "Bearer k2"

    def test_retries_transient_then_succeeds(self, stub):
        stub.script = [(503, {"error": "busy"}), (429, {"error": "slow down"}), (200, {"text": "ok"})]
        backend = HttpTextBackend(endpoint=stub.endpoint, max_retries=3, retry_delay=0.0)
        assert backend.generate("p") == "ok"
        assert len(stub.requests) == 3

    def test_exhausted_retries_raise_backend_error(self, stub):
        stub.script = [(500, {})] * 5
        backend = HttpTextBackend(endpoint=stub.endpoint, max_retries=2, retry_delay=0.0)
        with pytest.raises(BackendError):
            backend.generate("p")
        assert len(stub.requests) == 2

    def test_non_json_success_body_raises(self, stub):
        stub.script = [(200, "definitely not json")]
        backend = HttpTextBackend(endpoint=stub.endpoint, retry_delay=0.0)
        with pytest.raises(BackendError):
            backend.generate("p")

    def test_connection_refused_is_retried_then_fails(self):
        # port 9 is discard; nothing listens on it in the sandbox
        backend = HttpTextBackend(endpoint="http://127.0.0.1:9", max_retries=2, retry_delay=0.0, timeout=0.2)
        with pytest.raises(BackendError):
            backend.generate("p")


class TestHttpEmbed:
    def test_wire_format(self, stub):
        stub.script = [(200, {"vector": [1.0, 2.5, -3.0]})]
        backend = HttpEmbedBackend(endpoint=stub.endpoint)
        vec = backend.embed("hello")
        assert stub.requests[0]["path"] == "/embed"
        assert stub.requests[0]["body"] == {"text": "hello"}
        np.testing.assert_allclose(vec, [1.0, 2.5, -3.0])

    def test_missing_vector_raises(self, stub):
        stub.script = [(200, {"text": "oops"})]
        backend = HttpEmbedBackend(endpoint=stub.endpoint, retry_delay=0.0)
        with pytest.raises(BackendError):
            backend.embed("hello")


class TestMockVision:
    def test_deterministic_format(self):
        backend = MockVisionBackend()
        out = backend.describe(b"pixels", "What roof?")
        assert re.fullmatch(r"MOCK:[0-9a-f]{8}\|10", out)
        assert out == MockVisionBackend().describe(b"pixels", "What roof?")

    def test_sensitive_to_image_and_prompt(self):
        backend = MockVisionBackend()
        a = backend.describe(b"pixels", "p")
        b = backend.describe(b"pixelz", "p")
        c = backend.describe(b"pixels", "pp")
        assert a != b and a != c

    def test_fail_times_then_recover(self):
        backend = MockVisionBackend(fail_times=2)
        for _ in range(2):
            with pytest.raises(TransportError):
                backend.describe(b"x", "p")
        assert backend.describe(b"x", "p").startswith("MOCK:")
        assert backend.calls == 3


class TestScriptedText:
    def test_replays_then_repeats_last(self):
        backend = ScriptedTextBackend(["a", "b"])
        assert [backend.generate("p1"), backend.generate("p2"), backend.generate("p3")] == ["a", "b", "b"]
        assert backend.received_prompts == ["p1", "p2", "p3"]
        assert backend.calls == 3

    def test_empty_script_rejected(self):
        with pytest.raises(ValueError):
            ScriptedTextBackend([])


class TestMockText:
    def test_geojson_prompts_yield_valid_features(self):
        prompt = (
            "Produce a GeoJSON Feature for this home.\n"
            "total_square_feet_living_area: 2576\n"
            "number_of_stories: 2\n"
            "year_built: 1940\n"
        )
        raw = MockTextBackend().generate(prompt)
        result = validate_feature(raw, stories=2.0)
        assert result.ok, result.violations
        assert result.feature.floor_area == 2576.0
        assert "1940" in result.feature.inspection_note

    def test_score_prompts_yield_decimal_in_unit_interval(self):
        out = MockTextBackend().generate("Rate the note from 0 to 1.")
        assert re.fullmatch(r"0\.\d\d|1\.00", out)
        assert 0.0 <= float(out) <= 1.0

    def test_identical_prompts_identical_output(self):
        p = "Rate this inspection note."
        assert MockTextBackend().generate(p) == MockTextBackend().generate(p)

    def test_distinct_prompts_distinct_features(self):
        base = "Produce a GeoJSON Feature.\ntotal_square_feet_living_area: {}\nnumber_of_stories: 1\n"
        a = MockTextBackend().generate(base.format(1000))
        b = MockTextBackend().generate(base.format(2000))
        assert a != b


class TestHashEmbed:
    def test_deterministic_and_distinct(self):
        backend = HashEmbedBackend()
        u = backend.embed("roof shingles")
        v = backend.embed("roof shingles")
        w = backend.embed("roof shingle")
        assert np.array_equal(u, v)
        assert not np.array_equal(u, w)
        assert u.shape == (32,)

    def test_dim_respected(self):
        assert HashEmbedBackend(dim=8).embed("x").shape == (8,)

    def test_tiny_dim_rejected(self):
        with pytest.raises(ValueError):
            HashEmbedBackend(dim=1)
