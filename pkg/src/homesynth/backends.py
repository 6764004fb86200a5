"""Pluggable model backends: vision, text generation, and text embedding.

The pipeline only ever talks to the three small interfaces defined here.
HTTP implementations target a deliberately minimal wire contract so a
local open-weights server or a hosted API can satisfy it with a thin
shim:

    POST {VISION_ENDPOINT}/describe   {"image": <base64>, "prompt": str} -> {"text": str}
    POST {GEN_ENDPOINT}/generate      {"prompt": str, "temperature": float,
                                       "max_tokens": int}                -> {"text": str}
    POST {EMBED_ENDPOINT}/embed       {"text": str}                      -> {"vector": [float]}

Base64 uses the standard alphabet with no line wrapping. An optional
bearer token is read from VISION_API_KEY / GEN_API_KEY.

The mock implementations are exactly deterministic, which the test
harnesses rely on.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from abc import ABC, abstractmethod
from typing import Callable, Sequence

import numpy as np
import requests

from .errors import BackendError, TransportError

RETRYABLE_STATUSES = (429, 500, 502, 503, 504)


class TokenBucket:
    """Classic token-bucket rate limiter; thread-safe.

    ``acquire`` blocks until a token is available. ``clock`` and ``sleep``
    are injectable so tests can run without wall-clock delays.
    """

    def __init__(
        self,
        rate_per_sec: float,
        capacity: float | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate_per_sec <= 0:
            raise ValueError("rate_per_sec must be positive")
        self.rate = float(rate_per_sec)
        self.capacity = float(capacity if capacity is not None else rate_per_sec)
        self._clock = clock
        self._sleep = sleep
        self._tokens = self.capacity
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self, tokens: float = 1.0) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= tokens:
                    self._tokens -= tokens
                    return
                wait = (tokens - self._tokens) / self.rate
            self._sleep(wait)


class _CallCounter:
    """Mixin tracking how many raw calls a backend has served."""

    def __init__(self) -> None:
        self._calls = 0
        self._calls_lock = threading.Lock()

    def _count_call(self) -> None:
        with self._calls_lock:
            self._calls += 1

    @property
    def calls(self) -> int:
        return self._calls


def _post_json(
    url: str,
    payload: dict,
    timeout: float,
    api_key: str | None = None,
    rate_limiter: TokenBucket | None = None,
) -> dict:
    """POST a JSON body and return the decoded JSON reply.

    Raises TransportError for anything worth retrying (connection trouble,
    throttling, 5xx) and BackendError for replies that will not improve
    on retry.
    """
    if rate_limiter is not None:
        rate_limiter.acquire()
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    try:
        resp = requests.post(url, json=payload, timeout=timeout, headers=headers)
    except requests.RequestException as exc:
        raise TransportError(f"POST {url} failed: {exc}") from exc
    if resp.status_code in RETRYABLE_STATUSES:
        raise TransportError(f"POST {url} returned {resp.status_code}")
    if resp.status_code != 200:
        raise BackendError(f"POST {url} returned {resp.status_code}: {resp.text[:200]}")
    try:
        return resp.json()
    except ValueError as exc:
        raise BackendError(f"POST {url} returned non-JSON body") from exc


def retry_transport(
    fn: Callable[[], str],
    max_retries: int,
    base_delay: float,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Run ``fn`` up to ``max_retries`` times, backing off exponentially.

    Only TransportError triggers a retry; the first success is returned
    untouched, so a success is never consumed twice.
    """
    if max_retries < 1:
        raise ValueError("max_retries must be >= 1")
    last: TransportError | None = None
    for attempt in range(max_retries):
        try:
            return fn()
        except TransportError as exc:
            last = exc
            if attempt + 1 < max_retries and base_delay > 0:
                sleep(base_delay * (2**attempt))
    raise BackendError(f"backend failed after {max_retries} attempts: {last}") from last


# ---------------------------------------------------------------------------
# Vision


class VisionBackend(ABC):
    """Turns (image bytes, prompt) into a textual description.

    Implementations expose ``model_id``, ``max_retries``, and
    ``retry_delay``; ``describe`` raises TransportError for transient
    failures so callers can drive the retry policy.
    """

    model_id: str = "vision"
    max_retries: int = 3
    retry_delay: float = 0.5

    @abstractmethod
    def describe(self, image: bytes, prompt: str) -> str: ...


class HttpVisionBackend(_CallCounter, VisionBackend):
    """Vision-language model served over the /describe wire contract.

    ``prompt_template`` must contain a ``{PROMPT}`` slot; it absorbs the
    chat-format differences between model families (e.g. a LLaVA-style
    server wants ``"USER: <image>\\n{PROMPT} ASSISTANT:"``).
    """

    def __init__(
        self,
        endpoint: str | None = None,
        model_id: str = "vision-http",
        timeout: float = 60.0,
        max_retries: int = 3,
        retry_delay: float = 0.5,
        prompt_template: str = "{PROMPT}",
        api_key: str | None = None,
        rate_limiter: TokenBucket | None = None,
    ):
        super().__init__()
        self.endpoint = endpoint or os.environ.get("VISION_ENDPOINT", "")
        if not self.endpoint:
            raise BackendError("no vision endpoint configured (set VISION_ENDPOINT)")
        if "{PROMPT}" not in prompt_template:
            raise BackendError("vision prompt_template must contain {PROMPT}")
        self.model_id = model_id
        self.timeout = timeout
        self.max_retries = max_retries
        self.retry_delay = retry_delay
        self.prompt_template = prompt_template
        self.api_key = api_key if api_key is not None else os.environ.get("VISION_API_KEY")
        self.rate_limiter = rate_limiter

    def describe(self, image: bytes, prompt: str) -> str:
        self._count_call()
        payload = {
            "image": base64.b64encode(image).decode("ascii"),
            "prompt": self.prompt_template.replace("{PROMPT}", prompt),
        }
        reply = _post_json(
            self.endpoint.rstrip("/") + "/describe",
            payload,
            self.timeout,
            self.api_key,
            self.rate_limiter,
        )
        text = reply.get("text")
        if not isinstance(text, str):
            raise BackendError("vision backend reply has no 'text' field")
        return text


class MockVisionBackend(_CallCounter, VisionBackend):
    """Deterministic stand-in: ``MOCK:<8 hex of image digest>|<prompt length>``.

    The digest makes the response sensitive to any pixel change, which
    gives occlusion tests a worst-case stochasticity baseline. Set
    ``fail_times`` to raise TransportError for the first N calls.
    """

    def __init__(self, model_id: str = "mock-vision", max_retries: int = 3, fail_times: int = 0):
        super().__init__()
        self.model_id = model_id
        self.max_retries = max_retries
        self.retry_delay = 0.0
        self.fail_times = fail_times

    def describe(self, image: bytes, prompt: str) -> str:
        self._count_call()
        if self.calls <= self.fail_times:
            raise TransportError(f"mock vision failure {self.calls}/{self.fail_times}")
        digest = hashlib.sha256(image).hexdigest()[:8]
        return f"MOCK:{digest}|{len(prompt)}"


# ---------------------------------------------------------------------------
# Text generation


class TextBackend(ABC):
    """Prompt-in, text-out generation backend."""

    model_id: str = "text"
    max_retries: int = 3
    retry_delay: float = 0.5

    @abstractmethod
    def generate(self, prompt: str, temperature: float = 0.2, max_tokens: int = 1200) -> str: ...


class HttpTextBackend(_CallCounter, TextBackend):
    """Text-generation model served over the /generate wire contract."""

    def __init__(
        self,
        endpoint: str | None = None,
        model_id: str = "text-http",
        timeout: float = 60.0,
        max_retries: int = 3,
        retry_delay: float = 0.5,
        api_key: str | None = None,
        rate_limiter: TokenBucket | None = None,
    ):
        super().__init__()
        self.endpoint = endpoint or os.environ.get("GEN_ENDPOINT", "")
        if not self.endpoint:
            raise BackendError("no generation endpoint configured (set GEN_ENDPOINT)")
        self.model_id = model_id
        self.timeout = timeout
        self.max_retries = max_retries
        self.retry_delay = retry_delay
        self.api_key = api_key if api_key is not None else os.environ.get("GEN_API_KEY")
        self.rate_limiter = rate_limiter

    def generate(self, prompt: str, temperature: float = 0.2, max_tokens: int = 1200) -> str:
        self._count_call()

        def attempt() -> str:
            reply = _post_json(
                self.endpoint.rstrip("/") + "/generate",
                {"prompt": prompt, "temperature": temperature, "max_tokens": max_tokens},
                self.timeout,
                self.api_key,
                self.rate_limiter,
            )
            text = reply.get("text")
            if not isinstance(text, str):
                raise BackendError("text backend reply has no 'text' field")
            return text

        return retry_transport(attempt, self.max_retries, self.retry_delay)


class ScriptedTextBackend(_CallCounter, TextBackend):
    """Replays canned responses in order; repeats the last one when drained.

    The workhorse for retry-protocol tests: ``received_prompts`` records
    every prompt so re-prompt content can be inspected.
    """

    def __init__(self, responses: Sequence[str], model_id: str = "scripted-text"):
        super().__init__()
        if not responses:
            raise ValueError("responses must be nonempty")
        self.model_id = model_id
        self.retry_delay = 0.0
        self._responses = list(responses)
        self.received_prompts: list[str] = []

    def generate(self, prompt: str, temperature: float = 0.2, max_tokens: int = 1200) -> str:
        self._count_call()
        self.received_prompts.append(prompt)
        index = min(self.calls - 1, len(self._responses) - 1)
        return self._responses[index]


class MockTextBackend(_CallCounter, TextBackend):
    """Deterministic full mock for desk-scale pipeline runs.

    Prompts that mention GeoJSON get a valid feature synthesized from the
    record metadata embedded in the prompt; anything else is treated as a
    rating request and answered with a decimal derived from the prompt
    digest. Identical prompts always produce identical output.
    """

    def __init__(self, model_id: str = "mock-text", max_retries: int = 3):
        super().__init__()
        self.model_id = model_id
        self.max_retries = max_retries
        self.retry_delay = 0.0

    def generate(self, prompt: str, temperature: float = 0.2, max_tokens: int = 1200) -> str:
        self._count_call()
        if "GeoJSON" in prompt:
            return self._feature_for(prompt)
        return self._score_for(prompt)

    @staticmethod
    def _units(prompt: str, n: int) -> list[float]:
        # n reproducible uniforms in [0, 1) from the prompt digest
        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        return [int.from_bytes(digest[4 * i : 4 * i + 4], "big") / 2**32 for i in range(n)]

    @staticmethod
    def _prompt_number(prompt: str, key: str) -> float | None:
        for line in prompt.splitlines():
            if line.strip().startswith(key + ":"):
                value = line.split(":", 1)[1].strip()
                try:
                    return float(value)
                except ValueError:
                    return None
        return None

    def _score_for(self, prompt: str) -> str:
        (u,) = self._units(prompt, 1)
        return f"{round(u, 2):.2f}"

    def _feature_for(self, prompt: str) -> str:
        from . import geometry  # local import to keep module load light

        u = self._units(prompt, 6)
        floor_area = self._prompt_number(prompt, "total_square_feet_living_area") or 1500.0
        stories = self._prompt_number(prompt, "number_of_stories") or 1.0
        side_m = max(4.0, (floor_area * 0.09290304 / max(stories, 1.0)) ** 0.5)
        ring = list(geometry.square_footprint(-75.30 + u[5] * 0.01, 40.69, side_m))
        ring.append(ring[0])
        year = self._prompt_number(prompt, "year_built")
        note = (
            f"{'Two-story' if stories >= 2 else 'Single-story'} home"
            + (f" built in {int(year)}" if year else "")
            + ". HVAC equipment appears serviceable; insulation looks consistent with the "
            + "construction era; windows show no visible damage."
        )
        feature = {
            "type": "Feature",
            "properties": {
                "name": "Generated Home",
                "floor_area": floor_area,
                "building_type": "Single family",
                "inspection_note": note,
                "hvac_heating_cop": round(0.6 + 0.5 * u[0], 3),
                "hvac_cooling_cop": round(2.0 + 2.0 * u[1], 3),
                "wall_r_value": round(8.0 + 12.0 * u[2], 1),
                "roof_r_value": round(20.0 + 20.0 * u[3], 1),
                "air_change_rate": round(0.2 + 0.8 * u[4], 3),
            },
            "geometry": {"type": "Polygon", "coordinates": [[list(p) for p in ring]]},
        }
        return json.dumps(feature, sort_keys=True)


# ---------------------------------------------------------------------------
# Embeddings


class EmbedBackend(ABC):
    """Maps a text to a fixed-length vector."""

    model_id: str = "embed"

    @abstractmethod
    def embed(self, text: str) -> np.ndarray: ...


class HttpEmbedBackend(_CallCounter, EmbedBackend):
    """Sentence-embedding model served over the /embed wire contract."""

    def __init__(
        self,
        endpoint: str | None = None,
        model_id: str = "embed-http",
        timeout: float = 30.0,
        max_retries: int = 3,
        retry_delay: float = 0.5,
        rate_limiter: TokenBucket | None = None,
    ):
        super().__init__()
        self.endpoint = endpoint or os.environ.get("EMBED_ENDPOINT", "")
        if not self.endpoint:
            raise BackendError("no embedding endpoint configured (set EMBED_ENDPOINT)")
        self.model_id = model_id
        self.timeout = timeout
        self.max_retries = max_retries
        self.retry_delay = retry_delay
        self.rate_limiter = rate_limiter

    def embed(self, text: str) -> np.ndarray:
        self._count_call()

        def attempt() -> str:
            reply = _post_json(
                self.endpoint.rstrip("/") + "/embed",
                {"text": text},
                self.timeout,
                rate_limiter=self.rate_limiter,
            )
            vector = reply.get("vector")
            if not isinstance(vector, list) or not vector:
                raise BackendError("embed backend reply has no 'vector' field")
            return json.dumps(vector)

        return np.asarray(json.loads(retry_transport(attempt, self.max_retries, self.retry_delay)), dtype=float)


class HashEmbedBackend(_CallCounter, EmbedBackend):
    """Deterministic mock embedder: digest-seeded Gaussian vectors.

    Identical texts map to identical vectors; distinct texts map to
    vectors that are distinct with overwhelming probability.
    """

    def __init__(self, dim: int = 32, model_id: str = "mock-embed"):
        super().__init__()
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.model_id = model_id

    def embed(self, text: str) -> np.ndarray:
        self._count_call()
        seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
        return np.random.default_rng(seed).standard_normal(self.dim)
