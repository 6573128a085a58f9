"""Inference backend wire contract plus a deterministic in-process mock.

Every model call in the pipeline (window embedding, image captioning,
video captioning, text completion, text embedding) goes through one
request/response shape. ``MockBackend`` is pure: the same request always
produces a byte-identical response, which makes the whole pipeline
testable offline and reruns byte-idempotent. ``RemoteBackend`` speaks
JSON-over-HTTP to a server exposing one POST endpoint per request kind.

Stub value protocol (shared with test servers): an embedding for a given
string is produced by hashing the UTF-8 text with SHA-256, taking the
first 8 digest bytes big-endian as a uint64, XOR-ing the configured seed,
and drawing ``dim`` uniform floats in [-1, 1) from ``numpy``'s
``default_rng`` seeded with that value.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Union

import numpy as np

from .errors import BackendRefusal, MalformedResponse, TransportError

logger = logging.getLogger(__name__)

ENV_BACKEND_URL = "CAPTREE_BACKEND_URL"

KINDS = ("embed_window", "caption_image", "caption_video", "complete", "embed_text")

_REQUIRED_FIELDS = {
    "embed_window": ("frames", "count"),
    "caption_image": ("image_ref", "prompt"),
    "caption_video": ("frame_refs", "prompt"),
    "complete": ("prompt", "max_tokens", "reasoning_effort"),
    "embed_text": ("text",),
}

Result = Union[list, str]


@dataclass(frozen=True)
class BackendRequest:
    kind: str
    payload: dict
    request_id: str


@dataclass(frozen=True)
class BackendResponse:
    request_id: str
    result: Result
    token_count: int = 0


def validate_request(req: BackendRequest) -> None:
    if req.kind not in KINDS:
        raise ValueError(f"unknown request kind {req.kind!r}")
    missing = [f for f in _REQUIRED_FIELDS[req.kind] if f not in req.payload]
    if missing:
        raise ValueError(f"{req.kind} payload missing fields: {missing}")
    if req.kind == "complete" and req.payload["reasoning_effort"] not in ("low", "medium", "high"):
        raise ValueError(f"invalid reasoning_effort {req.payload['reasoning_effort']!r}")


def frame_ref(source: str, t: float, resolution: int | None = None) -> str:
    """Stable string reference to one frame of a video source."""
    ref = f"{source}#t={t:.3f}"
    if resolution is not None:
        ref += f"&res={resolution}"
    return ref


def load_wire_schemas() -> dict:
    """Endpoint request/response JSON Schemas (the wire contract)."""
    text = resources.files("captree.resources").joinpath("wire_schemas.json").read_text("utf-8")
    return json.loads(text)


def stable_seed(text: str, salt: int = 0) -> int:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") ^ salt


def stable_vector(text: str, dim: int, salt: int = 0) -> list[float]:
    """Deterministic pseudo-embedding of ``text`` (see module docstring)."""
    rng = np.random.default_rng(stable_seed(text, salt))
    return rng.uniform(-1.0, 1.0, size=dim).tolist()


class Backend:
    """Interface: ``call(request) -> response``. Implementations are thread-safe."""

    def call(self, req: BackendRequest) -> BackendResponse:
        raise NotImplementedError


_SUBJECTS = ("A person", "A woman", "A man", "A chef", "An instructor", "A pair of hands")
_VERBS = ("stirs", "cuts", "places", "lifts", "pours", "wipes", "folds", "presses", "whisks", "spreads")
_VERBS_BASE = ("stir", "cut", "place", "lift", "pour", "wipe", "fold", "press", "whisk", "spread")
_OBJECTS = (
    "a wooden bowl",
    "the metal tray",
    "a glass jar",
    "the dough",
    "two small screws",
    "a cotton cloth",
    "the countertop",
    "a painted panel",
    "the almond butter",
    "a measuring cup",
)
_SETTINGS = (
    "in a bright kitchen",
    "on a cluttered workbench",
    "near a sunlit window",
    "in a tidy garage",
    "at a wooden table",
)


class MockBackend(Backend):
    """Pure, deterministic stand-in for all five model roles.

    Captions and completions are synthesized from seeded hashes of the
    request payload; embeddings follow the stub value protocol. The
    completion role emits JSON that satisfies the annotation response
    schema, flipping to "N/A" action fields for a small, deterministic
    fraction of prompts.
    """

    def __init__(self, dim: int = 32, seed: int = 0, na_rate: float = 0.03):
        self.dim = dim
        self.seed = seed
        self.na_rate = na_rate

    def call(self, req: BackendRequest) -> BackendResponse:
        validate_request(req)
        handler = getattr(self, f"_{req.kind}")
        result = handler(req.payload)
        tokens = len(result.split()) if isinstance(result, str) else 0
        return BackendResponse(request_id=req.request_id, result=result, token_count=tokens)

    def _embed_text(self, payload: dict) -> list[float]:
        return stable_vector(payload["text"], self.dim, self.seed)

    def _embed_window(self, payload: dict) -> list[list[float]]:
        return [stable_vector(ref, self.dim, self.seed) for ref in payload["frames"]]

    def _caption_image(self, payload: dict) -> str:
        return self._sentence("image:" + payload["image_ref"] + payload["prompt"])

    def _caption_video(self, payload: dict) -> str:
        key = "video:" + "|".join(payload["frame_refs"]) + payload["prompt"]
        rng = np.random.default_rng(stable_seed(key, self.seed))
        first = self._sentence(key, rng)
        second = self._sentence(key + ":2", rng)
        return f"{first} Afterwards, {second[0].lower()}{second[1:]}"

    def _complete(self, payload: dict) -> str:
        rng = np.random.default_rng(stable_seed("complete:" + payload["prompt"], self.seed))
        summary_brief = self._sentence("sb", rng)
        summary_detailed = " ".join(self._sentence(f"sd{i}", rng) for i in range(3))
        if rng.uniform() < self.na_rate:
            action = {"brief": "N/A", "detailed": "N/A", "actor": "N/A"}
        else:
            verb = _VERBS_BASE[rng.integers(len(_VERBS_BASE))]
            obj = _OBJECTS[rng.integers(len(_OBJECTS))]
            setting = _SETTINGS[rng.integers(len(_SETTINGS))]
            action = {
                "brief": f"{verb} {obj}",
                "detailed": f"{verb.capitalize()} {obj} steadily {setting}.",
                "actor": f"{_SUBJECTS[rng.integers(len(_SUBJECTS))]} {setting}",
            }
        body = {
            "summary": {"brief": summary_brief, "detailed": summary_detailed},
            "action": action,
        }
        return json.dumps(body, sort_keys=True)

    def _sentence(self, key: str, rng: np.random.Generator | None = None) -> str:
        if rng is None:
            rng = np.random.default_rng(stable_seed(key, self.seed))
        subject = _SUBJECTS[rng.integers(len(_SUBJECTS))]
        verb = _VERBS[rng.integers(len(_VERBS))]
        obj = _OBJECTS[rng.integers(len(_OBJECTS))]
        setting = _SETTINGS[rng.integers(len(_SETTINGS))]
        return f"{subject} {verb} {obj} {setting}."


class RemoteBackend(Backend):
    """JSON-over-HTTP client with bounded retries and in-flight limiting.

    Transient failures (connection errors, timeouts, HTTP 5xx) are retried
    with exponential backoff up to ``max_attempts`` total requests. An
    explicit error body raises ``BackendRefusal`` immediately; a 200 with
    an unparseable or schema-violating body raises ``MalformedResponse``.
    """

    _RESULT_KEY = {
        "embed_window": "vector_per_frame",
        "caption_image": "text",
        "caption_video": "text",
        "complete": "text",
        "embed_text": "vector",
    }

    def __init__(
        self,
        base_url: str,
        max_attempts: int = 3,
        backoff_s: float = 0.25,
        timeout_s: float = 60.0,
        max_in_flight: int = 8,
    ):
        self.base_url = base_url.rstrip("/")
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._local = threading.local()

    def _session(self):
        import requests

        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def call(self, req: BackendRequest) -> BackendResponse:
        import requests

        validate_request(req)
        url = f"{self.base_url}/{req.kind}"
        last_error: Exception | None = None
        with self._slots:
            for attempt in range(self.max_attempts):
                if attempt:
                    time.sleep(self.backoff_s * (2 ** (attempt - 1)))
                try:
                    http = self._session().post(url, json=req.payload, timeout=self.timeout_s)
                except requests.RequestException as exc:
                    last_error = exc
                    logger.warning("backend %s attempt %d failed: %s", req.kind, attempt + 1, exc)
                    continue
                if http.status_code >= 500:
                    last_error = TransportError(f"{url} returned {http.status_code}")
                    continue
                return self._parse(req, http)
        raise TransportError(f"{url} unreachable after {self.max_attempts} attempts: {last_error}")

    def _parse(self, req: BackendRequest, http) -> BackendResponse:
        try:
            body = http.json()
        except ValueError as exc:
            raise MalformedResponse(f"{req.kind}: body is not valid JSON: {exc}") from exc
        if not isinstance(body, dict):
            raise MalformedResponse(f"{req.kind}: body is not a JSON object")
        if "error" in body or http.status_code >= 400:
            message = body.get("error", {})
            if isinstance(message, dict):
                message = message.get("message", str(body))
            raise BackendRefusal(f"{req.kind}: {message}")
        key = self._RESULT_KEY[req.kind]
        if key not in body:
            raise MalformedResponse(f"{req.kind}: response missing {key!r}")
        result = body[key]
        if key == "text":
            if not isinstance(result, str) or not result:
                raise MalformedResponse(f"{req.kind}: empty or non-string text")
            tokens = body.get("token_count", len(result.split()))
        else:
            if not isinstance(result, list):
                raise MalformedResponse(f"{req.kind}: {key} is not a list")
            tokens = 0
        return BackendResponse(request_id=req.request_id, result=result, token_count=int(tokens))


@dataclass
class CountingBackend(Backend):
    """Wrapper that counts calls per kind; useful for tests and summaries."""

    inner: Backend
    counts: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def call(self, req: BackendRequest) -> BackendResponse:
        with self._lock:
            self.counts[req.kind] = self.counts.get(req.kind, 0) + 1
        return self.inner.call(req)


def backend_from_env(
    dim: int = 32,
    seed: int = 0,
    max_attempts: int = 3,
    max_in_flight: int = 8,
    url: str | None = None,
) -> Backend:
    """Remote backend when CAPTREE_BACKEND_URL (or ``url``) is set, else mock."""
    url = url or os.environ.get(ENV_BACKEND_URL)
    if url:
        return RemoteBackend(url, max_attempts=max_attempts, max_in_flight=max_in_flight)
    return MockBackend(dim=dim, seed=seed)
