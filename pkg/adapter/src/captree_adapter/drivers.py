"""Model drivers behind the wire endpoints.

``StubDriver`` produces deterministic synthetic outputs without any model
weights. Its embeddings follow the wire contract's published stub value
protocol (sha256 of the UTF-8 text, first 8 digest bytes big-endian XOR
seed, then ``dim`` uniforms in [-1, 1) from numpy's ``default_rng``), so
a pipeline run against the stub adapter segments videos exactly like a
client-side mock that follows the same protocol. Completions honor the
request's ``response_schema`` when present by generating a conforming
object, otherwise they return a plain sentence.

``HFDriver`` wraps real models through ``transformers`` pipelines; it
loads lazily and reports a loading/unavailable state so the server can
answer 503 instead of hanging.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading

import numpy as np

from .config import RoleConfig

logger = logging.getLogger(__name__)


class DriverError(Exception):
    pass


class DriverLoading(DriverError):
    """Model still loading; caller should answer 503."""


def stable_seed(text: str, salt: int = 0) -> int:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") ^ salt


def stable_vector(text: str, dim: int, salt: int = 0) -> list[float]:
    rng = np.random.default_rng(stable_seed(text, salt))
    return rng.uniform(-1.0, 1.0, size=dim).tolist()


_NOUNS = ("mixing bowl", "steel pan", "storage jar", "wooden plank", "cotton rag", "hand drill")
_VERBS = ("arranges", "tightens", "rinses", "flattens", "scoops", "brushes")
_ACTORS = ("a cook", "a technician", "a presenter", "a gardener")


class StubDriver:
    """Deterministic stand-in for every role; no weights required."""

    def __init__(self, cfg: RoleConfig):
        self.cfg = cfg

    def ready(self) -> bool:
        return True

    def embed_window(self, frames: list[str]) -> list[list[float]]:
        return [stable_vector(ref, self.cfg.embed_dim, self.cfg.seed) for ref in frames]

    def embed_text(self, text: str) -> list[float]:
        return stable_vector(text, self.cfg.embed_dim, self.cfg.seed)

    def caption(self, key: str, prompt: str) -> str:
        return self._sentence(f"caption:{key}:{prompt}")

    def complete(self, prompt: str, max_tokens: int, reasoning_effort: str,
                 response_schema: dict | None = None) -> str:
        rng = np.random.default_rng(stable_seed(f"complete:{prompt}", self.cfg.seed))
        if response_schema:
            return json.dumps(self._fill_schema(response_schema, rng), sort_keys=True)
        return self._sentence(f"complete:{prompt}")

    def _fill_schema(self, schema: dict, rng: np.random.Generator):
        kind = schema.get("type", "string")
        if kind == "object":
            return {
                name: self._fill_schema(sub, rng)
                for name, sub in sorted(schema.get("properties", {}).items())
            }
        if kind == "array":
            return [self._fill_schema(schema.get("items", {"type": "string"}), rng)]
        if kind in ("number", "integer"):
            return int(rng.integers(0, 100))
        if kind == "boolean":
            return bool(rng.integers(0, 2))
        return self._sentence_rng(rng)

    def _sentence(self, key: str) -> str:
        return self._sentence_rng(np.random.default_rng(stable_seed(key, self.cfg.seed)))

    @staticmethod
    def _sentence_rng(rng: np.random.Generator) -> str:
        actor = _ACTORS[rng.integers(len(_ACTORS))]
        verb = _VERBS[rng.integers(len(_VERBS))]
        noun = _NOUNS[rng.integers(len(_NOUNS))]
        return f"{actor.capitalize()} {verb} the {noun}."


class HFDriver:
    """Thin wrapper over transformers pipelines, loaded on first use."""

    _TASKS = {
        "complete": "text-generation",
        "caption_image": "image-to-text",
        "caption_video": "image-to-text",
        "embed_text": "feature-extraction",
        "embed_window": "feature-extraction",
    }

    def __init__(self, role: str, cfg: RoleConfig):
        self.role = role
        self.cfg = cfg
        self.model_id = cfg.model.split(":", 1)[1]
        self._pipe = None
        self._loading = False
        self._error: str | None = None
        self._lock = threading.Lock()

    def ready(self) -> bool:
        return self._pipe is not None

    def _ensure(self):
        with self._lock:
            if self._pipe is not None:
                return
            if self._error:
                raise DriverError(self._error)
            if self._loading:
                raise DriverLoading(f"{self.model_id} is loading")
            self._loading = True
        try:
            from transformers import pipeline

            pipe = pipeline(self._TASKS[self.role], model=self.model_id, device=self.cfg.device)
        except Exception as exc:
            with self._lock:
                self._error = f"failed to load {self.model_id}: {exc}"
                self._loading = False
            raise DriverError(self._error) from exc
        with self._lock:
            self._pipe = pipe
            self._loading = False

    def embed_text(self, text: str) -> list[float]:
        self._ensure()
        features = np.asarray(self._pipe(text))
        return features.mean(axis=tuple(range(features.ndim - 1))).tolist()

    def embed_window(self, frames: list[str]) -> list[list[float]]:
        self._ensure()
        return [self.embed_text(ref) for ref in frames]

    def caption(self, key: str, prompt: str) -> str:
        self._ensure()
        out = self._pipe(key, prompt=prompt, max_new_tokens=self.cfg.max_tokens)
        return out[0]["generated_text"] if out else ""

    def complete(self, prompt: str, max_tokens: int, reasoning_effort: str,
                 response_schema: dict | None = None) -> str:
        self._ensure()
        logger.info("completion via %s effort=%s", self.model_id, reasoning_effort)
        out = self._pipe(prompt, max_new_tokens=min(max_tokens, self.cfg.max_tokens))
        text = out[0]["generated_text"]
        return text[len(prompt):] if text.startswith(prompt) else text


def make_driver(role: str, cfg: RoleConfig):
    if cfg.model == "stub":
        return StubDriver(cfg)
    if cfg.model.startswith("hf:"):
        return HFDriver(role, cfg)
    raise ValueError(f"unknown driver for model {cfg.model!r}")
