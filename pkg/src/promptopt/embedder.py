"""Sentence embedding providers behind one interface.

Three implementations: a deterministic feature-hash bag of words (the
desk-scale default), file-backed precomputed vectors, and an HTTP
embeddings API client. The same provider supplies initial graph node
embeddings and the similarity half of the reward.
"""
from __future__ import annotations

import hashlib
import os
import threading
import time
from dataclasses import dataclass

import httpx
import numpy as np

from .corpus import CandidateExample
from .errors import ArgumentError, ConfigError, MissingEmbeddingError, RequestError, TransportError

EMBEDDER_KINDS = ("hash", "file", "http")


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "hash"
    dim: int = 32
    normalization: str = "l2"  # "l2" | "none"
    salt: int = 0  # hash provider
    path: str | None = None  # file provider
    base_url: str | None = None  # http provider
    model: str | None = None
    token_env: str | None = None
    max_in_flight: int = 4

    def validate(self) -> None:
        if self.kind not in EMBEDDER_KINDS:
            raise ConfigError(f"unknown embedder kind {self.kind!r}")
        if self.dim < 2:
            raise ConfigError(f"embedding dim must be >= 2, got {self.dim}")
        if self.normalization not in ("l2", "none"):
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if self.kind == "file" and not self.path:
            raise ConfigError("file embedder requires a path")
        if self.kind == "http" and not (self.base_url and self.model):
            raise ConfigError("http embedder requires base_url and model")


class Embedder:
    """Common provider behavior: example concatenation and normalization."""

    dim: int

    def embed_text(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def embed_example(self, example: CandidateExample) -> np.ndarray:
        parts = [example.query]
        if example.context is not None:
            parts.append(example.context)
        parts.append(example.response)
        return self.embed_text("\n".join(parts))

    def _finish(self, vec: np.ndarray, normalization: str) -> np.ndarray:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ArgumentError(f"provider returned shape {vec.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(vec)):
            raise ArgumentError("embedding contains non-finite entries")
        if normalization == "l2":
            norm = float(np.linalg.norm(vec))
            if norm > 0.0:
                vec = vec / norm
        return vec


def _token_bucket(token: str, salt: int, dim: int) -> int:
    key = salt.to_bytes(8, "little", signed=False)
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little") % dim


class HashEmbedder(Embedder):
    """Salted feature-hash bag of words: lowercase, whitespace split, count, l2."""

    def __init__(self, config: EmbedderConfig):
        config.validate()
        self.dim = config.dim
        self._salt = config.salt
        self._normalization = config.normalization

    def embed_text(self, text: str) -> np.ndarray:
        counts = np.zeros(self.dim, dtype=np.float64)
        for token in text.lower().split():
            counts[_token_bucket(token, self._salt, self.dim)] += 1.0
        return self._finish(counts, self._normalization)


class FileEmbedder(Embedder):
    """Exact-text lookup of precomputed vectors from a JSONL file."""

    def __init__(self, config: EmbedderConfig):
        config.validate()
        self.dim = config.dim
        self._normalization = config.normalization
        self._table: dict[str, np.ndarray] = {}
        with open(config.path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                import json

                record = json.loads(line)
                vec = np.asarray(record["vector"], dtype=np.float64)
                if vec.shape != (self.dim,):
                    raise ConfigError(
                        f"{config.path}:{line_no}: vector has dim {vec.shape[0]}, expected {self.dim}"
                    )
                self._table[record["text"]] = vec

    def embed_text(self, text: str) -> np.ndarray:
        if text not in self._table:
            raise MissingEmbeddingError(f"no precomputed vector for text: {text[:60]!r}")
        return self._finish(self._table[text], self._normalization)


class HttpEmbedder(Embedder):
    """POSTs to an embeddings endpoint; retries with exponential backoff."""

    max_attempts = 3
    backoff_base_s = 0.5

    def __init__(self, config: EmbedderConfig, transport: httpx.BaseTransport | None = None, sleep=time.sleep):
        config.validate()
        self.dim = config.dim
        self._normalization = config.normalization
        self._url = config.base_url.rstrip("/") + "/embeddings"
        self._model = config.model
        self._sleep = sleep
        self._semaphore = threading.Semaphore(config.max_in_flight)
        headers = {}
        token = os.environ.get(config.token_env, "") if config.token_env else ""
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(transport=transport, headers=headers, timeout=30.0)

    def embed_text(self, text: str) -> np.ndarray:
        body = {"model": self._model, "input": [text]}
        last_detail = ""
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self._semaphore:
                    response = self._client.post(self._url, json=body)
            except httpx.HTTPError as exc:
                last_detail = f"transport failure: {exc}"
            else:
                if response.status_code == 200:
                    vec = response.json()["data"][0]["embedding"]
                    return self._finish(np.asarray(vec, dtype=np.float64), self._normalization)
                if response.status_code == 429 or response.status_code >= 500:
                    last_detail = f"HTTP {response.status_code}"
                else:
                    raise RequestError(
                        f"embedding request rejected: HTTP {response.status_code}: {response.text[:200]}",
                        status=response.status_code,
                    )
            if attempt < self.max_attempts:
                self._sleep(self.backoff_base_s * 2 ** (attempt - 1))
        raise TransportError(f"embedding request failed after {self.max_attempts} attempts: {last_detail}", attempts=self.max_attempts)


def make_embedder(config: EmbedderConfig, **kwargs) -> Embedder:
    config.validate()
    if config.kind == "hash":
        return HashEmbedder(config)
    if config.kind == "file":
        return FileEmbedder(config)
    return HttpEmbedder(config, **kwargs)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; zero-norm inputs map to 0 to avoid NaN in rewards."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ArgumentError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))
