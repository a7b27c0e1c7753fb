"""Embedding clients: a deterministic local mock for tests and offline runs,
and a remote HTTP client with batching, retries, and a disk cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import requests

logger = logging.getLogger(__name__)

_N_BUCKETS = 4096


class EmbedError(RuntimeError):
    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


@dataclass(frozen=True)
class EmbedderSpec:
    kind: str = "mock"
    dim: int = 256
    seed: int = 0
    endpoint: str | None = None
    model: str | None = None
    auth_env: str | None = None
    batch_size: int = 32
    cache_dir: str | None = None
    query_input_type: str | None = None
    document_input_type: str | None = None
    max_retries: int = 3
    backoff_base: float = 0.5


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


class MockEmbedder:
    """Hashes character trigrams into buckets and projects the counts through
    a seed-derived pseudorandom matrix, then L2-normalizes.

    Values depend only on (text, dim, seed), never on the platform or the
    order of calls.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self._rows: dict[int, np.ndarray] = {}

    def _row(self, bucket: int) -> np.ndarray:
        row = self._rows.get(bucket)
        if row is None:
            rng = np.random.default_rng([self.seed, bucket])
            row = rng.standard_normal(self.dim)
            self._rows[bucket] = row
        return row

    @staticmethod
    def _buckets(text: str) -> Counter:
        if len(text) >= 3:
            grams = [text[i : i + 3] for i in range(len(text) - 2)]
        else:
            grams = [text]
        counts: Counter = Counter()
        for gram in grams:
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
            counts[int.from_bytes(digest, "big") % _N_BUCKETS] += 1
        return counts

    def embed_texts(self, texts: Sequence[str], input_type: str | None = None) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for text in texts:
            vec = np.zeros(self.dim, dtype=np.float64)
            for bucket, count in self._buckets(text).items():
                vec += count * self._row(bucket)
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                vec = self._row(0).copy()
                norm = float(np.linalg.norm(vec))
            out.append(vec / norm)
        return out


class VectorCache:
    """One JSON file per (model, input type, text) key. Writes go through a
    temp file and an atomic rename, so concurrent readers never see partial
    content and the last writer wins."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, model: str | None, text: str, input_type: str | None) -> Path:
        key = hashlib.sha256()
        for part in (model or "", input_type or "", text):
            key.update(part.encode("utf-8"))
            key.update(b"\x00")
        return self.root / f"{key.hexdigest()}.json"

    def get(self, model: str | None, text: str, input_type: str | None) -> list[float] | None:
        path = self._path(model, text, input_type)
        try:
            return json.loads(path.read_text(encoding="utf-8"))["vector"]
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, KeyError, TypeError):
            logger.warning("discarding unreadable cache entry %s", path)
            return None

    def put(self, model: str | None, text: str, input_type: str | None, vector: Sequence[float]) -> None:
        path = self._path(model, text, input_type)
        tmp = path.with_name(f"{path.name}.{os.getpid()}.tmp")
        tmp.write_text(json.dumps({"vector": [float(x) for x in vector]}), encoding="utf-8")
        os.replace(tmp, path)


class RemoteEmbedder:
    """POSTs {"texts": [...], "model": ...} and expects {"vectors": [[...]]}.

    Failed requests are retried with exponential backoff. Cached vectors are
    keyed by model, input type, and exact text.
    """

    def __init__(
        self,
        spec: EmbedderSpec,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not spec.endpoint:
            raise ValueError("remote embedder requires an endpoint")
        self.spec = spec
        self.dim = spec.dim
        self.session = session or requests.Session()
        self._sleep = sleep
        self._cache = VectorCache(spec.cache_dir) if spec.cache_dir else None

    def embed_texts(self, texts: Sequence[str], input_type: str | None = None) -> list[np.ndarray]:
        texts = list(texts)
        vectors: list[np.ndarray | None] = [None] * len(texts)
        pending: list[int] = []
        for i, text in enumerate(texts):
            cached = self._cache.get(self.spec.model, text, input_type) if self._cache else None
            if cached is not None:
                vectors[i] = np.asarray(cached, dtype=np.float64)
            else:
                pending.append(i)
        for start in range(0, len(pending), self.spec.batch_size):
            chunk = pending[start : start + self.spec.batch_size]
            batch = [texts[i] for i in chunk]
            for i, raw in zip(chunk, self._request(batch, input_type)):
                arr = np.asarray(raw, dtype=np.float64)
                if arr.shape != (self.spec.dim,):
                    raise EmbedError(
                        f"embedding has dimension {arr.shape}, configured dim is {self.spec.dim}"
                    )
                vectors[i] = arr
                if self._cache:
                    self._cache.put(self.spec.model, texts[i], input_type, arr)
        return [v for v in vectors if v is not None]

    def _headers(self) -> dict[str, str]:
        headers = {}
        if self.spec.auth_env:
            token = os.environ.get(self.spec.auth_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def _request(self, batch: list[str], input_type: str | None) -> list[list[float]]:
        payload: dict = {"texts": batch, "model": self.spec.model}
        if input_type:
            payload["input_type"] = input_type
        last: Exception | None = None
        for attempt in range(1, self.spec.max_retries + 1):
            try:
                resp = self.session.post(
                    self.spec.endpoint, json=payload, headers=self._headers(), timeout=60
                )
                resp.raise_for_status()
                vectors = resp.json()["vectors"]
                if len(vectors) != len(batch):
                    raise KeyError("vector count does not match batch size")
                return vectors
            except (requests.RequestException, KeyError, ValueError) as exc:
                last = exc
                logger.warning("embedding request attempt %d failed: %s", attempt, exc)
                if attempt < self.spec.max_retries:
                    self._sleep(self.spec.backoff_base * (2 ** (attempt - 1)))
        raise EmbedError(
            f"embedding request failed after {self.spec.max_retries} attempts: {last}",
            attempts=self.spec.max_retries,
        )


def make_embedder(spec: EmbedderSpec, session: requests.Session | None = None):
    if spec.kind == "mock":
        return MockEmbedder(dim=spec.dim, seed=spec.seed)
    if spec.kind == "remote":
        return RemoteEmbedder(spec, session=session)
    raise ValueError(f"unknown embedder kind {spec.kind!r}")
