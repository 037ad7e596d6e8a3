"""Append-only associative memory with scored retrieval.

Each record carries text, a timestamp, a unit-norm embedding, an importance
weight, and its insertion index.  Retrieval ranks records by

    score = w_rel * cosine(query, record) + w_rec * exp(-lambda * age) + w_imp * importance

where age is measured in insertion steps from the newest record and lambda
is ln(2) divided by the recency half-life.  Ties prefer the more recent
insertion, then the lower record id.

The bank is safe to share between threads: appends take a lock and every
retrieval works over a consistent snapshot.
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Protocol

NORM_TOLERANCE = 1e-9

DEFAULT_WEIGHTS = (1.0, 1.0, 1.0)
DEFAULT_HALF_LIFE = 100.0


class Embedder(Protocol):
    """Maps text to a fixed-dimension unit-norm vector, deterministically."""

    dimension: int

    def embed(self, text: str) -> tuple[float, ...]: ...


class HashEmbedder:
    """Deterministic stand-in embedder for tests and scripted runs.

    Coordinates are derived from a SHA-256 digest of the seed, coordinate
    index, and text, then the vector is normalized.  Identical text always
    maps to the identical vector; there is no semantic structure.
    """

    def __init__(self, dimension: int = 16, seed: int = 0):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.seed = seed

    def embed(self, text: str) -> tuple[float, ...]:
        raw = []
        for i in range(self.dimension):
            digest = hashlib.sha256(f"{self.seed}|{i}|{text}".encode()).digest()
            bucket = int.from_bytes(digest[:8], "big")
            raw.append(bucket / 2**63 - 1.0)
        norm = math.sqrt(sum(x * x for x in raw))
        if norm == 0.0:  # pragma: no cover - digest output is never all-zero buckets
            raw[0] = 1.0
            norm = 1.0
        return tuple(x / norm for x in raw)


def _check_unit_norm(embedding: tuple[float, ...]) -> None:
    norm = math.sqrt(sum(x * x for x in embedding))
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise ValueError(f"embedding norm {norm!r} is not 1 within {NORM_TOLERANCE}")


def cosine(a: tuple[float, ...], b: tuple[float, ...]) -> float:
    # Both vectors are unit-norm, so the dot product is the cosine.
    return sum(x * y for x, y in zip(a, b))


@dataclass(frozen=True)
class MemoryRecord:
    text: str
    timestamp: datetime
    embedding: tuple[float, ...]
    importance: float
    index: int

    def __post_init__(self):
        if not 0.0 <= self.importance <= 1.0:
            raise ValueError("importance must lie in [0, 1]")
        _check_unit_norm(self.embedding)


class MemoryBank:
    """Append-only store of MemoryRecords for one agent or game master."""

    def __init__(
        self,
        embedder: Embedder | None = None,
        weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
        half_life: float = DEFAULT_HALF_LIFE,
        importance_scorer: Callable[[str], float] | None = None,
    ):
        if half_life <= 0:
            raise ValueError("half-life must be positive")
        self.embedder = embedder or HashEmbedder()
        self.weights = weights
        self.half_life = half_life
        self.decay = math.log(2.0) / half_life
        # Optional hook scoring importance of new text; defaults to 1.0.
        self.importance_scorer = importance_scorer
        self._records: list[MemoryRecord] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._records)

    def add(self, text: str, timestamp: datetime, importance: float | None = None) -> int:
        """Append one record and return its id (== insertion index)."""
        if importance is None:
            if self.importance_scorer is not None:
                importance = min(1.0, max(0.0, self.importance_scorer(text)))
            else:
                importance = 1.0
        embedding = self.embedder.embed(text)
        with self._lock:
            record = MemoryRecord(
                text=text,
                timestamp=timestamp,
                embedding=embedding,
                importance=importance,
                index=len(self._records),
            )
            self._records.append(record)
            return record.index

    def snapshot(self) -> list[MemoryRecord]:
        with self._lock:
            return list(self._records)

    def get(self, index: int) -> MemoryRecord:
        with self._lock:
            return self._records[index]

    def score(self, query_embedding: tuple[float, ...], record: MemoryRecord, latest_index: int) -> float:
        w_rel, w_rec, w_imp = self.weights
        relevance = cosine(query_embedding, record.embedding)
        recency = math.exp(-self.decay * (latest_index - record.index))
        return w_rel * relevance + w_rec * recency + w_imp * record.importance

    def retrieve_associative(self, query: str, k: int) -> list[MemoryRecord]:
        """Top-k records by combined relevance, recency, and importance."""
        if k <= 0:
            return []
        records = self.snapshot()
        if not records:
            return []
        query_embedding = self.embedder.embed(query)
        latest_index = records[-1].index
        ranked = sorted(
            records,
            key=lambda r: (-self.score(query_embedding, r, latest_index), -r.index, r.index),
        )
        return ranked[: min(k, len(ranked))]

    def retrieve_recent(self, k: int) -> list[MemoryRecord]:
        """The k newest records, oldest of them first."""
        if k <= 0:
            return []
        records = self.snapshot()
        return records[-k:]

    def retrieve_by_time(self, start: datetime, end: datetime) -> list[MemoryRecord]:
        """Records with start <= timestamp <= end, in insertion order."""
        return [r for r in self.snapshot() if start <= r.timestamp <= end]

    def texts(self) -> list[str]:
        return [r.text for r in self.snapshot()]


def importance_from_model(model, prompt_template: str) -> Callable[[str], float]:
    """Build an importance scorer that asks a model to rate each new memory.

    The template must contain ``{text}``.  Non-numeric answers fall back to
    1.0; numeric answers are clamped into [0, 1].
    """
    from .errors import NotANumber
    from .kernel import parse_float_token

    def scorer(text: str) -> float:
        raw = model.sample_text(
            prompt_template.replace("{text}", text), caller="memory:importance"
        )
        try:
            value = float(parse_float_token(raw))
        except NotANumber:
            return 1.0
        return min(1.0, max(0.0, value))

    return scorer
