"""Topic document graphs: hybrid semantic/lexical edge weights, dense and
sparse entry points, component traversal, and a per-topic context cache."""

from __future__ import annotations

import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import LETTERS, DocumentRecord, QuestionRecord, document_text
from .embed import cosine
from .lexindex import (
    Bm25Params,
    LexIndex,
    bm25_plus,
    extract_entities,
    lexical_similarity,
    tokenize,
)

logger = logging.getLogger(__name__)

DENSE_ENTRY = "dense-entry"
SPARSE_ENTRY = "sparse-entry"
TRAVERSAL = "traversal"


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class HybridParams:
    alpha: float = 0.7
    edge_threshold: float = 0.4
    k_dense: int = 3
    k_sparse: int = 2


def hybrid_weight(sim_sem: float, sim_lex: float, alpha: float = 0.7) -> float:
    """Convex blend of semantic and lexical similarity."""
    for name, value in (("sim_sem", sim_sem), ("sim_lex", sim_lex), ("alpha", alpha)):
        if not 0.0 <= value <= 1.0:
            raise GraphError(f"{name} out of range: {value}")
    return alpha * sim_sem + (1.0 - alpha) * sim_lex


@dataclass
class DocGraph:
    topic_id: int
    nodes: tuple[str, ...]
    edges: list[tuple[str, str, float]]
    _adjacency: dict[str, list[tuple[str, float]]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        adj: dict[str, list[tuple[str, float]]] = {n: [] for n in self.nodes}
        for a, b, w in self.edges:
            adj[a].append((b, w))
            adj[b].append((a, w))
        for n in adj:
            adj[n].sort()
        self._adjacency = adj

    def neighbors(self, doc_id: str) -> list[tuple[str, float]]:
        if doc_id not in self._adjacency:
            raise GraphError(f"unknown node {doc_id!r}")
        return self._adjacency[doc_id]

    def to_json(self) -> dict:
        return {
            "topic_id": self.topic_id,
            "nodes": list(self.nodes),
            "edges": [{"a": a, "b": b, "w": w} for a, b, w in self.edges],
        }

    @classmethod
    def from_json(cls, data: dict) -> "DocGraph":
        return cls(
            topic_id=int(data["topic_id"]),
            nodes=tuple(data["nodes"]),
            edges=[(e["a"], e["b"], float(e["w"])) for e in data["edges"]],
        )


def build_graph(
    topic_id: int,
    docs: Sequence[DocumentRecord],
    embeddings: Mapping[str, np.ndarray],
    index: LexIndex,
    bm25_params: Bm25Params,
    entities: frozenset[str],
    params: HybridParams,
) -> DocGraph:
    """All-pairs hybrid weights; edges kept when the weight reaches the
    threshold (inclusive). Cosines are clamped into [0, 1] before blending."""
    ids = [d.id for d in docs]
    for doc_id in ids:
        if doc_id not in embeddings:
            raise GraphError(f"missing embedding for document {doc_id!r}")
    edges: list[tuple[str, str, float]] = []
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            sem = min(1.0, max(0.0, cosine(embeddings[a], embeddings[b])))
            lex = lexical_similarity(a, b, index, bm25_params, entities)
            w = hybrid_weight(sem, lex, params.alpha)
            if w >= params.edge_threshold:
                edges.append((a, b, w))
    return DocGraph(topic_id=topic_id, nodes=tuple(ids), edges=edges)


def make_query(q: QuestionRecord) -> str:
    """Target event followed by the four option texts, space-joined."""
    return " ".join([q.target_event] + [q.options[l] for l in LETTERS])


@dataclass(frozen=True)
class EntryPoints:
    dense: tuple[str, ...]
    sparse: tuple[str, ...]

    def ordered(self) -> list[str]:
        seen: list[str] = []
        for doc_id in (*self.dense, *self.sparse):
            if doc_id not in seen:
                seen.append(doc_id)
        return seen


def entry_points(
    query: str,
    doc_ids: Sequence[str],
    query_vec: np.ndarray,
    doc_vecs: Mapping[str, np.ndarray],
    index: LexIndex,
    bm25_params: Bm25Params,
    entities: frozenset[str],
    params: HybridParams,
) -> EntryPoints:
    """Top k_dense documents by query cosine plus top k_sparse by BM25+,
    each ranked descending with ties broken by ascending doc id."""
    dense_ranked = sorted(doc_ids, key=lambda d: (-cosine(query_vec, doc_vecs[d]), d))
    terms = tokenize(query)
    sparse_ranked = sorted(
        doc_ids, key=lambda d: (-bm25_plus(terms, d, index, bm25_params, entities), d)
    )
    return EntryPoints(
        dense=tuple(dense_ranked[: params.k_dense]),
        sparse=tuple(sparse_ranked[: params.k_sparse]),
    )


@dataclass
class RetrievalResult:
    topic_id: int
    query_text: str
    selected: list[str]
    provenance: dict[str, str]
    excluded: list[str]

    def to_json(self) -> dict:
        return {
            "topic_id": self.topic_id,
            "query_text": self.query_text,
            "selected": list(self.selected),
            "provenance": dict(self.provenance),
            "excluded": list(self.excluded),
        }


def retrieve(query: str, entries: EntryPoints, graph: DocGraph, params: HybridParams) -> RetrievalResult:
    """Breadth-first expansion from the entry points over edges at or above
    the threshold. Selected docs keep discovery order: dense entries, sparse
    entries, then traversal; everything else lands in excluded."""
    provenance: dict[str, str] = {}
    for doc_id in entries.dense:
        provenance[doc_id] = DENSE_ENTRY
    for doc_id in entries.sparse:
        provenance.setdefault(doc_id, SPARSE_ENTRY)
    order = entries.ordered()
    for doc_id in order:
        if doc_id not in graph._adjacency:
            raise GraphError(f"entry point {doc_id!r} is not a graph node")
    selected = list(order)
    seen = set(order)
    queue = deque(order)
    while queue:
        current = queue.popleft()
        for neighbor, w in graph.neighbors(current):
            if w >= params.edge_threshold and neighbor not in seen:
                seen.add(neighbor)
                provenance[neighbor] = TRAVERSAL
                selected.append(neighbor)
                queue.append(neighbor)
    excluded = sorted(set(graph.nodes) - seen)
    return RetrievalResult(
        topic_id=graph.topic_id,
        query_text=query,
        selected=selected,
        provenance=provenance,
        excluded=excluded,
    )


class TopicContextCache:
    """Retrieval results shared by every question of a topic.

    The first question pays for the computation; later questions reuse the
    stored result. Computation happens under the lock so an entry is written
    exactly once per topic even with concurrent callers.
    """

    def __init__(self) -> None:
        self._entries: dict[int, RetrievalResult] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get_or_compute(
        self, topic_id: int, compute: Callable[[], RetrievalResult]
    ) -> RetrievalResult:
        with self._lock:
            if topic_id in self._entries:
                self.hits += 1
                return self._entries[topic_id]
            result = compute()
            self._entries[topic_id] = result
            self.misses += 1
            return result

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0


class TopicRetriever:
    """Bundles one topic's documents, lexical index, entities, embeddings,
    and graph behind a query interface."""

    def __init__(
        self,
        topic_id: int,
        docs: Sequence[DocumentRecord],
        embedder,
        bm25_params: Bm25Params | None = None,
        params: HybridParams | None = None,
        entities: frozenset[str] | None = None,
        query_input_type: str | None = None,
        document_input_type: str | None = None,
        graph: DocGraph | None = None,
    ):
        self.topic_id = topic_id
        self.docs = list(docs)
        self.embedder = embedder
        self.bm25_params = bm25_params or Bm25Params()
        self.params = params or HybridParams()
        self.query_input_type = query_input_type
        texts = {d.id: document_text(d) for d in self.docs}
        self.index = LexIndex.build(texts)
        self.entities = entities if entities is not None else extract_entities(texts.values())
        vectors = embedder.embed_texts(
            [texts[d.id] for d in self.docs], input_type=document_input_type
        )
        self.doc_vecs = {d.id: v for d, v in zip(self.docs, vectors)}
        if graph is not None:
            if set(graph.nodes) != set(texts):
                raise GraphError(f"graph nodes do not match topic {topic_id} documents")
            self.graph = graph
        else:
            self.graph = build_graph(
                topic_id, self.docs, self.doc_vecs, self.index, self.bm25_params, self.entities, self.params
            )

    def retrieve_query(self, query: str) -> RetrievalResult:
        query_vec = self.embedder.embed_texts([query], input_type=self.query_input_type)[0]
        entries = entry_points(
            query,
            [d.id for d in self.docs],
            query_vec,
            self.doc_vecs,
            self.index,
            self.bm25_params,
            self.entities,
            self.params,
        )
        return retrieve(query, entries, self.graph, self.params)

    def retrieve_for_question(self, q: QuestionRecord) -> RetrievalResult:
        return self.retrieve_query(make_query(q))
