"""Lexical scoring layer: tokenizer, capitalization-based entity detection,
a BM25+ scorer with entity boosting, and document-to-document similarity."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import AbstractSet, Iterable, Mapping, Sequence

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Small fixed list of English function words; deliberately not a full NLP
# stopword inventory.
STOPWORDS = frozenset(
    """
    a about after also an and are as at be been but by for from had has have
    he her his i if in into is it its not of on or our s she that the their
    they this to was we were when which who will with you
    """.split()
)

_LEAD_TRIM = "\"'“”‘’([{<«"
_TAIL_TRIM = "\"'“”‘’)]}>»"
_SENTENCE_END = (".", "!", "?", "…")


class LexIndexError(KeyError):
    """Raised when a document id is not present in the index."""


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.5
    b: float = 0.75
    delta: float = 1.0
    entity_boost: float = 3.0


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; underscores and punctuation split."""
    return _TOKEN_RE.findall(text.lower())


def extract_entities(texts: Iterable[str], stopwords: AbstractSet[str] = STOPWORDS) -> frozenset[str]:
    """Terms that appear capitalized in a non-sentence-initial position at
    least once, excluding stopwords.

    Sentence starts are the first word of each line and any word following
    sentence-ending punctuation.
    """
    entities: set[str] = set()
    for text in texts:
        for line in text.splitlines():
            at_start = True
            for word in line.split():
                core = word.strip(_LEAD_TRIM + _TAIL_TRIM)
                if core:
                    if core[0].isalpha() and core[0].isupper() and not at_start:
                        tokens = tokenize(core)
                        if tokens and tokens[0] not in stopwords:
                            entities.add(tokens[0])
                at_start = word.rstrip(_TAIL_TRIM).endswith(_SENTENCE_END)
    return frozenset(entities)


@dataclass
class LexIndex:
    """Immutable token statistics over one document collection."""

    doc_ids: tuple[str, ...]
    term_freqs: dict[str, Counter]
    doc_lens: dict[str, int]
    doc_freq: Counter
    n_docs: int
    avgdl: float

    @classmethod
    def build(cls, texts: Mapping[str, str]) -> "LexIndex":
        term_freqs: dict[str, Counter] = {}
        doc_lens: dict[str, int] = {}
        doc_freq: Counter = Counter()
        for doc_id, text in texts.items():
            tokens = tokenize(text)
            counts = Counter(tokens)
            term_freqs[doc_id] = counts
            doc_lens[doc_id] = len(tokens)
            for term in counts:
                doc_freq[term] += 1
        n = len(term_freqs)
        avgdl = sum(doc_lens.values()) / n if n else 0.0
        return cls(
            doc_ids=tuple(texts),
            term_freqs=term_freqs,
            doc_lens=doc_lens,
            doc_freq=doc_freq,
            n_docs=n,
            avgdl=avgdl,
        )

    @property
    def vocabulary(self) -> AbstractSet[str]:
        return self.doc_freq.keys()

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        if df == 0:
            return 0.0
        return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)

    def _check(self, doc_id: str) -> None:
        if doc_id not in self.term_freqs:
            raise LexIndexError(f"unknown document id {doc_id!r}")


def bm25_plus(
    query_terms: Sequence[str],
    doc_id: str,
    index: LexIndex,
    params: Bm25Params = Bm25Params(),
    entities: AbstractSet[str] = frozenset(),
) -> float:
    """Sum of per-term BM25+ contributions, tripled (by default) for entity
    terms.

    Query terms outside the corpus vocabulary contribute nothing. Terms known
    to the corpus but absent from this document contribute the delta floor.
    """
    index._check(doc_id)
    tf = index.term_freqs[doc_id]
    dl = index.doc_lens[doc_id]
    norm = params.k1 * (1.0 - params.b + (params.b * dl / index.avgdl if index.avgdl > 0 else 0.0))
    score = 0.0
    for term in query_terms:
        idf = index.idf(term)
        if idf == 0.0:
            continue
        boost = params.entity_boost if term in entities else 1.0
        f = tf.get(term, 0)
        ratio = f * (params.k1 + 1.0) / (f + norm) if f else 0.0
        score += idf * boost * (ratio + params.delta)
    return score


def top_terms(doc_id: str, index: LexIndex, k: int = 20) -> list[str]:
    """The document's k strongest terms by tf*idf, ties broken by term."""
    index._check(doc_id)
    tf = index.term_freqs[doc_id]
    ranked = sorted(tf, key=lambda t: (-tf[t] * index.idf(t), t))
    return ranked[:k]


def lexical_similarity(
    a: str,
    b: str,
    index: LexIndex,
    params: Bm25Params = Bm25Params(),
    entities: AbstractSet[str] = frozenset(),
    profile_size: int = 20,
) -> float:
    """Symmetrized, self-normalized BM25+ similarity between two documents,
    clamped to [0, 1]. If either document has a zero self-score (for example
    an empty document), the pair similarity is 0."""
    profile_a = top_terms(a, index, profile_size)
    profile_b = top_terms(b, index, profile_size)
    self_a = bm25_plus(profile_a, a, index, params, entities)
    self_b = bm25_plus(profile_b, b, index, params, entities)
    if self_a <= 0.0 or self_b <= 0.0:
        return 0.0
    raw_ab = bm25_plus(profile_a, b, index, params, entities) / self_a
    raw_ba = bm25_plus(profile_b, a, index, params, entities) / self_b
    sim = 0.5 * (raw_ab + raw_ba)
    return min(1.0, max(0.0, sim))
