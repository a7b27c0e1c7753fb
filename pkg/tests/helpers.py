"""Shared builders and independent reference implementations used by the
test suite. The reference functions deliberately avoid the package's own
index/statistics code paths so the tests stay a second opinion."""

from __future__ import annotations

import math
import random
from collections import Counter
from typing import AbstractSet, Mapping, Sequence

from causeway.corpus import LETTERS, QuestionRecord

NONE_TEXT = "None of the others are correct causes."


def make_question(
    qid: str = "q1",
    topic: int = 1,
    event: str = "The port closed",
    a: str = "alpha",
    b: str = "beta",
    c: str = "gamma",
    d: str = "delta",
    gold: AbstractSet[str] | None = None,
) -> QuestionRecord:
    return QuestionRecord(
        topic_id=topic,
        id=qid,
        target_event=event,
        options={"A": a, "B": b, "C": c, "D": d},
        gold=frozenset(gold) if gold is not None else None,
    )


# ---------------------------------------------------------------------------
# Hand-scored metric table: (prediction, gold, expected score).

METRIC_CASES = [
    ({"A"}, {"A"}, 1.0),
    ({"B"}, {"B"}, 1.0),
    ({"A", "C"}, {"A", "C"}, 1.0),
    ({"A", "B", "C", "D"}, {"A", "B", "C", "D"}, 1.0),
    ({"D"}, {"D"}, 1.0),
    ({"A"}, {"A", "B"}, 0.5),
    ({"B"}, {"A", "B", "C"}, 0.5),
    ({"A", "C"}, {"A", "B", "C"}, 0.5),
    ({"A", "B", "C"}, {"A", "B", "C", "D"}, 0.5),
    ({"C"}, {"C", "D"}, 0.5),
    ({"A", "B"}, {"A"}, 0.0),
    ({"A", "B", "C", "D"}, {"B"}, 0.0),
    ({"A", "B"}, {"B", "C"}, 0.0),
    ({"A", "D"}, {"A", "B", "C"}, 0.0),
    ({"A"}, {"B"}, 0.0),
    ({"C"}, {"A", "B"}, 0.0),
    ({"D"}, {"A", "B", "C"}, 0.0),
    (set(), {"A"}, 0.0),
    (set(), {"A", "B"}, 0.0),
    ({"B", "D"}, {"B", "C"}, 0.0),
]


# ---------------------------------------------------------------------------
# BM25+ reference: direct formula evaluation over raw token lists.


def bm25_reference(
    query_terms: Sequence[str],
    doc_tokens: Mapping[str, Sequence[str]],
    doc_id: str,
    k1: float = 1.5,
    b: float = 0.75,
    delta: float = 1.0,
    entities: AbstractSet[str] = frozenset(),
    entity_boost: float = 3.0,
) -> float:
    n_docs = len(doc_tokens)
    vocabulary = set()
    for tokens in doc_tokens.values():
        vocabulary.update(tokens)
    lengths = {d: len(tokens) for d, tokens in doc_tokens.items()}
    avgdl = sum(lengths.values()) / n_docs if n_docs else 0.0
    tf = Counter(doc_tokens[doc_id])
    dl = lengths[doc_id]
    score = 0.0
    for term in query_terms:
        if term not in vocabulary:
            continue
        df = sum(1 for tokens in doc_tokens.values() if term in set(tokens))
        idf = math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)
        boost = entity_boost if term in entities else 1.0
        f = tf.get(term, 0)
        if f:
            denom = f + k1 * (1.0 - b + b * dl / avgdl)
            part = f * (k1 + 1.0) / denom + delta
        else:
            part = delta
        score += idf * boost * part
    return score


# ---------------------------------------------------------------------------
# Connected-component reference for retrieval: union-find over kept edges.


class DisjointSet:
    def __init__(self, items: Sequence[str]):
        self.parent = {x: x for x in items}

    def find(self, x: str) -> str:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def component_reference(
    nodes: Sequence[str],
    edges: Sequence[tuple[str, str, float]],
    entries: Sequence[str],
    threshold: float,
) -> set[str]:
    ds = DisjointSet(nodes)
    for a, b, w in edges:
        if w >= threshold:
            ds.union(a, b)
    roots = {ds.find(e) for e in entries}
    return {n for n in nodes if ds.find(n) in roots}


# ---------------------------------------------------------------------------
# Agreement references: definition-level loops.


def fleiss_reference(items: Sequence[Sequence[str]]) -> float:
    n = len(items[0])
    categories = sorted({c for row in items for c in row})
    table = [[row.count(c) for c in categories] for row in items]
    p_i = [(sum(x * x for x in counts) - n) / (n * (n - 1)) for counts in table]
    p_bar = sum(p_i) / len(items)
    totals = [sum(row[j] for row in table) for j in range(len(categories))]
    grand = len(items) * n
    p_e = sum((t / grand) ** 2 for t in totals)
    if p_e >= 1.0:
        return 1.0
    return (p_bar - p_e) / (1.0 - p_e)


def cohen_reference(a: Sequence[str], b: Sequence[str]) -> float:
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    categories = sorted(set(a) | set(b))
    p_e = sum((a.count(c) / n) * (b.count(c) / n) for c in categories)
    if p_e >= 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def krippendorff_reference(
    units: Sequence[Sequence[frozenset]],
    metric: str = "nominal",
) -> float:
    def dist(x: frozenset, y: frozenset) -> float:
        if metric == "nominal":
            return 0.0 if x == y else 1.0
        union = x | y
        if not union:
            return 0.0
        return 1.0 - len(x & y) / len(union)

    pairable = [list(u) for u in units if len(u) >= 2]
    n_values = sum(len(u) for u in pairable)
    d_o = 0.0
    for unit in pairable:
        m = len(unit)
        acc = 0.0
        for i in range(m):
            for j in range(m):
                if i != j:
                    acc += dist(unit[i], unit[j])
        d_o += acc / (m - 1)
    d_o /= n_values
    flat = [v for u in pairable for v in u]
    d_e = 0.0
    for i in range(len(flat)):
        for j in range(len(flat)):
            if i != j:
                d_e += dist(flat[i], flat[j])
    d_e /= n_values * (n_values - 1)
    if d_e == 0.0:
        return 1.0
    return 1.0 - d_o / d_e


# ---------------------------------------------------------------------------
# Random sibling groups for the consistency engine.


def random_sibling_group(
    rng: random.Random, group_index: int
) -> tuple[list[QuestionRecord], dict[str, frozenset[str]]]:
    topic = group_index
    event = f"event number {group_index}"
    pool = [f"cause {i}" for i in range(rng.randint(2, 6))]
    questions: list[QuestionRecord] = []
    preds: dict[str, frozenset[str]] = {}
    for j in range(rng.randint(1, 4)):
        options = {}
        for letter in LETTERS:
            if rng.random() < 0.2:
                options[letter] = NONE_TEXT
            else:
                options[letter] = rng.choice(pool)
        q = QuestionRecord(
            topic_id=topic,
            id=f"g{group_index}q{j}",
            target_event=event,
            options=options,
        )
        questions.append(q)
        preds[q.id] = frozenset(rng.sample(LETTERS, rng.randint(1, 4)))
    return questions, preds
