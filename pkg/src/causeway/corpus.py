"""Question and document corpus loading, plus the text canonicalization that
every equality check in the pipeline relies on."""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)

LETTERS = ("A", "B", "C", "D")

_WS_RE = re.compile(r"\s+")
_GOLD_SPLIT_RE = re.compile(r"[,\s]+")
_TRAILING_PUNCT = ".!?…"
_NONE_PREFIX = "none of the"

_QUESTION_FIELDS = (
    "topic_id",
    "id",
    "target_event",
    "option_A",
    "option_B",
    "option_C",
    "option_D",
)
_DOC_FIELDS = ("title", "id", "link", "snippet", "source", "content")


class CorpusError(ValueError):
    """Raised when an input file violates the corpus contract."""


@dataclass(frozen=True)
class QuestionRecord:
    topic_id: int
    id: str
    target_event: str
    options: dict[str, str]
    gold: frozenset[str] | None = None

    def option(self, letter: str) -> str:
        return self.options[letter]


@dataclass(frozen=True)
class DocumentRecord:
    topic_id: int
    id: str
    title: str
    snippet: str
    source: str
    link: str
    content: str


@dataclass(frozen=True)
class SiblingGroup:
    """Questions from one topic that share a normalized target event."""

    topic_id: int
    event_key: str
    question_ids: tuple[str, ...]


def _normalize_pass(text: str) -> str:
    out = unicodedata.normalize("NFC", text)
    out = out.casefold()
    # casefolding can decompose characters, so recompose before comparing
    out = unicodedata.normalize("NFC", out)
    out = _WS_RE.sub(" ", out).strip()
    out = out.rstrip(_TRAILING_PUNCT).rstrip()
    return out


def normalize_text(text: str) -> str:
    """Canonical form for equality checks: composed, casefolded, single-spaced,
    stripped of edge whitespace and trailing sentence punctuation.

    The pass is re-applied until the string stops changing, so the result is a
    fixed point and the function is idempotent by construction.
    """
    out = _normalize_pass(text)
    nxt = _normalize_pass(out)
    while nxt != out:
        out, nxt = nxt, _normalize_pass(nxt)
    return nxt


def detect_none_option(option_text: str) -> bool:
    """True when the option is a "none of the others" style rejection."""
    return normalize_text(option_text).startswith(_NONE_PREFIX)


def none_letters(q: QuestionRecord) -> frozenset[str]:
    return frozenset(l for l in LETTERS if detect_none_option(q.options[l]))


def duplicate_classes(q: QuestionRecord) -> tuple[frozenset[str], ...]:
    """Partition of the four letters by normalized option text, ordered by
    first member letter."""
    by_text: dict[str, list[str]] = {}
    for letter in LETTERS:
        by_text.setdefault(normalize_text(q.options[letter]), []).append(letter)
    return tuple(frozenset(group) for group in sorted(by_text.values()))


def sibling_groups(questions: list[QuestionRecord]) -> list[SiblingGroup]:
    """Group questions by (topic_id, normalized target event), preserving the
    input order of both groups and members."""
    grouped: dict[tuple[int, str], list[str]] = {}
    for q in questions:
        key = (q.topic_id, normalize_text(q.target_event))
        grouped.setdefault(key, []).append(q.id)
    return [
        SiblingGroup(topic_id=topic_id, event_key=event_key, question_ids=tuple(ids))
        for (topic_id, event_key), ids in grouped.items()
    ]


def parse_gold(raw: str) -> frozenset[str]:
    tokens = [t.upper() for t in _GOLD_SPLIT_RE.split(raw.strip()) if t]
    if not tokens or any(t not in LETTERS for t in tokens):
        raise CorpusError(f"invalid gold answer string: {raw!r}")
    return frozenset(tokens)


def document_text(doc: DocumentRecord) -> str:
    """Text used for indexing and embedding: title plus body."""
    if doc.title:
        return f"{doc.title}\n{doc.content}"
    return doc.content


def load_questions(path: str | Path) -> list[QuestionRecord]:
    """Read one question per JSONL line.

    Malformed JSON and missing required fields are fatal and carry the line
    number. Unknown fields are ignored with a log note. The gold answer is
    optional; when present it must be a non-empty comma-separated subset of
    A-D.
    """
    records: list[QuestionRecord] = []
    seen_ids: set[str] = set()
    known = set(_QUESTION_FIELDS) | {"golden_answer"}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: malformed JSON: {exc}") from exc
            missing = [k for k in _QUESTION_FIELDS if k not in row]
            if missing:
                raise CorpusError(f"{path}: line {lineno}: missing required fields {missing}")
            extra = sorted(set(row) - known)
            if extra:
                logger.info("%s: line %d: ignoring unknown fields %s", path, lineno, extra)
            qid = str(row["id"])
            if qid in seen_ids:
                raise CorpusError(f"{path}: line {lineno}: duplicate question id {qid!r}")
            seen_ids.add(qid)
            gold = None
            if row.get("golden_answer") is not None:
                try:
                    gold = parse_gold(str(row["golden_answer"]))
                except CorpusError as exc:
                    raise CorpusError(f"{path}: line {lineno}: {exc}") from exc
            records.append(
                QuestionRecord(
                    topic_id=int(row["topic_id"]),
                    id=qid,
                    target_event=str(row["target_event"]),
                    options={l: str(row[f"option_{l}"]) for l in LETTERS},
                    gold=gold,
                )
            )
    return records


def load_docs(path: str | Path) -> dict[int, list[DocumentRecord]]:
    """Read one topic per JSONL line, each carrying a document array.

    Documents with whitespace-only content are skipped with a warning; the
    rest of the topic still loads. Duplicate document ids within a topic are
    fatal. The imageUrl field is accepted and discarded.
    """
    topics: dict[int, list[DocumentRecord]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: malformed JSON: {exc}") from exc
            for key in ("topic_id", "docs"):
                if key not in row:
                    raise CorpusError(f"{path}: line {lineno}: missing required field {key!r}")
            topic_id = int(row["topic_id"])
            if topic_id in topics:
                raise CorpusError(f"{path}: line {lineno}: duplicate topic_id {topic_id}")
            docs: list[DocumentRecord] = []
            seen_ids: set[str] = set()
            for pos, item in enumerate(row["docs"]):
                missing = [k for k in _DOC_FIELDS if k not in item]
                if missing:
                    raise CorpusError(
                        f"{path}: line {lineno}: doc #{pos}: missing required fields {missing}"
                    )
                doc_id = str(item["id"])
                if doc_id in seen_ids:
                    raise CorpusError(
                        f"{path}: line {lineno}: duplicate doc id {doc_id!r} in topic {topic_id}"
                    )
                if not str(item["content"]).strip():
                    logger.warning(
                        "%s: line %d: doc %s has whitespace-only content, skipped",
                        path,
                        lineno,
                        doc_id,
                    )
                    continue
                seen_ids.add(doc_id)
                docs.append(
                    DocumentRecord(
                        topic_id=topic_id,
                        id=doc_id,
                        title=str(item["title"]),
                        snippet=str(item["snippet"]),
                        source=str(item["source"]),
                        link=str(item["link"]),
                        content=str(item["content"]),
                    )
                )
            if not docs:
                logger.warning("%s: line %d: topic %d has no usable documents", path, lineno, topic_id)
            topics[topic_id] = docs
    return topics


def question_to_row(q: QuestionRecord) -> dict:
    row: dict = {"topic_id": q.topic_id, "id": q.id, "target_event": q.target_event}
    for letter in LETTERS:
        row[f"option_{letter}"] = q.options[letter]
    if q.gold is not None:
        row["golden_answer"] = ",".join(sorted(q.gold))
    return row
