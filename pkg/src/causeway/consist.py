"""Deterministic post-hoc consistency enforcement over sibling questions.

Eight rules run in a fixed order, over and over, until a full pass changes
nothing. Shared option texts carry three-valued truth (True, False, Unknown)
that only ever hardens from Unknown; conflicting evidence is recorded as a
contradiction and never applied.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import (
    LETTERS,
    QuestionRecord,
    detect_none_option,
    normalize_text,
)

logger = logging.getLogger(__name__)

RULES = ("R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8")

FULL_SET = frozenset(LETTERS)


class ConsistError(ValueError):
    pass


@dataclass(frozen=True)
class ChangeRecord:
    question_id: str
    rule: str
    before: frozenset[str]
    after: frozenset[str]
    iteration: int

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "rule": self.rule,
            "before": ",".join(sorted(self.before)),
            "after": ",".join(sorted(self.after)),
            "iteration": self.iteration,
        }


@dataclass(frozen=True)
class Contradiction:
    rule: str
    question_id: str
    text: str
    detail: str

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "question_id": self.question_id,
            "text": self.text,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class TruthTransition:
    group_key: tuple[int, str]
    text: str
    old: bool | None
    new: bool
    rule: str
    iteration: int


@dataclass
class FixedPointReport:
    iterations: int
    converged: bool
    changes: list[ChangeRecord]
    rule_counts: dict[str, int]
    contradictions: list[Contradiction]
    truth_log: list[TruthTransition] = field(default_factory=list)


@dataclass
class ConsistencyOutcome:
    predictions: dict[str, frozenset[str]]
    report: FixedPointReport


class _QuestionFacts:
    """Precomputed per-question structure: normalized texts, rejection-style
    letters, and duplicate classes."""

    def __init__(self, q: QuestionRecord):
        self.q = q
        self.text = {l: normalize_text(q.options[l]) for l in LETTERS}
        self.none_letters = frozenset(l for l in LETTERS if detect_none_option(q.options[l]))
        by_text: dict[str, list[str]] = {}
        for letter in LETTERS:
            by_text.setdefault(self.text[letter], []).append(letter)
        self.classes = [frozenset(group) for group in sorted(by_text.values())]
        self.substantive = frozenset(LETTERS) - self.none_letters
        self.substantive_texts = sorted({self.text[l] for l in self.substantive})

    def is_none_only(self, pred: frozenset[str]) -> bool:
        return bool(pred) and pred <= self.none_letters


class TruthAssignment:
    """Monotone truth over one sibling group's substantive option texts.
    Unknown may harden to True or False; attempts to flip are recorded as
    contradictions and ignored."""

    def __init__(self, group_key: tuple[int, str]):
        self.group_key = group_key
        self._values: dict[str, bool] = {}
        self.transitions: list[TruthTransition] = []

    def value(self, text: str) -> bool | None:
        return self._values.get(text)

    def _mark(
        self,
        text: str,
        target: bool,
        rule: str,
        question_id: str,
        iteration: int,
        contradictions: list[Contradiction],
    ) -> bool:
        current = self._values.get(text)
        if current is None:
            self._values[text] = target
            self.transitions.append(
                TruthTransition(self.group_key, text, None, target, rule, iteration)
            )
            return True
        if current == target:
            return False
        contradictions.append(
            Contradiction(
                rule=rule,
                question_id=question_id,
                text=text,
                detail=f"cannot mark {target}, already {current}",
            )
        )
        return False

    def mark_true(self, text, rule, question_id, iteration, contradictions) -> bool:
        return self._mark(text, True, rule, question_id, iteration, contradictions)

    def mark_false(self, text, rule, question_id, iteration, contradictions) -> bool:
        return self._mark(text, False, rule, question_id, iteration, contradictions)


def r1_none_exclusivity(q: QuestionRecord, pred: frozenset[str]) -> frozenset[str]:
    """A rejection option cannot coexist with substantive picks; the
    substantive side wins."""
    facts = _QuestionFacts(q)
    if pred & facts.none_letters and pred - facts.none_letters:
        return pred - facts.none_letters
    return pred


def r2_duplicate_consistency(q: QuestionRecord, pred: frozenset[str]) -> frozenset[str]:
    """Selecting one member of a duplicate class selects the whole class."""
    facts = _QuestionFacts(q)
    out = set(pred)
    for cls in facts.classes:
        if out & cls:
            out |= cls
    return frozenset(out)


def r3_overselection_guard(q: QuestionRecord, pred: frozenset[str]) -> frozenset[str]:
    """All four letters selected alongside a rejection option: drop the
    rejection letters."""
    facts = _QuestionFacts(q)
    if pred == FULL_SET and facts.none_letters and pred - facts.none_letters:
        return pred - facts.none_letters
    return pred


def r5_triple_exclusion(q: QuestionRecord, pred: frozenset[str]) -> frozenset[str]:
    """Three identical options all selected: the odd letter out is dropped."""
    facts = _QuestionFacts(q)
    out = set(pred)
    for cls in facts.classes:
        if len(cls) == 3 and cls <= out:
            out -= FULL_SET - cls
    return frozenset(out)


def local_normalize(q: QuestionRecord, pred: frozenset[str]) -> frozenset[str]:
    """One pass of the per-question rules, used to sanitize a restored
    prediction so it still meets the output contract."""
    return r5_triple_exclusion(
        q, r3_overselection_guard(q, r2_duplicate_consistency(q, r1_none_exclusivity(q, pred)))
    )


def seed_truth(
    group: Sequence[QuestionRecord],
    predictions: Mapping[str, frozenset[str]],
    group_key: tuple[int, str],
) -> TruthAssignment:
    """Initial truth from the predictions: a substantive text selected
    anywhere in the group becomes True, except texts that co-occur with an
    initially selected rejection option. Those stay Unknown; rule R6 decides
    them. Selections are read through one local-rule pass so structural
    artifacts (rejection mixes, incomplete duplicate classes, overselected
    triples) do not seed truth."""
    truth = TruthAssignment(group_key)
    facts = [_QuestionFacts(q) for q in group]
    normalized = {
        f.q.id: local_normalize(f.q, predictions.get(f.q.id, frozenset())) for f in facts
    }
    blocked: set[str] = set()
    for f in facts:
        if f.is_none_only(normalized[f.q.id]):
            blocked.update(f.substantive_texts)
    sink: list[Contradiction] = []
    for f in facts:
        for letter in sorted(normalized[f.q.id] & f.substantive):
            text = f.text[letter]
            if text not in blocked:
                truth.mark_true(text, "seed", f.q.id, 0, sink)
    return truth


class _GroupState:
    def __init__(self, group: Sequence[QuestionRecord], key: tuple[int, str]):
        self.key = key
        self.facts = [_QuestionFacts(q) for q in group]
        self.truth: TruthAssignment | None = None


class _Engine:
    def __init__(self, questions: Sequence[QuestionRecord], predictions: Mapping[str, frozenset[str]]):
        self.questions = list(questions)
        by_id = {q.id: q for q in self.questions}
        for qid in predictions:
            if qid not in by_id:
                raise ConsistError(f"prediction for unknown question {qid!r}")
        for q in self.questions:
            pred = predictions.get(q.id)
            if pred is None:
                raise ConsistError(f"missing prediction for question {q.id!r}")
            if not pred or not set(pred) <= set(LETTERS):
                raise ConsistError(f"invalid prediction {sorted(pred)} for question {q.id!r}")
        self.preds: dict[str, frozenset[str]] = {qid: frozenset(p) for qid, p in predictions.items()}
        self.original = dict(self.preds)
        self.frozen: set[str] = set()
        # letters R5 removed; R4 must not reinstate them or the two rules
        # chase each other forever
        self._r5_stripped: set[tuple[str, str]] = set()
        grouped: dict[tuple[int, str], list[QuestionRecord]] = {}
        for q in self.questions:
            grouped.setdefault((q.topic_id, normalize_text(q.target_event)), []).append(q)
        self.groups = [_GroupState(members, key) for key, members in grouped.items()]
        self.changes: list[ChangeRecord] = []
        self.contradictions: list[Contradiction] = []
        self._seen_contradictions: set[tuple[str, str, str]] = set()
        self.iteration = 0

    def _contradict(self, rule: str, question_id: str, text: str, detail: str) -> None:
        key = (rule, question_id, text)
        if key in self._seen_contradictions:
            return
        self._seen_contradictions.add(key)
        self.contradictions.append(Contradiction(rule, question_id, text, detail))

    def _truth_size(self) -> int:
        return sum(len(state.truth.transitions) for state in self.groups if state.truth)

    def _set_pred(self, qid: str, after: frozenset[str], rule: str, force: bool = False) -> bool:
        if qid in self.frozen and not force:
            return False
        before = self.preds[qid]
        if before == after:
            return False
        if not after:
            raise ConsistError(f"{rule} tried to empty prediction for {qid!r}")
        self.preds[qid] = after
        self.changes.append(ChangeRecord(qid, rule, before, after, self.iteration))
        return True

    # Local rules applied question by question.

    def _apply_local(self, rule_name: str, fn) -> bool:
        changed = False
        for q in self.questions:
            after = fn(q, self.preds[q.id])
            changed |= self._set_pred(q.id, after, rule_name)
        return changed

    def _apply_r4(self) -> bool:
        changed = False
        for state in self.groups:
            truth = state.truth
            for f in state.facts:
                pred = self.preds[f.q.id]
                add = {
                    l
                    for l in f.substantive
                    if l not in pred
                    and (f.q.id, l) not in self._r5_stripped
                    and truth.value(f.text[l]) is True
                }
                if add:
                    changed |= self._set_pred(f.q.id, pred | add, "R4")
        return changed

    def _apply_r5(self) -> bool:
        # The pure rule plus bookkeeping: if the stripped letter's text is
        # True in the group, that conflict is recorded, and the strip is
        # remembered so R4 leaves it out.
        changed = False
        for state in self.groups:
            truth = state.truth
            for f in state.facts:
                pred = self.preds[f.q.id]
                for cls in f.classes:
                    if len(cls) != 3 or not cls <= pred:
                        continue
                    for odd in sorted(pred - cls):
                        if odd in f.substantive and truth.value(f.text[odd]) is True:
                            self._contradict(
                                "R5", f.q.id, f.text[odd], "stripped letter's text is True in the group"
                            )
                        pred = pred - {odd}
                        self._r5_stripped.add((f.q.id, odd))
                if pred != self.preds[f.q.id]:
                    changed |= self._set_pred(f.q.id, pred, "R5")
        return changed

    def _apply_r6(self) -> bool:
        changed = False
        for state in self.groups:
            truth = state.truth
            # marking: every substantive text of a rejection-only question is False
            for f in state.facts:
                if f.is_none_only(self.preds[f.q.id]):
                    for text in f.substantive_texts:
                        if truth.value(text) is True:
                            self._contradict(
                                "R6", f.q.id, text, "text is already True elsewhere in the group"
                            )
                        else:
                            truth.mark_false(text, "R6", f.q.id, self.iteration, self.contradictions)
            # unselection: drop False texts wherever selected, unless that
            # would empty a prediction (deferred to R7/R8)
            for f in state.facts:
                pred = set(self.preds[f.q.id])
                for text in f.substantive_texts:
                    if truth.value(text) is not False:
                        continue
                    letters = {l for l in f.substantive if f.text[l] == text and l in pred}
                    if letters and pred - letters:
                        pred -= letters
                if frozenset(pred) != self.preds[f.q.id]:
                    changed |= self._set_pred(f.q.id, frozenset(pred), "R6")
        return changed

    def _apply_r7(self) -> bool:
        for state in self.groups:
            truth = state.truth
            for f in state.facts:
                statuses = {t: truth.value(t) for t in f.substantive_texts}
                non_false = [t for t, s in statuses.items() if s is not False]
                if len(non_false) == 1 and statuses[non_false[0]] is None:
                    truth.mark_true(non_false[0], "R7", f.q.id, self.iteration, self.contradictions)
        return False  # R7 touches truth only; predictions move via R4/R8

    def _apply_r8(self) -> bool:
        changed = False
        for state in self.groups:
            truth = state.truth
            for f in state.facts:
                candidates = [
                    cls
                    for cls in f.classes
                    if cls & f.none_letters or truth.value(f.text[next(iter(cls))]) is not False
                ]
                if not candidates:
                    # Unsatisfiable question; put the normalized input back
                    # and stop touching it so the loop can settle.
                    self._contradict(
                        "R8", f.q.id, "", "every option is False; prediction restored to its input"
                    )
                    if f.q.id not in self.frozen:
                        restored = local_normalize(f.q, self.original[f.q.id])
                        changed |= self._set_pred(f.q.id, restored, "R8", force=True)
                        self.frozen.add(f.q.id)
                elif len(candidates) == 1:
                    target = frozenset(candidates[0])
                    changed |= self._set_pred(f.q.id, target, "R8")
        return changed

    def run(self, max_iterations: int = 10) -> ConsistencyOutcome:
        for state in self.groups:
            state.truth = seed_truth([f.q for f in state.facts], self.preds, state.key)
        converged = False
        iterations = 0
        for iteration in range(1, max_iterations + 1):
            self.iteration = iteration
            iterations = iteration
            truth_before = self._truth_size()
            changed = False
            changed |= self._apply_local("R1", r1_none_exclusivity)
            changed |= self._apply_local("R2", r2_duplicate_consistency)
            changed |= self._apply_local("R3", r3_overselection_guard)
            changed |= self._apply_r4()
            changed |= self._apply_r5()
            changed |= self._apply_r6()
            changed |= self._apply_r7()
            changed |= self._apply_r8()
            # new truth marks must feed R4 on the next pass even when no
            # prediction moved in this one
            if not changed and self._truth_size() == truth_before:
                converged = True
                break
        if not converged:
            logger.warning("consistency pass hit the iteration cap (%d)", max_iterations)
        # anything still selected against a False text could not be repaired
        for state in self.groups:
            for f in state.facts:
                for letter in sorted(self.preds[f.q.id] & f.substantive):
                    if state.truth.value(f.text[letter]) is False:
                        self._contradict(
                            "R6",
                            f.q.id,
                            f.text[letter],
                            "False text still selected after convergence",
                        )
        rule_counts = {rule: 0 for rule in RULES}
        for change in self.changes:
            rule_counts[change.rule] += 1
        truth_log: list[TruthTransition] = []
        for state in self.groups:
            truth_log.extend(state.truth.transitions)
        report = FixedPointReport(
            iterations=iterations,
            converged=converged,
            changes=self.changes,
            rule_counts=rule_counts,
            contradictions=self.contradictions,
            truth_log=truth_log,
        )
        return ConsistencyOutcome(predictions=dict(self.preds), report=report)


def run_to_fixed_point(
    questions: Sequence[QuestionRecord],
    predictions: Mapping[str, frozenset[str]],
    max_iterations: int = 10,
) -> ConsistencyOutcome:
    """Applies R1 through R8 over every question and sibling group until a
    full pass makes no change, or the iteration cap is hit (flagged via
    converged=False)."""
    return _Engine(questions, predictions).run(max_iterations=max_iterations)


def output_validity_violations(
    questions: Sequence[QuestionRecord], predictions: Mapping[str, frozenset[str]]
) -> list[str]:
    """Checks the output contract: non-empty subsets of A-D, no rejection
    letter mixed with substantive letters, duplicate classes all-in or
    all-out."""
    problems: list[str] = []
    for q in questions:
        pred = predictions.get(q.id)
        if pred is None:
            problems.append(f"{q.id}: missing prediction")
            continue
        if not pred:
            problems.append(f"{q.id}: empty prediction")
        if not set(pred) <= set(LETTERS):
            problems.append(f"{q.id}: letters outside A-D: {sorted(pred)}")
        facts = _QuestionFacts(q)
        if pred & facts.none_letters and pred - facts.none_letters:
            problems.append(f"{q.id}: rejection letter mixed with substantive letters")
        for cls in facts.classes:
            if pred & cls and not cls <= pred:
                problems.append(f"{q.id}: duplicate class {sorted(cls)} partially selected")
    return problems
