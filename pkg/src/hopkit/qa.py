"""The IR baseline answerer, accuracy evaluation, and overlap statistics.

Also defines the pluggable scorer contract (per-choice real score, higher
is better) used by the distractor pipeline, plus the JSON-lines exchange
format that lets out-of-process models participate without being linked.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .corpus import TokenBag, stem_set, tokenize_normalize
from .errors import HopkitError
from .index import InvertedIndex, search
from .retrieval import query_tokens


@dataclass(frozen=True)
class Choice:
    label: str
    text: str


@dataclass
class MCQuestion:
    """A multiple-choice question in the 8-way dataset format.

    Labels are single letters, unique and consecutive from 'A'; the answer
    key must be one of them.  fact1/fact2/combined_fact carry the annotated
    sentence pair and its composition when available.
    """

    id: str
    stem: str
    choices: list[Choice]
    answer_key: str
    fact1: str | None = None
    fact2: str | None = None
    combined_fact: str | None = None

    def __post_init__(self) -> None:
        labels = [c.label for c in self.choices]
        expected = [chr(ord("A") + i) for i in range(len(labels))]
        if labels != expected:
            raise ValueError(f"question {self.id}: labels {labels} not consecutive from 'A'")
        if self.answer_key not in labels:
            raise ValueError(f"question {self.id}: answer key {self.answer_key!r} not among labels")

    @property
    def answer_text(self) -> str:
        for choice in self.choices:
            if choice.label == self.answer_key:
                return choice.text
        raise AssertionError("unreachable: answer key validated in __post_init__")

    def choice_text(self, label: str) -> str:
        for choice in self.choices:
            if choice.label == label:
                return choice.text
        raise KeyError(label)


@dataclass(frozen=True)
class ScorerVerdict:
    per_choice: dict[str, float]
    chosen: str


class Scorer(Protocol):
    """Per-choice real score, higher is better.

    Implementations must be safe for concurrent read-only use; anything
    stateful should serialize its own calls.
    """

    name: str

    def score(self, question: MCQuestion, choice_text: str) -> float: ...


def ir_score(index: InvertedIndex, stem_text: str, choice_text: str) -> float:
    """Highest score among sentences overlapping both the question stem and
    the choice; 0.0 when nothing qualifies."""
    hits = search(
        index,
        query_tokens(stem_text, choice_text),
        1,
        must_contain_any=(stem_set(stem_text), stem_set(choice_text)),
    )
    return hits[0].score if hits else 0.0


class IRScorer:
    """Retrieval-score baseline: answer with the highest scoring sentence."""

    def __init__(self, index: InvertedIndex, name: str = "ir"):
        self.index = index
        self.name = name

    def score(self, question: MCQuestion, choice_text: str) -> float:
        return ir_score(self.index, question.stem, choice_text)


class FileScorer:
    """Scores ingested from a JSON-lines file.

    Rows are {"id", "label", "score"} for dataset choices or
    {"id", "text", "score"} for arbitrary candidate strings.
    """

    def __init__(self, path: str | Path, name: str | None = None):
        self.name = name or f"file:{path}"
        self.by_label: dict[tuple[str, str], float] = {}
        self.by_text: dict[tuple[str, str], float] = {}
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                if "score" not in row:
                    raise HopkitError(f"{path}:{lineno}: row has no score")
                if "label" in row:
                    self.by_label[(row["id"], row["label"])] = float(row["score"])
                elif "text" in row:
                    self.by_text[(row["id"], row["text"])] = float(row["score"])
                else:
                    raise HopkitError(f"{path}:{lineno}: row needs 'label' or 'text'")

    def score(self, question: MCQuestion, choice_text: str) -> float:
        key = (question.id, choice_text)
        if key in self.by_text:
            return self.by_text[key]
        for choice in question.choices:
            if choice.text == choice_text and (question.id, choice.label) in self.by_label:
                return self.by_label[(question.id, choice.label)]
        raise HopkitError(
            f"scorer {self.name}: no score for question {question.id!r} choice {choice_text!r}"
        )


def answer(scorer: Scorer, question: MCQuestion) -> ScorerVerdict:
    """Argmax choice; ties break to the earliest label."""
    per_choice: dict[str, float] = {}
    best_label = None
    best_score = -math.inf
    for choice in question.choices:
        value = scorer.score(question, choice.text)
        if not math.isfinite(value):
            raise HopkitError(
                f"scorer {getattr(scorer, 'name', scorer)!r} returned non-finite "
                f"score {value!r} for question {question.id} choice {choice.label}"
            )
        per_choice[choice.label] = value
        if value > best_score:
            best_score = value
            best_label = choice.label
    if best_label is None:
        raise HopkitError(f"question {question.id} has no choices")
    return ScorerVerdict(per_choice, best_label)


def eval_accuracy(scorer: Scorer, dataset) -> float:
    """Fraction of questions where the argmax choice is the answer key."""
    questions = list(dataset)
    if not questions:
        return 0.0
    correct = sum(answer(scorer, q).chosen == q.answer_key for q in questions)
    return correct / len(questions)


# ---------------------------------------------------------------------------
# Overlap statistics


@dataclass
class OverlapReport:
    """How much each annotated fact overlaps the question+answer tokens."""

    fraction_below: dict[int, float] = field(default_factory=dict)
    mean_fact1: float = 0.0
    mean_fact2: float = 0.0
    n_used: int = 0
    n_skipped: int = 0

    def to_table(self) -> str:
        lines = ["metric\tvalue"]
        for k in sorted(self.fraction_below):
            lines.append(f"pct_min_overlap_lt_{k}\t{100.0 * self.fraction_below[k]:.9f}")
        lines.append(f"mean_overlap_fact1\t{self.mean_fact1:.9f}")
        lines.append(f"mean_overlap_fact2\t{self.mean_fact2:.9f}")
        lines.append(f"questions_used\t{self.n_used}")
        lines.append(f"questions_skipped\t{self.n_skipped}")
        return "\n".join(lines) + "\n"


def _overlap(fact_bag: TokenBag, qa_bag: TokenBag, occurrences: bool) -> int:
    shared = fact_bag.keys() & qa_bag.keys()
    if occurrences:
        return sum(min(fact_bag[t], qa_bag[t]) for t in shared)
    return len(shared)


def overlap_stats(dataset, thresholds=(2, 3, 4), count_occurrences: bool = False) -> OverlapReport:
    """For each threshold k, the fraction of questions where the less
    overlapping of the two facts shares fewer than k stems with q+a, plus
    the mean overlap of each fact.  Distinct stems by default; set
    count_occurrences to count token occurrences instead.
    """
    report = OverlapReport(fraction_below={k: 0.0 for k in thresholds})
    below = {k: 0 for k in thresholds}
    sum1 = sum2 = 0
    for question in dataset:
        if not question.fact1 or not question.fact2:
            report.n_skipped += 1
            continue
        qa_bag = query_tokens(question.stem, question.answer_text)
        o1 = _overlap(tokenize_normalize(question.fact1), qa_bag, count_occurrences)
        o2 = _overlap(tokenize_normalize(question.fact2), qa_bag, count_occurrences)
        report.n_used += 1
        sum1 += o1
        sum2 += o2
        for k in thresholds:
            below[k] += min(o1, o2) < k
    if report.n_used:
        report.fraction_below = {k: below[k] / report.n_used for k in thresholds}
        report.mean_fact1 = sum1 / report.n_used
        report.mean_fact2 = sum2 / report.n_used
    return report


# ---------------------------------------------------------------------------
# 8-way MCQ JSON-lines dataset format


def question_from_json(row: dict) -> MCQuestion:
    q = row["question"]
    return MCQuestion(
        id=row["id"],
        stem=q["stem"],
        choices=[Choice(c["label"], c["text"]) for c in q["choices"]],
        answer_key=row["answerKey"],
        fact1=row.get("fact1"),
        fact2=row.get("fact2"),
        combined_fact=row.get("combinedfact"),
    )


def question_to_json(question: MCQuestion) -> dict:
    row = {
        "id": question.id,
        "question": {
            "stem": question.stem,
            "choices": [{"label": c.label, "text": c.text} for c in question.choices],
        },
        "answerKey": question.answer_key,
    }
    if question.fact1 is not None:
        row["fact1"] = question.fact1
    if question.fact2 is not None:
        row["fact2"] = question.fact2
    if question.combined_fact is not None:
        row["combinedfact"] = question.combined_fact
    return row


def load_questions(path: str | Path, require_mcq_shape: bool = False) -> list[MCQuestion]:
    questions = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                question = question_from_json(json.loads(line))
            except (KeyError, ValueError) as exc:
                raise HopkitError(f"{path}:{lineno}: bad question record: {exc}") from exc
            if require_mcq_shape and not 4 <= len(question.choices) <= 8:
                raise HopkitError(
                    f"{path}:{lineno}: question {question.id} has "
                    f"{len(question.choices)} choices, expected 4..8"
                )
            questions.append(question)
    return questions


def save_questions(questions, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for question in questions:
            handle.write(json.dumps(question_to_json(question)) + "\n")


def emit_score_requests(dataset, path: str | Path) -> None:
    """Write one {"id", "label", "stem", "choice"} row per (question, choice)
    so an external scorer can fill in scores and hand back a FileScorer file."""
    with open(path, "w", encoding="utf-8") as handle:
        for question in sorted(dataset, key=lambda q: q.id):
            for choice in question.choices:
                handle.write(
                    json.dumps(
                        {
                            "id": question.id,
                            "label": choice.label,
                            "stem": question.stem,
                            "choice": choice.text,
                        }
                    )
                    + "\n"
                )
