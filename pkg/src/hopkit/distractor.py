"""Adversarial distractor generation for 8-way question assembly.

Candidates are correct answers drawn from the most dissimilar questions of
the same fold, length-filtered, pruned by a baseline scorer, then ranked
by how many scorer models prefer them over the correct answer.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .corpus import stem_set
from .errors import HopkitError, InsufficientCandidatesError
from .qa import Choice, MCQuestion, Scorer


@dataclass(frozen=True)
class AdversarialConfig:
    pool_dissimilar_n: int = 300
    pool_keep_top: int = 30
    token_slack: int = 2
    char_ratio_slack: float = 0.5
    k_models: int = 2
    target_ways: int = 8

    def __post_init__(self) -> None:
        for name in ("pool_dissimilar_n", "pool_keep_top", "token_slack",
                     "char_ratio_slack", "k_models", "target_ways"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class DistractorCandidate:
    text: str
    source_question_id: str
    per_model: list[float]
    fooled_count: int
    margin_sum: float


def _fact_stems(question: MCQuestion) -> frozenset[str]:
    if not question.fact1 or not question.fact2:
        raise HopkitError(f"question {question.id} is missing fact annotations")
    return stem_set(question.fact1) | stem_set(question.fact2)


def question_similarity(qa: MCQuestion, qb: MCQuestion) -> int:
    """Distinct stems shared between the two questions' source-fact pairs.

    Lower is more dissimilar; dissimilarity ranking sorts ascending with
    ties broken by question id.
    """
    return len(_fact_stems(qa) & _fact_stems(qb))


def rank_by_dissimilarity(
    question: MCQuestion, fold_questions
) -> list[MCQuestion]:
    """Other questions of the fold, most dissimilar first."""
    others = [q for q in fold_questions if q.id != question.id]
    return sorted(others, key=lambda q: (question_similarity(question, q), q.id))


def candidate_pool_with_sources(
    question: MCQuestion, fold_questions, config: AdversarialConfig = AdversarialConfig()
) -> list[tuple[str, str]]:
    """(text, source question id) pairs surviving the pool filters."""
    answer = question.answer_text
    ranked = rank_by_dissimilarity(question, fold_questions)[: config.pool_dissimilar_n]
    answer_tokens = len(answer.split())
    char_lo = len(answer) * (1.0 - config.char_ratio_slack)
    char_hi = len(answer) * (1.0 + config.char_ratio_slack)
    taken = {choice.text.casefold() for choice in question.choices}
    pool: list[tuple[str, str]] = []
    for other in ranked:
        text = other.answer_text
        if abs(len(text.split()) - answer_tokens) > config.token_slack:
            continue
        if not char_lo <= len(text) <= char_hi:
            continue
        key = text.casefold()
        if key in taken:
            continue
        taken.add(key)
        pool.append((text, other.id))
    if len(pool) < config.target_ways - 1:
        raise InsufficientCandidatesError(
            f"question {question.id}: only {len(pool)} pool candidates for "
            f"{config.target_ways}-way assembly; relax token/char slack or "
            f"widen pool_dissimilar_n"
        )
    return pool


def candidate_pool(
    question: MCQuestion, fold_questions, config: AdversarialConfig = AdversarialConfig()
) -> list[str]:
    return [text for text, _ in candidate_pool_with_sources(question, fold_questions, config)]


def prune_by_scorer(
    scorer: Scorer, question: MCQuestion, candidates, keep_top: int = 30
) -> list[str]:
    """Keep the most distracting candidates: highest scorer score against
    the question, ties by text."""
    texts = [c if isinstance(c, str) else c[0] for c in candidates]
    scored = sorted(
        texts, key=lambda text: (-scorer.score(question, text), text)
    )
    return scored[:keep_top]


def _checked_score(scorer: Scorer, question: MCQuestion, text: str) -> float:
    value = scorer.score(question, text)
    if not math.isfinite(value):
        raise HopkitError(
            f"scorer {getattr(scorer, 'name', scorer)!r} returned non-finite "
            f"score for candidate {text!r} on question {question.id}"
        )
    return value


def multi_adversary_rank(
    scorers, question: MCQuestion, candidates
) -> list[DistractorCandidate]:
    """Sort candidates by (models fooled desc, score-margin sum desc, text).

    A model is fooled when it scores the distractor strictly above the
    correct answer.  Scores are used raw; any per-model normalization is
    the scorer's own business.
    """
    scorers = list(scorers)
    if not scorers:
        raise HopkitError("multi_adversary_rank needs at least one scorer")
    answer = question.answer_text
    answer_scores = [_checked_score(s, question, answer) for s in scorers]
    ranked: list[DistractorCandidate] = []
    for cand in candidates:
        text, source = (cand, "") if isinstance(cand, str) else (cand[0], cand[1])
        per_model = [_checked_score(s, question, text) for s in scorers]
        fooled = sum(per > ans for per, ans in zip(per_model, answer_scores))
        margin = sum(per - ans for per, ans in zip(per_model, answer_scores))
        ranked.append(DistractorCandidate(text, source, per_model, fooled, margin))
    ranked.sort(key=lambda c: (-c.fooled_count, -c.margin_sum, c.text))
    return ranked


def assemble_8way(
    question: MCQuestion,
    ranked_candidates,
    target_ways: int = 8,
    shuffle_seed: int | str = 0,
) -> MCQuestion:
    """Fill the question to target_ways choices and reshuffle.

    Existing choices (the correct answer plus any surviving human-authored
    distractors) are kept verbatim; top-ranked candidates fill the gap.
    The shuffle is fully determined by shuffle_seed.
    """
    existing = list(question.choices)
    if len(existing) > target_ways:
        raise HopkitError(
            f"question {question.id} already has {len(existing)} choices, "
            f"more than target {target_ways}"
        )
    taken = {choice.text.casefold() for choice in existing}
    fill: list[str] = []
    for cand in ranked_candidates:
        if len(existing) + len(fill) == target_ways:
            break
        text = cand.text if isinstance(cand, DistractorCandidate) else str(cand)
        if text.casefold() in taken:
            continue
        taken.add(text.casefold())
        fill.append(text)
    if len(existing) + len(fill) < target_ways:
        raise InsufficientCandidatesError(
            f"question {question.id}: {len(existing)} existing + {len(fill)} "
            f"ranked candidates cannot fill {target_ways} ways"
        )
    answer_text = question.answer_text
    texts = [choice.text for choice in existing] + fill
    random.Random(str(shuffle_seed)).shuffle(texts)
    choices = [Choice(chr(ord("A") + i), text) for i, text in enumerate(texts)]
    answer_key = next(c.label for c in choices if c.text == answer_text)
    return MCQuestion(
        id=question.id,
        stem=question.stem,
        choices=choices,
        answer_key=answer_key,
        fact1=question.fact1,
        fact2=question.fact2,
        combined_fact=question.combined_fact,
    )
