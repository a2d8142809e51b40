"""Leakage-aware train/dev/test assignment of seed facts.

Questions inherit the fold of their seed fact, so the assignment is per
fact.  The objective is the summed similarity of fact pairs that land in
different folds; fold question masses are constrained to the targets
within a slack band.  Infeasibility is reported, never silently relaxed.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

from .corpus import TokenBag, tokenize_normalize
from .errors import HopkitError, SplitSizeError

FOLDS = ("train", "dev", "test")
EXACT_SIZE_CAP = 18


@dataclass(frozen=True)
class SeedFact:
    id: str
    question_count: int
    tokens: TokenBag

    def __post_init__(self) -> None:
        if self.question_count < 1:
            raise ValueError(f"fact {self.id}: question_count must be >= 1")


def idf_table(facts) -> dict[str, float]:
    """idf(t) = ln(n_facts / df(t)) over the seed-fact collection."""
    facts = list(facts)
    df: dict[str, int] = {}
    for fact in facts:
        for term in fact.tokens:
            df[term] = df.get(term, 0) + 1
    n = len(facts)
    return {term: math.log(n / count) for term, count in df.items()}


def seed_fact_similarity(fa: TokenBag, fb: TokenBag, idf: dict[str, float]) -> float:
    """tf-idf weighted overlap, not normalized by length:
    sum over shared stems of idf(t) * min(tf_a, tf_b)."""
    return float(sum(idf.get(t, 0.0) * min(fa[t], fb[t]) for t in fa.keys() & fb.keys()))


@dataclass
class SplitProblem:
    facts: list[SeedFact]
    sim: dict[tuple[int, int], float]  # (i, k) with i < k, pruned below threshold
    fold_targets: tuple[float, float, float] = (0.78, 0.11, 0.11)
    slack: float = 0.01
    prune_threshold: float = 10.0

    @property
    def total_questions(self) -> int:
        return sum(f.question_count for f in self.facts)

    def mass_bounds(self) -> list[tuple[float, float]]:
        q = self.total_questions
        eps = 1e-9 * max(1, q)
        return [
            ((t - self.slack) * q - eps, (t + self.slack) * q + eps)
            for t in self.fold_targets
        ]


def build_problem(
    facts,
    targets: tuple[float, float, float] = (0.78, 0.11, 0.11),
    slack: float = 0.01,
    prune_threshold: float = 10.0,
) -> SplitProblem:
    """Compute all pairwise similarities, keep those at or above the prune
    threshold as graph edges.

    Accepts SeedFact objects or (id, question_count, text-or-bag) tuples.
    """
    if abs(sum(targets) - 1.0) > 1e-9:
        raise HopkitError(f"fold targets must sum to 1, got {targets}")
    seed_facts: list[SeedFact] = []
    for fact in facts:
        if isinstance(fact, SeedFact):
            seed_facts.append(fact)
        else:
            fid, count, tokens = fact
            if isinstance(tokens, str):
                tokens = tokenize_normalize(tokens)
            seed_facts.append(SeedFact(str(fid), int(count), tokens))
    idf = idf_table(seed_facts)
    sim: dict[tuple[int, int], float] = {}
    for i in range(len(seed_facts)):
        for k in range(i + 1, len(seed_facts)):
            value = seed_fact_similarity(seed_facts[i].tokens, seed_facts[k].tokens, idf)
            if value >= prune_threshold:
                sim[(i, k)] = value
    return SplitProblem(seed_facts, sim, tuple(targets), slack, prune_threshold)


@dataclass
class FoldAssignment:
    fold_of: dict[str, str]
    objective: float
    feasible: bool
    violation_report: dict[str, dict] | None = None

    def to_json(self) -> dict:
        row = {
            "fold_of": dict(sorted(self.fold_of.items())),
            "objective": round(self.objective, 9),
            "feasible": self.feasible,
        }
        if self.violation_report is not None:
            row["violation_report"] = self.violation_report
        return row

    def to_tsv(self) -> str:
        lines = [f"{fid}\t{fold}" for fid, fold in sorted(self.fold_of.items())]
        return "\n".join(lines) + ("\n" if lines else "")


def cross_fold_objective(problem: SplitProblem, labels: list[int]) -> float:
    """Recompute the objective from scratch; used as the solver self-audit."""
    return float(
        sum(value for (i, k), value in sorted(problem.sim.items()) if labels[i] != labels[k])
    )


def _masses(problem: SplitProblem, labels: list[int]) -> list[int]:
    masses = [0, 0, 0]
    for fact, fold in zip(problem.facts, labels):
        masses[fold] += fact.question_count
    return masses


def _violation(masses, bounds) -> float:
    total = 0.0
    for mass, (lo, hi) in zip(masses, bounds):
        if mass < lo:
            total += lo - mass
        elif mass > hi:
            total += mass - hi
    return total


def _report(problem: SplitProblem, masses, bounds) -> dict[str, dict]:
    report = {}
    for fold, mass, (lo, hi) in zip(FOLDS, masses, bounds):
        over = max(0.0, mass - hi)
        under = max(0.0, lo - mass)
        report[fold] = {
            "mass": mass,
            "lower": round(lo, 6),
            "upper": round(hi, 6),
            "deviation": round(over + under, 6),
        }
    return report


def _assignment(problem: SplitProblem, labels: list[int], objective: float,
                violation: float, bounds) -> FoldAssignment:
    fold_of = {fact.id: FOLDS[fold] for fact, fold in zip(problem.facts, labels)}
    feasible = violation == 0.0
    report = None if feasible else _report(problem, _masses(problem, labels), bounds)
    return FoldAssignment(fold_of, objective, feasible, report)


def solve_exact(problem: SplitProblem, size_cap: int = EXACT_SIZE_CAP) -> FoldAssignment:
    """Branch-and-bound over the 3-way labels, globally optimal.

    Minimizes (mass violation, objective) lexicographically, so the result
    is the minimum-objective feasible assignment when one exists and the
    least-violating assignment (with a violation report) otherwise.
    """
    n = len(problem.facts)
    if n == 0:
        return FoldAssignment({}, 0.0, _violation([0, 0, 0], problem.mass_bounds()) == 0.0)
    if n > size_cap:
        raise SplitSizeError(f"exact solver capped at {size_cap} facts, got {n}")
    bounds = problem.mass_bounds()
    order = sorted(range(n), key=lambda i: (-problem.facts[i].question_count, i))
    position = {fact_index: pos for pos, fact_index in enumerate(order)}
    # adjacency restricted to edges whose later endpoint (in search order)
    # is the current fact, so each edge is counted exactly once
    adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for (i, k), value in problem.sim.items():
        if position[i] < position[k]:
            adj[k].append((i, value))
        else:
            adj[i].append((k, value))
    counts = [problem.facts[i].question_count for i in range(n)]
    suffix_mass = [0] * (n + 1)
    for pos in range(n - 1, -1, -1):
        suffix_mass[pos] = suffix_mass[pos + 1] + counts[order[pos]]

    best_key = (math.inf, math.inf)
    best_labels: list[int] | None = None
    labels = [-1] * n
    masses = [0, 0, 0]

    def viol_lower_bound(remaining: int) -> float:
        over = sum(max(0.0, m - hi) for m, (_, hi) in zip(masses, bounds))
        headroom = sum(max(0.0, hi - m) for m, (_, hi) in zip(masses, bounds))
        forced_over = max(0.0, remaining - headroom)
        under_needed = sum(max(0.0, lo - m) for m, (lo, _) in zip(masses, bounds))
        uncoverable = max(0.0, under_needed - remaining)
        return over + forced_over + uncoverable

    def dfs(pos: int, objective: float) -> None:
        nonlocal best_key, best_labels
        remaining = suffix_mass[pos]
        if (viol_lower_bound(remaining), objective) >= best_key:
            return
        if pos == n:
            key = (_violation(masses, bounds), objective)
            if key < best_key:
                best_key = key
                best_labels = labels.copy()
            return
        fact_index = order[pos]
        for fold in range(3):
            delta = sum(
                value for other, value in adj[fact_index] if labels[other] != fold
            )
            labels[fact_index] = fold
            masses[fold] += counts[fact_index]
            dfs(pos + 1, objective + delta)
            masses[fold] -= counts[fact_index]
            labels[fact_index] = -1

    dfs(0, 0.0)
    assert best_labels is not None
    objective = cross_fold_objective(problem, best_labels)
    return _assignment(problem, best_labels, objective, best_key[0], bounds)


def _greedy_labels(problem: SplitProblem) -> list[int]:
    # fill folds largest-fact-first toward their target masses
    q = problem.total_questions
    deficits = [t * q for t in problem.fold_targets]
    labels = [0] * len(problem.facts)
    for i in sorted(range(len(problem.facts)),
                    key=lambda i: (-problem.facts[i].question_count, i)):
        fold = max(range(3), key=lambda j: deficits[j])
        labels[i] = fold
        deficits[fold] -= problem.facts[i].question_count
    return labels


def solve_heuristic(
    problem: SplitProblem,
    seed: int = 0,
    iterations: int = 20000,
    restarts: int = 10,
) -> FoldAssignment:
    """Simulated annealing over single-fact moves and pairwise swaps.

    Infeasibility is discouraged by a penalty large enough that any
    feasible assignment beats any infeasible one, and the best (violation,
    objective) state ever evaluated is what gets reported, so the result
    is feasible whenever a feasible assignment was visited.  Deterministic
    for a fixed seed.
    """
    n = len(problem.facts)
    bounds = problem.mass_bounds()
    if n == 0:
        return FoldAssignment({}, 0.0, _violation([0, 0, 0], bounds) == 0.0)
    penalty = sum(problem.sim.values()) + 1.0
    adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for (i, k), value in problem.sim.items():
        adj[i].append((k, value))
        adj[k].append((i, value))
    counts = [f.question_count for f in problem.facts]

    best_key = (math.inf, math.inf)
    best_labels: list[int] | None = None

    def consider(labels, violation, objective) -> None:
        nonlocal best_key, best_labels
        key = (violation, objective)
        if key < best_key:
            best_key = key
            best_labels = labels.copy()

    for restart in range(max(1, restarts)):
        rng = random.Random(f"{seed}:{restart}")
        if restart == 0:
            labels = _greedy_labels(problem)
        else:
            labels = [rng.randrange(3) for _ in range(n)]
        masses = _masses(problem, labels)
        objective = cross_fold_objective(problem, labels)
        violation = _violation(masses, bounds)
        consider(labels, violation, objective)
        energy = objective + penalty * violation
        t0 = max(penalty, 1.0)
        t_end = 1e-3
        cooling = (t_end / t0) ** (1.0 / max(1, iterations - 1))
        temperature = t0

        def move_delta(i: int, fold: int) -> float:
            return sum(
                value * ((labels[k] != fold) - (labels[k] != labels[i]))
                for k, value in adj[i]
            )

        for _ in range(iterations):
            if n >= 2 and rng.random() < 0.5:
                i, j = rng.sample(range(n), 2)
                if labels[i] == labels[j]:
                    temperature *= cooling
                    continue
                fi, fj = labels[i], labels[j]
                d1 = move_delta(i, fj)
                labels[i] = fj
                d2 = move_delta(j, fi)
                labels[i] = fi
                new_masses = list(masses)
                new_masses[fi] += counts[j] - counts[i]
                new_masses[fj] += counts[i] - counts[j]
                new_objective = objective + d1 + d2
                apply_change = (((i, fj), (j, fi)), new_masses, new_objective)
            else:
                i = rng.randrange(n)
                fold = rng.randrange(3)
                if fold == labels[i]:
                    temperature *= cooling
                    continue
                new_masses = list(masses)
                new_masses[labels[i]] -= counts[i]
                new_masses[fold] += counts[i]
                new_objective = objective + move_delta(i, fold)
                apply_change = (((i, fold),), new_masses, new_objective)
            changes, new_masses, new_objective = apply_change
            new_violation = _violation(new_masses, bounds)
            new_energy = new_objective + penalty * new_violation
            delta = new_energy - energy
            if delta <= 0 or rng.random() < math.exp(-delta / max(temperature, 1e-12)):
                for fact_index, fold in changes:
                    labels[fact_index] = fold
                masses = new_masses
                objective = new_objective
                violation = new_violation
                energy = new_energy
                consider(labels, violation, objective)
            temperature *= cooling

    assert best_labels is not None
    objective = cross_fold_objective(problem, best_labels)
    return _assignment(problem, best_labels, objective, best_key[0], bounds)


# ---------------------------------------------------------------------------
# Serialization


def load_facts_jsonl(path: str | Path) -> list[SeedFact]:
    """Rows: {"id", "text", "questions"} (or "question_count")."""
    facts = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            try:
                count = int(row.get("questions", row.get("question_count", 1)))
                facts.append(SeedFact(str(row["id"]), count, tokenize_normalize(row["text"])))
            except (KeyError, ValueError) as exc:
                raise HopkitError(f"{path}:{lineno}: bad fact record: {exc}") from exc
    return facts


def problem_to_json(problem: SplitProblem) -> dict:
    return {
        "facts": [
            {"id": f.id, "questions": f.question_count, "tokens": dict(sorted(f.tokens.items()))}
            for f in problem.facts
        ],
        "edges": [
            {"i": problem.facts[i].id, "k": problem.facts[k].id, "sim": round(value, 9)}
            for (i, k), value in sorted(problem.sim.items())
        ],
        "fold_targets": list(problem.fold_targets),
        "slack": problem.slack,
        "prune_threshold": problem.prune_threshold,
    }
