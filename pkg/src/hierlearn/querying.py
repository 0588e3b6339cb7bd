"""Active selection of the next question over a sampled posterior.

A candidate question is scored by the entropy the posterior would retain
under its less informative answer; the default policy asks the question
whose worse case is still most informative. The literal max-of-max rule
and a seeded random baseline are available for comparison.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .inference import Question, QuestionKind
from .tree_dist import EmpiricalTreeDistribution, ancestor_tensor


class PoolExhaustedError(RuntimeError):
    """No candidate question remains in the pool."""


class SelectionMode(str, Enum):
    WORST_CASE_GAIN = "worst_case_gain"
    MAX_ENTROPY_LITERAL = "max_entropy_literal"
    RANDOM = "random"


@dataclass(frozen=True)
class SelectionPolicy:
    mode: SelectionMode = SelectionMode.WORST_CASE_GAIN
    allow_repeats: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", SelectionMode(self.mode))

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "allow_repeats": self.allow_repeats}

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionPolicy":
        return cls(SelectionMode(d["mode"]), bool(d["allow_repeats"]))


@dataclass
class QuestionPool:
    """All path questions over ordered concept pairs, with ask counts."""

    n: int
    asked: Counter = field(default_factory=Counter)

    def candidates(self, allow_repeats: bool = True) -> list[Question]:
        out = []
        for i in range(1, self.n + 1):
            for j in range(1, self.n + 1):
                if i == j:
                    continue
                q = Question(QuestionKind.PATH, i, j)
                if allow_repeats or self.asked[q.key()] == 0:
                    out.append(q)
        return out

    def record(self, q: Question) -> None:
        self.asked[q.key()] += 1

    def times_asked(self, q: Question) -> int:
        return self.asked[q.key()]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "asked": [[list(k), v] for k, v in sorted(self.asked.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionPool":
        pool = cls(int(d["n"]))
        for key, v in d.get("asked", []):
            pool.asked[(key[0], int(key[1]), int(key[2]))] = int(v)
        return pool


def _entropy(weights: np.ndarray) -> float:
    w = weights[weights > 0]
    w = w / w.sum()
    return float(-np.sum(w * np.log(w)))


def _truth_mask(uniq: np.ndarray, q: Question) -> np.ndarray:
    if q.kind is QuestionKind.PATH:
        return ancestor_tensor(uniq)[:, q.i, q.j - 1]
    return uniq[:, q.j - 1] == q.i


def hypothetical_entropy(
    samples: EmpiricalTreeDistribution, q: Question, a: int, gamma: float
) -> float:
    """Entropy (nats, over distinct trees) after reweighting by answer `a`."""
    uniq, weights = samples.grouped()
    truth = _truth_mask(uniq, q)
    hit = (1 - gamma) ** a * gamma ** (1 - a)
    miss = gamma**a * (1 - gamma) ** (1 - a)
    return _entropy(weights * np.where(truth, hit, miss))


def hypothetical_mass_entropy(
    samples: EmpiricalTreeDistribution, q: Question, a: int, gamma: float
) -> float:
    """Entropy of the reweighted sample mass (atoms, duplicates kept).

    Candidate scoring uses this estimator rather than the distinct-tree
    one: with duplicates collapsed, the unlikely answer of an informative
    question renormalizes a handful of residual trees to a deceptively low
    entropy, which makes a worst-case criterion favor already-decided
    questions once the posterior concentrates. The mass view keeps the
    score a smooth function of how the answer splits posterior mass.
    """
    w = samples.tree_weights
    truth = _truth_mask(samples.parents_matrix, q)
    hit = (1 - gamma) ** a * gamma ** (1 - a)
    miss = gamma**a * (1 - gamma) ** (1 - a)
    return _entropy(w * np.where(truth, hit, miss))


def _mass_split_scores(
    f: np.ndarray, part_hit: np.ndarray, total_entropy: float, gamma: float
) -> np.ndarray:
    """max over answers of the reweighted-mass entropy, per candidate.

    `f` is the posterior mass answering yes truthfully, `part_hit` the
    unnormalized entropy contribution of that mass; both vectors over
    candidates. Worst case sits at the answer splitting mass less evenly.
    """
    p, q = 1.0 - gamma, gamma
    part_miss = total_entropy - part_hit
    out = np.full(f.shape, -np.inf)
    for hit, miss in ((p, q), (q, p)):
        z = f * hit + (1 - f) * miss
        h = (
            np.log(z)
            + (
                hit * part_hit
                + miss * part_miss
                - f * hit * np.log(hit)
                - (1 - f) * miss * np.log(miss)
            )
            / z
        )
        out = np.maximum(out, h)
    return out


def _score_table(
    samples: EmpiricalTreeDistribution,
    candidates: list[Question],
    gamma: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-candidate (worst-case entropy score, posterior yes-probability)."""
    uniq, group_w, inverse = samples.grouped_with_inverse()
    # per-group aggregates of the atom-level entropy terms
    atom_terms = np.where(
        samples.tree_weights > 0,
        -samples.tree_weights * np.log(np.maximum(samples.tree_weights, 1e-320)),
        0.0,
    )
    group_terms = np.zeros(uniq.shape[0])
    np.add.at(group_terms, inverse, atom_terms)
    total_entropy = float(group_terms.sum())

    anc = ancestor_tensor(uniq)
    f = np.empty(len(candidates))
    part_hit = np.empty(len(candidates))
    for k, q in enumerate(candidates):
        truth = anc[:, q.i, q.j - 1]
        f[k] = float(group_w[truth].sum())
        part_hit[k] = float(group_terms[truth].sum())
    return _mass_split_scores(f, part_hit, total_entropy, gamma), f


def score_candidates(
    samples: EmpiricalTreeDistribution,
    candidates: list[Question],
    gamma: float,
) -> list[tuple[Question, float]]:
    """Worst-case reweighted-mass entropy for every candidate."""
    scores, _ = _score_table(samples, candidates, gamma)
    return list(zip(candidates, (float(s) for s in scores)))


# near-optimal candidates (scores within this fraction of the candidate
# score range of the best) count as ties for selection purposes
SCORE_TOLERANCE_FRACTION = 0.02


def select_question(
    samples: EmpiricalTreeDistribution | None,
    pool: QuestionPool,
    policy: SelectionPolicy,
    gamma: float,
    seed,
) -> Question:
    """Pick the next question.

    Worst-case-gain mode minimizes the worse posterior entropy over the
    two answers; among candidates within a small tolerance of the best
    score, the one most likely to be answered "yes" wins (yes answers pin
    down structure, so the plausibly-true relation is preferred when the
    information content is equal). Remaining ties fall to the
    lexicographically first pair.
    """
    candidates = pool.candidates(policy.allow_repeats)
    if not candidates:
        raise PoolExhaustedError("question pool is exhausted")
    candidates.sort(key=lambda q: (q.i, q.j))

    if policy.mode is SelectionMode.RANDOM:
        rng = np.random.default_rng(seed)
        return candidates[int(rng.integers(0, len(candidates)))]

    if samples is None:
        raise ValueError("entropy-based selection needs posterior samples")
    scores, yes_prob = _score_table(samples, candidates, gamma)
    if policy.mode is SelectionMode.WORST_CASE_GAIN:
        best = float(np.min(scores))
        tol = SCORE_TOLERANCE_FRACTION * max(float(np.max(scores)) - best, 0.0)
        near = np.nonzero(scores <= best + tol)[0]
        pick = near[int(np.argmax(yes_prob[near]))]
        return candidates[int(pick)]
    pick = int(np.argmax(scores))
    return candidates[pick]


def write_selection_trace(
    rows: list[tuple[Question, float, str]], path
) -> None:
    """CSV export of (question, score, mode) selection decisions."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "i", "j", "score", "mode"])
        for q, score, mode in rows:
            writer.writerow([q.kind.value, q.i, q.j, f"{score:.6f}", mode])
