"""Shared brute-force oracles built on plain enumeration and math.exp.

These deliberately avoid the Laplacian / sampling code paths they are used
to check: probabilities come from exponentiating edge-score sums over the
enumerated tree list and normalizing directly.
"""

import math

import numpy as np
import pytest

from hierlearn.tree_dist import Arborescence, WeightMatrix, _valid_mask, enumerate_trees


def seeded_weight_matrix(n: int, seed: int, scale: float = 1.0) -> WeightMatrix:
    rng = np.random.default_rng(seed)
    lw = np.zeros((n + 1, n + 1))
    mask = _valid_mask(n)
    lw[mask] = scale * rng.standard_normal(int(mask.sum()))
    return WeightMatrix(lw)


def brute_tree_scores(w: WeightMatrix, trees: list[Arborescence]) -> list[float]:
    lw = w.log_weights
    return [sum(lw[i, j] for i, j in t.edges()) for t in trees]


def brute_log_partition(w: WeightMatrix, trees: list[Arborescence]) -> float:
    scores = brute_tree_scores(w, trees)
    peak = max(scores)
    return peak + math.log(sum(math.exp(s - peak) for s in scores))


def brute_tree_probs(w: WeightMatrix, trees: list[Arborescence]) -> np.ndarray:
    scores = brute_tree_scores(w, trees)
    peak = max(scores)
    weights = np.array([math.exp(s - peak) for s in scores])
    return weights / weights.sum()


def marginals_of(trees: list[Arborescence], probs) -> np.ndarray:
    n = trees[0].n
    out = np.zeros((n + 1, n + 1))
    for t, p in zip(trees, probs):
        for i, j in t.edges():
            out[i, j] += p
    return out


def brute_path_mask(trees: list[Arborescence], i: int, j: int) -> np.ndarray:
    """Ancestor test by explicit parent-chain walk, per tree."""
    out = np.zeros(len(trees), dtype=bool)
    for k, t in enumerate(trees):
        cur = t.parents[j - 1]
        while True:
            if cur == i:
                out[k] = True
                break
            if cur == 0:
                break
            cur = t.parents[cur - 1]
    return out


def answer_likelihoods(
    trees: list[Arborescence], i: int, j: int, answer: int, gamma: float, kind: str = "path"
) -> np.ndarray:
    if kind == "path":
        present = brute_path_mask(trees, i, j)
    else:
        present = np.array([t.parents[j - 1] == i for t in trees])
    hit = (1 - gamma) ** answer * gamma ** (1 - answer)
    miss = gamma**answer * (1 - gamma) ** (1 - answer)
    return np.where(present, hit, miss)


@pytest.fixture(scope="session")
def trees3():
    return enumerate_trees(3)


@pytest.fixture(scope="session")
def trees4():
    return enumerate_trees(4)
