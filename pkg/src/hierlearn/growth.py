"""Insert a new concept into an existing posterior without restarting.

The learned distribution is carried over by sampling trees from the
current weights, attaching the new node as a leaf under every existing
node with equal weight, and refitting. Old edges survive every expansion,
so the previous structure is preserved while the new node's placement
stays uninformed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .inference import InferenceConfig, fit_weights
from .tree_dist import ConceptDomain, EmpiricalTreeDistribution, WeightMatrix, sample_trees


class DuplicateConceptError(ValueError):
    """The label to insert is already part of the domain."""


@dataclass(frozen=True)
class InsertionRequest:
    label: str
    m: int
    cfg: InferenceConfig

    def __post_init__(self):
        if not self.label:
            raise ValueError("label must be non-empty")
        if self.m < 1:
            raise ValueError("m must be positive")


def expand_with_leaf(parents_matrix: np.ndarray) -> np.ndarray:
    """Every input tree replicated once per possible parent of the new node."""
    pm = np.asarray(parents_matrix, dtype=np.int64)
    m, n = pm.shape
    reps = n + 1  # the new node may hang beneath the root or any concept
    base = np.repeat(pm, reps, axis=0)
    new_col = np.tile(np.arange(reps), m)
    return np.concatenate([base, new_col[:, None]], axis=1)


def insert_concept(
    domain: ConceptDomain,
    w: WeightMatrix,
    req: InsertionRequest,
    *,
    seed=None,
) -> tuple[ConceptDomain, WeightMatrix]:
    """Grow the domain by one concept and refit weights for the larger space."""
    if req.label in domain.concepts or req.label == domain.root_label:
        raise DuplicateConceptError(f"concept {req.label!r} already in the domain")
    if w.n != domain.n:
        raise ValueError("weights and domain disagree on N")

    samples = sample_trees(w, req.m, req.cfg.seed if seed is None else seed)
    expanded = expand_with_leaf(samples.parents_matrix)
    dist = EmpiricalTreeDistribution(
        expanded, np.full(expanded.shape[0], 1.0 / expanded.shape[0])
    )
    # the enlarged space has no previous weights to warm-start from
    cfg = req.cfg
    if cfg.warm_start:
        cfg = replace(cfg, warm_start=False)
    fit = fit_weights(WeightMatrix.uniform(domain.n + 1), dist, cfg)
    return domain.with_concept(req.label), fit.weights
