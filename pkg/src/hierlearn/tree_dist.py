"""Log-linear distributions over rooted concept hierarchies.

A hierarchy is an arborescence: every concept node 1..N has exactly one
parent in 0..N and all nodes reach the fixed root 0. The distribution is
parameterized by a dense table of per-edge log-weights; the probability of
a tree is proportional to the exponentiated sum of its edge log-weights.

Exact quantities (partition function, edge marginals) come from the
determinant and inverse of the weighted in-degree Laplacian with the root
row/column removed. Sampling uses loop-erased parent-proposal walks
(cycle popping), the MAP tree comes from maximum-arborescence search, and
`enumerate_trees` provides a brute-force oracle for small N.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

# Log-weights are clamped here after every update; beyond this point an
# edge is at ~e^60 : 1 odds against its alternatives, effectively decided.
LOG_WEIGHT_BOUND = 30.0

# 1-norm condition estimate of the Laplacian minor above which results are
# no longer trusted to full precision.
CONDITION_WARNING_THRESHOLD = 1e12

# Brute-force enumeration guard: beyond 7 concepts the number of parent
# assignments to filter becomes unreasonable for an oracle.
ENUMERATION_LIMIT = 7


class NumericalDegeneracyError(RuntimeError):
    """Laplacian minor is numerically singular or has a non-positive determinant."""


class IllConditionedWarning(RuntimeWarning):
    """Laplacian minor condition estimate exceeds the trust threshold."""


@dataclass(frozen=True)
class ConceptDomain:
    """Ordered concept labels; index 0 is the synthetic root, concepts are 1..N."""

    concepts: tuple[str, ...]
    root_label: str = "root"

    def __post_init__(self):
        object.__setattr__(self, "concepts", tuple(self.concepts))
        if len(self.concepts) < 1:
            raise ValueError("domain needs at least one concept")
        if any(not c for c in self.concepts):
            raise ValueError("concept labels must be non-empty")
        if len(set(self.concepts)) != len(self.concepts):
            raise ValueError("concept labels must be unique")

    @property
    def n(self) -> int:
        return len(self.concepts)

    def label(self, index: int) -> str:
        if index == 0:
            return self.root_label
        return self.concepts[index - 1]

    def index(self, label: str) -> int:
        if label == self.root_label:
            return 0
        try:
            return self.concepts.index(label) + 1
        except ValueError:
            raise KeyError(f"unknown concept {label!r}") from None

    def with_concept(self, label: str) -> "ConceptDomain":
        if label in self.concepts or label == self.root_label:
            raise ValueError(f"concept {label!r} already present")
        return ConceptDomain(self.concepts + (label,), self.root_label)

    def to_dict(self) -> dict:
        return {"concepts": list(self.concepts), "root_label": self.root_label}

    @classmethod
    def from_dict(cls, d: dict) -> "ConceptDomain":
        return cls(tuple(d["concepts"]), d.get("root_label", "root"))


def _valid_mask(n: int) -> np.ndarray:
    """Boolean (n+1, n+1) mask of admissible edges: j >= 1 and i != j."""
    mask = np.ones((n + 1, n + 1), dtype=bool)
    mask[:, 0] = False
    np.fill_diagonal(mask, False)
    return mask


class WeightMatrix:
    """Dense (N+1, N+1) table of edge log-weights.

    Entry [i, j] is the log-weight of the directed edge i -> j. Cells that
    cannot carry an edge (the root column j = 0 and the diagonal) are held
    at -inf so that their linear-domain weight is exactly zero.
    """

    __slots__ = ("log_weights",)

    def __init__(self, log_weights: np.ndarray):
        lw = np.array(log_weights, dtype=float)
        if lw.ndim != 2 or lw.shape[0] != lw.shape[1] or lw.shape[0] < 2:
            raise ValueError(f"expected square (N+1, N+1) table, got {lw.shape}")
        n = lw.shape[0] - 1
        mask = _valid_mask(n)
        if not np.all(np.isfinite(lw[mask])):
            raise ValueError("log-weights must be finite on admissible edges")
        lw[~mask] = -np.inf
        self.log_weights = lw

    @classmethod
    def uniform(cls, n: int) -> "WeightMatrix":
        """All log-weights zero: the uniform distribution over trees."""
        return cls(np.zeros((n + 1, n + 1)))

    @property
    def n(self) -> int:
        return self.log_weights.shape[0] - 1

    def entry(self, i: int, j: int) -> float:
        if not _valid_mask(self.n)[i, j]:
            raise IndexError(f"({i}, {j}) is not an admissible edge")
        return float(self.log_weights[i, j])

    def copy(self) -> "WeightMatrix":
        return WeightMatrix(self.log_weights.copy())

    def clamped(self) -> "WeightMatrix":
        return WeightMatrix(
            np.clip(self.log_weights, -LOG_WEIGHT_BOUND, LOG_WEIGHT_BOUND)
        )

    def with_added(self, deltas: np.ndarray) -> "WeightMatrix":
        """New matrix with `deltas` added on admissible cells, then clamped."""
        mask = _valid_mask(self.n)
        lw = self.log_weights.copy()
        lw[mask] = np.clip(
            lw[mask] + np.asarray(deltas, dtype=float)[mask],
            -LOG_WEIGHT_BOUND,
            LOG_WEIGHT_BOUND,
        )
        return WeightMatrix(lw)

    def weights(self) -> np.ndarray:
        """Linear-domain weights; inadmissible cells are exactly 0."""
        with np.errstate(over="raise"):
            w = np.exp(np.clip(self.log_weights, -np.inf, LOG_WEIGHT_BOUND + 1))
        return w

    def allclose(self, other: "WeightMatrix", atol: float = 0.0) -> bool:
        m = _valid_mask(self.n)
        return self.n == other.n and np.allclose(
            self.log_weights[m], other.log_weights[m], atol=atol, rtol=0.0
        )

    def to_dict(self) -> dict:
        mask = _valid_mask(self.n)
        rows = [
            [float(v) if mask[i, j] else None for j, v in enumerate(row)]
            for i, row in enumerate(self.log_weights)
        ]
        return {"n": self.n, "log_weights": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "WeightMatrix":
        n = int(d["n"])
        lw = np.full((n + 1, n + 1), -np.inf)
        for i, row in enumerate(d["log_weights"]):
            for j, v in enumerate(row):
                if v is not None:
                    lw[i, j] = float(v)
        return cls(lw)

    @classmethod
    def from_json(cls, s: str) -> "WeightMatrix":
        return cls.from_dict(json.loads(s))

    def __repr__(self) -> str:
        return f"WeightMatrix(n={self.n})"


@dataclass(frozen=True)
class Arborescence:
    """One concrete hierarchy: parents[j-1] is the parent of concept j."""

    parents: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        n = len(self.parents)
        if n < 1:
            raise ValueError("empty tree")
        for j, p in enumerate(self.parents, start=1):
            if p == j or not 0 <= p <= n:
                raise ValueError(f"invalid parent {p} for node {j}")
        # every node must reach the root without revisiting
        for j in range(1, n + 1):
            seen = set()
            cur = j
            while cur != 0:
                if cur in seen:
                    raise ValueError(f"cycle through node {cur}")
                seen.add(cur)
                cur = self.parents[cur - 1]

    @property
    def n(self) -> int:
        return len(self.parents)

    def parent_of(self, j: int) -> int:
        return self.parents[j - 1]

    def edges(self) -> list[tuple[int, int]]:
        return [(p, j) for j, p in enumerate(self.parents, start=1)]

    def children(self, i: int) -> list[int]:
        return [j for j, p in enumerate(self.parents, start=1) if p == i]

    def to_dict(self) -> dict:
        return {"n": self.n, "parents": list(self.parents)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Arborescence":
        if int(d["n"]) != len(d["parents"]):
            raise ValueError("n does not match parents length")
        return cls(tuple(d["parents"]))

    @classmethod
    def from_json(cls, s: str) -> "Arborescence":
        return cls.from_dict(json.loads(s))

    def to_dot(self, domain: ConceptDomain | None = None) -> str:
        """GraphViz rendering, one edge per parent link."""

        def name(k: int) -> str:
            if domain is not None:
                return json.dumps(domain.label(k))
            return json.dumps("root" if k == 0 else str(k))

        lines = ["digraph hierarchy {"]
        for k in range(self.n + 1):
            lines.append(f"  n{k} [label={name(k)}];")
        for i, j in self.edges():
            lines.append(f"  n{i} -> n{j};")
        lines.append("}")
        return "\n".join(lines)


class EmpiricalTreeDistribution:
    """Weighted multiset of sampled trees standing in for a posterior.

    Stored columnar (an (m, N) parent matrix plus a weight vector) so the
    reweighting and marginal operations stay vectorized; `entries` exposes
    the (tree, weight) pair view.
    """

    __slots__ = ("parents_matrix", "tree_weights", "_grouped")

    def __init__(self, parents_matrix: np.ndarray, tree_weights: np.ndarray):
        pm = np.asarray(parents_matrix, dtype=np.int64)
        tw = np.asarray(tree_weights, dtype=float)
        if pm.ndim != 2 or tw.ndim != 1 or pm.shape[0] != tw.shape[0]:
            raise ValueError("parents matrix and weights are inconsistent")
        if pm.shape[0] == 0:
            raise ValueError("empty distribution")
        if np.any(tw < 0):
            raise ValueError("negative tree weight")
        total = tw.sum()
        if total <= 0:
            raise ValueError("all tree weights are zero")
        self.parents_matrix = pm
        self.tree_weights = tw / total
        self._grouped = None

    @classmethod
    def from_pairs(cls, pairs) -> "EmpiricalTreeDistribution":
        trees, weights = zip(*pairs)
        pm = np.array([t.parents for t in trees], dtype=np.int64)
        return cls(pm, np.array(weights, dtype=float))

    @classmethod
    def uniform_over(cls, trees) -> "EmpiricalTreeDistribution":
        return cls.from_pairs([(t, 1.0) for t in trees])

    @property
    def n(self) -> int:
        return self.parents_matrix.shape[1]

    @property
    def num_samples(self) -> int:
        return self.parents_matrix.shape[0]

    @property
    def entries(self) -> list[tuple[Arborescence, float]]:
        return [
            (Arborescence(tuple(row)), float(w))
            for row, w in zip(self.parents_matrix, self.tree_weights)
        ]

    @property
    def ess(self) -> float:
        """Effective sample size 1 / sum of squared normalized weights."""
        return float(1.0 / np.sum(self.tree_weights**2))

    def reweighted(self, factors: np.ndarray) -> "EmpiricalTreeDistribution":
        return EmpiricalTreeDistribution(
            self.parents_matrix, self.tree_weights * np.asarray(factors, dtype=float)
        )

    def grouped(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct parent rows and their summed weights."""
        uniq, w, _ = self.grouped_with_inverse()
        return uniq, w

    def grouped_with_inverse(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Distinct rows, summed weights, and the row -> group index map."""
        if self._grouped is None:
            uniq, inverse = np.unique(self.parents_matrix, axis=0, return_inverse=True)
            w = np.zeros(uniq.shape[0])
            np.add.at(w, inverse, self.tree_weights)
            self._grouped = (uniq, w, inverse.reshape(-1))
        return self._grouped


@dataclass
class EdgeMarginals:
    """Per-edge probabilities P[i, j] matching the WeightMatrix shape."""

    probs: np.ndarray

    @property
    def n(self) -> int:
        return self.probs.shape[0] - 1

    def prob(self, i: int, j: int) -> float:
        return float(self.probs[i, j])

    def column(self, j: int) -> np.ndarray:
        return self.probs[:, j]


def _scaled_weight_columns(w: WeightMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-column rescaled weights and the log offsets that were removed.

    Scaling each child column by its max log-weight leaves the tree
    distribution unchanged (every tree uses exactly one edge per column)
    while keeping the Laplacian entries in representable range.
    """
    lw = w.log_weights
    offsets = np.max(lw[:, 1:], axis=0)
    scaled = np.exp(lw[:, 1:] - offsets[None, :])
    scaled[~_valid_mask(w.n)[:, 1:]] = 0.0
    return scaled, offsets


def _laplacian_minor(scaled: np.ndarray) -> np.ndarray:
    """In-degree Laplacian restricted to non-root rows/columns."""
    n = scaled.shape[1]
    minor = -scaled[1:, :]
    idx = np.arange(n)
    minor[idx, idx] = 0.0
    minor[idx, idx] = scaled.sum(axis=0)
    return minor


def _minor_logdet_and_inverse(w: WeightMatrix) -> tuple[float, np.ndarray, np.ndarray]:
    """(log det, inverse, scaled weights) of the Laplacian minor, with checks."""
    scaled, offsets = _scaled_weight_columns(w)
    minor = _laplacian_minor(scaled)
    sign, logdet = np.linalg.slogdet(minor)
    if sign <= 0 or not np.isfinite(logdet):
        raise NumericalDegeneracyError(
            "Laplacian minor determinant is numerically non-positive "
            f"(sign={sign:+.0f}, log|det|={logdet:.3g}); the weight matrix is "
            "too ill-conditioned for closed-form tree computations"
        )
    try:
        inv = np.linalg.inv(minor)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError(f"Laplacian minor is singular: {exc}") from exc
    cond = np.linalg.norm(minor, 1) * np.linalg.norm(inv, 1)
    if cond > CONDITION_WARNING_THRESHOLD:
        warnings.warn(
            f"Laplacian minor 1-norm condition estimate {cond:.3g} exceeds "
            f"{CONDITION_WARNING_THRESHOLD:.0e}; marginals may lose precision",
            IllConditionedWarning,
            stacklevel=3,
        )
    return float(logdet + offsets.sum()), inv, scaled


def log_partition(w: WeightMatrix) -> float:
    """Log of the weighted count of all arborescences (matrix-tree identity)."""
    logdet, _, _ = _minor_logdet_and_inverse(w)
    return logdet


def _marginals_from_inverse(n: int, inv: np.ndarray, scaled: np.ndarray) -> EdgeMarginals:
    probs = np.zeros((n + 1, n + 1))
    diag = np.diag(inv)
    # root row: only the diagonal term contributes
    probs[0, 1:] = scaled[0, :] * diag
    # non-root rows: inv indexed by (child-1, parent-1)
    probs[1:, 1:] = scaled[1:, :] * (diag[None, :] - inv.T)
    probs[~_valid_mask(n)] = 0.0
    np.clip(probs, 0.0, 1.0, out=probs)
    return EdgeMarginals(probs)


def edge_marginals(w: WeightMatrix) -> EdgeMarginals:
    """Closed-form edge probabilities from the Laplacian minor inverse.

    For the edge i -> j the marginal is the weight times the derivative of
    log Z with respect to that weight: W_ij * (inv[j, j] - [i >= 1] inv[j, i]).
    """
    _, inv, scaled = _minor_logdet_and_inverse(w)
    return _marginals_from_inverse(w.n, inv, scaled)


def partition_and_marginals(w: WeightMatrix) -> tuple[float, EdgeMarginals]:
    """log Z and edge marginals from a single factorization."""
    logdet, inv, scaled = _minor_logdet_and_inverse(w)
    return logdet, _marginals_from_inverse(w.n, inv, scaled)


def tree_log_prob(w: WeightMatrix, t: Arborescence) -> float:
    """Log-probability of one tree under the current weights."""
    if t.n != w.n:
        raise ValueError(f"tree has {t.n} nodes but weights expect {w.n}")
    score = sum(w.log_weights[i, j] for i, j in t.edges())
    return float(score - log_partition(w))


def trees_log_prob(w: WeightMatrix, parents_matrix: np.ndarray) -> np.ndarray:
    """Vectorized `tree_log_prob` over the rows of a parent matrix."""
    pm = np.asarray(parents_matrix, dtype=np.int64)
    if pm.shape[1] != w.n:
        raise ValueError(f"trees have {pm.shape[1]} nodes but weights expect {w.n}")
    cols = np.arange(1, w.n + 1)
    scores = w.log_weights[pm, cols[None, :]].sum(axis=1)
    return scores - log_partition(w)


def contains_path(t: Arborescence, i: int, j: int) -> bool:
    """True iff i is an ancestor of j (following parent links up from j)."""
    if i == j:
        raise ValueError("path endpoints must differ")
    if not (0 <= i <= t.n and 1 <= j <= t.n):
        raise ValueError(f"path endpoints ({i}, {j}) out of range")
    cur = t.parent_of(j)
    while True:
        if cur == i:
            return True
        if cur == 0:
            return False
        cur = t.parent_of(cur)


def ancestor_tensor(parents_matrix: np.ndarray) -> np.ndarray:
    """Boolean tensor A[k, i, j-1]: node i is an ancestor of node j in tree k."""
    pm = np.asarray(parents_matrix, dtype=np.int64)
    m, n = pm.shape
    anc = np.zeros((m, n + 1, n), dtype=bool)
    rows = np.arange(m)[:, None]
    cols = np.arange(n)[None, :]
    cur = pm.copy()
    for _ in range(n):
        anc[rows, cur, cols] = True
        # step each pointer to its parent; the root is absorbing
        nonroot = cur > 0
        cur = np.where(nonroot, pm[rows, np.maximum(cur - 1, 0)], 0)
    anc[:, 0, :] = True
    return anc


def _cycle_members(parents: np.ndarray) -> np.ndarray:
    """Mask of nodes sitting on a cycle of the parent-proposal graph."""
    m, n = parents.shape
    func = np.concatenate([np.zeros((m, 1), dtype=np.int64), parents], axis=1)
    reach = func
    steps = 1
    while steps < n:
        reach = np.take_along_axis(reach, reach, axis=1)
        steps *= 2
    mask = np.zeros((m, n + 1), dtype=bool)
    np.put_along_axis(mask, reach, True, axis=1)
    mask[:, 0] = False
    return mask[:, 1:]


def sample_trees(w: WeightMatrix, m: int, seed) -> EmpiricalTreeDistribution:
    """Draw m i.i.d. trees by cycle popping.

    Every node proposes a parent with probability proportional to the
    column weights; nodes on cycles redraw until the proposal graph is a
    tree. Popping only cycle members keeps the draw exact.
    """
    if m < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    n = w.n
    weights = w.weights()[:, 1:]
    cdf = np.cumsum(weights, axis=0)
    totals = cdf[-1, :]

    parents = np.empty((m, n), dtype=np.int64)
    for j in range(n):
        u = rng.random(m) * totals[j]
        parents[:, j] = np.searchsorted(cdf[:, j], u, side="right")
    while True:
        on_cycle = _cycle_members(parents)
        if not on_cycle.any():
            break
        for j in range(n):
            rows = np.nonzero(on_cycle[:, j])[0]
            if rows.size:
                u = rng.random(rows.size) * totals[j]
                parents[rows, j] = np.searchsorted(cdf[:, j], u, side="right")
    return EmpiricalTreeDistribution(parents, np.full(m, 1.0 / m))


def map_tree(w: WeightMatrix) -> Arborescence:
    """Maximum-weight arborescence under the log-weights.

    Greedy best-parent selection with Chu-Liu/Edmonds cycle contraction;
    score ties prefer the lexicographically smaller (i, j) edge.
    """
    parent = _max_arborescence(w.log_weights.copy())
    return Arborescence(tuple(parent[1:]))


def _best_parents(score: np.ndarray) -> np.ndarray:
    k = score.shape[0]
    parent = np.zeros(k, dtype=np.int64)
    # argmax returns the first maximum, i.e. the smallest parent index
    parent[1:] = np.argmax(score[:, 1:], axis=0)
    return parent


def _find_cycle(parent: np.ndarray) -> list[int] | None:
    k = parent.shape[0]
    color = np.zeros(k, dtype=np.int8)  # 0 unseen, 1 on stack, 2 done
    color[0] = 2
    for start in range(1, k):
        if color[start]:
            continue
        path = []
        cur = start
        while color[cur] == 0:
            color[cur] = 1
            path.append(cur)
            cur = parent[cur]
        if color[cur] == 1:
            return path[path.index(cur):]
        for v in path:
            color[v] = 2
    return None


def _max_arborescence(score: np.ndarray) -> np.ndarray:
    """Parent array (index 0 unused) maximizing the summed edge scores."""
    k = score.shape[0]
    parent = _best_parents(score)
    cycle = _find_cycle(parent)
    if cycle is None:
        return parent

    cycle_set = set(cycle)
    outside = [v for v in range(k) if v not in cycle_set]
    # contracted graph: outside nodes keep their relative order, the
    # supernode takes the last index
    sub = np.full((len(outside) + 1, len(outside) + 1), -np.inf)
    c = len(outside)
    old_of = {new: old for new, old in enumerate(outside)}
    new_of = {old: new for new, old in old_of.items()}

    enter_choice = {}  # new source index -> cycle node whose edge is replaced
    for u in outside:
        gains = [score[u, v] - score[parent[v], v] for v in cycle]
        best = int(np.argmax(gains))
        sub[new_of[u], c] = gains[best]
        enter_choice[new_of[u]] = cycle[best]
    leave_choice = {}  # new target index -> cycle node supplying the edge
    for v in outside:
        if v == 0:
            continue
        outs = [score[u, v] for u in cycle]
        best = int(np.argmax(outs))
        sub[c, new_of[v]] = outs[best]
        leave_choice[new_of[v]] = cycle[best]
    for u in outside:
        for v in outside:
            if v != 0 and u != v:
                sub[new_of[u], new_of[v]] = score[u, v]

    sub_parent = _max_arborescence(sub)

    result = parent.copy()
    for new_v in range(1, len(outside) + 1):
        if new_v == c:
            continue
        old_v = old_of[new_v]
        p = sub_parent[new_v]
        result[old_v] = leave_choice[new_v] if p == c else old_of[p]
    entry = sub_parent[c]
    broken = enter_choice[entry]
    result[broken] = old_of[entry]
    return result


def enumerate_trees(n: int) -> list[Arborescence]:
    """All (n+1)^(n-1) arborescences on n concepts, by filtering assignments."""
    if n < 1:
        raise ValueError("need at least one concept")
    if n > ENUMERATION_LIMIT:
        raise ValueError(
            f"refusing to enumerate {n} concepts (limit {ENUMERATION_LIMIT}); "
            "the assignment space grows as n^n"
        )
    choices = [[p for p in range(n + 1) if p != j] for j in range(1, n + 1)]
    grids = np.meshgrid(*choices, indexing="ij")
    assignments = np.stack([g.ravel() for g in grids], axis=1)
    # keep assignments whose every chain reaches the root
    func = np.concatenate(
        [np.zeros((assignments.shape[0], 1), dtype=np.int64), assignments], axis=1
    )
    reach = func
    steps = 1
    while steps < n:
        reach = np.take_along_axis(reach, reach, axis=1)
        steps *= 2
    ok = np.all(reach[:, 1:] == 0, axis=1)
    return [Arborescence(tuple(row)) for row in assignments[ok]]
