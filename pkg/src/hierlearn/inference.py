"""Posterior updates over hierarchies from noisy yes/no answers.

Edge questions admit an exact multiplicative weight update. Path questions
do not: the posterior is approximated by importance-reweighting trees
sampled from the previous weights and then fitting a new weight matrix to
the reweighted sample with an l1-regularized, bound-minimizing coordinate
scheme (each inner iteration provably never increases the loss).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum

import numpy as np

from .tree_dist import (
    LOG_WEIGHT_BOUND,
    Arborescence,
    EdgeMarginals,
    EmpiricalTreeDistribution,
    WeightMatrix,
    _valid_mask,
    edge_marginals,
    log_partition,
    partition_and_marginals,
    sample_trees,
)

GAMMA_MIN_DEFAULT = 1e-3


class DegeneratePosteriorError(RuntimeError):
    """Every sampled tree received zero posterior weight."""


class SampleDegeneracyWarning(RuntimeWarning):
    """Effective sample size collapsed below the configured fraction."""


class QuestionKind(str, Enum):
    EDGE = "edge"
    PATH = "path"


@dataclass(frozen=True)
class Question:
    """A yes/no query about the relation of concept i (above) to j (below)."""

    kind: QuestionKind
    i: int
    j: int

    def __post_init__(self):
        object.__setattr__(self, "kind", QuestionKind(self.kind))
        if self.i == self.j:
            raise ValueError("question endpoints must differ")
        if self.j == 0:
            raise ValueError("the root cannot be the child of a question")
        if self.kind is QuestionKind.PATH and self.i == 0:
            raise ValueError("root paths are tautologically true")

    def key(self) -> tuple[str, int, int]:
        return (self.kind.value, self.i, self.j)


def clamp_gamma(gamma: float, gamma_min: float = GAMMA_MIN_DEFAULT) -> float:
    return float(min(max(gamma, gamma_min), 0.5))


@dataclass(frozen=True)
class AnswerRecord:
    """One aggregated answer: the question, raw votes, majority answer, noise rate."""

    question: Question
    answer: int
    gamma: float
    votes: tuple[int, ...] | None = None
    timestamp: str | None = None

    def __post_init__(self):
        if self.answer not in (0, 1):
            raise ValueError("answer must be 0 or 1")
        if not 0.0 < self.gamma <= 0.5:
            raise ValueError(f"gamma {self.gamma} outside (0, 0.5]")
        if self.votes is not None:
            votes = tuple(int(v) for v in self.votes)
            if not votes:
                raise ValueError("votes, when present, must be non-empty")
            if any(v not in (0, 1) for v in votes):
                raise ValueError("votes must be 0/1")
            object.__setattr__(self, "votes", votes)
        if self.timestamp is None:
            object.__setattr__(
                self, "timestamp", datetime.now(timezone.utc).isoformat()
            )

    def to_dict(self) -> dict:
        return {
            "kind": self.question.kind.value,
            "i": self.question.i,
            "j": self.question.j,
            "votes": list(self.votes) if self.votes is not None else None,
            "answer": self.answer,
            "gamma": self.gamma,
            "ts": self.timestamp,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "AnswerRecord":
        return cls(
            question=Question(QuestionKind(d["kind"]), int(d["i"]), int(d["j"])),
            answer=int(d["answer"]),
            gamma=float(d["gamma"]),
            votes=tuple(d["votes"]) if d.get("votes") else None,
            timestamp=d.get("ts"),
        )

    @classmethod
    def from_json(cls, s: str) -> "AnswerRecord":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class InferenceConfig:
    """Knobs for one Bayesian step.

    beta may be the string "auto", in which case the l1 coefficient is set
    from the sample count by the concentration rule sqrt(log(N/delta)/m).
    """

    m: int = 10_000
    beta: float | str = 0.01
    thr: float = 1e-4
    max_inner_iterations: int = 500
    gamma_default: float = 0.1
    gamma_min: float = GAMMA_MIN_DEFAULT
    seed: int = 0
    warm_start: bool = False
    beta_confidence: float = 0.05
    resample_refit: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")
        if not isinstance(self.beta, str):
            if self.beta <= 0:
                raise ValueError("beta must be strictly positive")
        elif self.beta != "auto":
            raise ValueError("beta must be a number or 'auto'")
        if self.thr <= 0:
            raise ValueError("thr must be positive")
        if not 0 < self.gamma_min <= self.gamma_default < 0.5:
            raise ValueError("need 0 < gamma_min <= gamma_default < 0.5")
        if not 0 < self.beta_confidence < 1:
            raise ValueError("beta_confidence must be in (0, 1)")

    def resolve_beta(self, n: int, m: int) -> float:
        if self.beta == "auto":
            return auto_beta(n, m, self.beta_confidence)
        return float(self.beta)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "beta": self.beta,
            "thr": self.thr,
            "max_inner_iterations": self.max_inner_iterations,
            "gamma_default": self.gamma_default,
            "gamma_min": self.gamma_min,
            "seed": self.seed,
            "warm_start": self.warm_start,
            "beta_confidence": self.beta_confidence,
            "resample_refit": self.resample_refit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InferenceConfig":
        return cls(**d)


@dataclass
class UpdateDelta:
    """Per-edge additive adjustment to the log-weights."""

    deltas: np.ndarray

    def max_abs(self) -> float:
        n = self.deltas.shape[0] - 1
        return float(np.max(np.abs(self.deltas[_valid_mask(n)])))


@dataclass
class FitResult:
    weights: WeightMatrix
    converged: bool
    n_iterations: int
    loss_trace: list[float]
    final_step: float


@dataclass
class ApplyOutcome:
    weights: WeightMatrix
    ess: float | None = None
    fit: FitResult | None = None
    resampled: bool = False


def update_edge_question(w: WeightMatrix, rec: AnswerRecord) -> WeightMatrix:
    """Exact conjugate update: shift one log-weight by (2a-1) log((1-g)/g)."""
    if rec.question.kind is not QuestionKind.EDGE:
        raise ValueError("expected an edge-question record")
    if rec.gamma >= 0.5:
        warnings.warn(
            "gamma = 0.5 carries no information; weights unchanged",
            SampleDegeneracyWarning,
            stacklevel=2,
        )
        return w.copy()
    shift = (2 * rec.answer - 1) * np.log((1 - rec.gamma) / rec.gamma)
    deltas = np.zeros_like(w.log_weights)
    deltas[rec.question.i, rec.question.j] = shift
    return w.with_added(deltas)


def _path_mask(parents_matrix: np.ndarray, i: int, j: int) -> np.ndarray:
    """Rows of the parent matrix whose tree has a directed path i -> ... -> j."""
    pm = parents_matrix
    m, n = pm.shape
    rows = np.arange(m)
    cur = pm[:, j - 1].copy()
    found = cur == i
    for _ in range(n - 1):
        cur = np.where(cur > 0, pm[rows, np.maximum(cur - 1, 0)], 0)
        found |= cur == i
    return found


def question_truth_mask(parents_matrix: np.ndarray, q: Question) -> np.ndarray:
    if q.kind is QuestionKind.EDGE:
        return parents_matrix[:, q.j - 1] == q.i
    return _path_mask(parents_matrix, q.i, q.j)


def path_likelihood(t: Arborescence, rec: AnswerRecord) -> float:
    """Probability of the recorded answer given one tree."""
    if rec.question.kind is not QuestionKind.PATH:
        raise ValueError("expected a path-question record")
    present = question_truth_mask(
        np.asarray([t.parents], dtype=np.int64), rec.question
    )[0]
    g, a = rec.gamma, rec.answer
    if present:
        return (1 - g) ** a * g ** (1 - a)
    return g**a * (1 - g) ** (1 - a)


def likelihood_factors(
    d: EmpiricalTreeDistribution, rec: AnswerRecord
) -> np.ndarray:
    truth = question_truth_mask(d.parents_matrix, rec.question)
    g, a = rec.gamma, rec.answer
    hit = (1 - g) ** a * g ** (1 - a)
    miss = g**a * (1 - g) ** (1 - a)
    return np.where(truth, hit, miss)


def history_corrected_samples(
    w: WeightMatrix,
    samples: EmpiricalTreeDistribution,
    history,
) -> EmpiricalTreeDistribution:
    """Importance-correct samples drawn from the fitted model.

    The fitted weights only match the posterior's edge marginals, so the
    proposal drifts from the true posterior as answers accumulate (path
    evidence leaks onto direct edges once higher-order structure is
    projected away). Reweighting each sample by
    prior x all answer likelihoods / proposal density makes the empirical
    distribution target the exact posterior again, with the fitted model
    acting purely as the proposal.
    """
    history = list(history)
    if not history:
        return samples
    cols = np.arange(1, w.n + 1)
    log_w = -w.log_weights[samples.parents_matrix, cols[None, :]].sum(axis=1)
    # repeated questions on the same pair share one membership test
    agg: dict[tuple, list] = {}
    for rec in history:
        g, a = rec.gamma, rec.answer
        entry = agg.setdefault(rec.question.key(), [rec.question, 0.0, 0.0])
        entry[1] += a * np.log(1 - g) + (1 - a) * np.log(g)
        entry[2] += a * np.log(g) + (1 - a) * np.log(1 - g)
    for q, log_hit, log_miss in agg.values():
        truth = question_truth_mask(samples.parents_matrix, q)
        log_w += np.where(truth, log_hit, log_miss)
    log_w += np.where(
        samples.tree_weights > 0,
        np.log(np.maximum(samples.tree_weights, np.finfo(float).tiny)),
        -np.inf,
    )
    factors = np.exp(log_w - log_w.max())
    try:
        return EmpiricalTreeDistribution(samples.parents_matrix, factors)
    except ValueError as exc:
        raise DegeneratePosteriorError(
            "history correction zeroed out every sampled tree"
        ) from exc


def reweight_posterior(
    d: EmpiricalTreeDistribution, rec: AnswerRecord
) -> EmpiricalTreeDistribution:
    """Importance-sample the posterior: weight each tree by the answer likelihood."""
    factors = likelihood_factors(d, rec)
    try:
        return d.reweighted(factors)
    except ValueError as exc:
        raise DegeneratePosteriorError(
            "answer likelihood zeroed out every sampled tree"
        ) from exc


def empirical_edge_marginals(d: EmpiricalTreeDistribution) -> EdgeMarginals:
    """Weighted frequency of each edge across the sampled trees."""
    n = d.n
    probs = np.zeros((n + 1, n + 1))
    for j in range(n):
        np.add.at(probs[:, j + 1], d.parents_matrix[:, j], d.tree_weights)
    return EdgeMarginals(probs)


def regularized_loss(
    lam: WeightMatrix, d: EmpiricalTreeDistribution, beta: float
) -> float:
    """Negative sample log-likelihood plus the l1 penalty on log-weights."""
    if d.n != lam.n:
        raise ValueError("distribution and weights disagree on N")
    mask = _valid_mask(lam.n)
    emp = empirical_edge_marginals(d).probs
    lw = lam.log_weights
    nll = -float(np.sum(emp[mask] * lw[mask])) + log_partition(lam)
    return nll + beta * float(np.sum(np.abs(lw[mask])))


def auto_beta(n: int, m: int, delta: float) -> float:
    """Sample-complexity-guided l1 coefficient sqrt(log(N/delta)/m)."""
    if m < 1:
        raise ValueError("m must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    return float(np.sqrt(np.log(n / delta) / m))


def _bound_terms(
    deltas: np.ndarray, lamv: np.ndarray, model: np.ndarray, emp: np.ndarray,
    beta: float, n: int, exp_term: np.ndarray | None = None,
) -> np.ndarray:
    """Per-entry value of the separable upper bound on the loss change."""
    if exp_term is None:
        with np.errstate(over="ignore"):
            exp_term = model * np.exp(n * deltas)
    return (
        -deltas * emp
        + (exp_term - model) / n
        + beta * (np.abs(lamv + deltas) - np.abs(lamv))
    )


def _delta_table(
    lamv: np.ndarray, model: np.ndarray, emp: np.ndarray, beta: float, n: int
) -> np.ndarray:
    """Coordinate-wise minimizer of the loss upper bound.

    Three candidates per entry: reset to zero (delta = -lambda), and the two
    stationary points of the bound on the regions where lambda + delta is
    non-negative / non-positive; candidates violating their sign condition
    or taking a log of a non-positive argument are dropped.
    """
    model = np.maximum(model, np.finfo(float).tiny)
    log_model = np.log(model)

    d1 = -lamv
    with np.errstate(over="ignore"):
        f1 = _bound_terms(
            d1, lamv, model, emp, beta, n, exp_term=np.exp(log_model - n * lamv)
        )

    feasible2 = emp - beta > 0
    d2 = np.where(
        feasible2, (np.log(np.where(feasible2, emp - beta, 1.0)) - log_model) / n, 0.0
    )
    ok2 = feasible2 & (lamv + d2 >= 0)
    f2 = np.where(
        ok2, _bound_terms(d2, lamv, model, emp, beta, n, exp_term=emp - beta), np.inf
    )

    d3 = (np.log(emp + beta) - log_model) / n
    ok3 = lamv + d3 <= 0
    f3 = np.where(
        ok3, _bound_terms(d3, lamv, model, emp, beta, n, exp_term=emp + beta), np.inf
    )

    stacked_f = np.stack([f1, f2, f3])
    stacked_d = np.stack([d1, np.where(ok2, d2, 0.0), np.where(ok3, d3, 0.0)])
    choice = np.argmin(stacked_f, axis=0)
    return np.take_along_axis(stacked_d, choice[None, ...], axis=0)[0]


def delta_step(
    lam: WeightMatrix, d: EmpiricalTreeDistribution, beta: float
) -> UpdateDelta:
    """One coordinate sweep toward the empirical marginals."""
    mask = _valid_mask(lam.n)
    model = edge_marginals(lam).probs
    emp = empirical_edge_marginals(d).probs
    deltas = np.zeros_like(lam.log_weights)
    deltas[mask] = _delta_table(
        lam.log_weights[mask], model[mask], emp[mask], beta, lam.n
    )
    return UpdateDelta(deltas)


def fit_weights(
    init: WeightMatrix, d: EmpiricalTreeDistribution, cfg: InferenceConfig
) -> FitResult:
    """Fit log-weights to an empirical tree distribution.

    Iterates coordinate sweeps until the largest per-entry step drops below
    cfg.thr or the iteration cap is hit. Starts from zero weights unless
    cfg.warm_start, in which case it continues from `init`.
    """
    n = init.n
    if d.n != n:
        raise ValueError("distribution and init weights disagree on N")
    beta = cfg.resolve_beta(n, d.num_samples)
    mask = _valid_mask(n)
    emp_v = empirical_edge_marginals(d).probs[mask]
    lamv = init.log_weights[mask].copy() if cfg.warm_start else np.zeros(int(mask.sum()))

    def to_matrix(vec: np.ndarray) -> WeightMatrix:
        lw = np.full((n + 1, n + 1), -np.inf)
        lw[mask] = np.clip(vec, -LOG_WEIGHT_BOUND, LOG_WEIGHT_BOUND)
        return WeightMatrix(lw)

    def loss_of(vec: np.ndarray, log_z: float) -> float:
        return float(-np.sum(emp_v * vec) + log_z + beta * np.sum(np.abs(vec)))

    current = to_matrix(lamv)
    log_z, marg = partition_and_marginals(current)
    model = marg.probs[mask]
    losses = [loss_of(lamv, log_z)]

    converged = False
    step = np.inf
    iterations = 0
    for iterations in range(1, cfg.max_inner_iterations + 1):
        deltas = _delta_table(lamv, model, emp_v, beta, n)
        lamv = np.clip(lamv + deltas, -LOG_WEIGHT_BOUND, LOG_WEIGHT_BOUND)
        current = to_matrix(lamv)
        log_z, marg = partition_and_marginals(current)
        model = marg.probs[mask]
        losses.append(loss_of(lamv, log_z))
        step = float(np.max(np.abs(deltas)))
        if step <= cfg.thr:
            converged = True
            break
    return FitResult(
        weights=current,
        converged=converged,
        n_iterations=iterations,
        loss_trace=losses,
        final_step=step,
    )


def apply_answer_detailed(
    w: WeightMatrix,
    rec: AnswerRecord,
    cfg: InferenceConfig,
    *,
    seed=None,
    history=None,
) -> ApplyOutcome:
    """One full Bayesian step from the previous weights to the next.

    Edge answers update in closed form. Path answers sample cfg.m trees
    from the current weights, reweight them by the answer likelihood, and
    fit new weights to the reweighted sample. When the preceding answer
    records are passed as `history`, the samples are first importance-
    corrected against the exact posterior (see history_corrected_samples),
    which keeps long question sequences from drifting. A collapsed
    effective sample size triggers a warning and, when cfg.resample_refit
    is set, one refresh pass that resamples from the fitted weights and
    refits.
    """
    if rec.question.kind is QuestionKind.EDGE:
        return ApplyOutcome(weights=update_edge_question(w, rec))

    seed_seq = np.random.SeedSequence(cfg.seed) if seed is None else seed
    if isinstance(seed_seq, np.random.SeedSequence):
        first, second = seed_seq.spawn(2)
    else:
        first, second = np.random.SeedSequence([int(seed_seq), 0]).spawn(2)

    samples = sample_trees(w, cfg.m, first)
    if history:
        samples = history_corrected_samples(w, samples, history)
    posterior = reweight_posterior(samples, rec)
    fit = fit_weights(w, posterior, cfg)
    ess = posterior.ess
    resampled = False
    if ess < cfg.m / 100:
        warnings.warn(
            f"effective sample size {ess:.1f} below m/100 after reweighting",
            SampleDegeneracyWarning,
            stacklevel=2,
        )
        if cfg.resample_refit:
            refreshed = sample_trees(fit.weights, cfg.m, second)
            fit = fit_weights(fit.weights, refreshed, cfg)
            resampled = True
    return ApplyOutcome(weights=fit.weights, ess=ess, fit=fit, resampled=resampled)


def apply_answer(
    w: WeightMatrix, rec: AnswerRecord, cfg: InferenceConfig, *, seed=None, history=None
) -> WeightMatrix:
    return apply_answer_detailed(w, rec, cfg, seed=seed, history=history).weights
