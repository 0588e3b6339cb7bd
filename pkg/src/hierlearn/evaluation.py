"""Simulated workers, AUC scoring, and the synthetic experiment loops.

Two experiment families are reproduced: recovering a hidden ground-truth
tree from noisy path answers under active vs. random questioning, and
estimating a weight matrix from tree samples across sample sizes and
regularization strengths.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from .inference import (
    AnswerRecord,
    InferenceConfig,
    Question,
    QuestionKind,
    clamp_gamma,
    fit_weights,
    history_corrected_samples,
    reweight_posterior,
)
from .querying import QuestionPool, SelectionMode, SelectionPolicy, select_question
from .tree_dist import (
    Arborescence,
    EdgeMarginals,
    EmpiricalTreeDistribution,
    WeightMatrix,
    _valid_mask,
    contains_path,
    edge_marginals,
    sample_trees,
    trees_log_prob,
)


@dataclass
class SimulatedWorker:
    """Answers questions about a fixed ground-truth tree, flipping with rate `noise`."""

    ground_truth: Arborescence
    noise: float
    seed: int

    def __post_init__(self):
        if not 0 <= self.noise < 0.5:
            raise ValueError("noise must be in [0, 0.5)")
        self._rng = np.random.default_rng(self.seed)

    def answer(self, q: Question, gamma_min: float = 1e-3) -> AnswerRecord:
        if q.kind is QuestionKind.EDGE:
            truth = self.ground_truth.parent_of(q.j) == q.i
        else:
            truth = contains_path(self.ground_truth, q.i, q.j)
        flip = self._rng.random() < self.noise
        answer = int(truth) ^ int(flip)
        return AnswerRecord(
            question=q,
            answer=answer,
            gamma=clamp_gamma(self.noise, gamma_min),
            votes=(answer,),
        )


def answer_query(worker: SimulatedWorker, q: Question, gamma_min: float = 1e-3) -> AnswerRecord:
    return worker.answer(q, gamma_min)


def auc_edges(marginals: EdgeMarginals, truth: Arborescence) -> float:
    """ROC AUC of edge membership predicted by marginal probability.

    Every admissible (i, j) pair is an instance, positive iff the edge is
    in the ground-truth tree; computed by the rank statistic with ties
    counting one half.
    """
    n = marginals.n
    if truth.n != n:
        raise ValueError("marginals and truth disagree on N")
    mask = _valid_mask(n)
    scores = marginals.probs[mask]
    labels = np.zeros((n + 1, n + 1), dtype=bool)
    for i, j in truth.edges():
        labels[i, j] = True
    labels = labels[mask]
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return 1.0
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class ExperimentSpec:
    """Grid point of the tree-recovery experiment."""

    n: int
    noise: float
    strategy: SelectionPolicy
    budget: int
    m: int = 10_000
    beta: float = 0.01
    trials: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.budget < 0 or self.trials < 1 or self.m < 1:
            raise ValueError("spec values must be positive")
        if isinstance(self.strategy, str):
            object.__setattr__(
                self, "strategy", SelectionPolicy(SelectionMode(self.strategy))
            )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "noise": self.noise,
            "strategy": self.strategy.to_dict(),
            "budget": self.budget,
            "m": self.m,
            "beta": self.beta,
            "trials": self.trials,
            "seed": self.seed,
        }


@dataclass
class ExperimentResult:
    """Per-trial AUC trajectories plus summary artifacts.

    Wall-clock is informational only and excluded from the canonical
    serialization so identical specs serialize identically.
    """

    spec: ExperimentSpec
    auc: np.ndarray  # (trials, budget)
    yes_counts: list[int]
    final_marginals: list[np.ndarray]
    wall_clock: float = 0.0

    @property
    def mean_auc_trajectory(self) -> np.ndarray:
        if self.auc.size == 0:
            return np.zeros(0)
        return self.auc.mean(axis=0)

    @property
    def final_auc(self) -> np.ndarray:
        if self.auc.size == 0:
            return np.zeros(self.spec.trials)
        return self.auc[:, -1]

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "auc": [[float(v) for v in row] for row in self.auc],
            "yes_counts": [int(c) for c in self.yes_counts],
            "final_marginals": [
                [[float(v) for v in row] for row in m] for m in self.final_marginals
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trial", "question", "auc"])
            for trial in range(self.auc.shape[0]):
                for t in range(self.auc.shape[1]):
                    writer.writerow([trial, t + 1, f"{self.auc[trial, t]:.6f}"])


def random_ground_truth(n: int, seed) -> Arborescence:
    """Uniform draw over all arborescences on n concepts."""
    d = sample_trees(WeightMatrix.uniform(n), 1, seed)
    return Arborescence(tuple(d.parents_matrix[0]))


def _run_recovery_trial(spec: ExperimentSpec, trial: int) -> tuple[np.ndarray, int, np.ndarray]:
    root_seq = np.random.SeedSequence([spec.seed, trial])
    truth_seed, worker_seed = root_seq.spawn(2)
    truth = random_ground_truth(spec.n, truth_seed)
    worker = SimulatedWorker(truth, spec.noise, worker_seed)
    cfg = InferenceConfig(m=spec.m, beta=spec.beta, seed=0)
    gamma = clamp_gamma(spec.noise, cfg.gamma_min)

    w = WeightMatrix.uniform(spec.n)
    pool = QuestionPool(spec.n)
    auc = np.zeros(spec.budget)
    history: list[AnswerRecord] = []
    yes = 0
    for t in range(spec.budget):
        sample_seed, choice_seed = np.random.SeedSequence(
            [spec.seed, trial, t]
        ).spawn(2)
        # one batch of trees serves both question scoring and the update,
        # importance-corrected against the full answer history
        samples = sample_trees(w, spec.m, sample_seed)
        samples = history_corrected_samples(w, samples, history)
        if spec.strategy.mode is SelectionMode.RANDOM:
            q = select_question(None, pool, spec.strategy, gamma, choice_seed)
        else:
            q = select_question(samples, pool, spec.strategy, gamma, choice_seed)
        pool.record(q)
        rec = worker.answer(q, cfg.gamma_min)
        history.append(rec)
        yes += rec.answer
        posterior = reweight_posterior(samples, rec)
        w = fit_weights(w, posterior, cfg).weights
        auc[t] = auc_edges(edge_marginals(w), truth)
    return auc, yes, edge_marginals(w).probs


def run_recovery_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Ask -> answer -> update loop against hidden trees, averaged over trials."""
    start = time.perf_counter()
    aucs = np.zeros((spec.trials, spec.budget))
    yes_counts = []
    final_marginals = []
    for trial in range(spec.trials):
        auc, yes, marg = _run_recovery_trial(spec, trial)
        aucs[trial] = auc
        yes_counts.append(yes)
        final_marginals.append(marg)
    return ExperimentResult(
        spec=spec,
        auc=aucs,
        yes_counts=yes_counts,
        final_marginals=final_marginals,
        wall_clock=time.perf_counter() - start,
    )


def vega_lite_spec(result: ExperimentResult) -> dict:
    """Vega-Lite line chart of the mean AUC trajectory."""
    mean = result.mean_auc_trajectory
    return {
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "description": "Mean AUC versus questions asked",
        "data": {
            "values": [
                {"question": t + 1, "auc": float(v)} for t, v in enumerate(mean)
            ]
        },
        "mark": "line",
        "encoding": {
            "x": {"field": "question", "type": "quantitative"},
            "y": {"field": "auc", "type": "quantitative", "scale": {"domain": [0, 1]}},
        },
    }


def dirichlet_ground_truth(n: int, rng: np.random.Generator) -> WeightMatrix:
    """Column-stochastic weights: each child's parent profile is Dirichlet(1)."""
    lw = np.full((n + 1, n + 1), -np.inf)
    for j in range(1, n + 1):
        rows = [i for i in range(n + 1) if i != j]
        lw[rows, j] = np.log(rng.dirichlet(np.ones(len(rows))))
    return WeightMatrix(lw)


def mean_held_out_log_likelihood(w: WeightMatrix, parents_matrix: np.ndarray) -> float:
    return float(np.mean(trees_log_prob(w, parents_matrix)))


def run_weight_estimation_experiment(
    n: int,
    m_grid: list[int],
    beta_grid: list[float],
    trials: int,
    seed: int,
    held_out: int = 1000,
    cfg: InferenceConfig | None = None,
) -> list[dict]:
    """Fit quality versus sample size: held-out log-likelihood per grid point.

    One row per (trial, m, beta) with the held-out mean log-likelihood of
    the fitted weights and of the generating weights.
    """
    base_cfg = cfg or InferenceConfig()
    rows = []
    for trial in range(trials):
        trial_seq = np.random.SeedSequence([seed, trial])
        gt_seed, train_seed, test_seed = trial_seq.spawn(3)
        truth = dirichlet_ground_truth(n, np.random.default_rng(gt_seed))
        test = sample_trees(truth, held_out, test_seed)
        ll_truth = mean_held_out_log_likelihood(truth, test.parents_matrix)
        max_m = max(m_grid)
        train_all = sample_trees(truth, max_m, train_seed)
        for m in m_grid:
            train = EmpiricalTreeDistribution(
                train_all.parents_matrix[:m], np.full(m, 1.0 / m)
            )
            for beta in beta_grid:
                fit = fit_weights(
                    WeightMatrix.uniform(n), train, replace(base_cfg, beta=beta)
                )
                ll_fit = mean_held_out_log_likelihood(
                    fit.weights, test.parents_matrix
                )
                rows.append(
                    {
                        "trial": trial,
                        "m": m,
                        "beta": beta,
                        "held_out_ll_fit": ll_fit,
                        "held_out_ll_truth": ll_truth,
                        "converged": fit.converged,
                        "iterations": fit.n_iterations,
                    }
                )
    return rows


def summarize_weight_estimation(rows: list[dict]) -> dict:
    """Median held-out log-likelihoods keyed by (m, beta)."""
    grouped: dict[tuple[int, float], list[tuple[float, float]]] = {}
    for row in rows:
        grouped.setdefault((row["m"], row["beta"]), []).append(
            (row["held_out_ll_fit"], row["held_out_ll_truth"])
        )
    out = {}
    for key, vals in sorted(grouped.items()):
        fits = np.median([v[0] for v in vals])
        truths = np.median([v[1] for v in vals])
        out[key] = {
            "median_ll_fit": float(fits),
            "median_ll_truth": float(truths),
            "relative_gap": float(abs(fits - truths) / abs(truths)),
        }
    return out


def write_weight_estimation_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=[
                "trial",
                "m",
                "beta",
                "held_out_ll_fit",
                "held_out_ll_truth",
                "converged",
                "iterations",
            ],
        )
        writer.writeheader()
        writer.writerows(rows)
