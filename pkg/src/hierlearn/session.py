"""Live learning sessions: scheduling, vote aggregation, persistence.

A session owns the concept domain, the current log-weights, the answer
log, and the question pool. Votes are aggregated by strict majority with
the minority fraction as the per-question noise rate. Every applied event
draws its sampling seed from (config seed, event index), so replaying the
log from a fresh session reproduces the weights exactly.

Persistence is an append-only JSON-lines event log per session plus a
periodic full-state snapshot, both plain files under a data directory.
"""

from __future__ import annotations

import json
import os
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .growth import InsertionRequest, insert_concept
from .inference import (
    AnswerRecord,
    InferenceConfig,
    Question,
    QuestionKind,
    apply_answer_detailed,
    history_corrected_samples,
)
from .querying import QuestionPool, SelectionPolicy, select_question
from .tree_dist import (
    Arborescence,
    ConceptDomain,
    WeightMatrix,
    edge_marginals,
    map_tree,
    sample_trees,
)

SNAPSHOT_VERSION = 1
DATA_DIR_ENV = "HIERLEARN_DATA_DIR"
DEFAULT_TEMPLATE = "Is {child} a type of {parent}?"


class BudgetExhaustedError(RuntimeError):
    """The session has no questions left to ask."""


class MalformedRecordError(ValueError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SnapshotVersionError(RuntimeError):
    """Snapshot was written by an incompatible version."""


@dataclass
class VoteBatch:
    question: Question
    votes: tuple[int, ...]

    def __post_init__(self):
        self.votes = tuple(int(v) for v in self.votes)
        if not self.votes:
            raise ValueError("a vote batch needs at least one vote")
        if any(v not in (0, 1) for v in self.votes):
            raise ValueError("votes must be 0/1")


@dataclass
class SubmitOutcome:
    record: AnswerRecord
    applied: bool
    tie: bool
    remaining_budget: int
    ess: float | None = None


@dataclass
class SessionState:
    id: str
    domain: ConceptDomain
    weights: WeightMatrix
    answer_log: list[AnswerRecord]
    pool: QuestionPool
    policy: SelectionPolicy
    cfg: InferenceConfig
    budget: int
    votes_per_question: int = 8
    uncertainty_threshold: float = 0.75
    question_template: str = DEFAULT_TEMPLATE
    pending: Question | None = None
    steps: int = 0  # events applied so far; indexes the seed schedule
    history_base: int = 0  # answers before this index predate the last insertion

    def question_text(self, q: Question) -> str:
        return self.question_template.format(
            parent=self.domain.label(q.i), child=self.domain.label(q.j)
        )

    def to_dict(self) -> dict:
        return {
            "version": SNAPSHOT_VERSION,
            "id": self.id,
            "domain": self.domain.to_dict(),
            "weights": self.weights.to_dict(),
            "answer_log": [r.to_dict() for r in self.answer_log],
            "pool": self.pool.to_dict(),
            "policy": self.policy.to_dict(),
            "cfg": self.cfg.to_dict(),
            "budget": self.budget,
            "votes_per_question": self.votes_per_question,
            "uncertainty_threshold": self.uncertainty_threshold,
            "question_template": self.question_template,
            "pending": list(self.pending.key()) if self.pending else None,
            "steps": self.steps,
            "history_base": self.history_base,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionState":
        version = d.get("version")
        if version != SNAPSHOT_VERSION:
            raise SnapshotVersionError(
                f"snapshot version {version!r} is not supported "
                f"(expected {SNAPSHOT_VERSION}); migrate the session data"
            )
        pending = d.get("pending")
        return cls(
            id=d["id"],
            domain=ConceptDomain.from_dict(d["domain"]),
            weights=WeightMatrix.from_dict(d["weights"]),
            answer_log=[AnswerRecord.from_dict(r) for r in d["answer_log"]],
            pool=QuestionPool.from_dict(d["pool"]),
            policy=SelectionPolicy.from_dict(d["policy"]),
            cfg=InferenceConfig.from_dict(d["cfg"]),
            budget=int(d["budget"]),
            votes_per_question=int(d["votes_per_question"]),
            uncertainty_threshold=float(d["uncertainty_threshold"]),
            question_template=d["question_template"],
            pending=Question(pending[0], pending[1], pending[2]) if pending else None,
            steps=int(d["steps"]),
            history_base=int(d.get("history_base", 0)),
        )


def create_session(
    domain: ConceptDomain,
    cfg: InferenceConfig | None = None,
    policy: SelectionPolicy | None = None,
    budget: int = 100,
    *,
    session_id: str | None = None,
    votes_per_question: int = 8,
    uncertainty_threshold: float = 0.75,
    question_template: str = DEFAULT_TEMPLATE,
) -> SessionState:
    """Fresh session with the uniform prior (all log-weights zero)."""
    if budget < 0:
        raise ValueError("budget must be non-negative")
    return SessionState(
        id=session_id or uuid.uuid4().hex[:12],
        domain=domain,
        weights=WeightMatrix.uniform(domain.n),
        answer_log=[],
        pool=QuestionPool(domain.n),
        policy=policy or SelectionPolicy(),
        cfg=cfg or InferenceConfig(),
        budget=budget,
        votes_per_question=votes_per_question,
        uncertainty_threshold=uncertainty_threshold,
        question_template=question_template,
    )


def next_question(s: SessionState) -> Question:
    """Select (or recall the pending) next question; budget-gated."""
    if s.budget <= 0:
        raise BudgetExhaustedError("question budget exhausted")
    if s.pending is not None:
        return s.pending
    sel_seq = np.random.SeedSequence([s.cfg.seed, s.steps, 1])
    sample_seed, choice_seed = sel_seq.spawn(2)
    samples = None
    if s.policy.mode.value != "random":
        samples = sample_trees(s.weights, s.cfg.m, sample_seed)
        samples = history_corrected_samples(
            s.weights, samples, _answers_since_insert(s)
        )
    q = select_question(samples, s.pool, s.policy, s.cfg.gamma_default, choice_seed)
    s.pending = q
    return q


def aggregate_votes(
    votes: tuple[int, ...], gamma_min: float, gamma_default: float
) -> tuple[int, float, bool]:
    """Majority answer, noise rate from the minority fraction, tie flag.

    Single-vote batches carry no noise signal and fall back to the
    configured default rate.
    """
    ones = sum(votes)
    zeros = len(votes) - ones
    if ones == zeros:
        return 1, 0.5, True
    answer = int(ones > zeros)
    if len(votes) == 1:
        return answer, gamma_default, False
    minority = min(ones, zeros) / len(votes)
    return answer, float(min(max(minority, gamma_min), 0.5)), False


def submit_votes(s: SessionState, batch: VoteBatch) -> SubmitOutcome:
    """Aggregate a vote batch, record it, and run one Bayesian update."""
    if s.budget <= 0:
        raise BudgetExhaustedError("question budget exhausted")
    q = batch.question
    if len(batch.votes) > s.votes_per_question:
        raise ValueError(
            f"{len(batch.votes)} votes exceed the per-question limit "
            f"{s.votes_per_question}"
        )
    if q.j > s.domain.n or q.i > s.domain.n:
        raise ValueError("question outside the current domain")
    answer, gamma, tie = aggregate_votes(
        batch.votes, s.cfg.gamma_min, s.cfg.gamma_default
    )
    rec = AnswerRecord(question=q, answer=answer, gamma=gamma, votes=batch.votes)
    return _apply_record(s, rec)


def _answers_since_insert(s: SessionState) -> list[AnswerRecord]:
    """Records the importance correction may target.

    The learned prior is uniform only at creation; each insertion rebases
    the distribution on the expanded refit, so earlier answers are already
    folded in and must not be corrected against again.
    """
    return s.answer_log[s.history_base:]


def _apply_record(s: SessionState, rec: AnswerRecord) -> SubmitOutcome:
    tie = rec.gamma >= 0.5
    ess = None
    if tie:
        applied = False
    else:
        outcome = apply_answer_detailed(
            s.weights,
            rec,
            s.cfg,
            seed=np.random.SeedSequence([s.cfg.seed, s.steps, 2]),
            history=_answers_since_insert(s),
        )
        s.weights = outcome.weights
        ess = outcome.ess
        applied = True
    s.answer_log.append(rec)
    s.pool.record(rec.question)
    if s.pending is not None and s.pending.key() == rec.question.key():
        s.pending = None
    s.budget -= 1
    s.steps += 1
    return SubmitOutcome(
        record=rec, applied=applied, tie=tie, remaining_budget=s.budget, ess=ess
    )


def insert_into_session(s: SessionState, label: str) -> None:
    """Grow the session domain by one concept; uninformed placement."""
    req = InsertionRequest(label=label, m=s.cfg.m, cfg=s.cfg)
    domain, weights = insert_concept(
        s.domain,
        s.weights,
        req,
        seed=np.random.SeedSequence([s.cfg.seed, s.steps, 3]),
    )
    s.domain = domain
    s.weights = weights
    s.pool = QuestionPool(domain.n, s.pool.asked)
    s.pending = None
    s.steps += 1
    s.history_base = len(s.answer_log)


def _parse_csv_rows(s: SessionState, lines: list[str]) -> list[VoteBatch]:
    import csv as _csv
    import io

    batches = []
    reader = _csv.reader(io.StringIO("\n".join(lines)))
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if lineno == 1 and [c.strip().lower() for c in row[:4]] == [
            "kind",
            "i_label",
            "j_label",
            "votes",
        ]:
            continue
        if len(row) != 4:
            raise MalformedRecordError(lineno, f"expected 4 columns, got {len(row)}")
        kind, i_label, j_label, votes_str = (c.strip() for c in row)
        try:
            question = Question(
                QuestionKind(kind), s.domain.index(i_label), s.domain.index(j_label)
            )
            votes = tuple(int(b) for b in votes_str.split(";") if b != "")
            batches.append(VoteBatch(question, votes))
        except (KeyError, ValueError) as exc:
            raise MalformedRecordError(lineno, str(exc)) from exc
    return batches


def _parse_jsonl_rows(lines: list[str]) -> list[AnswerRecord]:
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(AnswerRecord.from_json(line))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise MalformedRecordError(lineno, str(exc)) from exc
    return records


def import_answers(s: SessionState, path) -> int:
    """Replay pre-collected answers through the vote-submission semantics.

    Accepts the answer-record JSON-lines format or the CSV layout
    kind,i_label,j_label,votes (semicolon-separated bits). All rows are
    validated before any is applied, so a malformed row leaves the
    session untouched.
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        return 0
    stripped = next((ln for ln in lines if ln.strip()), "")
    if stripped.lstrip().startswith("{"):
        records = _parse_jsonl_rows(lines)
        batches = [
            VoteBatch(r.question, r.votes) if r.votes else None for r in records
        ]
    else:
        records = None
        batches = _parse_csv_rows(s, lines)
    if len(batches) > s.budget:
        raise BudgetExhaustedError(
            f"import needs {len(batches)} answers but only {s.budget} remain"
        )
    count = 0
    if records is not None:
        for rec, batch in zip(records, batches):
            if batch is not None:
                submit_votes(s, batch)
            else:
                _apply_record(s, rec)  # vote-less rows reuse the stored aggregate
            count += 1
    else:
        for batch in batches:
            submit_votes(s, batch)
            count += 1
    return count


@dataclass
class UncertainNode:
    node: int
    label: str
    map_parent: int
    map_parent_label: str
    marginal: float
    second_parent: int
    second_parent_label: str
    second_marginal: float

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "label": self.label,
            "map_parent": self.map_parent,
            "map_parent_label": self.map_parent_label,
            "marginal": self.marginal,
            "second_parent": self.second_parent,
            "second_parent_label": self.second_parent_label,
            "second_marginal": self.second_marginal,
        }


@dataclass
class PosteriorReport:
    map_tree: Arborescence
    marginals: np.ndarray
    uncertain: list[UncertainNode]
    threshold: float
    labels: list[str]

    def to_dict(self) -> dict:
        return {
            "map_tree": self.map_tree.to_dict(),
            "marginals": [[float(v) for v in row] for row in self.marginals],
            "uncertain": [u.to_dict() for u in self.uncertain],
            "threshold": self.threshold,
            "labels": self.labels,
        }


def posterior_report(s: SessionState) -> PosteriorReport:
    """MAP tree, all edge marginals, and nodes with uncertain placement.

    A node is uncertain when the marginal of its MAP parent edge falls
    below the session threshold; for those the second most likely parent
    is reported as the alternative placement.
    """
    tree = map_tree(s.weights)
    marg = edge_marginals(s.weights).probs
    uncertain = []
    for j in range(1, s.domain.n + 1):
        p = tree.parent_of(j)
        if marg[p, j] >= s.uncertainty_threshold:
            continue
        column = marg[:, j].copy()
        order = np.argsort(-column, kind="stable")
        second = next(int(i) for i in order if i != p)
        uncertain.append(
            UncertainNode(
                node=j,
                label=s.domain.label(j),
                map_parent=p,
                map_parent_label=s.domain.label(p),
                marginal=float(marg[p, j]),
                second_parent=second,
                second_parent_label=s.domain.label(second),
                second_marginal=float(column[second]),
            )
        )
    labels = [s.domain.label(k) for k in range(s.domain.n + 1)]
    return PosteriorReport(
        map_tree=tree,
        marginals=marg,
        uncertain=uncertain,
        threshold=s.uncertainty_threshold,
        labels=labels,
    )


def snapshot(s: SessionState, path) -> None:
    Path(path).write_text(json.dumps(s.to_dict()))


def restore(path) -> SessionState:
    raw = Path(path).read_text()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt session snapshot {path}: {exc}") from exc
    return SessionState.from_dict(data)


class SessionStore:
    """File-backed session registry: event log + periodic snapshots."""

    def __init__(self, data_dir=None, snapshot_every: int = 10):
        base = data_dir or os.environ.get(DATA_DIR_ENV) or "./hierlearn-data"
        self.root = Path(base)
        self.root.mkdir(parents=True, exist_ok=True)
        self.snapshot_every = snapshot_every

    def _dir(self, session_id: str) -> Path:
        return self.root / session_id

    def _events_path(self, session_id: str) -> Path:
        return self._dir(session_id) / "events.jsonl"

    def _snapshot_path(self, session_id: str) -> Path:
        return self._dir(session_id) / "snapshot.json"

    def list_sessions(self) -> list[str]:
        return sorted(
            p.name for p in self.root.iterdir() if (p / "snapshot.json").exists()
        )

    def create(self, s: SessionState) -> None:
        d = self._dir(s.id)
        if d.exists():
            raise ValueError(f"session {s.id} already exists")
        d.mkdir(parents=True)
        self._events_path(s.id).touch()
        snapshot(s, self._snapshot_path(s.id))

    def append_event(self, session_id: str, event: dict) -> None:
        with open(self._events_path(session_id), "a") as fh:
            fh.write(json.dumps(event) + "\n")

    def persist(self, s: SessionState, event: dict | None = None) -> None:
        if event is not None:
            self.append_event(s.id, event)
        if s.steps % self.snapshot_every == 0 or event is None:
            snapshot(s, self._snapshot_path(s.id))

    def save_snapshot(self, s: SessionState) -> None:
        snapshot(s, self._snapshot_path(s.id))

    def load(self, session_id: str) -> SessionState:
        snap_path = self._snapshot_path(session_id)
        if not snap_path.exists():
            raise KeyError(f"unknown session {session_id}")
        state = restore(snap_path)
        # replay any events logged after the snapshot was taken
        events_path = self._events_path(session_id)
        if events_path.exists():
            with open(events_path) as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    event = json.loads(line)
                    if event["index"] < state.steps:
                        continue
                    _replay_event(state, event)
        return state


def _replay_event(s: SessionState, event: dict) -> None:
    kind = event.get("event")
    if kind == "votes":
        rec = AnswerRecord.from_dict(event["record"])
        _apply_record(s, rec)
    elif kind == "insert":
        insert_into_session(s, event["label"])
    else:
        raise ValueError(f"unknown event type {kind!r}")


def record_votes(store: SessionStore, s: SessionState, batch: VoteBatch) -> SubmitOutcome:
    """Submit votes and persist the event; the store serializes callers."""
    index = s.steps
    outcome = submit_votes(s, batch)
    store.persist(
        s, {"event": "votes", "index": index, "record": outcome.record.to_dict()}
    )
    return outcome


def record_insert(store: SessionStore, s: SessionState, label: str) -> None:
    index = s.steps
    insert_into_session(s, label)
    store.persist(s, {"event": "insert", "index": index, "label": label})
