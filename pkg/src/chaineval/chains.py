"""Core data types for reasoning chains and their scores, plus JSON Lines I/O.

A chain is an input context (a list of sentences), an ordered list of
reasoning steps, and a predicted answer sentence. Each step can be broken
into content units (premises plus a single conclusion); metric values are
attached per step and aggregated per chain.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

PREMISE = "premise"
CONCLUSION = "conclusion"

#: Metric identifiers whose values are probabilities (must lie in [0, 1]).
PROBABILITY_METRICS = frozenset(
    {"intra_entail", "intra_nocontr", "inter_nocontr", "inter_entail"}
)

#: All stable metric identifiers understood by the evaluator.
KNOWN_METRICS = (
    "intra_entail",
    "intra_pvi",
    "intra_nocontr",
    "inter_nocontr",
    "inter_entail",
    "inter_pvi",
    "info_gain_pvi",
    "info_gain_ll",
)


class ChainFormatError(ValueError):
    """Raised for malformed chain/score records; message carries the line number."""


@dataclass
class Diagnostics:
    """Mutable counters surfaced on the diagnostics stream, never in scores."""

    empty_premise_steps: int = 0
    multi_result_conjunction_steps: int = 0
    notes: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Rcu:
    """A single claim inside a step, acting as a premise or the conclusion."""

    text: str
    role: str
    span: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.role not in (PREMISE, CONCLUSION):
            raise ValueError(f"invalid RCU role: {self.role!r}")


@dataclass(frozen=True)
class Step:
    """One reasoning step. ``rcus`` is empty until segmentation runs."""

    index: int
    text: str
    rcus: tuple[Rcu, ...] = ()
    gold_rcus: tuple[Rcu, ...] | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError(f"step {self.index} has empty text")
        if sum(1 for u in self.rcus if u.role == CONCLUSION) > 1:
            raise ValueError(f"step {self.index} has more than one conclusion unit")

    @property
    def segmented(self) -> bool:
        return bool(self.rcus)

    def premises(self) -> tuple[Rcu, ...]:
        return tuple(u for u in self.rcus if u.role == PREMISE)

    def conclusion(self) -> Rcu | None:
        for u in self.rcus:
            if u.role == CONCLUSION:
                return u
        return None


def join_premises(premises: Iterable[Rcu | str]) -> str:
    """Concatenate premise texts with ``" and "`` for scoring prompts."""
    texts = [p.text if isinstance(p, Rcu) else p for p in premises]
    return " and ".join(texts)


@dataclass(frozen=True)
class ReasoningChain:
    """A multi-step rationale deriving ``predicted_answer`` from ``context``."""

    id: str
    context: tuple[str, ...]
    steps: tuple[Step, ...]
    predicted_answer: str
    question: str | None = None
    gold_answer: str | None = None
    error_labels: dict[str, float] | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.steps) < 1:
            raise ValueError(f"chain {self.id!r}: steps must be non-empty")

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def step(self, i: int) -> Step:
        """Return the 1-based ``i``-th step."""
        if not 1 <= i <= len(self.steps):
            raise IndexError(f"step index {i} out of range 1..{len(self.steps)}")
        return self.steps[i - 1]

    def with_steps(self, steps: Iterable[Step]) -> "ReasoningChain":
        return dataclasses.replace(self, steps=tuple(steps))


@dataclass(frozen=True)
class StepScore:
    """One metric value for one step."""

    step_index: int
    metric_id: str
    value: float

    def __post_init__(self) -> None:
        if self.metric_id in PROBABILITY_METRICS and not 0.0 <= self.value <= 1.0:
            raise ValueError(
                f"{self.metric_id} is probability-typed but got {self.value}"
            )


@dataclass(frozen=True)
class ChainScore:
    """Per-step scores plus the per-metric chain-level aggregate."""

    chain_id: str
    per_step: tuple[StepScore, ...]
    aggregated: dict[str, float]

    @classmethod
    def from_step_scores(
        cls, chain_id: str, per_step: Iterable[StepScore], aggregator: str = "min"
    ) -> "ChainScore":
        """Group step scores by metric and aggregate (default: min over steps)."""
        ordered = sorted(per_step, key=lambda s: (s.metric_id, s.step_index))
        by_metric: dict[str, list[float]] = {}
        for s in ordered:
            by_metric.setdefault(s.metric_id, []).append(s.value)
        agg_fn = {"min": min, "mean": _mean, "sum": sum}[aggregator]
        aggregated = {m: agg_fn(vals) for m, vals in by_metric.items()}
        return cls(chain_id=chain_id, per_step=tuple(ordered), aggregated=aggregated)

    def values(self, metric_id: str) -> list[float]:
        """Per-step values for one metric, in step order."""
        picked = [s for s in self.per_step if s.metric_id == metric_id]
        return [s.value for s in sorted(picked, key=lambda s: s.step_index)]


def _mean(vals: list[float]) -> float:
    return sum(vals) / len(vals)


# --- sentence splitting -------------------------------------------------

_SENT_BOUNDARY = re.compile(r"(?<=[.?!])\s+(?=[A-Z0-9\"'(])")


def split_sentences(text: str) -> list[str]:
    """Conservative sentence splitter on period/question-mark boundaries.

    Only splits when the terminator is followed by whitespace and an
    upper-case/digit start, so decimals and in-sentence abbreviations
    mostly survive. Pre-split inputs should bypass this entirely.
    """
    parts = [p.strip() for p in _SENT_BOUNDARY.split(text)]
    return [p for p in parts if p]


# --- chain JSONL --------------------------------------------------------

_CHAIN_KEYS = {
    "id",
    "context",
    "steps",
    "predicted_answer",
    "question",
    "gold_answer",
    "error_labels",
}

VERBATIM = "verbatim"
QUESTION_ANSWER = "question_answer"


def _rcus_from_json(raw: Any, where: str) -> tuple[Rcu, ...]:
    units = []
    for u in raw:
        if not isinstance(u, dict) or "text" not in u or "role" not in u:
            raise ChainFormatError(f"{where}: rcus entries need text and role")
        span = tuple(u["span"]) if u.get("span") is not None else None
        units.append(Rcu(text=u["text"], role=u["role"], span=span))
    return tuple(units)


def chain_from_record(record: dict[str, Any], answer_style: str = VERBATIM) -> ReasoningChain:
    """Build a chain from one parsed JSON record.

    ``answer_style`` selects how the answer sentence is formed:
    ``verbatim`` keeps ``predicted_answer`` as given (hypothesis-style
    datasets); ``question_answer`` composes ``"<question> Answer: <predicted>"``
    (math word-problem style).
    """
    for key in ("id", "context", "steps", "predicted_answer"):
        if key not in record:
            raise ChainFormatError(f"missing required field: {key}")
    context_raw = record["context"]
    if isinstance(context_raw, str):
        context = tuple(split_sentences(context_raw))
    else:
        context = tuple(str(c) for c in context_raw)
    steps_raw = record["steps"]
    if not steps_raw:
        raise ChainFormatError("steps must be non-empty")
    steps = []
    for i, s in enumerate(steps_raw, start=1):
        if isinstance(s, str):
            steps.append(Step(index=i, text=s))
        elif isinstance(s, dict):
            if "text" not in s:
                raise ChainFormatError(f"step {i}: missing required field: text")
            gold = _rcus_from_json(s["rcus"], f"step {i}") if s.get("rcus") else None
            steps.append(Step(index=i, text=s["text"], gold_rcus=gold))
        else:
            raise ChainFormatError(f"step {i}: expected string or object")
    answer = str(record["predicted_answer"])
    question = record.get("question")
    if answer_style == QUESTION_ANSWER:
        if question is None:
            raise ChainFormatError("question is required for question_answer style")
        answer = f"{question} Answer: {answer}"
    elif answer_style != VERBATIM:
        raise ChainFormatError(f"unknown answer style: {answer_style}")
    labels = record.get("error_labels")
    if labels is not None:
        labels = {str(k): float(v) for k, v in labels.items()}
    extras = {k: v for k, v in record.items() if k not in _CHAIN_KEYS}
    try:
        return ReasoningChain(
            id=str(record["id"]),
            context=context,
            steps=tuple(steps),
            predicted_answer=answer,
            question=question,
            gold_answer=record.get("gold_answer"),
            error_labels=labels,
            extras=extras,
        )
    except ValueError as exc:
        raise ChainFormatError(str(exc)) from exc


def chain_to_record(chain: ReasoningChain) -> dict[str, Any]:
    """Inverse of :func:`chain_from_record` under the verbatim answer style."""
    steps_out: list[Any] = []
    for s in chain.steps:
        if s.gold_rcus is not None:
            steps_out.append(
                {
                    "text": s.text,
                    "rcus": [
                        {"text": u.text, "role": u.role, "span": list(u.span) if u.span else None}
                        for u in s.gold_rcus
                    ],
                }
            )
        else:
            steps_out.append(s.text)
    record: dict[str, Any] = {
        "id": chain.id,
        "context": list(chain.context),
        "steps": steps_out,
        "predicted_answer": chain.predicted_answer,
    }
    if chain.question is not None:
        record["question"] = chain.question
    if chain.gold_answer is not None:
        record["gold_answer"] = chain.gold_answer
    if chain.error_labels is not None:
        record["error_labels"] = chain.error_labels
    record.update(chain.extras)
    return record


def load_chains(path: str | Path, answer_style: str = VERBATIM) -> list[ReasoningChain]:
    """Read a chain-JSONL file; raises :class:`ChainFormatError` with line numbers."""
    chains = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ChainFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                chains.append(chain_from_record(record, answer_style=answer_style))
            except ChainFormatError as exc:
                raise ChainFormatError(f"{path}:{lineno}: {exc}") from exc
    return chains


def save_chains(chains: Iterable[ReasoningChain], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for chain in chains:
            fh.write(json.dumps(chain_to_record(chain), ensure_ascii=False) + "\n")


# --- score JSONL --------------------------------------------------------


def score_to_record(score: ChainScore) -> dict[str, Any]:
    return {
        "chain_id": score.chain_id,
        "per_step": [
            {"step_index": s.step_index, "metric_id": s.metric_id, "value": s.value}
            for s in score.per_step
        ],
        "aggregated": score.aggregated,
    }


def score_from_record(record: dict[str, Any]) -> ChainScore:
    for key in ("chain_id", "per_step", "aggregated"):
        if key not in record:
            raise ChainFormatError(f"missing required field: {key}")
    per_step = tuple(
        StepScore(step_index=s["step_index"], metric_id=s["metric_id"], value=s["value"])
        for s in record["per_step"]
    )
    aggregated = {str(k): float(v) for k, v in record["aggregated"].items()}
    return ChainScore(chain_id=str(record["chain_id"]), per_step=per_step, aggregated=aggregated)


def save_scores(scores: Iterable[ChainScore], path: str | Path) -> None:
    """Write ChainScores as JSON Lines, one record per chain."""
    with open(path, "w", encoding="utf-8") as fh:
        for score in scores:
            fh.write(json.dumps(score_to_record(score), ensure_ascii=False) + "\n")


def load_scores(path: str | Path) -> list[ChainScore]:
    scores = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ChainFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                scores.append(score_from_record(record))
            except (ChainFormatError, KeyError, TypeError) as exc:
                raise ChainFormatError(f"{path}:{lineno}: {exc}") from exc
    return scores
