"""Scoring backends: NLI probabilities and conditional text log-probabilities.

The core never runs a neural model. It talks to backends through two
small interfaces, with a table-driven stub for deterministic tests, a
JSON-over-HTTP client for real model servers, and an emitter that turns
segmented chains into training data for the generation models used by
the usable-information metrics.

All log quantities are base 2 (bits) and length-normalized per target
token, so metric values are comparable across targets of different
lengths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Protocol, runtime_checkable

from .chains import ReasoningChain, join_premises

_SIMPLEX_TOL = 1e-6

#: Prompt templates for the conclusion-generation models: the conditioned
#: model sees the joined premises ahead of ", so "; the unconditioned one
#: sees only "So, ".
PREMISE_TEMPLATE = "{premises}, so "
NULL_TEMPLATE = "So, "


class BackendError(RuntimeError):
    """A scorer or predictor call failed; message identifies the inputs."""


@dataclass(frozen=True)
class NliJudgment:
    """Entail/neutral/contradict probabilities; must sum to 1."""

    entail: float
    neutral: float
    contradict: float

    def __post_init__(self) -> None:
        for name, p in (
            ("entail", self.entail),
            ("neutral", self.neutral),
            ("contradict", self.contradict),
        ):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} probability out of range: {p}")
        total = self.entail + self.neutral + self.contradict
        if abs(total - 1.0) > _SIMPLEX_TOL:
            raise ValueError(f"probabilities sum to {total}, expected 1")


@runtime_checkable
class NliScorer(Protocol):
    """Scores a (premise, hypothesis) pair."""

    #: Maximum concurrent calls the backend tolerates; 0 means unlimited.
    max_in_flight: int

    def score(self, premise: str, hypothesis: str) -> NliJudgment: ...


@runtime_checkable
class ConditionalTextScorer(Protocol):
    """Length-normalized log2-probability of ``target`` given ``conditioning``.

    Empty conditioning is allowed and means the unconditioned model.
    """

    max_in_flight: int

    def logprob(self, conditioning: str, target: str) -> float: ...


def concat_conditioning(z: str, x: str) -> str:
    """Join two conditioning segments with a single space."""
    if not z:
        return x
    if not x:
        return z
    return f"{z} {x}"


def pvi(
    x: str,
    y: str,
    g: ConditionalTextScorer,
    g_prime: ConditionalTextScorer,
) -> float:
    """Usable information (bits) that ``x`` carries about ``y``.

    Computed as ``log2 g[x](y) - log2 g'[](y)``; positive means
    conditioning on ``x`` makes ``y`` easier to generate.
    """
    if not y:
        raise ValueError("pvi target must be non-empty")
    try:
        prior = g_prime.logprob("", y)
        conditioned = g.logprob(x, y)
    except Exception as exc:
        raise BackendError(f"logprob backend failed for x={x!r}, y={y!r}: {exc}") from exc
    return -prior + conditioned


def conditional_pvi(
    x: str,
    y: str,
    z: str,
    g: ConditionalTextScorer,
    g_prime: ConditionalTextScorer,
) -> float:
    """Usable information (bits) ``x`` adds about ``y`` beyond ``z``.

    Computed as ``log2 g[z + x](y) - log2 g'[z](y)``. With a shared model
    (``g is g_prime``) this reduces to a difference of the same scorer at
    two conditioning lengths, which makes window sums telescope.
    """
    if not y:
        raise ValueError("conditional pvi target must be non-empty")
    try:
        prior = g_prime.logprob(z, y)
        conditioned = g.logprob(concat_conditioning(z, x), y)
    except Exception as exc:
        raise BackendError(
            f"logprob backend failed for x={x!r}, y={y!r}, z={z!r}: {exc}"
        ) from exc
    return -prior + conditioned


# --- deterministic stub ---------------------------------------------------


def whitespace_token_count(text: str) -> int:
    return max(1, len(text.split()))


@dataclass
class StubScorerTable:
    """Table-driven scorer implementing both backend interfaces.

    Lookups miss to the configured defaults, so the stub is total and
    bit-identical across runs. Log-prob entries may be given directly as
    normalized bits, as a constant per-token probability, or as total
    bits normalized here by whitespace token count.
    """

    nli_entries: dict[tuple[str, str], NliJudgment] = field(default_factory=dict)
    logprob_entries: dict[tuple[str, str], float] = field(default_factory=dict)
    default_nli: NliJudgment = NliJudgment(entail=0.05, neutral=0.9, contradict=0.05)
    default_logprob: float = -8.0
    max_in_flight: int = 0

    def score(self, premise: str, hypothesis: str) -> NliJudgment:
        return self.nli_entries.get((premise, hypothesis), self.default_nli)

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[NliJudgment]:
        return [self.score(p, h) for p, h in pairs]

    def logprob(self, conditioning: str, target: str) -> float:
        return self.logprob_entries.get((conditioning, target), self.default_logprob)

    def set_nli(
        self, premise: str, hypothesis: str, entail: float, neutral: float, contradict: float
    ) -> None:
        self.nli_entries[(premise, hypothesis)] = NliJudgment(entail, neutral, contradict)

    def set_logprob(self, conditioning: str, target: str, bits: float) -> None:
        self.logprob_entries[(conditioning, target)] = bits

    def set_token_prob(self, conditioning: str, target: str, token_prob: float) -> None:
        """Constant per-token probability; normalization makes it the value itself."""
        self.logprob_entries[(conditioning, target)] = math.log2(token_prob)

    @classmethod
    def from_json(cls, payload: dict[str, Any]) -> "StubScorerTable":
        defaults = payload.get("defaults", {})
        default_nli_raw = defaults.get(
            "nli", {"entail": 0.05, "neutral": 0.9, "contradict": 0.05}
        )
        table = cls(
            default_nli=NliJudgment(
                entail=default_nli_raw["entail"],
                neutral=default_nli_raw["neutral"],
                contradict=default_nli_raw["contradict"],
            ),
            default_logprob=float(defaults.get("logprob_bits", -8.0)),
        )
        for entry in payload.get("nli_entries", []):
            table.set_nli(
                entry["premise"],
                entry["hypothesis"],
                entry["entail"],
                entry["neutral"],
                entry["contradict"],
            )
        for entry in payload.get("logprob_entries", []):
            key = (entry["conditioning"], entry["target"])
            if "logprob_bits" in entry:
                table.logprob_entries[key] = float(entry["logprob_bits"])
            elif "token_prob" in entry:
                table.logprob_entries[key] = math.log2(float(entry["token_prob"]))
            elif "total_logprob_bits" in entry:
                table.logprob_entries[key] = float(entry["total_logprob_bits"]) / (
                    whitespace_token_count(entry["target"])
                )
            else:
                raise ValueError(
                    "logprob entry needs logprob_bits, token_prob, or total_logprob_bits"
                )
        return table

    @classmethod
    def from_file(cls, path: str | Path) -> "StubScorerTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict[str, Any]:
        return {
            "nli_entries": [
                {
                    "premise": p,
                    "hypothesis": h,
                    "entail": j.entail,
                    "neutral": j.neutral,
                    "contradict": j.contradict,
                }
                for (p, h), j in sorted(self.nli_entries.items())
            ],
            "logprob_entries": [
                {"conditioning": c, "target": t, "logprob_bits": bits}
                for (c, t), bits in sorted(self.logprob_entries.items())
            ],
            "defaults": {
                "nli": {
                    "entail": self.default_nli.entail,
                    "neutral": self.default_nli.neutral,
                    "contradict": self.default_nli.contradict,
                },
                "logprob_bits": self.default_logprob,
            },
        }

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)


# --- remote client ----------------------------------------------------------


class RemoteScorerClient:
    """JSON-over-HTTP client for a model server.

    Requests: ``{"op": "nli", "premise", "hypothesis"}`` answered by
    ``{"entail", "neutral", "contradict"}``, and
    ``{"op": "logprob", "conditioning", "target"}`` answered by
    ``{"logprob_bits"}``.
    """

    def __init__(self, endpoint: str, timeout: float = 60.0, max_in_flight: int = 4) -> None:
        self.endpoint = endpoint
        self.timeout = timeout
        self.max_in_flight = max_in_flight

    def _post(self, payload: dict[str, Any]) -> dict[str, Any]:
        import requests

        try:
            resp = requests.post(self.endpoint, json=payload, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except Exception as exc:
            raise BackendError(f"scorer server call failed ({self.endpoint}): {exc}") from exc

    def score(self, premise: str, hypothesis: str) -> NliJudgment:
        out = self._post({"op": "nli", "premise": premise, "hypothesis": hypothesis})
        return NliJudgment(
            entail=float(out["entail"]),
            neutral=float(out["neutral"]),
            contradict=float(out["contradict"]),
        )

    def logprob(self, conditioning: str, target: str) -> float:
        out = self._post(
            {"op": "logprob", "conditioning": conditioning, "target": target}
        )
        return float(out["logprob_bits"])


# --- training data for the generation models --------------------------------

INTRA_FAMILY = "intra"
INFO_GAIN_FAMILY = "info_gain"

ROLE_G = "g"
ROLE_G_PRIME = "g_prime"


@dataclass(frozen=True)
class PviTrainingExample:
    """One (input, target) pair for fine-tuning a generation scorer."""

    input_text: str
    target_text: str
    model_role: str
    metric_family: str


def emit_pvi_training_data(
    chains: Iterable[ReasoningChain], family: str
) -> list[PviTrainingExample]:
    """Build fine-tuning data for the conditioned/unconditioned scorer pair.

    ``intra`` family: per segmented step, the conditioned model learns to
    generate the conclusion unit from "<premises>, so " and the
    unconditioned one from "So, ". ``info_gain`` family: per step i, one
    example mapping the concatenated steps up to i to the answer sentence;
    the same model serves both roles there because the inputs overlap.
    """
    if family not in (INTRA_FAMILY, INFO_GAIN_FAMILY):
        raise ValueError(f"unknown training family: {family}")
    examples: list[PviTrainingExample] = []
    for chain in chains:
        if family == INTRA_FAMILY:
            for step in chain.steps:
                if not step.segmented:
                    raise ValueError(
                        f"chain {chain.id!r}: step {step.index} is not segmented"
                    )
                conclusion = step.conclusion()
                if conclusion is None:
                    raise ValueError(
                        f"chain {chain.id!r}: step {step.index} has no conclusion unit"
                    )
                premises = step.premises()
                if premises:
                    examples.append(
                        PviTrainingExample(
                            input_text=PREMISE_TEMPLATE.format(
                                premises=join_premises(premises)
                            ),
                            target_text=conclusion.text,
                            model_role=ROLE_G,
                            metric_family=INTRA_FAMILY,
                        )
                    )
                examples.append(
                    PviTrainingExample(
                        input_text=NULL_TEMPLATE,
                        target_text=conclusion.text,
                        model_role=ROLE_G_PRIME,
                        metric_family=INTRA_FAMILY,
                    )
                )
        else:
            if not chain.predicted_answer:
                raise ValueError(f"chain {chain.id!r}: predicted answer is empty")
            for i in range(1, chain.n_steps + 1):
                prefix = " ".join(s.text for s in chain.steps[:i])
                examples.append(
                    PviTrainingExample(
                        input_text=prefix,
                        target_text=chain.predicted_answer,
                        model_role=ROLE_G,
                        metric_family=INFO_GAIN_FAMILY,
                    )
                )
    return examples


def training_example_to_record(example: PviTrainingExample) -> dict[str, str]:
    return {
        "input_text": example.input_text,
        "target_text": example.target_text,
        "model_role": example.model_role,
        "metric_family": example.metric_family,
    }
