"""Per-step metrics: intra-step correctness, inter-step correctness, info gain.

Intra-step views check whether a step's conclusion follows from the
premises inside the step (entailment mass, usable information, or mere
absence of contradiction). Inter-step correctness checks the conclusion
against earlier information. Info gain measures how much a step raises
the likelihood of the predicted answer given preceding steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .backends import (
    BackendError,
    ConditionalTextScorer,
    NliScorer,
    conditional_pvi,
    pvi,
)
from .chains import Diagnostics, ReasoningChain, Step, join_premises

Window = Union[int, str]

VACUOUS_ONE = "vacuous_one"
ZERO = "zero"

INTRA_VIEWS = ("entail", "pvi", "no_contr")
INTER_VIEWS = ("no_contr_pairwise", "no_contr_concat", "entail", "pvi")
INFO_BACKENDS = ("pvi", "ll")


def _check_window(name: str, value: Window) -> None:
    if value == "all":
        return
    if isinstance(value, int) and value >= 1:
        return
    raise ValueError(f"{name} must be a positive integer or 'all', got {value!r}")


@dataclass(frozen=True)
class MetricConfig:
    """Knobs shared by all metric computations.

    Defaults mirror the strongest overall settings: pairwise
    no-contradiction over all prior steps for the inter view, a
    two-step conditioning window for info gain, and the trained-model
    backend for usable information.
    """

    intra_view: str = "entail"
    inter_view: str = "no_contr_pairwise"
    k_inter: Window = "all"
    k_info: Window = 2
    info_backend: str = "pvi"
    include_premises_in_inter: bool = False
    empty_premise_policy: str = VACUOUS_ONE

    def __post_init__(self) -> None:
        if self.intra_view not in INTRA_VIEWS:
            raise ValueError(f"unknown intra view: {self.intra_view!r}")
        if self.inter_view not in INTER_VIEWS:
            raise ValueError(f"unknown inter view: {self.inter_view!r}")
        if self.info_backend not in INFO_BACKENDS:
            raise ValueError(f"unknown info backend: {self.info_backend!r}")
        if self.empty_premise_policy not in (VACUOUS_ONE, ZERO):
            raise ValueError(
                f"unknown empty premise policy: {self.empty_premise_policy!r}"
            )
        _check_window("k_inter", self.k_inter)
        _check_window("k_info", self.k_info)


DEFAULT_CONFIG = MetricConfig()


def _require_segmented(step: Step) -> None:
    if not step.segmented:
        raise ValueError(f"step {step.index} is not segmented into content units")


def _conclusion_text(step: Step) -> str:
    conclusion = step.conclusion()
    if conclusion is None:
        raise ValueError(f"step {step.index} has no conclusion unit")
    return conclusion.text


def _empty_premise_prob(cfg: MetricConfig, diagnostics: Diagnostics | None) -> float:
    if diagnostics is not None:
        diagnostics.empty_premise_steps += 1
    return 1.0 if cfg.empty_premise_policy == VACUOUS_ONE else 0.0


def _empty_premise_pvi(cfg: MetricConfig, diagnostics: Diagnostics | None) -> float:
    # no premises means nothing to condition on; both policies score 0 bits
    if diagnostics is not None:
        diagnostics.empty_premise_steps += 1
    return 0.0


def intra_correct_entail(
    step: Step,
    nli: NliScorer,
    cfg: MetricConfig = DEFAULT_CONFIG,
    diagnostics: Diagnostics | None = None,
) -> float:
    """Entailment mass of the conclusion given the step's own premises.

    Only the entail probability counts, so a conclusion that is merely
    neutral to its premises scores low.
    """
    _require_segmented(step)
    conclusion = _conclusion_text(step)
    premises = step.premises()
    if not premises:
        return _empty_premise_prob(cfg, diagnostics)
    return nli.score(join_premises(premises), conclusion).entail


def intra_correct_pvi(
    step: Step,
    g: ConditionalTextScorer,
    g_prime: ConditionalTextScorer,
    cfg: MetricConfig = DEFAULT_CONFIG,
    diagnostics: Diagnostics | None = None,
) -> float:
    """Usable information (bits) the premises carry about the conclusion."""
    _require_segmented(step)
    conclusion = _conclusion_text(step)
    premises = step.premises()
    if not premises:
        return _empty_premise_pvi(cfg, diagnostics)
    return pvi(join_premises(premises), conclusion, g, g_prime)


def intra_correct_no_contr(
    step: Step,
    nli: NliScorer,
    cfg: MetricConfig = DEFAULT_CONFIG,
    diagnostics: Diagnostics | None = None,
) -> float:
    """One minus the contradiction probability; blind to unsupported claims."""
    _require_segmented(step)
    conclusion = _conclusion_text(step)
    premises = step.premises()
    if not premises:
        return _empty_premise_prob(cfg, diagnostics)
    return 1.0 - nli.score(join_premises(premises), conclusion).contradict


def _window_start(i: int, k: Window) -> int:
    """First prior step index inside a window ending at step ``i - 1``."""
    if k == "all":
        return 1
    return max(1, i - int(k))


def prior_information(
    chain: ReasoningChain,
    i: int,
    cfg: MetricConfig = DEFAULT_CONFIG,
    include_context: bool = True,
) -> list[str]:
    """Prior facts visible to step ``i``: context, then windowed conclusions.

    Context sentences are never windowed; the window applies to prior
    steps only. Premise units from prior steps are excluded unless
    configured in, since they overlap the context.
    """
    texts: list[str] = []
    if include_context:
        texts.extend(chain.context)
    for j in range(_window_start(i, cfg.k_inter), i):
        prior = chain.step(j)
        _require_segmented(prior)
        if cfg.include_premises_in_inter:
            texts.extend(p.text for p in prior.premises())
        texts.append(_conclusion_text(prior))
    return texts


def inter_correct(
    chain: ReasoningChain,
    i: int,
    nli: NliScorer | None,
    cfg: MetricConfig = DEFAULT_CONFIG,
    g: ConditionalTextScorer | None = None,
    g_prime: ConditionalTextScorer | None = None,
) -> float:
    """Consistency of step ``i``'s conclusion with earlier information.

    The pairwise view takes the worst contradiction over individual prior
    facts; the concat view checks one concatenated premise; the entail
    and pvi views score the conclusion against the windowed prior
    conclusions (no context). An empty prior pool is vacuously fine.
    """
    step = chain.step(i)
    _require_segmented(step)
    conclusion = _conclusion_text(step)
    view = cfg.inter_view

    if view in ("no_contr_pairwise", "no_contr_concat"):
        if nli is None:
            raise BackendError(f"inter view {view} requires an NLI backend")
        candidates = prior_information(chain, i, cfg, include_context=True)
        if not candidates:
            return 1.0
        if view == "no_contr_pairwise":
            worst = max(nli.score(r, conclusion).contradict for r in candidates)
            return 1.0 - worst
        return 1.0 - nli.score(" ".join(candidates), conclusion).contradict

    prior = prior_information(chain, i, cfg, include_context=False)
    if view == "entail":
        if nli is None:
            raise BackendError("inter view entail requires an NLI backend")
        if not prior:
            return 1.0
        return nli.score(" ".join(prior), conclusion).entail
    if view == "pvi":
        if g is None or g_prime is None:
            raise BackendError("inter view pvi requires conditional text scorers")
        return pvi(" ".join(prior), conclusion, g, g_prime)
    raise ValueError(f"unknown inter view: {view!r}")


def window_texts(chain: ReasoningChain, i: int, k: Window) -> tuple[str, str]:
    """(conditioning, step) text pair for info gain at step ``i``.

    Conditioning is the last ``k`` prior step texts joined by spaces;
    ``"all"`` keeps every prior step.
    """
    z = " ".join(s.text for s in chain.steps[_window_start(i, k) - 1 : i - 1])
    return z, chain.step(i).text


def info_gain(
    chain: ReasoningChain,
    i: int,
    g: ConditionalTextScorer,
    g_prime: ConditionalTextScorer,
    cfg: MetricConfig = DEFAULT_CONFIG,
) -> float:
    """Bits that step ``i`` adds toward the predicted answer.

    Conditional usable information of the step about the answer given
    the preceding window; the log-likelihood variant is the same formula
    with one pretrained scorer passed as both models.
    """
    if not chain.predicted_answer:
        raise ValueError(f"chain {chain.id!r} has no predicted answer")
    z, x = window_texts(chain, i, cfg.k_info)
    return conditional_pvi(x, chain.predicted_answer, z, g, g_prime)


def window_gain(
    chain: ReasoningChain,
    start: int,
    k: int,
    g: ConditionalTextScorer,
    g_prime: ConditionalTextScorer,
) -> float:
    """Direct conditional usable information of steps ``start..start+k-1``.

    With a shared scorer this equals the sum of the per-step gains over
    the window when gains are computed with unwindowed conditioning.
    """
    if not chain.predicted_answer:
        raise ValueError(f"chain {chain.id!r} has no predicted answer")
    if start < 1 or start + k - 1 > chain.n_steps:
        raise IndexError(f"window {start}..{start + k - 1} out of range")
    z = " ".join(s.text for s in chain.steps[: start - 1])
    x = " ".join(s.text for s in chain.steps[start - 1 : start + k - 1])
    return conditional_pvi(x, chain.predicted_answer, z, g, g_prime)
