"""Chain-level evaluation: segment, score per step, aggregate by min.

Also hosts the windowed positive-gain analysis and best-of-N candidate
reranking built on the aggregated scores.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from scipy.stats import rankdata

from .backends import BackendError, ConditionalTextScorer, NliScorer
from .chains import ChainScore, Diagnostics, ReasoningChain, StepScore
from .metrics import (
    MetricConfig,
    info_gain,
    inter_correct,
    intra_correct_entail,
    intra_correct_no_contr,
    intra_correct_pvi,
    window_gain,
)
from .segmenter import FramePredictor, SerializedPredictor, rechunk_chain, segment_chain

logger = logging.getLogger(__name__)

#: Metrics computed unless configured otherwise; both intra views are kept
#: because they catch complementary error kinds.
DEFAULT_METRICS = ("intra_entail", "intra_pvi", "inter_nocontr", "info_gain_pvi")

#: Metric set used for candidate reranking unless overridden.
DEFAULT_RERANK_METRICS = ("intra_entail", "inter_nocontr", "info_gain_pvi")

_SEGMENTED_METRICS = {
    "intra_entail",
    "intra_pvi",
    "intra_nocontr",
    "inter_nocontr",
    "inter_entail",
    "inter_pvi",
}

DOMINANT = "dominant"
CUMULATIVE_RANK = "cumulative_rank"


class EvaluationError(RuntimeError):
    """A chain could not be scored; message identifies chain/step/metric."""


@dataclass
class Backends:
    """Scorer bundle the evaluator draws from, one slot per role.

    The info-gain pair defaults to a shared model (``info_g`` serves both
    roles) because its two inputs overlap; ``ll`` holds the pretrained
    scorer used by the log-likelihood variant.
    """

    frames: FramePredictor | None = None
    nli: NliScorer | None = None
    intra_g: ConditionalTextScorer | None = None
    intra_g_prime: ConditionalTextScorer | None = None
    info_g: ConditionalTextScorer | None = None
    info_g_prime: ConditionalTextScorer | None = None
    ll: ConditionalTextScorer | None = None

    @classmethod
    def from_stub_table(cls, table, frames: FramePredictor | None = None) -> "Backends":
        """Route every scorer role to one deterministic stub table."""
        from .segmenter import ClauseFramePredictor

        return cls(
            frames=frames if frames is not None else ClauseFramePredictor(),
            nli=table,
            intra_g=table,
            intra_g_prime=table,
            info_g=table,
            ll=table,
        )

    def intra_pair(self) -> tuple[ConditionalTextScorer, ConditionalTextScorer]:
        if self.intra_g is None or self.intra_g_prime is None:
            raise BackendError("intra pvi metrics require intra_g and intra_g_prime")
        return self.intra_g, self.intra_g_prime

    def info_pair(self, backend: str = "pvi") -> tuple[ConditionalTextScorer, ConditionalTextScorer]:
        if backend == "ll":
            if self.ll is None:
                raise BackendError("info_gain_ll requires the ll scorer")
            return self.ll, self.ll
        if self.info_g is None:
            raise BackendError("info_gain_pvi requires the info_g scorer")
        return self.info_g, self.info_g_prime or self.info_g

    def max_workers(self, requested: int) -> int:
        limits = [requested]
        for scorer in (self.nli, self.intra_g, self.intra_g_prime, self.info_g, self.info_g_prime, self.ll):
            in_flight = getattr(scorer, "max_in_flight", 0)
            if scorer is not None and in_flight:
                limits.append(in_flight)
        return max(1, min(limits))


@dataclass(frozen=True)
class EvaluatorConfig:
    """Which metrics to compute and how, plus run-level knobs."""

    metrics: tuple[str, ...] = DEFAULT_METRICS
    metric_config: MetricConfig = field(default_factory=MetricConfig)
    workers: int = 1
    aggregator: str = "min"
    granularity: str = "sentence"

    def __post_init__(self) -> None:
        if self.aggregator not in ("min", "mean", "sum"):
            raise ValueError(f"unknown aggregator: {self.aggregator!r}")
        if self.granularity not in ("sentence", "rcu", "chain"):
            raise ValueError(f"unknown granularity: {self.granularity!r}")


def _inter_config(metric_id: str, cfg: MetricConfig) -> MetricConfig:
    """Force the inter view implied by an explicit metric id."""
    if metric_id == "inter_entail":
        return dataclasses.replace(cfg, inter_view="entail")
    if metric_id == "inter_pvi":
        return dataclasses.replace(cfg, inter_view="pvi")
    if cfg.inter_view in ("no_contr_pairwise", "no_contr_concat"):
        return cfg
    return dataclasses.replace(cfg, inter_view="no_contr_pairwise")


def _metric_value(
    metric_id: str,
    chain: ReasoningChain,
    i: int,
    backends: Backends,
    cfg: MetricConfig,
    diagnostics: Diagnostics | None,
) -> float:
    step = chain.step(i)
    if metric_id == "intra_entail":
        if backends.nli is None:
            raise BackendError("intra_entail requires an NLI backend")
        return intra_correct_entail(step, backends.nli, cfg, diagnostics)
    if metric_id == "intra_nocontr":
        if backends.nli is None:
            raise BackendError("intra_nocontr requires an NLI backend")
        return intra_correct_no_contr(step, backends.nli, cfg, diagnostics)
    if metric_id == "intra_pvi":
        g, g_prime = backends.intra_pair()
        return intra_correct_pvi(step, g, g_prime, cfg, diagnostics)
    if metric_id in ("inter_nocontr", "inter_entail", "inter_pvi"):
        inter_cfg = _inter_config(metric_id, cfg)
        g = g_prime = None
        if inter_cfg.inter_view == "pvi":
            g, g_prime = backends.intra_pair()
        return inter_correct(chain, i, backends.nli, inter_cfg, g=g, g_prime=g_prime)
    if metric_id == "info_gain_pvi":
        g, g_prime = backends.info_pair("pvi")
        return info_gain(chain, i, g, g_prime, dataclasses.replace(cfg, info_backend="pvi"))
    if metric_id == "info_gain_ll":
        g, g_prime = backends.info_pair("ll")
        return info_gain(chain, i, g, g_prime, dataclasses.replace(cfg, info_backend="ll"))
    raise ValueError(f"unknown metric id: {metric_id!r}")


def evaluate_chain(
    chain: ReasoningChain,
    backends: Backends,
    config: EvaluatorConfig = EvaluatorConfig(),
    diagnostics: Diagnostics | None = None,
) -> ChainScore:
    """Segment, compute every configured metric per step, aggregate by min."""
    original_id = chain.id
    try:
        if config.granularity != "sentence":
            chain = rechunk_chain(chain, config.granularity, backends.frames)
        if any(m in _SEGMENTED_METRICS for m in config.metrics):
            chain = segment_chain(chain, backends.frames, diagnostics)
        per_step: list[StepScore] = []
        for metric_id in config.metrics:
            for i in range(1, chain.n_steps + 1):
                try:
                    value = _metric_value(
                        metric_id, chain, i, backends, config.metric_config, diagnostics
                    )
                except (BackendError, ValueError, IndexError) as exc:
                    raise EvaluationError(
                        f"chain {original_id!r} step {i} metric {metric_id}: {exc}"
                    ) from exc
                per_step.append(StepScore(step_index=i, metric_id=metric_id, value=value))
    except BackendError as exc:
        raise EvaluationError(f"chain {original_id!r}: {exc}") from exc
    return ChainScore.from_step_scores(original_id, per_step, aggregator=config.aggregator)


def evaluate_chains(
    chains: Sequence[ReasoningChain],
    backends: Backends,
    config: EvaluatorConfig = EvaluatorConfig(),
    diagnostics: Diagnostics | None = None,
) -> tuple[list[ChainScore], list[tuple[str, str]]]:
    """Evaluate many chains, in input order; failures are collected, not raised.

    Chains run concurrently up to the configured worker count, clipped by
    backend in-flight limits; a predictor that is not concurrency-safe is
    serialized behind a lock.
    """
    if backends.frames is not None and not getattr(backends.frames, "concurrent_safe", False):
        backends = dataclasses.replace(backends, frames=SerializedPredictor(backends.frames))
    workers = backends.max_workers(config.workers)

    results: list[ChainScore | None] = [None] * len(chains)
    failures: list[tuple[str, str]] = []

    def run(idx: int) -> None:
        results[idx] = evaluate_chain(chains[idx], backends, config, diagnostics)

    if workers <= 1 or len(chains) <= 1:
        for idx in range(len(chains)):
            try:
                run(idx)
            except EvaluationError as exc:
                failures.append((chains[idx].id, str(exc)))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run, idx) for idx in range(len(chains))]
            for idx, future in enumerate(futures):
                try:
                    future.result()
                except EvaluationError as exc:
                    failures.append((chains[idx].id, str(exc)))

    scores = [r for r in results if r is not None]
    if failures:
        logger.warning("evaluation failed for %d of %d chains", len(failures), len(chains))
    return scores, failures


# --- windowed positive-gain analysis -----------------------------------------


@dataclass(frozen=True)
class ApiReport:
    """Per-step gains plus, per window size, whether all window sums are positive."""

    chain_id: str
    per_step_gains: tuple[float, ...]
    api_flags: dict[int, int]


def api_flags_from_gains(gains: Sequence[float], ks: Iterable[int]) -> dict[int, int]:
    """1 per window size iff every full window has strictly positive gain sum."""
    n = len(gains)
    flags: dict[int, int] = {}
    for k in ks:
        if k < 1 or k > n:
            raise ValueError(f"window size {k} out of range for {n} steps")
        flags[k] = int(all(sum(gains[i : i + k]) > 0 for i in range(n - k + 1)))
    return flags


def api_analysis(
    chain: ReasoningChain,
    ks: Sequence[int],
    backends: Backends,
    config: EvaluatorConfig = EvaluatorConfig(),
) -> ApiReport:
    """Compute per-step gains with unwindowed conditioning and flag each k.

    Unwindowed conditioning makes window sums equal the direct
    conditional usable information of the window, so the flags describe
    the same quantity at every k.
    """
    n = chain.n_steps
    bad = [k for k in ks if k < 1 or k > n]
    if bad:
        raise ValueError(f"window sizes {bad} out of range for chain with {n} steps")
    cfg = dataclasses.replace(config.metric_config, k_info="all")
    g, g_prime = backends.info_pair(config.metric_config.info_backend)
    gains = tuple(info_gain(chain, i, g, g_prime, cfg) for i in range(1, n + 1))
    return ApiReport(chain_id=chain.id, per_step_gains=gains, api_flags=api_flags_from_gains(gains, ks))


def window_gain_direct(
    chain: ReasoningChain,
    start: int,
    k: int,
    backends: Backends,
    config: EvaluatorConfig = EvaluatorConfig(),
) -> float:
    """Direct window gain for cross-checking the per-step sums."""
    g, g_prime = backends.info_pair(config.metric_config.info_backend)
    return window_gain(chain, start, k, g, g_prime)


# --- best-of-N reranking ------------------------------------------------------


@dataclass(frozen=True)
class RerankResult:
    """Chosen candidate plus the per-metric rank matrix that led there."""

    selected_index: int
    per_candidate_ranks: tuple[tuple[float, ...], ...]
    selection_mode: str
    metric_ids: tuple[str, ...]


def rerank(
    candidates: Sequence[ReasoningChain],
    backends: Backends,
    config: EvaluatorConfig = EvaluatorConfig(),
    metrics: Sequence[str] | None = None,
) -> RerankResult:
    """Pick the best candidate chain by aggregated metric scores.

    A candidate at least as good as every other on every metric wins
    outright; otherwise candidates are ranked per metric (rank 1 best,
    ties averaged) and the lowest cumulative rank wins. Remaining ties go
    to the lowest candidate index.
    """
    if not candidates:
        raise ValueError("rerank requires at least one candidate")
    metric_ids = tuple(metrics) if metrics is not None else DEFAULT_RERANK_METRICS
    run_config = dataclasses.replace(config, metrics=metric_ids)
    values = []
    for cand in candidates:
        score = evaluate_chain(cand, backends, run_config)
        values.append([score.aggregated[m] for m in metric_ids])

    ranks = []
    for col in range(len(metric_ids)):
        column = [-v[col] for v in values]
        ranks.append(rankdata(column, method="average"))
    per_candidate_ranks = tuple(
        tuple(float(ranks[col][row]) for col in range(len(metric_ids)))
        for row in range(len(candidates))
    )

    for idx, mine in enumerate(values):
        if all(
            all(mine[col] >= other[col] for col in range(len(metric_ids)))
            for other in values
        ):
            return RerankResult(
                selected_index=idx,
                per_candidate_ranks=per_candidate_ranks,
                selection_mode=DOMINANT,
                metric_ids=metric_ids,
            )

    totals = [sum(row) for row in per_candidate_ranks]
    selected = min(range(len(candidates)), key=lambda idx: (totals[idx], idx))
    return RerankResult(
        selected_index=selected,
        per_candidate_ranks=per_candidate_ranks,
        selection_mode=CUMULATIVE_RANK,
        metric_ids=metric_ids,
    )
