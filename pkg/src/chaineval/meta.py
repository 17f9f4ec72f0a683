"""Rank-correlation meta-evaluation of metric scores against error labels.

For each (metric, error tag) pair this computes the ordinal association
between chain-level scores and the labels, then reports per-metric rows
plus group rows that take the best value across a family of metric
variants.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from scipy.stats import somersd

from .chains import KNOWN_METRICS, ChainScore, ReasoningChain

BINARY = "binary"
LIKERT = "likert"

#: Known error tags and their label kinds. Binary tags mark the presence
#: of one error; likert tags are 1-5 overall judgments.
ERROR_TAG_KINDS: dict[str, str] = {
    "HALL": BINARY,
    "NEG": BINARY,
    "SWAP": BINARY,
    "REP": BINARY,
    "PAR": BINARY,
    "RED": BINARY,
    "QUAL": LIKERT,
    "COH": LIKERT,
    "COM": BINARY,
    "FACT": BINARY,
    "LOGIC": BINARY,
    "MATH": BINARY,
}

CLEAN_POSITIVE = "clean_positive"
RAW = "raw"

#: Default variant groups; a group's row is the max over its members.
DEFAULT_GROUPS: dict[str, tuple[str, ...]] = {
    "correctness": (
        "intra_entail",
        "intra_pvi",
        "intra_nocontr",
        "inter_nocontr",
        "inter_entail",
        "inter_pvi",
    ),
    "informativeness": ("info_gain_pvi", "info_gain_ll"),
}


def somers_d(scores: Sequence[float], labels: Sequence[float]) -> float:
    """Ordinal association of ``scores`` with respect to ``labels``.

    Concordant minus discordant pairs over pairs with distinct labels;
    ties in scores count neither way. Constant labels leave the quantity
    undefined.
    """
    if len(scores) != len(labels):
        raise ValueError(f"length mismatch: {len(scores)} scores vs {len(labels)} labels")
    if len(scores) < 2:
        raise ValueError("need at least two observations")
    if len(set(labels)) < 2:
        raise ValueError("undefined correlation: labels are constant")
    if len(set(scores)) < 2:
        # every pair is tied in scores: zero concordant, zero discordant
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return float(somersd(list(labels), list(scores)).statistic)


@dataclass(frozen=True)
class MetaEvalReport:
    """Correlation rows keyed by (metric or group id, error tag)."""

    rows: dict[tuple[str, str], float]
    groups: dict[str, tuple[str, ...]]
    metric_ids: tuple[str, ...]
    tags: tuple[str, ...]
    orientation: str
    skipped: tuple[tuple[str, str], ...] = ()

    def value(self, row_id: str, tag: str) -> float | None:
        return self.rows.get((row_id, tag))

    def to_json(self) -> dict:
        table: dict[str, dict[str, float]] = {}
        for (row_id, tag), value in sorted(self.rows.items()):
            table.setdefault(row_id, {})[tag] = value
        return {
            "orientation": self.orientation,
            "tags": list(self.tags),
            "metrics": list(self.metric_ids),
            "groups": {g: list(ms) for g, ms in self.groups.items()},
            "rows": table,
            "skipped": [{"tag": tag, "reason": reason} for tag, reason in self.skipped],
        }

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)


def _tag_kind(tag: str, values: Iterable[float]) -> str:
    kind = ERROR_TAG_KINDS.get(tag)
    if kind is not None:
        return kind
    return BINARY if set(values) <= {0.0, 1.0} else LIKERT


def _ordered_tags(chains: Sequence[ReasoningChain]) -> list[str]:
    present = {tag for c in chains if c.error_labels for tag in c.error_labels}
    known = [t for t in ERROR_TAG_KINDS if t in present]
    unknown = sorted(present - set(ERROR_TAG_KINDS))
    return known + unknown


def _ordered_metrics(metric_ids: Iterable[str]) -> list[str]:
    ids = set(metric_ids)
    known = [m for m in KNOWN_METRICS if m in ids]
    unknown = sorted(ids - set(KNOWN_METRICS))
    return known + unknown


def meta_evaluate(
    scores: Sequence[ChainScore],
    chains: Sequence[ReasoningChain],
    orientation: str = CLEAN_POSITIVE,
    groups: Mapping[str, Sequence[str]] | None = None,
    external_scores: Mapping[str, Mapping[str, float]] | None = None,
) -> MetaEvalReport:
    """Correlate every metric with every error tag and fill variant groups.

    ``clean_positive`` flips binary labels so that metrics scoring
    erroneous chains lower come out positively correlated; likert labels
    already run in the quality direction. ``raw`` reports the unflipped
    association for audit. ``external_scores`` adds columns from other
    scorers (chain id to metric to value) for side-by-side reporting.
    """
    if orientation not in (CLEAN_POSITIVE, RAW):
        raise ValueError(f"unknown orientation: {orientation!r}")
    by_id = {s.chain_id: s for s in scores}
    missing = [c.id for c in chains if c.id not in by_id]
    if missing:
        raise ValueError(f"no scores for chain ids: {missing[:5]}")
    unlabeled = [c.id for c in chains if not c.error_labels]
    if unlabeled:
        raise ValueError(f"chains without error labels: {unlabeled[:5]}")

    metric_values: dict[str, dict[str, float]] = {}
    for chain in chains:
        row = dict(by_id[chain.id].aggregated)
        if external_scores and chain.id in external_scores:
            row.update(external_scores[chain.id])
        metric_values[chain.id] = row

    tags = _ordered_tags(chains)
    metric_ids = _ordered_metrics(m for row in metric_values.values() for m in row)
    group_map = {g: tuple(ms) for g, ms in (groups or DEFAULT_GROUPS).items()}

    rows: dict[tuple[str, str], float] = {}
    skipped: list[tuple[str, str]] = []
    for tag in tags:
        labeled = [c for c in chains if c.error_labels and tag in c.error_labels]
        labels = [float(c.error_labels[tag]) for c in labeled]
        if len(labels) < 2 or len(set(labels)) < 2:
            skipped.append((tag, "constant or insufficient labels"))
            continue
        if orientation == CLEAN_POSITIVE and _tag_kind(tag, labels) == BINARY:
            labels = [1.0 - e for e in labels]
        for metric in metric_ids:
            pairs = [
                (metric_values[c.id][metric], label)
                for c, label in zip(labeled, labels)
                if metric in metric_values[c.id]
            ]
            if len(pairs) < 2 or len({e for _, e in pairs}) < 2:
                continue
            rows[(metric, tag)] = somers_d([s for s, _ in pairs], [e for _, e in pairs])

    for group_id, members in group_map.items():
        for tag in tags:
            values = [rows[(m, tag)] for m in members if (m, tag) in rows]
            if values:
                rows[(group_id, tag)] = max(values)

    return MetaEvalReport(
        rows=rows,
        groups=group_map,
        metric_ids=tuple(metric_ids),
        tags=tuple(tags),
        orientation=orientation,
        skipped=tuple(skipped),
    )


def format_table(report: MetaEvalReport) -> str:
    """Plain-text metrics-by-tags table, metric rows first, then group rows."""
    row_ids = list(report.metric_ids) + list(report.groups)
    name_width = max([len(r) for r in row_ids] + [6])
    col_width = max([len(t) for t in report.tags] + [6]) + 1
    lines = [
        " " * name_width
        + "".join(f"{tag:>{col_width}}" for tag in report.tags)
    ]
    for row_id in row_ids:
        cells = []
        for tag in report.tags:
            value = report.value(row_id, tag)
            cells.append(f"{value:>{col_width}.3f}" if value is not None else " " * (col_width - 2) + "--")
        lines.append(f"{row_id:<{name_width}}" + "".join(cells))
    if report.skipped:
        lines.append("")
        for tag, reason in report.skipped:
            lines.append(f"skipped {tag}: {reason}")
    return "\n".join(lines)
