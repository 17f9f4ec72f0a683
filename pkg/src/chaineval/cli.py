"""Command-line surface: evaluate, perturb, meta-eval, emit-pvi-data,
api-analyze, rerank, plot-data.

Exit codes: 0 success, 1 fatal (bad config, unreachable backend),
2 partial (some chains failed; failures listed on stderr). Flag values
take precedence over the config file, which takes precedence over the
built-in defaults. Every command echoes its effective configuration to
stderr and supports --dry-run.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .backends import (
    RemoteScorerClient,
    StubScorerTable,
    emit_pvi_training_data,
    training_example_to_record,
)
from .chains import (
    ChainFormatError,
    Diagnostics,
    load_chains,
    load_scores,
    save_chains,
    save_scores,
)
from .evaluator import (
    DEFAULT_METRICS,
    DEFAULT_RERANK_METRICS,
    Backends,
    EvaluationError,
    EvaluatorConfig,
    api_analysis,
    api_flags_from_gains,
    evaluate_chains,
    rerank,
)
from .meta import CLEAN_POSITIVE, ERROR_TAG_KINDS, format_table, meta_evaluate
from .metrics import MetricConfig
from .perturb import (
    PERTURBATION_TYPES,
    LexiconParaphraser,
    PerturbationError,
    derive_seed,
    linearize,
    load_trees,
    manifest_entry,
    perturb,
)
from .segmenter import (
    ClauseFramePredictor,
    RecordedFramePredictor,
    RemoteFramePredictor,
    segment_chain,
)

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2


class CliError(Exception):
    """Fatal configuration or input problem; maps to exit code 1."""


@dataclass
class RunConfig:
    """Effective settings after merging defaults, config file, and flags."""

    metrics: tuple[str, ...] = DEFAULT_METRICS
    metric_config: MetricConfig = dataclasses.field(default_factory=MetricConfig)
    workers: int = 1
    aggregator: str = "min"
    granularity: str = "sentence"
    answer_style: str = "verbatim"
    backends_spec: dict[str, Any] = dataclasses.field(default_factory=dict)
    rerank_metrics: tuple[str, ...] = DEFAULT_RERANK_METRICS
    groups: dict[str, tuple[str, ...]] | None = None
    seed: int = 0
    orientation: str = CLEAN_POSITIVE

    def evaluator_config(self) -> EvaluatorConfig:
        return EvaluatorConfig(
            metrics=self.metrics,
            metric_config=self.metric_config,
            workers=self.workers,
            aggregator=self.aggregator,
            granularity=self.granularity,
        )

    def describe(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        data["metric_config"] = dataclasses.asdict(self.metric_config)
        return data


def _require_path(path: str | None, what: str) -> Path:
    if not path:
        raise CliError(f"{what} path is required")
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} path does not exist: {p}")
    return p


def _load_config_file(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    with open(_require_path(path, "config"), encoding="utf-8") as fh:
        return json.load(fh)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    raw = _load_config_file(getattr(args, "config", None))
    rc = RunConfig()
    if "metric_config" in raw:
        rc.metric_config = MetricConfig(**raw["metric_config"])
    if "metrics" in raw:
        rc.metrics = tuple(raw["metrics"])
    if "rerank_metrics" in raw:
        rc.rerank_metrics = tuple(raw["rerank_metrics"])
    if "groups" in raw:
        rc.groups = {g: tuple(ms) for g, ms in raw["groups"].items()}
    for key in ("workers", "aggregator", "granularity", "answer_style", "seed", "orientation"):
        if key in raw:
            setattr(rc, key, raw[key])
    rc.backends_spec = dict(raw.get("backends", {}))

    if getattr(args, "metrics", None):
        picked = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
        rc.metrics = picked
        rc.rerank_metrics = picked
    if getattr(args, "workers", None) is not None:
        rc.workers = args.workers
    if getattr(args, "seed", None) is not None:
        rc.seed = args.seed
    if getattr(args, "stub_table", None):
        rc.backends_spec["stub_table"] = args.stub_table
    if getattr(args, "orientation", None):
        rc.orientation = args.orientation
    if getattr(args, "answer_style", None):
        rc.answer_style = args.answer_style
    if getattr(args, "granularity", None):
        rc.granularity = args.granularity
    return rc


def _build_frame_predictor(spec: dict[str, Any]):
    frames = spec.get("frames", {"kind": "clause"})
    kind = frames.get("kind", "clause")
    if kind == "clause":
        return ClauseFramePredictor()
    if kind == "recorded":
        return RecordedFramePredictor.from_file(
            _require_path(frames.get("path"), "recorded frames"),
            on_missing=frames.get("on_missing", "empty"),
        )
    if kind == "remote":
        endpoint = frames.get("endpoint")
        if not endpoint:
            raise CliError("remote frame predictor needs an endpoint")
        return RemoteFramePredictor(endpoint)
    raise CliError(f"unknown frame predictor kind: {kind!r}")


def build_backends(rc: RunConfig, probe: bool = True) -> Backends:
    """Construct the scorer bundle; remote endpoints are probed up front."""
    spec = rc.backends_spec
    frames = _build_frame_predictor(spec)
    stub_path = spec.get("stub_table")
    if stub_path:
        table = StubScorerTable.from_file(_require_path(stub_path, "stub table"))
        return Backends.from_stub_table(table, frames=frames)

    nli_endpoint = spec.get("nli_endpoint")
    logprob_endpoint = spec.get("logprob_endpoint")
    if not nli_endpoint and not logprob_endpoint:
        raise CliError("no backends configured: provide --stub-table or endpoints")
    nli = RemoteScorerClient(nli_endpoint) if nli_endpoint else None
    text = RemoteScorerClient(logprob_endpoint) if logprob_endpoint else None
    if probe:
        try:
            if nli is not None:
                nli.score("backend probe", "backend probe")
            if text is not None:
                text.logprob("", "backend probe")
        except Exception as exc:
            raise CliError(f"backend endpoint unreachable: {exc}") from exc
    return Backends(
        frames=frames,
        nli=nli,
        intra_g=text,
        intra_g_prime=text,
        info_g=text,
        ll=text,
    )


def _echo_config(command: str, rc: RunConfig, inputs: dict[str, Any]) -> None:
    print(
        json.dumps({"command": command, "inputs": inputs, "config": rc.describe()}),
        file=sys.stderr,
    )


def _dry_run(command: str, rc: RunConfig, inputs: dict[str, Any]) -> int:
    print(json.dumps({"command": command, "inputs": inputs, "config": rc.describe()}, indent=2))
    return EXIT_OK


def _report_failures(failures: list[tuple[str, str]]) -> None:
    for chain_id, message in failures:
        print(f"FAILED {chain_id}: {message}", file=sys.stderr)


# --- commands -----------------------------------------------------------


def cmd_evaluate(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    chains_path = _require_path(args.chains, "chains")
    inputs = {"chains": str(chains_path), "out": args.out}
    if args.dry_run:
        build_backends(rc, probe=False)  # path validation only
        return _dry_run("evaluate", rc, inputs)
    _echo_config("evaluate", rc, inputs)
    chains = load_chains(chains_path, answer_style=rc.answer_style)
    backends = build_backends(rc)
    diagnostics = Diagnostics()
    scores, failures = evaluate_chains(chains, backends, rc.evaluator_config(), diagnostics)
    save_scores(scores, args.out)
    if diagnostics.empty_premise_steps or diagnostics.multi_result_conjunction_steps:
        print(
            f"diagnostics: empty-premise steps={diagnostics.empty_premise_steps} "
            f"multi-result-conjunction steps={diagnostics.multi_result_conjunction_steps}",
            file=sys.stderr,
        )
    _report_failures(failures)
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_perturb(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    trees_path = _require_path(args.trees, "trees")
    error_types = tuple(args.error_type) if args.error_type else PERTURBATION_TYPES
    unknown = [t for t in error_types if t not in PERTURBATION_TYPES]
    if unknown:
        raise CliError(f"unknown error types: {unknown}")
    paraphraser = None
    if args.paraphrase_lexicon:
        paraphraser = LexiconParaphraser.from_file(
            _require_path(args.paraphrase_lexicon, "paraphrase lexicon")
        )
    if "PAR" in error_types and paraphraser is None:
        raise CliError("PAR perturbations require --paraphrase-lexicon")
    inputs = {"trees": str(trees_path), "out": args.out, "error_types": list(error_types)}
    if args.dry_run:
        return _dry_run("perturb", rc, inputs)
    _echo_config("perturb", rc, inputs)

    trees = load_trees(trees_path)
    originals = []
    records = []
    failures = []
    for tree in trees:
        try:
            chain = linearize(tree)
        except PerturbationError as exc:
            failures.append((tree.id, str(exc)))
            continue
        originals.append(
            dataclasses.replace(chain, error_labels={t: 0.0 for t in error_types})
        )
        for etype in error_types:
            try:
                records.append(
                    perturb(tree, etype, derive_seed(rc.seed, tree.id, etype), paraphraser)
                )
            except PerturbationError as exc:
                failures.append((f"{tree.id}:{etype}", str(exc)))

    chains = originals + [r.perturbed_chain for r in records]
    save_chains(chains, args.out)
    manifest = {"seed": rc.seed, "records": [manifest_entry(r) for r in records]}
    with open(f"{args.out}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    _report_failures(failures)
    print(f"wrote {len(chains)} chains ({len(records)} perturbed)", file=sys.stderr)
    return EXIT_PARTIAL if failures else EXIT_OK


def _read_external_scores(path: str) -> dict[str, dict[str, float]]:
    table: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            chain_id = row.pop("chain_id", None)
            if chain_id is None:
                raise CliError("external scores CSV needs a chain_id column")
            table[chain_id] = {k: float(v) for k, v in row.items() if v != ""}
    return table


def cmd_meta_eval(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    scores_path = _require_path(args.scores, "scores")
    chains_path = _require_path(args.chains, "chains")
    inputs = {"scores": str(scores_path), "chains": str(chains_path), "out": args.out}
    if args.dry_run:
        return _dry_run("meta-eval", rc, inputs)
    _echo_config("meta-eval", rc, inputs)
    scores = load_scores(scores_path)
    chains = load_chains(chains_path, answer_style=rc.answer_style)
    external = _read_external_scores(args.external_scores) if args.external_scores else None
    groups = rc.groups
    if args.groups:
        with open(_require_path(args.groups, "groups"), encoding="utf-8") as fh:
            groups = {g: tuple(ms) for g, ms in json.load(fh).items()}
    try:
        report = meta_evaluate(
            scores,
            chains,
            orientation=rc.orientation,
            groups=groups,
            external_scores=external,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if args.out:
        report.dump(args.out)
    print(format_table(report))
    return EXIT_OK


def cmd_emit_pvi_data(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    chains_path = _require_path(args.chains, "chains")
    inputs = {"chains": str(chains_path), "out": args.out, "family": args.family}
    if args.dry_run:
        return _dry_run("emit-pvi-data", rc, inputs)
    _echo_config("emit-pvi-data", rc, inputs)
    chains = load_chains(chains_path, answer_style=rc.answer_style)
    if args.family == "intra":
        predictor = _build_frame_predictor(rc.backends_spec)
        chains = [segment_chain(c, predictor) for c in chains]
    try:
        examples = emit_pvi_training_data(chains, args.family)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    with open(args.out, "w", encoding="utf-8") as fh:
        for example in examples:
            fh.write(json.dumps(training_example_to_record(example), ensure_ascii=False) + "\n")
    print(f"wrote {len(examples)} training examples", file=sys.stderr)
    return EXIT_OK


def cmd_api_analyze(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    chains_path = _require_path(args.chains, "chains")
    ks = args.k or [1, 2, 3]
    inputs = {"chains": str(chains_path), "out": args.out, "k": ks}
    if args.dry_run:
        return _dry_run("api-analyze", rc, inputs)
    _echo_config("api-analyze", rc, inputs)
    chains = load_chains(chains_path, answer_style=rc.answer_style)
    backends = build_backends(rc)
    failures = []
    reports = []
    for chain in chains:
        try:
            reports.append(api_analysis(chain, ks, backends, rc.evaluator_config()))
        except (ValueError, EvaluationError) as exc:
            failures.append((chain.id, str(exc)))
    with open(args.out, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(
                json.dumps(
                    {
                        "chain_id": report.chain_id,
                        "per_step_gains": list(report.per_step_gains),
                        "api_flags": {str(k): v for k, v in report.api_flags.items()},
                    }
                )
                + "\n"
            )
    _report_failures(failures)
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_rerank(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    chains_path = _require_path(args.chains, "chains")
    inputs = {"chains": str(chains_path), "out": args.out}
    if args.dry_run:
        return _dry_run("rerank", rc, inputs)
    _echo_config("rerank", rc, inputs)
    candidates = load_chains(chains_path, answer_style=rc.answer_style)
    if not candidates:
        raise CliError("no candidate chains in input")
    backends = build_backends(rc)
    groups: dict[str, list] = {}
    for cand in candidates:
        groups.setdefault(str(cand.extras.get("problem_id", "")), []).append(cand)
    results = []
    for problem_id in sorted(groups):
        members = groups[problem_id]
        result = rerank(members, backends, rc.evaluator_config(), metrics=rc.rerank_metrics)
        results.append(
            {
                "problem_id": problem_id,
                "selected_index": result.selected_index,
                "selected_chain_id": members[result.selected_index].id,
                "selection_mode": result.selection_mode,
                "metric_ids": list(result.metric_ids),
                "candidate_ids": [c.id for c in members],
                "per_candidate_ranks": [list(r) for r in result.per_candidate_ranks],
            }
        )
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2)
    return EXIT_OK


def _group_label(chain) -> str:
    labels = chain.error_labels or {}
    for tag in ERROR_TAG_KINDS:
        if labels.get(tag) == 1:
            return tag
    return "gold"


def cmd_plot_data(args: argparse.Namespace) -> int:
    rc = resolve_config(args)
    scores_path = _require_path(args.scores, "scores")
    inputs = {"scores": str(scores_path), "out": args.out, "mode": args.mode}
    if args.dry_run:
        return _dry_run("plot-data", rc, inputs)
    _echo_config("plot-data", rc, inputs)
    scores = load_scores(scores_path)
    if not scores:
        raise CliError("scores file is empty")

    gain_metric = None
    for metric in ("info_gain_pvi", "info_gain_ll"):
        if any(metric in s.aggregated for s in scores):
            gain_metric = metric
            break
    if gain_metric is None:
        raise CliError("scores contain no info gain metric")

    if args.mode == "info_trend":
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["chain_id", "step_index", "gain"])
            for score in scores:
                for idx, gain in enumerate(score.values(gain_metric), start=1):
                    writer.writerow([score.chain_id, idx, gain])
        return EXIT_OK

    if args.mode == "api_rates":
        label_by_id: dict[str, str] = {}
        if args.chains:
            for chain in load_chains(_require_path(args.chains, "chains")):
                label_by_id[chain.id] = _group_label(chain)
        ks = args.k or [1, 2, 3]
        flags: dict[tuple[str, int], list[int]] = {}
        for score in scores:
            gains = score.values(gain_metric)
            group = label_by_id.get(score.chain_id, "all" if not label_by_id else "gold")
            for k in ks:
                if k > len(gains):
                    continue
                flag = api_flags_from_gains(gains, [k])[k]
                flags.setdefault((group, k), []).append(flag)
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["group", "k", "fraction"])
            for (group, k), values in sorted(flags.items()):
                writer.writerow([group, k, sum(values) / len(values)])
        return EXIT_OK

    raise CliError(f"unknown plot mode: {args.mode!r}")


# --- argument parsing -----------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", help="output path")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--workers", type=int, help="worker count")
    parser.add_argument("--stub-table", help="stub scorer table JSON (offline backends)")
    parser.add_argument("--metrics", help="comma-separated metric ids")
    parser.add_argument("--answer-style", choices=["verbatim", "question_answer"])
    parser.add_argument("--granularity", choices=["sentence", "rcu", "chain"])
    parser.add_argument("--dry-run", action="store_true", help="validate and print the plan")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaineval",
        description="Reference-free correctness/informativeness scoring for reasoning chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score chains and write chain-score JSONL")
    p.add_argument("--chains", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("perturb", help="generate labeled error chains from trees")
    p.add_argument("--trees", required=True)
    p.add_argument("--error-type", action="append", choices=list(PERTURBATION_TYPES))
    p.add_argument("--paraphrase-lexicon", help="JSON word substitution lexicon")
    _add_common(p)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("meta-eval", help="correlate scores with error labels")
    p.add_argument("--scores", required=True)
    p.add_argument("--chains", required=True)
    p.add_argument("--orientation", choices=["clean_positive", "raw"])
    p.add_argument("--groups", help="JSON file of group -> metric ids")
    p.add_argument("--external-scores", help="CSV of chain_id + extra metric columns")
    _add_common(p)
    p.set_defaults(func=cmd_meta_eval)

    p = sub.add_parser("emit-pvi-data", help="emit training data for the generation scorers")
    p.add_argument("--chains", required=True)
    p.add_argument("--family", choices=["intra", "info_gain"], default="intra")
    _add_common(p)
    p.set_defaults(func=cmd_emit_pvi_data)

    p = sub.add_parser("api-analyze", help="per-chain window gain analysis")
    p.add_argument("--chains", required=True)
    p.add_argument("--k", action="append", type=int, help="window size (repeatable)")
    _add_common(p)
    p.set_defaults(func=cmd_api_analyze)

    p = sub.add_parser("rerank", help="select the best candidate chain per problem")
    p.add_argument("--chains", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("plot-data", help="emit plot-ready CSV from scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--mode", choices=["info_trend", "api_rates"], required=True)
    p.add_argument("--chains", help="chains JSONL for group labels (api_rates)")
    p.add_argument("--k", action="append", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_plot_data)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ChainFormatError, PerturbationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
