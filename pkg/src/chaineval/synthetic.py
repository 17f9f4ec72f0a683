"""Seeded synthetic trees and an oracle stub table for model-free runs.

The generated corpus pairs each clean chain with one perturbed chain per
error type, and the oracle table scores them the way ideal backends
would: steps composed from the real trees entail their conclusions,
edited claims contradict prior facts, and inserted steps add no answer
likelihood. This reproduces the expected qualitative behavior of the
metrics without any model in the loop.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field

from .backends import NliJudgment, StubScorerTable, concat_conditioning
from .chains import ReasoningChain, join_premises
from .metrics import MetricConfig, window_texts
from .perturb import (
    PERTURBATION_TYPES,
    EntailmentTree,
    LexiconParaphraser,
    PerturbationRecord,
    TreeNode,
    derive_seed,
    linearize,
    perturb,
)
from .segmenter import ClauseFramePredictor, FramePredictor, segment_chain

_WORDS = (
    "lantern", "orchard", "meadow", "quartz", "falcon", "harbor", "timber",
    "comet", "prairie", "anchor", "beacon", "canyon", "ember", "fjord",
    "grove", "islet", "jasper", "kestrel", "lagoon", "marble", "nectar",
    "opal", "pebble", "reed", "saffron", "tundra",
)

#: Contribution (bits) of one step to the answer likelihood in the oracle.
_GAIN_INFORMATIVE = 0.7
_GAIN_UNINFORMATIVE = -0.3
_LOGPROB_BASE = -9.0


def default_paraphrase_lexicon() -> dict[str, str]:
    return {"kind": "sort", "hold": "carry", "every": "each", "can": "may"}


def make_tree(index: int, rng: random.Random) -> EntailmentTree:
    """One fixed-shape tree (4 leaves, 3 inferences) over nonce vocabulary."""
    a, b, c, d, e, f, g = (f"{w}{index}" for w in rng.sample(_WORDS, 7))
    leaves = {
        "l1": f"the {a} is a kind of {b}",
        "l2": f"the {b} is a kind of {c}",
        "l3": f"the {c} is a kind of {d}",
        "l4": f"every {d} can hold a {e}",
    }
    nodes = {nid: TreeNode(id=nid, text=text, in_context=True) for nid, text in leaves.items()}
    nodes["m1"] = TreeNode(id="m1", text=f"the {a} is a kind of {c}", parent_ids=("l1", "l2"))
    nodes["m2"] = TreeNode(id="m2", text=f"the {a} is a kind of {d}", parent_ids=("m1", "l3"))
    nodes["m3"] = TreeNode(id="m3", text=f"the {a} can hold a {e}", parent_ids=("m2", "l4"))
    return EntailmentTree(
        id=f"tree{index:04d}",
        nodes=nodes,
        hypothesis=f"one {a} is able to hold one {e}",
        context_sentences=tuple(leaves.values()),
        distractors=(
            f"the {f} is a kind of {g}",
            f"every {g} can shade a {f}",
        ),
    )


@dataclass
class SyntheticCorpus:
    """Clean chains plus one perturbation record per (tree, error type)."""

    trees: list[EntailmentTree]
    originals: list[ReasoningChain]
    records: list[PerturbationRecord]
    error_types: tuple[str, ...]

    def all_chains(self) -> list[ReasoningChain]:
        return self.originals + [r.perturbed_chain for r in self.records]


def build_corpus(
    n_trees: int = 100,
    seed: int = 0,
    error_types: tuple[str, ...] = PERTURBATION_TYPES,
    lexicon: dict[str, str] | None = None,
) -> SyntheticCorpus:
    paraphraser = LexiconParaphraser(lexicon or default_paraphrase_lexicon())
    trees = [make_tree(i, random.Random(f"{seed}:{i}")) for i in range(n_trees)]
    originals = []
    records = []
    for tree in trees:
        chain = linearize(tree)
        originals.append(
            dataclasses.replace(chain, error_labels={et: 0.0 for et in error_types})
        )
        for etype in error_types:
            records.append(
                perturb(tree, etype, derive_seed(seed, tree.id, etype), paraphraser)
            )
    return SyntheticCorpus(
        trees=trees, originals=originals, records=records, error_types=tuple(error_types)
    )


@dataclass
class _TableBuilder:
    table: StubScorerTable = field(
        default_factory=lambda: StubScorerTable(
            default_nli=NliJudgment(entail=0.05, neutral=0.85, contradict=0.10),
            default_logprob=_LOGPROB_BASE,
        )
    )

    def clean_pair(self, premises: str, conclusion: str) -> None:
        self.table.set_nli(premises, conclusion, 0.95, 0.02, 0.03)

    def restatement_pair(self, premises: str, conclusion: str) -> None:
        self.table.set_nli(premises, conclusion, 0.97, 0.02, 0.01)

    def corrupted_pair(self, premises: str, conclusion: str) -> None:
        self.table.set_nli(premises, conclusion, 0.03, 0.07, 0.90)

    def contradicts_prior(self, prior: str, conclusion: str) -> None:
        self.table.set_nli(prior, conclusion, 0.02, 0.13, 0.85)


def build_oracle_table(
    corpus: SyntheticCorpus,
    predictor: FramePredictor | None = None,
    cfg: MetricConfig | None = None,
) -> StubScorerTable:
    """Score the corpus the way ideal backends would.

    Steps whose (premises, conclusion) pair comes from a real tree
    inference entail strongly; repeated/paraphrased restatements entail
    but add no answer likelihood; edited claims get low entailment, high
    contradiction against the context, and no extra answer likelihood
    is granted for inserted steps.
    """
    predictor = predictor or ClauseFramePredictor()
    cfg = cfg or MetricConfig()
    builder = _TableBuilder()
    trees_by_id = {t.id: t for t in corpus.trees}

    segmented: dict[str, ReasoningChain] = {}
    for chain in corpus.all_chains():
        segmented[chain.id] = segment_chain(chain, predictor)

    for original in corpus.originals:
        for step in segmented[original.id].steps:
            conclusion = step.conclusion()
            if conclusion is not None and step.premises():
                builder.clean_pair(join_premises(step.premises()), conclusion.text)

    uninformative_steps: set[str] = set()
    for record in corpus.records:
        original = segmented[record.original_chain.id]
        perturbed = segmented[record.perturbed_chain.id]
        if record.error_type in ("REP", "PAR", "RED"):
            original_texts = [s.text for s in original.steps]
            for step in perturbed.steps:
                if step.text in original_texts:
                    continue
                uninformative_steps.add(step.text)
                conclusion = step.conclusion()
                if conclusion is not None and step.premises():
                    builder.restatement_pair(join_premises(step.premises()), conclusion.text)
        else:
            # same step count; compare by position so shared texts stay clean,
            # and never mark true-but-irrelevant distractor claims as contradictions
            clean_texts = {s.conclusion().text for s in original.steps if s.conclusion()}
            clean_texts.update(record.original_chain.context)
            clean_texts.update(trees_by_id[record.original_chain.id].distractors)
            for orig_step, step in zip(original.steps, perturbed.steps):
                if step.text == orig_step.text:
                    continue
                conclusion = step.conclusion()
                if conclusion is None:
                    continue
                if step.premises():
                    builder.corrupted_pair(join_premises(step.premises()), conclusion.text)
                if conclusion.text not in clean_texts:
                    for prior in record.perturbed_chain.context:
                        builder.contradicts_prior(prior, conclusion.text)

    def window_value(steps: list[str]) -> float:
        gain = sum(
            _GAIN_UNINFORMATIVE if t in uninformative_steps else _GAIN_INFORMATIVE
            for t in steps
        )
        return _LOGPROB_BASE + gain

    for chain in corpus.all_chains():
        answer = chain.predicted_answer
        for i in range(1, chain.n_steps + 1):
            z, x = window_texts(chain, i, cfg.k_info)
            start = 0 if cfg.k_info == "all" else max(0, i - 1 - int(cfg.k_info))
            window = [s.text for s in chain.steps[start : i - 1]]
            builder.table.set_logprob(z, answer, window_value(window))
            builder.table.set_logprob(
                concat_conditioning(z, x), answer, window_value(window + [x])
            )
    return builder.table
